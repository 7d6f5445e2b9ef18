//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use canpath::geokin::{destination, distance};
use canpath::mapmatch::{candidates, InternalMatcher, MatcherConfig, PointOnEdge, RoadGraph, RoadGraphBuilder};
use canpath::synthgen::{simulate, LocalFrame, SimScenario};
use canpath::trackeval::{compare_tracks, write_gpx, CompareOptions};
use canpath::{infer_path, InferenceParams, LatLon};

/// All-pairs node distances by Floyd-Warshall.
pub fn floyd_warshall(g: &RoadGraph) -> Vec<Vec<f64>> {
    let n = g.nodes().len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in g.edges() {
        let len = e.length();
        d[e.from][e.to] = d[e.from][e.to].min(len);
        if e.bidirectional {
            d[e.to][e.from] = d[e.to][e.from].min(len);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Along-road distance between two edge positions using precomputed node distances.
pub fn oracle_route(g: &RoadGraph, fw: &[Vec<f64>], a: &PointOnEdge, b: &PointOnEdge) -> f64 {
    let (ea, eb) = (g.edge(a.edge), g.edge(b.edge));
    let mut best = f64::INFINITY;
    if a.edge == b.edge && (b.offset >= a.offset || ea.bidirectional) {
        best = (b.offset - a.offset).abs();
    }
    let mut exits = vec![(ea.to, ea.length() - a.offset)];
    if ea.bidirectional {
        exits.push((ea.from, a.offset));
    }
    let mut entries = vec![(eb.from, b.offset)];
    if eb.bidirectional {
        entries.push((eb.to, eb.length() - b.offset));
    }
    for (x, cx) in &exits {
        for (y, cy) in &entries {
            best = best.min(cx + fw[*x][*y] + cy);
        }
    }
    best
}

/// Best HMM score over every candidate sequence, by exhaustive enumeration.
pub fn brute_force_viterbi(g: &RoadGraph, points: &[LatLon], cfg: &MatcherConfig) -> Option<f64> {
    let fw = floyd_warshall(g);
    let layers: Vec<_> = points.iter().map(|p| candidates(g, *p, cfg)).collect();
    if layers.iter().any(Vec::is_empty) {
        return None;
    }
    let total: usize = layers.iter().map(Vec::len).product();
    assert!(total <= 2_000_000, "enumeration too large: {total}");
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![0usize; points.len()];
    for _ in 0..total {
        let mut s = 0.0;
        for (i, &k) in idx.iter().enumerate() {
            let c = &layers[i][k];
            s += -0.5 * (c.distance / cfg.emission_sigma).powi(2);
            if i > 0 {
                let p = &layers[i - 1][idx[i - 1]];
                let route = oracle_route(g, &fw, &p.on_edge, &c.on_edge);
                let gc = distance(points[i - 1], points[i]);
                s += -(gc - route).abs() / cfg.transition_beta;
            }
        }
        if s > best {
            best = s;
        }
        for i in (0..idx.len()).rev() {
            idx[i] += 1;
            if idx[i] < layers[i].len() {
                break;
            }
            idx[i] = 0;
        }
    }
    best.is_finite().then_some(best)
}

/// Best global alignment score by recursive enumeration of every alignment.
pub fn brute_force_nw(a: &[LatLon], b: &[LatLon], eps: f64) -> i64 {
    fn go(a: &[LatLon], b: &[LatLon], eps: f64) -> i64 {
        match (a.split_first(), b.split_first()) {
            (None, _) => -(b.len() as i64),
            (_, None) => -(a.len() as i64),
            (Some((x, ra)), Some((y, rb))) => {
                let pair = if distance(*x, *y) <= eps { 1 } else { -1 };
                let diag = pair + go(ra, rb, eps);
                let gap_b = -1 + go(ra, b, eps);
                let gap_a = -1 + go(a, rb, eps);
                diag.max(gap_b).max(gap_a)
            }
        }
    }
    go(a, b, eps)
}

pub struct OracleCase {
    pub name: &'static str,
    pub graph: RoadGraph,
    pub trace: Vec<LatLon>,
}

fn local(origin: LatLon) -> LocalFrame {
    LocalFrame::new(origin)
}

/// The five hand-built graphs with a short noisy trace each.
pub fn oracle_cases() -> Vec<OracleCase> {
    let o = LatLon::new(45.0, 11.0);
    let f = local(o);
    let xy = |x: f64, y: f64| f.to_latlon(x, y);
    let mut cases = Vec::new();

    let mut b = RoadGraphBuilder::new();
    for (id, x) in [(1, 0.0), (2, 150.0), (3, 300.0)] {
        b.add_node(id, xy(x, 0.0));
    }
    b.add_edge(1, 1, 2, true, vec![]);
    b.add_edge(2, 2, 3, true, vec![]);
    cases.push(OracleCase {
        name: "straight",
        graph: b.build().unwrap(),
        trace: vec![xy(10.0, 3.0), xy(70.0, -4.0), xy(130.0, 2.0), xy(190.0, 5.0), xy(250.0, -1.0)],
    });

    let mut b = RoadGraphBuilder::new();
    b.add_node(1, xy(0.0, 0.0));
    b.add_node(2, xy(0.0, 100.0));
    b.add_node(3, xy(-60.0, 200.0));
    b.add_node(4, xy(60.0, 200.0));
    b.add_edge(1, 1, 2, true, vec![]);
    b.add_edge(2, 2, 3, true, vec![]);
    b.add_edge(3, 2, 4, true, vec![]);
    cases.push(OracleCase {
        name: "y-junction",
        graph: b.build().unwrap(),
        trace: vec![xy(2.0, 20.0), xy(-3.0, 60.0), xy(1.0, 95.0), xy(-18.0, 135.0), xy(-40.0, 165.0)],
    });

    let g = canpath::synthgen::suite::grid_graph(o, 3, 3, 100.0);
    let grid = Arc::try_unwrap(g).unwrap_or_else(|_| unreachable!());
    cases.push(OracleCase {
        name: "grid-3x3",
        graph: grid,
        trace: vec![xy(20.0, 4.0), xy(60.0, -3.0), xy(95.0, 6.0), xy(104.0, 40.0), xy(97.0, 80.0), xy(103.0, 120.0)],
    });

    let mut b = RoadGraphBuilder::new();
    b.add_node(1, xy(0.0, 0.0));
    b.add_node(2, xy(200.0, 0.0));
    b.add_node(3, xy(100.0, 170.0));
    b.add_edge(1, 1, 2, false, vec![]);
    b.add_edge(2, 2, 3, false, vec![]);
    b.add_edge(3, 3, 1, false, vec![]);
    cases.push(OracleCase {
        name: "triangle",
        graph: b.build().unwrap(),
        trace: vec![xy(120.0, 3.0), xy(180.0, -2.0), xy(185.0, 30.0), xy(150.0, 88.0), xy(118.0, 140.0)],
    });

    let mut b = RoadGraphBuilder::new();
    let r = 80.0;
    b.add_node(1, xy(r, 0.0));
    b.add_node(2, xy(-r, 0.0));
    let arc: Vec<LatLon> = (1..36)
        .map(|k| {
            let a = (f64::from(k) * 5.0).to_radians();
            xy(r * a.cos(), r * a.sin())
        })
        .collect();
    b.add_edge(1, 1, 2, true, arc);
    b.add_edge(2, 1, 2, true, vec![]);
    let on_arc = |deg: f64, dr: f64| {
        let a = deg.to_radians();
        xy((r + dr) * a.cos(), (r + dr) * a.sin())
    };
    cases.push(OracleCase {
        name: "arc",
        graph: b.build().unwrap(),
        trace: vec![on_arc(10.0, 2.0), on_arc(40.0, -3.0), on_arc(70.0, 1.0), on_arc(110.0, 4.0), on_arc(150.0, -2.0)],
    });

    cases
}

/// Points scattered around a short eastward line, seeded deterministically.
pub fn jittered_line(rng: &mut impl rand::Rng, n: usize) -> Vec<LatLon> {
    let o = LatLon::new(45.0, 11.0);
    (0..n)
        .map(|k| {
            let along = destination(o, 90.0, 8.0 * k as f64 + rng.random_range(-6.0..6.0));
            destination(along, rng.random_range(0.0..360.0), rng.random_range(0.0..12.0))
        })
        .collect()
}

pub struct ClosedLoopRun {
    pub name: String,
    pub accuracy: f64,
    pub gpx: String,
}

pub fn closed_loop(sc: &SimScenario, params: &InferenceParams) -> ClosedLoopRun {
    let out = simulate(sc).expect("scenario simulates");
    let matcher = InternalMatcher::new(Arc::clone(&sc.graph), MatcherConfig::default());
    let inferred = infer_path(&out.log, &sc.decoder, &sc.spec, out.start, params, &matcher).expect("inference runs");
    let acc = compare_tracks(&inferred.track, &out.truth, &CompareOptions::default()).accuracy;
    ClosedLoopRun { name: sc.name.clone(), accuracy: acc, gpx: write_gpx(&inferred.track) }
}
