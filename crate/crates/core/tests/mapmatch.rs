mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use canpath::geokin::distance;
use canpath::mapmatch::{
    build_external_request, parse_external_response, viterbi_match, ExternalMatcher, MatchError, Matcher,
    MatcherConfig, PointOnEdge, RoadGraph,
};
use canpath::synthgen::suite::{grid_graph, grid_h, grid_v};
use canpath::LatLon;
use common::{brute_force_viterbi, floyd_warshall, oracle_cases, oracle_route};
use proptest::prelude::*;
use serde_json::Value;

fn case(name: &str) -> common::OracleCase {
    oracle_cases().into_iter().find(|c| c.name == name).unwrap()
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn y_junction_follows_left_branch() {
    let c = case("y-junction");
    let r = viterbi_match(&c.graph, &c.trace, &MatcherConfig::default()).unwrap();
    assert_eq!(r.edge_ids, vec![Some(1), Some(1), Some(1), Some(2), Some(2)]);
}

#[test]
fn grid_trace_follows_the_l() {
    let c = case("grid-3x3");
    let r = viterbi_match(&c.graph, &c.trace, &MatcherConfig::default()).unwrap();
    let allowed = [grid_h(3, 0, 0), grid_v(3, 3, 0, 1), grid_v(3, 3, 1, 1)];
    assert!(r.edge_ids.iter().all(|e| allowed.contains(&e.unwrap())), "{:?}", r.edge_ids);
    assert_eq!(r.edge_ids[0], Some(grid_h(3, 0, 0)));
    assert_eq!(r.edge_ids[5], Some(grid_v(3, 3, 1, 1)));
}

#[test]
fn viterbi_matches_enumeration_on_all_fixtures() {
    let cfg = MatcherConfig::default();
    for c in oracle_cases() {
        let got = viterbi_match(&c.graph, &c.trace, &cfg).unwrap().score.unwrap();
        let best = brute_force_viterbi(&c.graph, &c.trace, &cfg).unwrap();
        assert!((got - best).abs() < 1e-9, "{}: {got} vs {best}", c.name);
    }
}

#[test]
fn matched_points_lie_on_their_edges() {
    for c in oracle_cases() {
        let r = viterbi_match(&c.graph, &c.trace, &MatcherConfig::default()).unwrap();
        assert_eq!(r.matched_points.len(), c.trace.len());
        for (p, id) in r.matched_points.iter().zip(&r.edge_ids) {
            let idx = c.graph.edge_idx(id.unwrap()).unwrap();
            let on = c.graph.project_onto(idx, *p).on_edge.pos;
            assert!((on.lat - p.lat).abs() < 1e-7 && (on.lon - p.lon).abs() < 1e-7, "{}", c.name);
        }
    }
}

#[test]
fn huge_sigma_reduces_to_route_smoothness() {
    let c = case("y-junction");
    let cfg = MatcherConfig { emission_sigma: 1e12, ..MatcherConfig::default() };
    let got = viterbi_match(&c.graph, &c.trace, &cfg).unwrap().score.unwrap();
    let best = brute_force_viterbi(&c.graph, &c.trace, &cfg).unwrap();
    assert!((got - best).abs() < 1e-9);

    // Pure transition oracle: emissions dropped entirely.
    let fw = floyd_warshall(&c.graph);
    let layers: Vec<_> = c.trace.iter().map(|p| canpath::mapmatch::candidates(&c.graph, *p, &cfg)).collect();
    let mut best_t = vec![0.0; layers[0].len()];
    for i in 1..layers.len() {
        let gc = distance(c.trace[i - 1], c.trace[i]);
        best_t = layers[i]
            .iter()
            .map(|cand| {
                layers[i - 1]
                    .iter()
                    .zip(&best_t)
                    .map(|(p, s)| s - (gc - oracle_route(&c.graph, &fw, &p.on_edge, &cand.on_edge)).abs() / 3.0)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    let smooth = best_t.into_iter().fold(f64::NEG_INFINITY, f64::max);
    assert!((got - smooth).abs() < 1e-6, "{got} vs {smooth}");
}

fn point(g: &RoadGraph, edge_id: u64, offset: f64) -> PointOnEdge {
    let edge = g.edge_idx(edge_id).unwrap();
    PointOnEdge { edge, offset, pos: g.edge(edge).point_at(offset) }
}

/// Shortest simple node path length by depth-first enumeration.
fn simple_path_oracle(g: &RoadGraph, from: usize, to: usize) -> f64 {
    fn dfs(g: &RoadGraph, at: usize, to: usize, seen: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if at == to {
            *best = best.min(acc);
            return;
        }
        for e in g.edges() {
            let next = if e.from == at {
                Some(e.to)
            } else if e.bidirectional && e.to == at {
                Some(e.from)
            } else {
                None
            };
            if let Some(n) = next.filter(|n| !seen[*n]) {
                seen[n] = true;
                dfs(g, n, to, seen, acc + e.length(), best);
                seen[n] = false;
            }
        }
    }
    let mut seen = vec![false; g.nodes().len()];
    seen[from] = true;
    let mut best = f64::INFINITY;
    dfs(g, from, to, &mut seen, 0.0, &mut best);
    best
}

#[test]
fn route_distance_basics() {
    let c = case("triangle");
    let g = &c.graph;
    let a = point(g, 1, 40.0);
    assert_eq!(g.route_distance(&a, &a), Some(0.0));
    let b = point(g, 1, 130.0);
    assert!((g.route_distance(&a, &b).unwrap() - 90.0).abs() < 1e-9);

    // One-way triangle: going backwards along edge 1 means driving around.
    let around = g.route_distance(&b, &a).unwrap();
    let e1 = g.edge_by_id(1).unwrap();
    let loop_len = simple_path_oracle(g, e1.to, e1.from);
    assert!((around - (e1.length() - 130.0 + loop_len + 40.0)).abs() < 1e-6);

    // Node to node equals the shortest simple path.
    for e in g.edges() {
        let start = PointOnEdge { edge: g.edge_idx(e.id).unwrap(), offset: 0.0, pos: e.geometry[0] };
        for f in g.edges() {
            let end = PointOnEdge { edge: g.edge_idx(f.id).unwrap(), offset: 0.0, pos: f.geometry[0] };
            let got = g.route_distance(&start, &end).unwrap();
            assert!((got - simple_path_oracle(g, e.from, f.from)).abs() < 1e-6);
        }
    }
}

#[test]
fn route_distance_agrees_with_floyd_warshall() {
    for c in oracle_cases() {
        let fw = floyd_warshall(&c.graph);
        for e in c.graph.edges() {
            for f in c.graph.edges() {
                let a = point(&c.graph, e.id, e.length() * 0.3);
                let b = point(&c.graph, f.id, f.length() * 0.6);
                let got = c.graph.route_distance(&a, &b).unwrap_or(f64::INFINITY);
                let want = oracle_route(&c.graph, &fw, &a, &b);
                assert!(got == want || (got - want).abs() < 1e-6, "{}: {got} vs {want}", c.name);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn route_distance_symmetric_and_triangle(
        picks in proptest::collection::vec((1u64..=12, 0.0f64..1.0), 3)
    ) {
        let g = grid_graph(LatLon::new(45.0, 11.0), 3, 3, 100.0);
        let p: Vec<PointOnEdge> = picks
            .iter()
            .map(|(id, f)| point(&g, *id, g.edge_by_id(*id).unwrap().length() * f))
            .collect();
        let d = |a: &PointOnEdge, b: &PointOnEdge| g.route_distance(a, b).unwrap();
        prop_assert!((d(&p[0], &p[1]) - d(&p[1], &p[0])).abs() < 1e-6);
        prop_assert!(d(&p[0], &p[2]) <= d(&p[0], &p[1]) + d(&p[1], &p[2]) + 1e-6);
    }
}

fn fixture_points() -> Vec<LatLon> {
    vec![
        LatLon::new(45.0, 11.0),
        LatLon::new(45.0005, 11.0002),
        LatLon::new(45.001, 11.0004),
        LatLon::new(45.0015, 11.0006),
        LatLon::new(45.002, 11.0008),
    ]
}

#[test]
fn request_matches_golden_fixture() {
    let want: Value = serde_json::from_str(&fixture("external_request_5pt.json")).unwrap();
    let got = build_external_request(&fixture_points(), &MatcherConfig::default()).unwrap();
    assert_eq!(got, want);
}

#[test]
fn response_golden_fixture() {
    let doc: Value = serde_json::from_str(&fixture("external_response_trace_route.json")).unwrap();
    let r = parse_external_response(&doc).unwrap();
    let want = [
        (45.000012, 10.999987),
        (45.000498, 11.000215),
        (45.000991, 11.000411),
        (45.001503, 11.000598),
        (45.002001, 11.000795),
        (45.00212, 11.000833),
    ];
    assert_eq!(r.matched_points.len(), want.len());
    for (p, (lat, lon)) in r.matched_points.iter().zip(want) {
        assert!((p.lat - lat).abs() < 1e-9 && (p.lon - lon).abs() < 1e-9);
    }
    let err: Value = serde_json::from_str(&fixture("external_response_error.json")).unwrap();
    assert_eq!(
        parse_external_response(&err),
        Err(MatchError::Service { code: 171, message: "No suitable edges near location".into() })
    );
}

/// Serves one canned HTTP response and hands back the request line and body.
fn serve_once(status: &'static str, body: String) -> (String, thread::JoinHandle<(String, String)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        reader.read_line(&mut request_line).unwrap();
        let mut len = 0;
        loop {
            let mut h = String::new();
            reader.read_line(&mut h).unwrap();
            if h == "\r\n" || h.is_empty() {
                break;
            }
            if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
        }
        let mut req_body = vec![0; len];
        reader.read_exact(&mut req_body).unwrap();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        (request_line, String::from_utf8(req_body).unwrap())
    });
    (url, handle)
}

#[test]
fn external_client_round_trip_against_mock_service() {
    let (url, server) = serve_once("200 OK", fixture("external_response_trace_route.json"));
    let m = ExternalMatcher::new(url, MatcherConfig::default());
    let r = m.match_trace(&fixture_points()).unwrap();
    assert_eq!(r.matched_points.len(), 6);
    let (line, body) = server.join().unwrap();
    assert!(line.starts_with("POST /trace_route "), "{line}");
    let sent: Value = serde_json::from_str(&body).unwrap();
    let want: Value = serde_json::from_str(&fixture("external_request_5pt.json")).unwrap();
    assert_eq!(sent, want);
}

#[test]
fn external_client_reports_service_errors() {
    let (url, server) = serve_once("400 Bad Request", fixture("external_response_error.json"));
    let m = ExternalMatcher::new(url, MatcherConfig::default());
    assert!(matches!(m.match_trace(&fixture_points()), Err(MatchError::Service { code: 171, .. })));
    server.join().unwrap();

    let (url, server) = serve_once("502 Bad Gateway", "upstream down".into());
    let m = ExternalMatcher::new(url, MatcherConfig::default());
    assert_eq!(
        m.match_trace(&fixture_points()),
        Err(MatchError::Service { code: 502, message: "upstream down".into() })
    );
    server.join().unwrap();
}

#[test]
fn external_client_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let m = ExternalMatcher::new(format!("http://127.0.0.1:{port}"), MatcherConfig::default());
    assert!(matches!(m.match_trace(&fixture_points()), Err(MatchError::Transport(_))));
    assert_eq!(m.match_trace(&[]), Err(MatchError::EmptyInput));
}
