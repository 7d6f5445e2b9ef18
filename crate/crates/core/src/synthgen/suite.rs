//! Built-in scenarios covering straights, junction turns, curves, a loop,
//! a long highway and turn-heavy grid routes.

use std::sync::Arc;

use super::{LocalFrame, SimScenario, SpeedSegment};
use crate::geokin::LatLon;
use crate::mapmatch::{RoadGraph, RoadGraphBuilder};

type Xy = (f64, f64);

struct LocalGraph {
    frame: LocalFrame,
    b: RoadGraphBuilder,
}

impl LocalGraph {
    fn new(origin: LatLon) -> Self {
        Self { frame: LocalFrame::new(origin), b: RoadGraphBuilder::new() }
    }

    fn node(&mut self, id: u64, p: Xy) {
        self.b.add_node(id, self.frame.to_latlon(p.0, p.1));
    }

    /// `shape` lists the full geometry including both end nodes.
    fn edge(&mut self, id: u64, from: u64, to: u64, bidirectional: bool, shape: &[Xy]) {
        let via = shape[1..shape.len().saturating_sub(1)]
            .iter()
            .map(|p| self.frame.to_latlon(p.0, p.1))
            .collect();
        self.b.add_edge(id, from, to, bidirectional, via);
    }

    fn build(self) -> Arc<RoadGraph> {
        Arc::new(self.b.build().expect("built-in graph is valid"))
    }
}

/// Pen that traces straights and circular arcs in the local plane.
struct Turtle {
    x: f64,
    y: f64,
    /// counter-clockwise from east, radians
    psi: f64,
    pts: Vec<Xy>,
}

impl Turtle {
    fn new(p: Xy, bearing_deg: f64) -> Self {
        Self { x: p.0, y: p.1, psi: (90.0 - bearing_deg).to_radians(), pts: vec![p] }
    }

    fn straight(&mut self, len: f64) -> &mut Self {
        self.x += len * self.psi.cos();
        self.y += len * self.psi.sin();
        self.pts.push((self.x, self.y));
        self
    }

    /// Positive `turn_deg` turns left.
    fn arc(&mut self, radius: f64, turn_deg: f64) -> &mut Self {
        let steps = (turn_deg.abs() / 3.0).ceil().max(1.0) as usize;
        let kappa = turn_deg.signum() / radius;
        let dpsi = turn_deg.to_radians() / steps as f64;
        let (x0, y0, psi0) = (self.x, self.y, self.psi);
        for k in 1..=steps {
            let psi = psi0 + dpsi * k as f64;
            self.x = x0 + (psi.sin() - psi0.sin()) / kappa;
            self.y = y0 - (psi.cos() - psi0.cos()) / kappa;
            self.pts.push((self.x, self.y));
        }
        self.psi = psi0 + turn_deg.to_radians();
        self
    }

    fn pos(&self) -> Xy {
        (self.x, self.y)
    }

    /// Drains the traced points, keeping the current position as the new start.
    fn take(&mut self) -> Vec<Xy> {
        let out = std::mem::take(&mut self.pts);
        self.pts.push(self.pos());
        out
    }
}

fn scenario(name: &str, graph: Arc<RoadGraph>, route: Vec<u64>, kmh: f64, turn_radius: f64) -> SimScenario {
    let mut sc = SimScenario::new(name, graph, route, kmh);
    sc.turn_radius = turn_radius;
    sc
}

/// `rows` x `cols` grid of two-way streets with `spacing` meter blocks.
///
/// Node `r * cols + c + 1` sits `c * spacing` east and `r * spacing` north of
/// `origin`. Horizontal edges are numbered first, row by row from 1, then
/// vertical edges column-major within each row gap.
pub fn grid_graph(origin: LatLon, rows: u64, cols: u64, spacing: f64) -> Arc<RoadGraph> {
    let mut g = LocalGraph::new(origin);
    let nid = |r: u64, c: u64| r * cols + c + 1;
    let xy = |r: u64, c: u64| (c as f64 * spacing, r as f64 * spacing);
    for r in 0..rows {
        for c in 0..cols {
            g.node(nid(r, c), xy(r, c));
        }
    }
    let mut id = 1;
    for r in 0..rows {
        for c in 0..cols - 1 {
            g.edge(id, nid(r, c), nid(r, c + 1), true, &[xy(r, c), xy(r, c + 1)]);
            id += 1;
        }
    }
    for r in 0..rows - 1 {
        for c in 0..cols {
            g.edge(id, nid(r, c), nid(r + 1, c), true, &[xy(r, c), xy(r + 1, c)]);
            id += 1;
        }
    }
    g.build()
}

/// Edge id of the horizontal street from `(r, c)` to `(r, c + 1)`.
pub fn grid_h(cols: u64, r: u64, c: u64) -> u64 {
    r * (cols - 1) + c + 1
}

/// Edge id of the vertical street from `(r, c)` to `(r + 1, c)`.
pub fn grid_v(rows: u64, cols: u64, r: u64, c: u64) -> u64 {
    rows * (cols - 1) + r * cols + c + 1
}

/// 1 km straight east with a crossing side street halfway.
pub fn straight(origin: LatLon) -> SimScenario {
    let mut g = LocalGraph::new(origin);
    for (id, p) in [(1, (0.0, 0.0)), (2, (500.0, 0.0)), (3, (1000.0, 0.0)), (4, (500.0, 200.0)), (5, (500.0, -200.0))] {
        g.node(id, p);
    }
    g.edge(1, 1, 2, true, &[(0.0, 0.0), (500.0, 0.0)]);
    g.edge(2, 2, 3, true, &[(500.0, 0.0), (1000.0, 0.0)]);
    g.edge(3, 2, 4, true, &[(500.0, 0.0), (500.0, 200.0)]);
    g.edge(4, 2, 5, true, &[(500.0, 0.0), (500.0, -200.0)]);
    scenario("straight", g.build(), vec![1, 2], 40.0, 10.0)
}

/// Four-way junction 300 m north of the origin with 300 m arms.
/// Edges: 1 south arm, 2 north arm, 3 west arm, 4 east arm, all leaving the junction outward except 1.
pub fn crossroads_graph(origin: LatLon) -> Arc<RoadGraph> {
    let mut g = LocalGraph::new(origin);
    let j = (0.0, 300.0);
    let arms = [(2, (0.0, 600.0)), (3, (-300.0, 300.0)), (4, (300.0, 300.0))];
    g.node(1, (0.0, 0.0));
    g.node(10, j);
    g.edge(1, 1, 10, true, &[(0.0, 0.0), j]);
    for (id, p) in arms {
        g.node(id, p);
        g.edge(id, 10, id, true, &[j, p]);
    }
    g.build()
}

pub fn turn_left(origin: LatLon) -> SimScenario {
    scenario("turn-left", crossroads_graph(origin), vec![1, 3], 20.0, 10.0)
}

pub fn turn_right(origin: LatLon) -> SimScenario {
    scenario("turn-right", crossroads_graph(origin), vec![1, 4], 25.0, 10.0)
}

/// Two opposite 90 degree bends of radius 60 m between straights.
pub fn s_curve(origin: LatLon) -> SimScenario {
    let mut t = Turtle::new((0.0, 0.0), 0.0);
    t.straight(100.0).arc(60.0, 90.0);
    let first = t.take();
    t.arc(60.0, -90.0).straight(100.0);
    let second = t.take();
    let mut g = LocalGraph::new(origin);
    g.node(1, first[0]);
    g.node(2, *first.last().unwrap());
    g.node(3, *second.last().unwrap());
    g.edge(1, 1, 2, true, &first);
    g.edge(2, 2, 3, true, &second);
    scenario("s-curve", g.build(), vec![1, 2], 40.0, 60.0)
}

/// Approach from the south, three quarters of a one-way ring of radius 30 m,
/// then exit east across the approach road.
pub fn ring_loop(origin: LatLon) -> SimScenario {
    let r = 30.0;
    let mut g = LocalGraph::new(origin);
    let (a, x, e, n, w, s, f) = ((r, -150.0), (r, -r), (r, 0.0), (0.0, r), (-r, 0.0), (0.0, -r), (150.0, -r));
    for (id, p) in [(1, a), (2, x), (3, e), (4, n), (5, w), (6, s), (7, f)] {
        g.node(id, p);
    }
    g.edge(1, 1, 2, true, &[a, x]);
    g.edge(2, 2, 3, true, &[x, e]);
    let mut t = Turtle::new(e, 0.0);
    for (id, from, to) in [(3, 3, 4), (4, 4, 5), (5, 5, 6), (6, 6, 3)] {
        t.arc(r, 90.0);
        g.edge(id, from, to, false, &t.take());
    }
    g.edge(7, 6, 2, true, &[s, x]);
    g.edge(8, 2, 7, true, &[x, f]);
    scenario("ring-loop", g.build(), vec![1, 2, 3, 4, 5, 7, 8], 20.0, r)
}

/// 10 km straight north at highway speed with side roads every 2 km.
pub fn highway(origin: LatLon) -> SimScenario {
    let mut g = LocalGraph::new(origin);
    for k in 0..=10u64 {
        g.node(k + 1, (0.0, k as f64 * 1000.0));
    }
    for k in 0..10u64 {
        let (y0, y1) = (k as f64 * 1000.0, (k + 1) as f64 * 1000.0);
        g.edge(k + 1, k + 1, k + 2, true, &[(0.0, y0), (0.0, y1)]);
    }
    for (i, k) in [2u64, 4, 6, 8].into_iter().enumerate() {
        let y = k as f64 * 1000.0;
        let (wn, en) = (100 + 2 * i as u64, 101 + 2 * i as u64);
        g.node(wn, (-300.0, y));
        g.node(en, (300.0, y));
        g.edge(wn, k + 1, wn, true, &[(0.0, y), (-300.0, y)]);
        g.edge(en, k + 1, en, true, &[(0.0, y), (300.0, y)]);
    }
    scenario("highway", g.build(), (1..=10).collect(), 90.0, 10.0)
}

/// Two blocks east then two blocks north on a 4 x 4 grid.
pub fn grid_l(origin: LatLon) -> SimScenario {
    let (rows, cols) = (4, 4);
    let route = vec![grid_h(cols, 0, 0), grid_h(cols, 0, 1), grid_v(rows, cols, 0, 2), grid_v(rows, cols, 1, 2)];
    scenario("grid-l", grid_graph(origin, rows, cols, 150.0), route, 30.0, 10.0)
}

/// Staircase of alternating east and north blocks; eight turns.
pub fn staircase(origin: LatLon) -> SimScenario {
    let (rows, cols) = (6, 6);
    let mut route = Vec::new();
    for k in 0..5 {
        route.push(grid_h(cols, k, k));
        route.push(grid_v(rows, cols, k, k + 1));
    }
    scenario("staircase", grid_graph(origin, rows, cols, 120.0), route, 25.0, 10.0)
}

/// Stem north into a fork whose branches bend 30 degrees to either side.
pub fn y_junction(origin: LatLon) -> SimScenario {
    let mut g = LocalGraph::new(origin);
    let j = (0.0, 200.0);
    g.node(1, (0.0, 0.0));
    g.node(2, j);
    g.edge(1, 1, 2, true, &[(0.0, 0.0), j]);
    for (id, turn) in [(2u64, 30.0), (3, -30.0)] {
        let mut t = Turtle::new(j, 0.0);
        t.arc(100.0, turn).straight(300.0);
        let shape = t.take();
        g.node(id + 1, *shape.last().unwrap());
        g.edge(id, 2, id + 1, true, &shape);
    }
    scenario("y-junction", g.build(), vec![1, 2], 40.0, 100.0)
}

/// East at 50 km/h, slow to 30 for a right turn, then back to 50 heading south.
pub fn slow_turn(origin: LatLon) -> SimScenario {
    let mut g = LocalGraph::new(origin);
    let pts = [(0.0, 0.0), (400.0, 0.0), (400.0, -300.0), (800.0, 0.0), (400.0, 300.0)];
    for (i, p) in pts.iter().enumerate() {
        g.node(i as u64 + 1, *p);
    }
    g.edge(1, 1, 2, true, &[pts[0], pts[1]]);
    g.edge(2, 2, 3, true, &[pts[1], pts[2]]);
    g.edge(3, 2, 4, true, &[pts[1], pts[3]]);
    g.edge(4, 2, 5, true, &[pts[1], pts[4]]);
    let mut sc = scenario("slow-turn", g.build(), vec![1, 2], 50.0, 12.0);
    sc.speed_profile = vec![
        SpeedSegment { from_m: 0.0, kmh: 50.0 },
        SpeedSegment { from_m: 340.0, kmh: 30.0 },
        SpeedSegment { from_m: 460.0, kmh: 50.0 },
    ];
    sc
}

/// Country road of alternating sweeping bends joined by short straights.
pub fn winding(origin: LatLon) -> SimScenario {
    let mut t = Turtle::new((0.0, 0.0), 45.0);
    let bends = [(150.0, 40.0), (200.0, -60.0), (120.0, 45.0), (180.0, -35.0), (140.0, 50.0)];
    let mut g = LocalGraph::new(origin);
    g.node(1, (0.0, 0.0));
    let mut route = Vec::new();
    for (i, (r, turn)) in bends.into_iter().enumerate() {
        t.straight(100.0).arc(r, turn);
        let shape = t.take();
        let id = i as u64 + 1;
        g.node(id + 1, *shape.last().unwrap());
        g.edge(id, id, id + 1, true, &shape);
        route.push(id);
    }
    scenario("winding", g.build(), route, 50.0, 120.0)
}

/// All built-in scenarios, each placed at its own origin.
pub fn standard_suite() -> Vec<SimScenario> {
    let builders: [fn(LatLon) -> SimScenario; 11] = [
        straight, turn_left, turn_right, s_curve, ring_loop, highway, grid_l, staircase, y_junction, slow_turn,
        winding,
    ];
    builders
        .iter()
        .enumerate()
        .map(|(i, build)| build(LatLon::new(45.0 + 0.05 * i as f64, 7.5 + 0.1 * i as f64)))
        .collect()
}
