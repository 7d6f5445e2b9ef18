//! Road graph with polyline edge geometry, a grid spatial index over edge
//! segments, and cached single-source shortest paths between nodes.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::geokin::{distance, lerp, LatLon, EARTH_RADIUS_M};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("duplicate node id {0}")]
    DuplicateNode(u64),
    #[error("duplicate edge id {0}")]
    DuplicateEdge(u64),
    #[error("edge {edge} references missing node {node}")]
    MissingNode { edge: u64, node: u64 },
    #[error("edge {0} has zero length")]
    ZeroLength(u64),
    #[error("invalid coordinate {0:?}")]
    BadCoordinate(LatLon),
    #[error("unknown edge id {0}")]
    UnknownEdge(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: u64,
    pub pos: LatLon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: u64,
    /// Dense node indices, not ids.
    pub from: usize,
    pub to: usize,
    pub bidirectional: bool,
    /// Full geometry, endpoints included.
    pub geometry: Vec<LatLon>,
    /// Cumulative length at each geometry vertex.
    pub cumulative: Vec<f64>,
}

impl Edge {
    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    /// Point at `offset` meters from the `from` end.
    pub fn point_at(&self, offset: f64) -> LatLon {
        let offset = offset.clamp(0.0, self.length());
        let seg = match self.cumulative.binary_search_by(|c| c.total_cmp(&offset)) {
            Ok(i) => return self.geometry[i],
            Err(i) => i.saturating_sub(1).min(self.geometry.len() - 2),
        };
        let seg_len = self.cumulative[seg + 1] - self.cumulative[seg];
        let t = if seg_len > 0.0 { (offset - self.cumulative[seg]) / seg_len } else { 0.0 };
        lerp(self.geometry[seg], self.geometry[seg + 1], t)
    }
}

/// A location on an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointOnEdge {
    /// Dense edge index.
    pub edge: usize,
    /// Meters from the edge's `from` node.
    pub offset: f64,
    pub pos: LatLon,
}

/// Closest point of an edge to a query location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub on_edge: PointOnEdge,
    /// Great-circle distance from the query to the projected point.
    pub distance: f64,
}

const CELL_DEG: f64 = 0.001;

#[derive(Debug, Default)]
struct SegmentIndex {
    lon_scale: f64,
    cells: HashMap<(i64, i64), Vec<(usize, usize)>>,
}

impl SegmentIndex {
    fn cell(&self, p: LatLon) -> (i64, i64) {
        (
            (p.lat / CELL_DEG).floor() as i64,
            (p.lon * self.lon_scale / CELL_DEG).floor() as i64,
        )
    }

    fn build(edges: &[Edge], ref_lat: f64) -> Self {
        let mut idx = SegmentIndex {
            lon_scale: ref_lat.to_radians().cos().max(0.01),
            cells: HashMap::new(),
        };
        for (ei, e) in edges.iter().enumerate() {
            for si in 0..e.geometry.len() - 1 {
                let (a, b) = (idx.cell(e.geometry[si]), idx.cell(e.geometry[si + 1]));
                for r in a.0.min(b.0)..=a.0.max(b.0) {
                    for c in a.1.min(b.1)..=a.1.max(b.1) {
                        idx.cells.entry((r, c)).or_default().push((ei, si));
                    }
                }
            }
        }
        idx
    }

    /// Segments whose bounding cells intersect the square of half-side `radius` around `p`.
    fn query(&self, p: LatLon, radius: f64) -> Vec<(usize, usize)> {
        let dlat = (radius / EARTH_RADIUS_M).to_degrees();
        let dlon = dlat / p.lat.to_radians().cos().max(0.01);
        let lo = self.cell(LatLon::new(p.lat - dlat, p.lon - dlon));
        let hi = self.cell(LatLon::new(p.lat + dlat, p.lon + dlon));
        let mut out = Vec::new();
        for r in lo.0..=hi.0 {
            for c in lo.1..=hi.1 {
                if let Some(v) = self.cells.get(&(r, c)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Immutable road network. Build with [`RoadGraphBuilder`] or [`RoadGraph::parse`].
#[derive(Debug)]
pub struct RoadGraph {
    nodes: Vec<Node>,
    node_index: HashMap<u64, usize>,
    edges: Vec<Edge>,
    edge_index: HashMap<u64, usize>,
    /// Outgoing `(edge index, target node index)` per node.
    adjacency: Vec<Vec<(usize, usize)>>,
    index: SegmentIndex,
    sssp_cache: Mutex<HashMap<usize, Arc<Vec<f64>>>>,
}

#[derive(Debug, Default, Clone)]
pub struct RoadGraphBuilder {
    nodes: Vec<Node>,
    edges: Vec<(u64, u64, u64, bool, Vec<LatLon>)>,
}

impl RoadGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, id: u64, lat: f64, lon: f64) -> Self {
        self.add_node(id, LatLon::new(lat, lon));
        self
    }

    pub fn add_node(&mut self, id: u64, pos: LatLon) {
        self.nodes.push(Node { id, pos });
    }

    pub fn edge(mut self, id: u64, from: u64, to: u64, bidirectional: bool) -> Self {
        self.add_edge(id, from, to, bidirectional, Vec::new());
        self
    }

    /// `via` holds intermediate shape points only.
    pub fn add_edge(&mut self, id: u64, from: u64, to: u64, bidirectional: bool, via: Vec<LatLon>) {
        self.edges.push((id, from, to, bidirectional, via));
    }

    pub fn build(self) -> Result<RoadGraph, GraphError> {
        let mut node_index = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.pos.is_valid() {
                return Err(GraphError::BadCoordinate(n.pos));
            }
            if node_index.insert(n.id, i).is_some() {
                return Err(GraphError::DuplicateNode(n.id));
            }
        }

        let mut raw = self.edges;
        raw.sort_by_key(|e| e.0);
        let mut edges = Vec::with_capacity(raw.len());
        let mut edge_index = HashMap::new();
        for (id, from, to, bidirectional, via) in raw {
            if edge_index.insert(id, edges.len()).is_some() {
                return Err(GraphError::DuplicateEdge(id));
            }
            let fi = *node_index.get(&from).ok_or(GraphError::MissingNode { edge: id, node: from })?;
            let ti = *node_index.get(&to).ok_or(GraphError::MissingNode { edge: id, node: to })?;
            let mut geometry = Vec::with_capacity(via.len() + 2);
            geometry.push(self.nodes[fi].pos);
            for p in via {
                if !p.is_valid() {
                    return Err(GraphError::BadCoordinate(p));
                }
                geometry.push(p);
            }
            geometry.push(self.nodes[ti].pos);
            let mut cumulative = vec![0.0];
            for w in geometry.windows(2) {
                let last = *cumulative.last().unwrap();
                cumulative.push(last + distance(w[0], w[1]));
            }
            if *cumulative.last().unwrap() <= 0.0 {
                return Err(GraphError::ZeroLength(id));
            }
            edges.push(Edge { id, from: fi, to: ti, bidirectional, geometry, cumulative });
        }

        let mut adjacency = vec![Vec::new(); self.nodes.len()];
        for (ei, e) in edges.iter().enumerate() {
            adjacency[e.from].push((ei, e.to));
            if e.bidirectional {
                adjacency[e.to].push((ei, e.from));
            }
        }

        let ref_lat = if self.nodes.is_empty() {
            0.0
        } else {
            self.nodes.iter().map(|n| n.pos.lat).sum::<f64>() / self.nodes.len() as f64
        };
        let index = SegmentIndex::build(&edges, ref_lat);

        Ok(RoadGraph {
            nodes: self.nodes,
            node_index,
            edges,
            edge_index,
            adjacency,
            index,
            sssp_cache: Mutex::new(HashMap::new()),
        })
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl RoadGraph {
    pub fn builder() -> RoadGraphBuilder {
        RoadGraphBuilder::new()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Edges ordered by ascending id.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    pub fn edge_by_id(&self, id: u64) -> Option<&Edge> {
        self.edge_index.get(&id).map(|&i| &self.edges[i])
    }

    pub fn edge_idx(&self, id: u64) -> Option<usize> {
        self.edge_index.get(&id).copied()
    }

    pub fn node_idx(&self, id: u64) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    /// Connected-component label per node, treating every edge as undirected.
    pub fn components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.from), find(&mut parent, e.to));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        (0..self.nodes.len()).map(|i| find(&mut parent, i)).collect()
    }

    /// Closest point on edge `edge` to `p`.
    pub fn project_onto(&self, edge: usize, p: LatLon) -> Projection {
        let e = &self.edges[edge];
        let mut best: Option<Projection> = None;
        for si in 0..e.geometry.len() - 1 {
            let cand = self.project_segment(edge, si, p);
            if best.is_none_or(|b| cand.distance < b.distance) {
                best = Some(cand);
            }
        }
        best.expect("edges have at least one segment")
    }

    fn project_segment(&self, edge: usize, seg: usize, p: LatLon) -> Projection {
        let e = &self.edges[edge];
        let (a, b) = (e.geometry[seg], e.geometry[seg + 1]);
        // Equirectangular plane centred on the query point.
        let kx = p.lat.to_radians().cos();
        let (ax, ay) = ((a.lon - p.lon) * kx, a.lat - p.lat);
        let (bx, by) = ((b.lon - p.lon) * kx, b.lat - p.lat);
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 { (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let pos = if t == 0.0 {
            a
        } else if t == 1.0 {
            b
        } else {
            lerp(a, b, t)
        };
        let seg_len = e.cumulative[seg + 1] - e.cumulative[seg];
        Projection {
            on_edge: PointOnEdge { edge, offset: e.cumulative[seg] + t * seg_len, pos },
            distance: distance(p, pos),
        }
    }

    /// Best projection per edge for every edge with geometry within `radius` meters,
    /// sorted by distance then edge id.
    pub fn edges_near(&self, p: LatLon, radius: f64) -> Vec<Projection> {
        let mut best: HashMap<usize, Projection> = HashMap::new();
        for (ei, si) in self.index.query(p, radius) {
            let proj = self.project_segment(ei, si, p);
            if proj.distance > radius {
                continue;
            }
            best.entry(ei)
                .and_modify(|b| {
                    if proj.distance < b.distance {
                        *b = proj;
                    }
                })
                .or_insert(proj);
        }
        let mut out: Vec<_> = best.into_values().collect();
        out.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(self.edges[a.on_edge.edge].id.cmp(&self.edges[b.on_edge.edge].id))
        });
        out
    }

    /// Shortest along-road distances from node `source` to every node (infinite if unreachable).
    pub fn node_distances(&self, source: usize) -> Arc<Vec<f64>> {
        if let Some(d) = self.sssp_cache.lock().unwrap().get(&source) {
            return Arc::clone(d);
        }
        let d = Arc::new(self.dijkstra(source));
        self.sssp_cache
            .lock()
            .unwrap()
            .entry(source)
            .or_insert_with(|| Arc::clone(&d));
        d
    }

    fn dijkstra(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapItem(0.0, source));
        while let Some(HeapItem(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(ei, v) in &self.adjacency[u] {
                let nd = d + self.edges[ei].length();
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        dist
    }

    /// Shortest along-road distance between two points on edges, or `None`
    /// when `to` cannot be reached from `from`.
    pub fn route_distance(&self, from: &PointOnEdge, to: &PointOnEdge) -> Option<f64> {
        let ea = &self.edges[from.edge];
        let eb = &self.edges[to.edge];
        let mut best = f64::INFINITY;

        if from.edge == to.edge {
            if to.offset >= from.offset {
                best = to.offset - from.offset;
            } else if ea.bidirectional {
                best = from.offset - to.offset;
            }
        }

        let mut exits = vec![(ea.to, ea.length() - from.offset)];
        if ea.bidirectional {
            exits.push((ea.from, from.offset));
        }
        let mut entries = vec![(eb.from, to.offset)];
        if eb.bidirectional {
            entries.push((eb.to, eb.length() - to.offset));
        }
        for &(exit_node, exit_cost) in &exits {
            let dist = self.node_distances(exit_node);
            for &(entry_node, entry_cost) in &entries {
                let total = exit_cost + dist[entry_node] + entry_cost;
                if total < best {
                    best = total;
                }
            }
        }
        best.is_finite().then_some(best)
    }

    /// Parses the line format:
    /// `node <id> <lat> <lon>` and `edge <id> <from> <to> <0|1> [<lat> <lon> ...]`.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut b = RoadGraphBuilder::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: &str| GraphError::Syntax { line: idx + 1, message: message.to_string() };
            let toks: Vec<&str> = line.split_whitespace().collect();
            let int = |s: &str| s.parse::<u64>().map_err(|_| syntax(&format!("bad integer {s}")));
            let float = |s: &str| s.parse::<f64>().map_err(|_| syntax(&format!("bad number {s}")));
            match toks[0] {
                "node" => {
                    if toks.len() != 4 {
                        return Err(syntax("node needs: id lat lon"));
                    }
                    b.add_node(int(toks[1])?, LatLon::new(float(toks[2])?, float(toks[3])?));
                }
                "edge" => {
                    if toks.len() < 5 || !(toks.len() - 5).is_multiple_of(2) {
                        return Err(syntax("edge needs: id from to bidir [lat lon]..."));
                    }
                    let bidir = match toks[4] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(syntax("bidir flag must be 0 or 1")),
                    };
                    let mut via = Vec::new();
                    for pair in toks[5..].chunks(2) {
                        via.push(LatLon::new(float(pair[0])?, float(pair[1])?));
                    }
                    b.add_edge(int(toks[1])?, int(toks[2])?, int(toks[3])?, bidir, via);
                }
                other => return Err(syntax(&format!("unknown record {other}"))),
            }
        }
        b.build()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for n in &self.nodes {
            let _ = writeln!(s, "node {} {:.9} {:.9}", n.id, n.pos.lat, n.pos.lon);
        }
        for e in &self.edges {
            let _ = write!(
                s,
                "edge {} {} {} {}",
                e.id,
                self.nodes[e.from].id,
                self.nodes[e.to].id,
                u8::from(e.bidirectional)
            );
            for p in &e.geometry[1..e.geometry.len() - 1] {
                let _ = write!(s, " {:.9} {:.9}", p.lat, p.lon);
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geokin::destination;

    fn triangle() -> RoadGraph {
        // A at origin, B 300 m east, C 400 m north of A: AB=300, AC=400, BC=500.
        let a = LatLon::new(45.0, 11.0);
        let b = destination(a, 90.0, 300.0);
        let c = destination(a, 0.0, 400.0);
        RoadGraph::builder()
            .node(1, a.lat, a.lon)
            .node(2, b.lat, b.lon)
            .node(3, c.lat, c.lon)
            .edge(10, 1, 2, true)
            .edge(11, 2, 3, true)
            .edge(12, 1, 3, true)
            .build()
            .unwrap()
    }

    #[test]
    fn parse_and_format_round_trip() {
        let text = "# demo\nnode 1 45.0 11.0\nnode 2 45.001 11.0\nedge 5 1 2 1 45.0005 11.0001\n";
        let g = RoadGraph::parse(text).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].geometry.len(), 3);
        let again = RoadGraph::parse(&g.to_text()).unwrap();
        assert_eq!(again.edges()[0].geometry, g.edges()[0].geometry);
        assert_eq!(again.to_text(), g.to_text());
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(RoadGraph::parse("node 1 45.0\n"), Err(GraphError::Syntax { line: 1, .. })));
        assert!(matches!(
            RoadGraph::parse("node 1 45 11\nedge 1 1 2 1\n"),
            Err(GraphError::MissingNode { edge: 1, node: 2 })
        ));
        assert!(matches!(
            RoadGraph::parse("node 1 45 11\nnode 2 45 11\nedge 1 1 2 1\n"),
            Err(GraphError::ZeroLength(1))
        ));
        assert!(matches!(
            RoadGraph::parse("node 1 45 11\nnode 1 46 11\n"),
            Err(GraphError::DuplicateNode(1))
        ));
        assert!(matches!(
            RoadGraph::parse("node 1 45 11\nnode 2 46 11\nedge 1 1 2 2\n"),
            Err(GraphError::Syntax { line: 3, .. })
        ));
        assert!(matches!(RoadGraph::parse("node 1 95 11\n"), Err(GraphError::BadCoordinate(_))));
    }

    #[test]
    fn route_distance_same_point_and_same_edge() {
        let g = triangle();
        let e = g.edge_idx(10).unwrap();
        let p = PointOnEdge { edge: e, offset: 100.0, pos: g.edge(e).point_at(100.0) };
        let q = PointOnEdge { edge: e, offset: 250.0, pos: g.edge(e).point_at(250.0) };
        assert_eq!(g.route_distance(&p, &p), Some(0.0));
        assert!((g.route_distance(&p, &q).unwrap() - 150.0).abs() < 1e-9);
        assert!((g.route_distance(&q, &p).unwrap() - 150.0).abs() < 1e-9);
    }

    #[test]
    fn route_distance_takes_shorter_way_around_triangle() {
        let g = triangle();
        // Near B on AB, to near B on BC: via B, not via A and C.
        let ab = g.edge_idx(10).unwrap();
        let bc = g.edge_idx(11).unwrap();
        let len_ab = g.edge(ab).length();
        let p = PointOnEdge { edge: ab, offset: len_ab - 10.0, pos: g.edge(ab).point_at(len_ab - 10.0) };
        let q = PointOnEdge { edge: bc, offset: 20.0, pos: g.edge(bc).point_at(20.0) };
        assert!((g.route_distance(&p, &q).unwrap() - 30.0).abs() < 1e-6);
    }

    #[test]
    fn one_way_edges_restrict_routes() {
        let a = LatLon::new(45.0, 11.0);
        let b = destination(a, 90.0, 100.0);
        let g = RoadGraph::builder()
            .node(1, a.lat, a.lon)
            .node(2, b.lat, b.lon)
            .edge(1, 1, 2, false)
            .build()
            .unwrap();
        let p = PointOnEdge { edge: 0, offset: 60.0, pos: g.edge(0).point_at(60.0) };
        let q = PointOnEdge { edge: 0, offset: 20.0, pos: g.edge(0).point_at(20.0) };
        assert!((g.route_distance(&q, &p).unwrap() - 40.0).abs() < 1e-9);
        assert_eq!(g.route_distance(&p, &q), None);
    }

    #[test]
    fn spatial_query_finds_nearby_edges() {
        let g = triangle();
        let a = g.node(g.node_idx(1).unwrap()).pos;
        let probe = destination(destination(a, 90.0, 150.0), 0.0, 3.0);
        let near = g.edges_near(probe, 50.0);
        assert_eq!(near.len(), 1);
        assert_eq!(g.edge(near[0].on_edge.edge).id, 10);
        assert!((near[0].distance - 3.0).abs() < 0.01);
        assert!((near[0].on_edge.offset - 150.0).abs() < 0.01);
        let near = g.edges_near(a, 50.0);
        assert_eq!(near.len(), 2);
    }

    #[test]
    fn components_are_labelled() {
        let g = RoadGraph::parse(
            "node 1 45 11\nnode 2 45.001 11\nnode 3 46 11\nnode 4 46.001 11\nedge 1 1 2 1\nedge 2 3 4 0\n",
        )
        .unwrap();
        let c = g.components();
        assert_eq!(c[0], c[1]);
        assert_eq!(c[2], c[3]);
        assert_ne!(c[0], c[2]);
    }

    #[test]
    fn point_at_interpolates() {
        let g = RoadGraph::parse("node 1 45 11\nnode 2 45.002 11\nedge 1 1 2 1 45.001 11\n").unwrap();
        let e = g.edge(0);
        assert_eq!(e.point_at(0.0), e.geometry[0]);
        assert_eq!(e.point_at(e.cumulative[1]), e.geometry[1]);
        assert_eq!(e.point_at(1e9), e.geometry[2]);
        let mid = e.point_at(e.length() * 0.25);
        assert!((mid.lat - 45.0005).abs() < 1e-9);
    }
}
