//! HMM map matching decoded with Viterbi over a local [`RoadGraph`].
//!
//! Emission log-weight: `-0.5 * (d_perp / sigma)^2`.
//! Transition log-weight: `-|d_great_circle - d_route| / beta`, where
//! `d_great_circle` is the distance between consecutive observations and
//! `d_route` the along-road distance between the two candidates.

use std::sync::Arc;

use super::graph::{PointOnEdge, RoadGraph};
use super::{MatchError, MatchResult, Matcher, MatcherConfig};
use crate::geokin::{distance, LatLon};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub edge_id: u64,
    pub on_edge: PointOnEdge,
    /// Perpendicular distance to the observation in meters.
    pub distance: f64,
}

/// Candidates for one observation: best projection per edge within the
/// search radius, nearest first, at most `max_candidates`.
pub fn candidates(graph: &RoadGraph, p: LatLon, config: &MatcherConfig) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = graph
        .edges_near(p, config.candidate_radius)
        .into_iter()
        .map(|proj| Candidate {
            edge_id: graph.edge(proj.on_edge.edge).id,
            on_edge: proj.on_edge,
            distance: proj.distance,
        })
        .collect();
    out.truncate(config.max_candidates);
    out
}

pub fn emission_weight(perp_distance: f64, sigma: f64) -> f64 {
    let z = perp_distance / sigma;
    -0.5 * z * z
}

/// `None` when the second candidate is unreachable from the first.
pub fn transition_weight(
    graph: &RoadGraph,
    from: &Candidate,
    to: &Candidate,
    great_circle: f64,
    beta: f64,
) -> Option<f64> {
    graph
        .route_distance(&from.on_edge, &to.on_edge)
        .map(|route| -(great_circle - route).abs() / beta)
}

/// Viterbi-optimal candidate sequence for `points`.
pub fn viterbi_match(graph: &RoadGraph, points: &[LatLon], config: &MatcherConfig) -> Result<MatchResult, MatchError> {
    if points.is_empty() {
        return Err(MatchError::EmptyInput);
    }
    let layers: Vec<Vec<Candidate>> = points.iter().map(|&p| candidates(graph, p, config)).collect();
    if let Some(index) = layers.iter().position(Vec::is_empty) {
        return Err(MatchError::Unmatched { index });
    }

    // Candidate order inside a layer doesn't matter for the optimum; edge-id
    // order makes "first best wins" implement the tie rule.
    let layers: Vec<Vec<Candidate>> = layers
        .into_iter()
        .map(|mut l| {
            l.sort_by(|a, b| a.edge_id.cmp(&b.edge_id).then(a.on_edge.offset.total_cmp(&b.on_edge.offset)));
            l
        })
        .collect();

    let mut score: Vec<f64> = layers[0]
        .iter()
        .map(|c| emission_weight(c.distance, config.emission_sigma))
        .collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(points.len());
    back.push(vec![0; layers[0].len()]);

    for i in 1..points.len() {
        let gc = distance(points[i - 1], points[i]);
        let prev = &layers[i - 1];
        let mut next_score = Vec::with_capacity(layers[i].len());
        let mut next_back = Vec::with_capacity(layers[i].len());
        for cand in &layers[i] {
            let mut best = f64::NEG_INFINITY;
            let mut arg = usize::MAX;
            for (j, pc) in prev.iter().enumerate() {
                if score[j] == f64::NEG_INFINITY {
                    continue;
                }
                let Some(t) = transition_weight(graph, pc, cand, gc, config.transition_beta) else {
                    continue;
                };
                let s = score[j] + t;
                if s > best {
                    best = s;
                    arg = j;
                }
            }
            if arg == usize::MAX {
                next_score.push(f64::NEG_INFINITY);
                next_back.push(0);
            } else {
                next_score.push(best + emission_weight(cand.distance, config.emission_sigma));
                next_back.push(arg);
            }
        }
        if next_score.iter().all(|s| *s == f64::NEG_INFINITY) {
            return Err(MatchError::NoRoute { index: i });
        }
        score = next_score;
        back.push(next_back);
    }

    let mut best = 0;
    for (k, s) in score.iter().enumerate() {
        if *s > score[best] {
            best = k;
        }
    }
    let total = score[best];

    let mut chosen = vec![0usize; points.len()];
    chosen[points.len() - 1] = best;
    for i in (1..points.len()).rev() {
        chosen[i - 1] = back[i][chosen[i]];
    }

    let picked: Vec<&Candidate> = chosen.iter().enumerate().map(|(i, &k)| &layers[i][k]).collect();
    Ok(MatchResult {
        matched_points: picked.iter().map(|c| c.on_edge.pos).collect(),
        edge_ids: picked.iter().map(|c| Some(c.edge_id)).collect(),
        score: Some(total),
    })
}

/// In-process matcher over a shared road graph.
#[derive(Debug, Clone)]
pub struct InternalMatcher {
    pub graph: Arc<RoadGraph>,
    pub config: MatcherConfig,
}

impl InternalMatcher {
    pub fn new(graph: Arc<RoadGraph>, config: MatcherConfig) -> Self {
        Self { graph, config }
    }
}

impl Matcher for InternalMatcher {
    fn match_trace(&self, points: &[LatLon]) -> Result<MatchResult, MatchError> {
        viterbi_match(&self.graph, points, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geokin::destination;

    fn straight() -> RoadGraph {
        let a = LatLon::new(45.0, 11.0);
        let b = destination(a, 90.0, 200.0);
        let c = destination(a, 90.0, 400.0);
        RoadGraph::builder()
            .node(1, a.lat, a.lon)
            .node(2, b.lat, b.lon)
            .node(3, c.lat, c.lon)
            .edge(1, 1, 2, true)
            .edge(2, 2, 3, true)
            .build()
            .unwrap()
    }

    #[test]
    fn single_point_projects_perpendicular() {
        let g = straight();
        let on_road = destination(LatLon::new(45.0, 11.0), 90.0, 50.0);
        let p = destination(on_road, 0.0, 3.0);
        let r = viterbi_match(&g, &[p], &MatcherConfig::default()).unwrap();
        assert_eq!(r.edge_ids, vec![Some(1)]);
        assert!(distance(r.matched_points[0], on_road) < 0.05);
    }

    #[test]
    fn on_edge_points_are_unchanged() {
        let g = straight();
        let pts: Vec<_> = (0..6).map(|k| g.edge(0).point_at(20.0 + 30.0 * f64::from(k))).collect();
        let r = viterbi_match(&g, &pts, &MatcherConfig::default()).unwrap();
        for (a, b) in r.matched_points.iter().zip(&pts) {
            assert!((a.lat - b.lat).abs() < 1e-9 && (a.lon - b.lon).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_two_edge_road_has_zero_transition_cost() {
        let g = straight();
        let pts: Vec<_> = [150.0, 190.0, 230.0, 260.0]
            .iter()
            .map(|&d| destination(LatLon::new(45.0, 11.0), 90.0, d))
            .collect();
        let r = viterbi_match(&g, &pts, &MatcherConfig::default()).unwrap();
        assert_eq!(r.edge_ids, vec![Some(1), Some(1), Some(2), Some(2)]);
        assert!(r.score.unwrap().abs() < 1e-6);
    }

    #[test]
    fn far_point_is_unmatched() {
        let g = straight();
        let near = destination(LatLon::new(45.0, 11.0), 90.0, 10.0);
        let far = destination(near, 0.0, 500.0);
        assert_eq!(
            viterbi_match(&g, &[near, far], &MatcherConfig::default()),
            Err(MatchError::Unmatched { index: 1 })
        );
        assert_eq!(viterbi_match(&g, &[], &MatcherConfig::default()), Err(MatchError::EmptyInput));
    }

    #[test]
    fn candidates_capped_and_sorted() {
        let g = straight();
        let b = g.node(1).pos;
        let cfg = MatcherConfig { max_candidates: 1, ..MatcherConfig::default() };
        let c = candidates(&g, destination(b, 0.0, 1.0), &cfg);
        assert_eq!(c.len(), 1);
        let all = candidates(&g, destination(b, 0.0, 1.0), &MatcherConfig::default());
        assert_eq!(all.len(), 2);
        assert!(all[0].distance <= all[1].distance);
        assert_eq!(all[0], c[0]);
    }
}
