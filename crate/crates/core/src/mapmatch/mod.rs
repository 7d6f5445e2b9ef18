//! Map matching: snap a dead-reckoned coordinate sequence onto roads.
//!
//! Two backends sit behind [`Matcher`]: [`InternalMatcher`] decodes an HMM
//! with Viterbi over a local [`RoadGraph`], and [`ExternalMatcher`] talks to a
//! Valhalla-compatible trace-matching service over HTTP.

mod external;
mod graph;
mod viterbi;

use thiserror::Error;

use crate::geokin::LatLon;

pub use external::{
    build_external_request, decode_polyline6, encode_polyline6, parse_external_response, ExternalMatcher,
    MATCHER_URL_ENV,
};
pub use graph::{Edge, GraphError, Node, PointOnEdge, Projection, RoadGraph, RoadGraphBuilder};
pub use viterbi::{candidates, emission_weight, transition_weight, viterbi_match, Candidate, InternalMatcher};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("no points to match")]
    EmptyInput,
    #[error("no candidate road within radius of point {index}")]
    Unmatched { index: usize },
    #[error("no road route reaches any candidate of point {index}")]
    NoRoute { index: usize },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("service error {code}: {message}")]
    Service { code: i64, message: String },
    #[error("malformed service response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatcherConfig {
    pub backend: Backend,
    /// Emission standard deviation in meters.
    pub emission_sigma: f64,
    /// Transition scale in meters.
    pub transition_beta: f64,
    pub candidate_radius: f64,
    pub max_candidates: usize,
    pub service_url: Option<String>,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Internal,
            emission_sigma: 4.07,
            transition_beta: 3.0,
            candidate_radius: 50.0,
            max_candidates: 10,
            service_url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub matched_points: Vec<LatLon>,
    /// Matched edge per point where the backend reports one.
    pub edge_ids: Vec<Option<u64>>,
    /// Log-weight of the decoded sequence (internal backend only).
    pub score: Option<f64>,
}

pub trait Matcher: Send + Sync {
    fn match_trace(&self, points: &[LatLon]) -> Result<MatchResult, MatchError>;
}

/// Returns the input unchanged; turns inference into pure dead reckoning.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassthroughMatcher;

impl Matcher for PassthroughMatcher {
    fn match_trace(&self, points: &[LatLon]) -> Result<MatchResult, MatchError> {
        if points.is_empty() {
            return Err(MatchError::EmptyInput);
        }
        Ok(MatchResult {
            matched_points: points.to_vec(),
            edge_ids: vec![None; points.len()],
            score: None,
        })
    }
}

impl<M: Matcher + ?Sized> Matcher for &M {
    fn match_trace(&self, points: &[LatLon]) -> Result<MatchResult, MatchError> {
        (**self).match_trace(points)
    }
}

impl<M: Matcher + ?Sized> Matcher for Box<M> {
    fn match_trace(&self, points: &[LatLon]) -> Result<MatchResult, MatchError> {
        (**self).match_trace(points)
    }
}

/// Top-level dispatch: match `points` with whichever backend `config` names.
pub fn match_trace(
    graph: Option<&std::sync::Arc<RoadGraph>>,
    points: &[LatLon],
    config: &MatcherConfig,
) -> Result<MatchResult, MatchError> {
    match config.backend {
        Backend::Internal => {
            let graph = graph.ok_or_else(|| MatchError::Transport("internal backend needs a road graph".into()))?;
            viterbi_match(graph, points, config)
        }
        Backend::External => {
            let url = config
                .service_url
                .clone()
                .ok_or_else(|| MatchError::Transport("external backend needs a service url".into()))?;
            ExternalMatcher::new(url, config.clone()).match_trace(points)
        }
    }
}
