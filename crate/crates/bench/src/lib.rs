//! Shared workloads for the benchmarks.

use std::sync::Arc;

use canpath::mapmatch::{InternalMatcher, MatcherConfig};
use canpath::synthgen::{simulate, suite, SimOutput, SimScenario};
use canpath::LatLon;

pub struct Workload {
    pub scenario: SimScenario,
    pub output: SimOutput,
}

impl Workload {
    pub fn staircase() -> Self {
        let scenario = suite::staircase(LatLon::new(45.0, 7.5));
        let output = simulate(&scenario).expect("staircase simulates");
        Workload { scenario, output }
    }

    pub fn matcher(&self) -> InternalMatcher {
        InternalMatcher::new(Arc::clone(&self.scenario.graph), MatcherConfig::default())
    }

    /// Truth positions thinned to every `step`th point.
    pub fn trace(&self, step: usize) -> Vec<LatLon> {
        self.output.truth.positions().into_iter().step_by(step.max(1)).collect()
    }
}
