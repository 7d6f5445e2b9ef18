//! Exhaustive grid search over [`InferenceParams`].

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::canlog::CanFrame;
use crate::geokin::{VehiclePose, VehicleSpec};
use crate::inference::{infer_path, InferenceParams};
use crate::mapmatch::Matcher;
use crate::reveng::AngleDecoder;
use crate::trackeval::{compare_tracks, CompareOptions, Track};

#[derive(Debug, Clone, PartialEq)]
pub struct Grids {
    pub t_window: Vec<f64>,
    pub speed_max: Vec<f64>,
    pub steer_max: Vec<f64>,
    pub max_interpolation_points: Vec<usize>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            t_window: vec![0.05, 0.1, 0.5, 1.0],
            speed_max: vec![40.0, 50.0, 60.0, 70.0, 80.0],
            steer_max: vec![30.0, 35.0, 40.0, 45.0, 50.0],
            max_interpolation_points: vec![10, 20, 30, 40, 50],
        }
    }
}

impl Grids {
    pub fn single(params: &InferenceParams) -> Self {
        Self {
            t_window: vec![params.t_window],
            speed_max: vec![params.speed_max],
            steer_max: vec![params.steer_max],
            max_interpolation_points: vec![params.max_interpolation_points],
        }
    }

    pub fn len(&self) -> usize {
        self.t_window.len() * self.speed_max.len() * self.steer_max.len() * self.max_interpolation_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian product, `t_window` varying slowest.
    pub fn combinations(&self) -> Vec<InferenceParams> {
        let mut out = Vec::with_capacity(self.len());
        for &t_window in &self.t_window {
            for &speed_max in &self.speed_max {
                for &steer_max in &self.steer_max {
                    for &max_interpolation_points in &self.max_interpolation_points {
                        out.push(InferenceParams { t_window, speed_max, steer_max, max_interpolation_points });
                    }
                }
            }
        }
        out
    }
}

/// One evaluation track: recorded log plus everything needed to infer and score it.
#[derive(Clone)]
pub struct TuneTrack {
    pub name: String,
    pub log: Vec<CanFrame>,
    pub truth: Track,
    pub start: VehiclePose,
    pub decoder: AngleDecoder,
    pub spec: VehicleSpec,
    pub matcher: Arc<dyn Matcher>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneRow {
    pub params: InferenceParams,
    /// Accuracy per track in input order; 0 where inference failed.
    pub per_track: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    TWindow,
    SpeedMax,
    SteerMax,
    MaxInterpolationPoints,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::TWindow, Param::SpeedMax, Param::SteerMax, Param::MaxInterpolationPoints];

    pub fn name(self) -> &'static str {
        match self {
            Param::TWindow => "t_window",
            Param::SpeedMax => "speed_max",
            Param::SteerMax => "steer_max",
            Param::MaxInterpolationPoints => "max_interpolation_points",
        }
    }

    fn value(self, p: &InferenceParams) -> f64 {
        match self {
            Param::TWindow => p.t_window,
            Param::SpeedMax => p.speed_max,
            Param::SteerMax => p.steer_max,
            Param::MaxInterpolationPoints => p.max_interpolation_points as f64,
        }
    }
}

fn same_except(a: &InferenceParams, b: &InferenceParams, free: Param) -> bool {
    Param::ALL
        .iter()
        .filter(|&&p| p != free)
        .all(|&p| p.value(a) == p.value(b))
}

fn param_key(p: &InferenceParams) -> [f64; 4] {
    Param::ALL.map(|k| k.value(p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    /// Sorted by mean accuracy descending, ties broken by parameter values ascending.
    pub rows: Vec<TuneRow>,
    pub track_names: Vec<String>,
}

impl TuneReport {
    pub fn best(&self) -> Option<&TuneRow> {
        self.rows.first()
    }

    /// Row for an exact parameter combination.
    pub fn find(&self, params: &InferenceParams) -> Option<&TuneRow> {
        self.rows.iter().find(|r| param_key(&r.params) == param_key(params))
    }

    /// Zero-based rank of `params`.
    pub fn rank_of(&self, params: &InferenceParams) -> Option<usize> {
        self.rows.iter().position(|r| param_key(&r.params) == param_key(params))
    }

    /// Accuracy as `param` varies with the others fixed at `anchor`.
    pub fn curve(&self, param: Param, anchor: &InferenceParams) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| same_except(&r.params, anchor, param))
            .map(|r| (param.value(&r.params), r.mean_accuracy))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }

    /// Curve for `param` with the others fixed at the best combination.
    pub fn marginal(&self, param: Param) -> Vec<(f64, f64)> {
        self.best().map_or_else(Vec::new, |b| self.curve(param, &b.params))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_window,speed_max,steer_max,max_interpolation_points,mean_accuracy\n");
        for r in &self.rows {
            let p = &r.params;
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                p.t_window, p.speed_max, p.steer_max, p.max_interpolation_points, r.mean_accuracy
            );
        }
        out
    }

    pub fn marginals_csv(&self) -> String {
        let mut out = String::from("parameter,value,mean_accuracy\n");
        for p in Param::ALL {
            for (v, acc) in self.marginal(p) {
                let _ = writeln!(out, "{},{},{:.6}", p.name(), v, acc);
            }
        }
        out
    }
}

/// Scores one combination on one track; any failure scores 0.
pub fn evaluate(track: &TuneTrack, params: &InferenceParams, compare: &CompareOptions) -> f64 {
    match infer_path(&track.log, &track.decoder, &track.spec, track.start, params, track.matcher.as_ref()) {
        Ok(out) => compare_tracks(&out.track, &track.truth, compare).accuracy,
        Err(_) => 0.0,
    }
}

/// Runs every combination on every track. `workers` bounds the thread count;
/// `None` uses the global pool. The result does not depend on scheduling.
pub fn grid_search(
    tracks: &[TuneTrack],
    grids: &Grids,
    compare: &CompareOptions,
    workers: Option<usize>,
) -> Result<TuneReport, String> {
    if tracks.is_empty() {
        return Err("grid search needs at least one track".into());
    }
    let combos = grids.combinations();
    let cells: Vec<(usize, usize)> = (0..combos.len())
        .flat_map(|c| (0..tracks.len()).map(move |t| (c, t)))
        .collect();
    let run = || -> Vec<f64> {
        cells
            .par_iter()
            .map(|&(c, t)| evaluate(&tracks[t], &combos[c], compare))
            .collect()
    };
    let scores = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| e.to_string())?
            .install(run),
        None => run(),
    };

    let mut rows: Vec<TuneRow> = combos
        .into_iter()
        .enumerate()
        .map(|(c, params)| {
            let per_track = scores[c * tracks.len()..(c + 1) * tracks.len()].to_vec();
            let mean_accuracy = per_track.iter().sum::<f64>() / per_track.len() as f64;
            TuneRow { params, per_track, mean_accuracy }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mean_accuracy.total_cmp(&a.mean_accuracy).then_with(|| {
            param_key(&a.params)
                .iter()
                .zip(param_key(&b.params))
                .map(|(x, y)| x.total_cmp(&y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });
    Ok(TuneReport { rows, track_names: tracks.iter().map(|t| t.name.clone()).collect() })
}
