//! TOML documents read and written by `synth` and `tune`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Simulation scenario. Relative paths resolve against the scenario file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub graph: PathBuf,
    pub route: Vec<u64>,
    /// Constant speed; alternative to `speed`.
    pub speed_kmh: Option<f64>,
    #[serde(default)]
    pub speed: Vec<SpeedEntry>,
    pub swa_rate: Option<f64>,
    pub obd_rate: Option<f64>,
    pub model: Option<String>,
    pub wheelbase: Option<f64>,
    pub decoder_file: Option<PathBuf>,
    pub start_bearing_error: Option<f64>,
    pub turn_radius: Option<f64>,
    /// Unix seconds of the first frame.
    pub start_time: Option<f64>,
    pub interface: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedEntry {
    pub from_m: f64,
    pub kmh: f64,
}

/// Track list for `tune`; `synth` writes one with a single track.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grids: Option<GridsFile>,
    pub track: Vec<TrackEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsFile {
    pub t_window: Option<Vec<f64>>,
    pub speed_max: Option<Vec<f64>>,
    pub steer_max: Option<Vec<f64>>,
    pub max_interpolation_points: Option<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackEntry {
    pub name: Option<String>,
    pub log: PathBuf,
    pub truth: PathBuf,
    /// latitude, longitude, bearing
    pub start: [f64; 3],
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wheelbase: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoder_file: Option<PathBuf>,
    /// Road graph for the internal matcher.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
    /// `internal:<graph>`, `external:<url>` or `none`; overrides `graph`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matcher: Option<String>,
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn parent_dir(file: &Path) -> PathBuf {
    file.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}
