//! Reconstruct the path driven by a vehicle from a CAN-bus log that carries
//! only steering-wheel-angle broadcasts and OBD-II vehicle-speed responses.
//!
//! The pipeline dead-reckons with the kinematic bicycle model over short
//! time windows and periodically snaps the accumulated points onto a road
//! network with an HMM map matcher. Around it sit the supporting tools:
//!
//! - [`canlog`]: candump log parsing, formatting and ID/mask filtering
//! - [`obd`]: OBD-II vehicle speed request/response codec
//! - [`reveng`]: steering-angle ID discovery and angle word decoding
//! - [`geokin`]: spherical geodesics and the bicycle-model heading update
//! - [`mapmatch`]: road graph, Viterbi matcher and external service client
//! - [`inference`]: the windowed dead-reckoning + map-matching pipeline
//! - [`trackeval`]: GPX I/O and Needleman-Wunsch track comparison
//! - [`synthgen`]: closed-loop simulator producing logs with known truth
//! - [`tuner`]: grid search over inference parameters

pub mod canlog;
pub mod geokin;
pub mod inference;
pub mod mapmatch;
pub mod obd;
pub mod reveng;
pub mod synthgen;
pub mod trackeval;
pub mod tuner;

pub use canlog::{CanFrame, IdFilter, Timestamp};
pub use geokin::{LatLon, VehiclePose, VehicleSpec};
pub use inference::{infer_path, InferenceOutput, InferenceParams};
pub use mapmatch::{MatchResult, Matcher, MatcherConfig, RoadGraph};
pub use obd::ObdSpeedReading;
pub use reveng::{AngleDecoder, AngleMode, SteeringSample};
pub use trackeval::{AlignmentResult, Track};
