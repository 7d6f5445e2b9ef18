//! Windowed dead reckoning with periodic map matching.
//!
//! Each window of `t_window` seconds averages the decoded steering angles and
//! OBD speeds, turns the heading with the bicycle model, steps the position
//! along a great circle, and queues the new point. Every
//! `max_interpolation_points` windows the queued points are map matched, the
//! matched points join the output track, the pose jumps to the last matched
//! point and the length mismatch between matched and dead-reckoned polylines
//! is carried into the next window's travel distance.

use std::fmt::{self, Write as _};

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::canlog::{CanFrame, Timestamp};
use crate::geokin::{
    apply_heading, geodesic_forward, geodesic_inverse, polyline_length, KinematicStep, LatLon, VehiclePose,
    VehicleSpec,
};
use crate::mapmatch::{MatchError, Matcher};
use crate::obd::decode_speed_response;
use crate::reveng::{decode_angle, AngleDecoder};
use crate::trackeval::{write_gpx, Track, TrackPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("log is empty")]
    EmptyLog,
    #[error("log has no decodable steering-angle frame for id {0:#05x}")]
    NoSteeringFrames(u16),
    #[error("invalid inference parameters: {0}")]
    InvalidParams(String),
    #[error("invalid vehicle spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceParams {
    /// Window length in seconds.
    pub t_window: f64,
    /// Above this speed (km/h) the vehicle is assumed to drive straight.
    pub speed_max: f64,
    /// Steering clamp in degrees.
    pub steer_max: f64,
    /// Windows per map-matching batch.
    pub max_interpolation_points: usize,
}

impl Default for InferenceParams {
    fn default() -> Self {
        Self { t_window: 0.1, speed_max: 50.0, steer_max: 35.0, max_interpolation_points: 30 }
    }
}

impl InferenceParams {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::InvalidParams(m.to_string()));
        if !(self.t_window > 0.0 && self.t_window.is_finite()) || self.window_micros() == 0 {
            return bad("t_window must be positive");
        }
        if self.speed_max.is_nan() || self.speed_max <= 0.0 {
            return bad("speed_max must be positive");
        }
        if !(self.steer_max > 0.0 && self.steer_max <= 90.0) {
            return bad("steer_max must be in (0, 90]");
        }
        if self.max_interpolation_points == 0 {
            return bad("max_interpolation_points must be positive");
        }
        Ok(())
    }

    fn window_micros(&self) -> u64 {
        (self.t_window * 1e6).round() as u64
    }
}

impl fmt::Display for InferenceParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t_window={} speed_max={} steer_max={} max_interpolation_points={}",
            self.t_window, self.speed_max, self.steer_max, self.max_interpolation_points
        )
    }
}

/// Per-window averages. Categories without samples in the window keep the
/// previous window's value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowAggregate {
    /// Degrees, positive = left.
    pub avg_angle: f64,
    /// m/s
    pub avg_speed: f64,
    pub angle_samples: usize,
    pub speed_samples: usize,
}

pub fn window_aggregate(frames: &[CanFrame], decoder: &AngleDecoder, previous: &WindowAggregate) -> WindowAggregate {
    let (mut angle_sum, mut angle_n) = (0.0, 0usize);
    let (mut speed_sum, mut speed_n) = (0.0, 0usize);
    for f in frames {
        if f.id == decoder.id {
            if let Ok(s) = decode_angle(decoder, f) {
                angle_sum += s.angle;
                angle_n += 1;
            }
        } else if let Some(r) = decode_speed_response(f) {
            speed_sum += r.speed_mps();
            speed_n += 1;
        }
    }
    WindowAggregate {
        avg_angle: if angle_n > 0 { angle_sum / angle_n as f64 } else { previous.avg_angle },
        avg_speed: if speed_n > 0 { speed_sum / speed_n as f64 } else { previous.avg_speed },
        angle_samples: angle_n,
        speed_samples: speed_n,
    }
}

pub fn clamp_steer(angle: f64, steer_max: f64) -> f64 {
    angle.clamp(-steer_max, steer_max)
}

/// Above `speed_max` km/h the bearing is replaced by the direction of the
/// previous window's displacement.
pub fn straighten_if_fast(pose: VehiclePose, prev_window_start: LatLon, speed: f64, speed_max_kmh: f64) -> VehiclePose {
    if speed * 3.6 <= speed_max_kmh {
        return pose;
    }
    let (dist, bearing) = geodesic_inverse(prev_window_start, pose.position());
    if dist <= 0.0 {
        return pose;
    }
    VehiclePose { bearing, ..pose }
}

/// Pipeline state carried between windows.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceState {
    pub pose: VehiclePose,
    /// Meters still to be added to the next window's travel.
    pub carry_distance: f64,
    pub pending_points: Vec<LatLon>,
    pending_times: Vec<Timestamp>,
    pub window_counter: usize,
    pub inferred_track: Vec<TrackPoint>,
    prev_window_start: Option<LatLon>,
    aggregate: WindowAggregate,
}

impl InferenceState {
    pub fn new(start: VehiclePose) -> Self {
        Self {
            pose: start,
            carry_distance: 0.0,
            pending_points: Vec::new(),
            pending_times: Vec::new(),
            window_counter: 0,
            inferred_track: Vec::new(),
            prev_window_start: None,
            aggregate: WindowAggregate::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FallbackSpan {
    pub batch: usize,
    pub first_window: usize,
    pub windows: usize,
    pub reason: MatchError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub windows: usize,
    pub batches: usize,
    pub batches_matched: usize,
    pub fallback_spans: Vec<FallbackSpan>,
    pub angle_frames: usize,
    pub speed_frames: usize,
    pub ignored_frames: usize,
    /// Sum of `speed * t_window` over all windows.
    pub base_distance: f64,
    /// Carry produced by matched batches.
    pub carry_generated: f64,
    /// Carry folded into window travel.
    pub carry_applied: f64,
    /// Total distance stepped by the dead reckoner.
    pub stepped_distance: f64,
    pub matched_points: usize,
    pub fallback_points: usize,
}

impl Diagnostics {
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "windows_processed {}", self.windows);
        let _ = writeln!(s, "batches {}", self.batches);
        let _ = writeln!(s, "batches_matched {}", self.batches_matched);
        let _ = writeln!(s, "fallback_spans {}", self.fallback_spans.len());
        for f in &self.fallback_spans {
            let _ = writeln!(
                s,
                "fallback batch={} first_window={} windows={} reason=\"{}\"",
                f.batch, f.first_window, f.windows, f.reason
            );
        }
        let _ = writeln!(s, "angle_frames {}", self.angle_frames);
        let _ = writeln!(s, "speed_frames {}", self.speed_frames);
        let _ = writeln!(s, "ignored_frames {}", self.ignored_frames);
        let _ = writeln!(s, "matched_points {}", self.matched_points);
        let _ = writeln!(s, "fallback_points {}", self.fallback_points);
        let _ = writeln!(s, "dead_reckoned_m {:.3}", self.stepped_distance);
        let _ = writeln!(s, "total_carry_m {:.3}", self.carry_applied);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutput {
    pub track: Track,
    pub diagnostics: Diagnostics,
}

impl InferenceOutput {
    pub fn to_gpx(&self) -> String {
        write_gpx(&self.track)
    }
}

fn to_datetime(ts: Timestamp) -> Option<DateTime<Utc>> {
    let micros = i64::try_from(ts.as_micros()).ok()?;
    DateTime::from_timestamp_micros(micros)
}

struct Pipeline<'a> {
    decoder: &'a AngleDecoder,
    spec: &'a VehicleSpec,
    params: &'a InferenceParams,
    matcher: &'a dyn Matcher,
    state: InferenceState,
    diag: Diagnostics,
}

impl Pipeline<'_> {
    fn step_window(&mut self, frames: &[CanFrame], window_end: Timestamp) {
        let tw = self.params.t_window;
        let agg = window_aggregate(frames, self.decoder, &self.state.aggregate);
        self.state.aggregate = agg;

        let base = agg.avg_speed * tw;
        let mut travel = base;
        if self.state.carry_distance > 0.0 {
            travel += self.state.carry_distance;
            self.diag.carry_applied += self.state.carry_distance;
            self.state.carry_distance = 0.0;
        }
        self.diag.base_distance += base;

        let angle = clamp_steer(agg.avg_angle, self.params.steer_max);
        let step = KinematicStep::compute(agg.avg_speed, angle, self.spec.wheelbase, tw);
        let mut pose = apply_heading(self.state.pose, step.heading_delta);
        if let Some(prev) = self.state.prev_window_start {
            pose = straighten_if_fast(pose, prev, agg.avg_speed, self.params.speed_max);
        }

        self.state.prev_window_start = Some(pose.position());
        pose.set_position(geodesic_forward(&pose, travel));
        self.state.pose = pose;
        self.diag.stepped_distance += travel;
        self.diag.windows += 1;

        self.state.pending_points.push(pose.position());
        self.state.pending_times.push(window_end);
        self.state.window_counter += 1;
        if self.state.pending_points.len() >= self.params.max_interpolation_points {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.state.pending_points.is_empty() {
            return;
        }
        let pending = std::mem::take(&mut self.state.pending_points);
        let times = std::mem::take(&mut self.state.pending_times);
        let batch = self.diag.batches;
        self.diag.batches += 1;

        match self.matcher.match_trace(&pending) {
            Ok(m) if !m.matched_points.is_empty() => {
                let same_count = m.matched_points.len() == times.len();
                for (i, p) in m.matched_points.iter().enumerate() {
                    let time = if same_count { to_datetime(times[i]) } else { None };
                    self.state.inferred_track.push(TrackPoint { pos: *p, time });
                }
                let carry = (polyline_length(&m.matched_points) - polyline_length(&pending)).abs();
                self.state.carry_distance = carry;
                self.diag.carry_generated += carry;
                self.diag.batches_matched += 1;
                self.diag.matched_points += m.matched_points.len();
                self.state.pose.set_position(*m.matched_points.last().unwrap());
            }
            outcome => {
                let reason = match outcome {
                    Err(e) => e,
                    Ok(_) => MatchError::Unmatched { index: 0 },
                };
                self.diag.fallback_spans.push(FallbackSpan {
                    batch,
                    first_window: self.state.window_counter - pending.len(),
                    windows: pending.len(),
                    reason,
                });
                self.diag.fallback_points += pending.len();
                for (p, t) in pending.iter().zip(&times) {
                    self.state.inferred_track.push(TrackPoint { pos: *p, time: to_datetime(*t) });
                }
            }
        }
    }
}

/// Runs the full pipeline over `log` starting from the known `start` pose.
///
/// Frames other than the decoder's steering ID and OBD speed responses are
/// ignored. The log is processed in timestamp order; windows are anchored at
/// the first relevant frame. Output is a pure function of the inputs.
pub fn infer_path(
    log: &[CanFrame],
    decoder: &AngleDecoder,
    spec: &VehicleSpec,
    start: VehiclePose,
    params: &InferenceParams,
    matcher: &dyn Matcher,
) -> Result<InferenceOutput, InferenceError> {
    params.validate()?;
    if !spec.is_valid() {
        return Err(InferenceError::InvalidSpec(format!("{spec:?}")));
    }
    decoder
        .validate()
        .map_err(|e| InferenceError::InvalidSpec(e.to_string()))?;
    if log.is_empty() {
        return Err(InferenceError::EmptyLog);
    }

    let mut diag = Diagnostics::default();
    let mut relevant: Vec<CanFrame> = Vec::with_capacity(log.len());
    for f in log {
        if f.id == decoder.id && decode_angle(decoder, f).is_ok() {
            diag.angle_frames += 1;
            relevant.push(f.clone());
        } else if decode_speed_response(f).is_some() {
            diag.speed_frames += 1;
            relevant.push(f.clone());
        } else {
            diag.ignored_frames += 1;
        }
    }
    if diag.angle_frames == 0 {
        return Err(InferenceError::NoSteeringFrames(decoder.id));
    }
    relevant.sort_by_key(|f| f.timestamp);

    let t0 = relevant[0].timestamp.as_micros();
    let tw = params.window_micros();
    let last_window = (relevant.last().unwrap().timestamp.as_micros() - t0) / tw;

    let mut pipe = Pipeline {
        decoder,
        spec,
        params,
        matcher,
        state: InferenceState::new(VehiclePose::new(start.lat, start.lon, start.bearing)),
        diag,
    };

    pipe.state.inferred_track.push(TrackPoint {
        pos: start.position(),
        time: to_datetime(Timestamp::from_micros(t0)),
    });

    let mut cursor = 0;
    for k in 0..=last_window {
        let end = t0 + (k + 1) * tw;
        let begin = cursor;
        while cursor < relevant.len() && relevant[cursor].timestamp.as_micros() < end {
            cursor += 1;
        }
        pipe.step_window(&relevant[begin..cursor], Timestamp::from_micros(end));
    }
    pipe.flush();

    Ok(InferenceOutput {
        track: Track { name: Some(spec.model.clone()), points: pipe.state.inferred_track },
        diagnostics: pipe.diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geokin::distance;
    use crate::mapmatch::PassthroughMatcher;
    use crate::obd::encode_speed_response;

    fn decoder() -> AngleDecoder {
        AngleDecoder::offset_7fff(0x0C6)
    }

    fn angle_frame(t_us: u64, angle: f64) -> CanFrame {
        decoder().encode_frame(Timestamp::from_micros(t_us), "can0", angle).unwrap()
    }

    fn speed_frame(t_us: u64, kmh: u8) -> CanFrame {
        encode_speed_response(Timestamp::from_micros(t_us), "can0", 0x7E8, kmh)
    }

    /// 100 Hz angle, 10 Hz speed, constant inputs, `seconds` long.
    fn constant_log(seconds: u64, angle: f64, kmh: u8) -> Vec<CanFrame> {
        let mut log = Vec::new();
        for i in 0..seconds * 100 {
            log.push(angle_frame(i * 10_000, angle));
            if i % 10 == 0 {
                log.push(speed_frame(i * 10_000 + 5_000, kmh));
            }
        }
        log
    }

    #[test]
    fn aggregate_examples() {
        let frames = vec![
            angle_frame(0, -5.67),
            angle_frame(10_000, -5.67),
            speed_frame(20_000, 33),
        ];
        let a = window_aggregate(&frames, &decoder(), &WindowAggregate::default());
        assert!((a.avg_angle + 5.67).abs() < 1e-12);
        assert!((a.avg_speed - 9.166_666_666_666_666).abs() < 1e-9);
        assert_eq!((a.angle_samples, a.speed_samples), (2, 1));

        let b = window_aggregate(&frames[..2], &decoder(), &a);
        assert_eq!(b.avg_speed, a.avg_speed);
        assert_eq!(b.speed_samples, 0);

        let c = window_aggregate(&[], &decoder(), &a);
        assert_eq!((c.avg_angle, c.avg_speed), (a.avg_angle, a.avg_speed));
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_steer(40.0, 35.0), 35.0);
        assert_eq!(clamp_steer(-50.0, 35.0), -35.0);
        assert_eq!(clamp_steer(10.0, 35.0), 10.0);
    }

    #[test]
    fn straighten_examples() {
        let prev = LatLon::new(45.0, 11.0);
        let cur = crate::geokin::destination(prev, 90.0, 2.0);
        let pose = VehiclePose::new(cur.lat, cur.lon, 60.0);
        let fast = straighten_if_fast(pose, prev, 20.0, 50.0);
        // Initial bearing east along a parallel differs from 90 by ~lon/2*sin(lat), tiny at 2 m.
        assert!((fast.bearing - 90.0).abs() < 1e-4);
        assert_eq!(straighten_if_fast(pose, prev, 10.0, 50.0), pose);
        assert_eq!(straighten_if_fast(pose, cur, 20.0, 50.0), pose);
    }

    #[test]
    fn empty_and_angle_free_logs_fail() {
        let spec = VehicleSpec::new("test", 2.6);
        let start = VehiclePose::new(45.0, 11.0, 0.0);
        let p = InferenceParams::default();
        assert_eq!(
            infer_path(&[], &decoder(), &spec, start, &p, &PassthroughMatcher),
            Err(InferenceError::EmptyLog)
        );
        let only_speed = vec![speed_frame(0, 30)];
        assert_eq!(
            infer_path(&only_speed, &decoder(), &spec, start, &p, &PassthroughMatcher),
            Err(InferenceError::NoSteeringFrames(0x0C6))
        );
        let bad = InferenceParams { t_window: 0.0, ..p };
        assert!(matches!(
            infer_path(&only_speed, &decoder(), &spec, start, &bad, &PassthroughMatcher),
            Err(InferenceError::InvalidParams(_))
        ));
    }

    #[test]
    fn straight_dead_reckoning_length() {
        let log = constant_log(100, 0.0, 36);
        let spec = VehicleSpec::new("test", 2.6);
        let start = VehiclePose::new(45.0, 11.0, 30.0);
        let out = infer_path(&log, &decoder(), &spec, start, &InferenceParams::default(), &PassthroughMatcher).unwrap();
        let d = &out.diagnostics;
        assert_eq!(d.windows, 1000);
        // start pose plus one point per window
        assert_eq!(out.track.len(), 1001);
        assert_eq!(out.track.points[0].pos, start.position());
        let length = polyline_length(&out.track.positions());
        assert!((length - d.base_distance).abs() / d.base_distance < 1e-3);
        // the first window has no speed sample before 5 ms; all later ones hold 10 m/s
        assert!((d.base_distance - 1000.0).abs() < 1.0 + 1e-9);
        assert_eq!(d.carry_generated, 0.0);
    }

    #[test]
    fn left_turn_decreases_bearing_and_stays_wrapped() {
        let log = constant_log(20, 10.0, 20);
        let spec = VehicleSpec::new("test", 2.6);
        let start = VehiclePose::new(45.0, 11.0, 5.0);
        let out = infer_path(&log, &decoder(), &spec, start, &InferenceParams::default(), &PassthroughMatcher).unwrap();
        let pts = out.track.positions();
        let b0 = geodesic_inverse(pts[0], pts[1]).1;
        let b1 = geodesic_inverse(pts[1], pts[2]).1;
        assert!(crate::geokin::bearing_diff(b0, b1) < 0.0);
        // steady circle: radius L / tan(10 deg) = 14.75 m, stays within it
        let centre_dist: Vec<f64> = pts.iter().map(|p| distance(*p, pts[0])).collect();
        assert!(centre_dist.iter().all(|d| *d < 2.0 * 14.75 + 1.0));
    }

    struct FailingMatcher;
    impl Matcher for FailingMatcher {
        fn match_trace(&self, _: &[LatLon]) -> Result<crate::mapmatch::MatchResult, MatchError> {
            Err(MatchError::Unmatched { index: 0 })
        }
    }

    #[test]
    fn matcher_failure_falls_back_to_raw_points() {
        let log = constant_log(10, 0.0, 36);
        let spec = VehicleSpec::new("test", 2.6);
        let start = VehiclePose::new(45.0, 11.0, 0.0);
        let out = infer_path(&log, &decoder(), &spec, start, &InferenceParams::default(), &FailingMatcher).unwrap();
        let d = &out.diagnostics;
        assert_eq!(d.windows, 100);
        assert_eq!(d.batches, 4);
        assert_eq!(d.batches_matched, 0);
        assert_eq!(d.fallback_points, 100);
        assert_eq!(d.fallback_spans[3].first_window, 90);
        assert_eq!(d.fallback_spans[3].windows, 10);
        assert_eq!(out.track.len(), 101);
        assert!(d.report().contains("fallback_spans 4"));
    }

    #[test]
    fn timestamps_attached_at_window_end() {
        let log = constant_log(1, 0.0, 36);
        let spec = VehicleSpec::new("test", 2.6);
        let out = infer_path(
            &log,
            &decoder(),
            &spec,
            VehiclePose::new(45.0, 11.0, 0.0),
            &InferenceParams::default(),
            &PassthroughMatcher,
        )
        .unwrap();
        assert_eq!(out.track.points[0].time.unwrap().timestamp_micros(), 0);
        assert_eq!(out.track.points[1].time.unwrap().timestamp_micros(), 100_000);
    }
}
