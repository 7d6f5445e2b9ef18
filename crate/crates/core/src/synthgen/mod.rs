//! Closed-loop simulator: drive a route on a road graph and emit the CAN log
//! the collector would have captured, together with the ground-truth track.
//!
//! The driven path is the route polyline with every corner replaced by a
//! circular fillet, so curvature is piecewise constant and the steering angle
//! follows from the bicycle model as `delta = atan(L * curvature)`.

mod path;
pub mod suite;

use std::sync::Arc;

use thiserror::Error;

use crate::canlog::{CanFrame, Timestamp};
use crate::geokin::{LatLon, VehiclePose, VehicleSpec};
use crate::mapmatch::RoadGraph;
use crate::obd::encode_speed_response;
use crate::reveng::{AngleDecoder, AngleError};
use crate::trackeval::{Track, TrackPoint};

pub use path::{DrivenPath, LocalFrame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("route is empty")]
    EmptyRoute,
    #[error("unknown edge id {0}")]
    UnknownEdge(u64),
    #[error("route is not contiguous at position {0}")]
    NonContiguous(usize),
    #[error("speed profile must start at 0 m and have speeds in (0, 255] km/h")]
    BadSpeedProfile,
    #[error("sample rates must be positive")]
    BadRate,
    #[error(transparent)]
    Angle(#[from] AngleError),
}

/// Constant speed from `from_m` meters along the route until the next segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedSegment {
    pub from_m: f64,
    pub kmh: f64,
}

#[derive(Debug, Clone)]
pub struct SimScenario {
    pub name: String,
    pub graph: Arc<RoadGraph>,
    /// Edge ids in driving order.
    pub route: Vec<u64>,
    pub speed_profile: Vec<SpeedSegment>,
    /// Steering-angle broadcast rate in Hz.
    pub swa_rate: f64,
    /// OBD speed response rate in Hz.
    pub obd_rate: f64,
    pub decoder: AngleDecoder,
    pub spec: VehicleSpec,
    /// Added to the true initial bearing of the returned start pose.
    pub start_bearing_error: f64,
    /// Desired corner fillet radius in meters; shrinks where segments are short.
    pub turn_radius: f64,
    pub start_time: Timestamp,
    pub interface: String,
}

impl SimScenario {
    pub fn new(name: impl Into<String>, graph: Arc<RoadGraph>, route: Vec<u64>, kmh: f64) -> Self {
        Self {
            name: name.into(),
            graph,
            route,
            speed_profile: vec![SpeedSegment { from_m: 0.0, kmh }],
            swa_rate: 100.0,
            obd_rate: 10.0,
            decoder: AngleDecoder::offset_7fff(0x0C6),
            spec: VehicleSpec::new("Renault Captur", 2.606),
            start_bearing_error: 0.0,
            turn_radius: 10.0,
            start_time: Timestamp::from_micros(1_684_149_582_000_000),
            interface: "can0".into(),
        }
    }

    /// Speed in km/h at `s` meters along the route.
    pub fn speed_at(&self, s: f64) -> f64 {
        self.speed_profile
            .iter()
            .rev()
            .find(|seg| seg.from_m <= s)
            .unwrap_or(&self.speed_profile[0])
            .kmh
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.route.is_empty() {
            return Err(SimError::EmptyRoute);
        }
        let profile_ok = !self.speed_profile.is_empty()
            && self.speed_profile[0].from_m == 0.0
            && self.speed_profile.windows(2).all(|w| w[0].from_m < w[1].from_m)
            && self.speed_profile.iter().all(|s| s.kmh > 0.0 && s.kmh <= 255.0);
        if !profile_ok {
            return Err(SimError::BadSpeedProfile);
        }
        if !(self.swa_rate > 0.0 && self.obd_rate > 0.0) {
            return Err(SimError::BadRate);
        }
        self.decoder.validate()?;
        Ok(())
    }

    /// Route geometry as a lat/lon polyline in driving order.
    pub fn route_polyline(&self) -> Result<Vec<LatLon>, SimError> {
        route_polyline(&self.graph, &self.route)
    }
}

/// Orients each route edge and concatenates the geometries.
pub fn route_polyline(graph: &RoadGraph, route: &[u64]) -> Result<Vec<LatLon>, SimError> {
    let edges: Vec<_> = route
        .iter()
        .map(|&id| graph.edge_by_id(id).ok_or(SimError::UnknownEdge(id)))
        .collect::<Result<_, _>>()?;
    let Some(first) = edges.first() else {
        return Err(SimError::EmptyRoute);
    };

    let can_leave = |e: &crate::mapmatch::Edge, node: usize| e.from == node || (e.bidirectional && e.to == node);
    // Pick the first edge's direction so that its end connects to the second edge.
    let mut at = match edges.get(1) {
        Some(next) if can_leave(next, first.to) => first.to,
        Some(next) if first.bidirectional && can_leave(next, first.from) => first.from,
        Some(_) => return Err(SimError::NonContiguous(1)),
        None => first.to,
    };
    let mut pts: Vec<LatLon> = if at == first.to {
        first.geometry.clone()
    } else {
        first.geometry.iter().rev().copied().collect()
    };

    for (i, e) in edges.iter().enumerate().skip(1) {
        let forward = e.from == at;
        if !forward && !(e.bidirectional && e.to == at) {
            return Err(SimError::NonContiguous(i));
        }
        let geom: Vec<LatLon> = if forward {
            e.geometry.clone()
        } else {
            e.geometry.iter().rev().copied().collect()
        };
        at = if forward { e.to } else { e.from };
        pts.extend_from_slice(&geom[1..]);
    }
    pts.dedup();
    Ok(pts)
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Steering and speed frames interleaved in strictly increasing time.
    pub log: Vec<CanFrame>,
    /// Route position sampled at 1 Hz plus the final point.
    pub truth: Track,
    pub start: VehiclePose,
    /// Unquantized steering angle for every emitted steering frame.
    pub analytic_angles: Vec<f64>,
    pub path: DrivenPath,
}

/// Distance along the route as a function of time, for a speed profile that is
/// piecewise constant in distance.
struct Timeline {
    /// (start time s, start distance m, speed m/s)
    pieces: Vec<(f64, f64, f64)>,
    total_time: f64,
}

impl Timeline {
    fn new(scenario: &SimScenario, length: f64) -> Self {
        let mut pieces = Vec::new();
        let mut t = 0.0;
        for (i, seg) in scenario.speed_profile.iter().enumerate() {
            if seg.from_m >= length {
                break;
            }
            let end = scenario
                .speed_profile
                .get(i + 1)
                .map_or(length, |n| n.from_m.min(length));
            let v = seg.kmh / 3.6;
            pieces.push((t, seg.from_m, v));
            t += (end - seg.from_m) / v;
        }
        Self { pieces, total_time: t }
    }

    fn distance_at(&self, t: f64) -> f64 {
        let piece = self
            .pieces
            .iter()
            .rev()
            .find(|p| p.0 <= t)
            .unwrap_or(&self.pieces[0]);
        piece.1 + (t - piece.0) * piece.2
    }
}

pub fn simulate(scenario: &SimScenario) -> Result<SimOutput, SimError> {
    scenario.validate()?;
    let polyline = scenario.route_polyline()?;
    let path = DrivenPath::new(&polyline, scenario.turn_radius);
    let length = path.length();
    let timeline = Timeline::new(scenario, length);
    let t0 = scenario.start_time.as_micros();
    let iface = scenario.interface.as_str();

    let swa_period = (1e6 / scenario.swa_rate).round() as u64;
    let obd_period = (1e6 / scenario.obd_rate).round() as u64;
    let obd_phase = swa_period / 2;
    let total_us = (timeline.total_time * 1e6).round() as u64;

    let mut log = Vec::new();
    let mut analytic_angles = Vec::new();
    let (mut k_swa, mut k_obd) = (0u64, 0u64);
    let mut last_ts = None;
    loop {
        let t_swa = k_swa * swa_period;
        let t_obd = k_obd * obd_period + obd_phase;
        let (rel, is_swa) = if t_swa <= t_obd { (t_swa, true) } else { (t_obd, false) };
        if rel > total_us {
            break;
        }
        let mut ts = t0 + rel;
        if let Some(prev) = last_ts {
            if ts <= prev {
                ts = prev + 1;
            }
        }
        last_ts = Some(ts);
        let s = timeline.distance_at(rel as f64 / 1e6).min(length);
        if is_swa {
            let delta = (scenario.spec.wheelbase * path.curvature_at(s)).atan().to_degrees();
            log.push(scenario.decoder.encode_frame(Timestamp::from_micros(ts), iface, delta)?);
            analytic_angles.push(delta);
            k_swa += 1;
        } else {
            let kmh = scenario.speed_at(s).round().clamp(0.0, 255.0) as u8;
            log.push(encode_speed_response(Timestamp::from_micros(ts), iface, 0x7E8, kmh));
            k_obd += 1;
        }
    }

    let mut truth = Track { name: Some(scenario.name.clone()), points: Vec::new() };
    let whole_secs = timeline.total_time.floor() as u64;
    let time_of = |rel_us: u64| {
        i64::try_from(t0 + rel_us)
            .ok()
            .and_then(chrono::DateTime::from_timestamp_micros)
    };
    for sec in 0..=whole_secs {
        let s = timeline.distance_at(sec as f64).min(length);
        truth.points.push(TrackPoint { pos: path.position_at(s), time: time_of(sec * 1_000_000) });
    }
    if timeline.total_time - whole_secs as f64 > 1e-6 {
        truth.points.push(TrackPoint { pos: path.position_at(length), time: time_of(total_us) });
    }

    let start_pos = path.position_at(0.0);
    let start = VehiclePose::new(
        start_pos.lat,
        start_pos.lon,
        path.bearing_at(0.0) + scenario.start_bearing_error,
    );

    Ok(SimOutput { log, truth, start, analytic_angles, path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geokin::distance;
    use crate::obd::decode_speed_response;
    use crate::reveng::decode_angle;

    fn straight_graph() -> Arc<RoadGraph> {
        let frame = LocalFrame::new(LatLon::new(45.0, 11.0));
        let (a, b) = (frame.to_latlon(0.0, 0.0), frame.to_latlon(1000.0, 0.0));
        Arc::new(
            RoadGraph::builder()
                .node(1, a.lat, a.lon)
                .node(2, b.lat, b.lon)
                .edge(1, 1, 2, true)
                .build()
                .unwrap(),
        )
    }

    #[test]
    fn straight_route_emits_zero_angle_and_constant_speed() {
        let sc = SimScenario::new("straight", straight_graph(), vec![1], 36.0);
        let out = simulate(&sc).unwrap();
        let (mut n_swa, mut n_obd) = (0, 0);
        for f in &out.log {
            if f.id == sc.decoder.id {
                assert_eq!(decode_angle(&sc.decoder, f).unwrap().angle, 0.0);
                n_swa += 1;
            } else {
                assert_eq!(decode_speed_response(f).unwrap().speed_kmh, 36);
                n_obd += 1;
            }
        }
        // 100 s of driving
        assert_eq!(n_swa, 10_001);
        assert_eq!(n_obd, 1000);
        assert!(out.log.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        assert_eq!(out.truth.len(), 101);
        assert!((out.start.bearing - 90.0).abs() < 1e-6);
        let end = LocalFrame::new(LatLon::new(45.0, 11.0)).to_latlon(1000.0, 0.0);
        assert!(distance(out.truth.points[100].pos, end) < 1e-3);
    }

    #[test]
    fn reversed_and_broken_routes() {
        let g = suite::grid_graph(LatLon::new(45.0, 11.0), 3, 3, 100.0);
        // edge ids follow grid_graph's numbering: horizontal then vertical
        let sc = SimScenario::new("bad", Arc::clone(&g), vec![1, 4], 30.0);
        assert_eq!(simulate(&sc).unwrap_err(), SimError::NonContiguous(1));
        let sc = SimScenario::new("bad", Arc::clone(&g), vec![999], 30.0);
        assert_eq!(simulate(&sc).unwrap_err(), SimError::UnknownEdge(999));
        let sc = SimScenario::new("empty", Arc::clone(&g), vec![], 30.0);
        assert_eq!(simulate(&sc).unwrap_err(), SimError::EmptyRoute);
        let mut sc = SimScenario::new("slow", g, vec![1], 30.0);
        sc.speed_profile[0].kmh = 0.0;
        assert_eq!(simulate(&sc).unwrap_err(), SimError::BadSpeedProfile);
    }

    #[test]
    fn steady_arc_matches_bicycle_model() {
        // 180 degree arc of radius 40 m sampled every 1 degree.
        let frame = LocalFrame::new(LatLon::new(45.0, 11.0));
        let r = 40.0;
        let mut b = RoadGraph::builder();
        let pts: Vec<LatLon> = (0..=180)
            .map(|k| {
                let a = f64::from(k).to_radians();
                frame.to_latlon(r * a.cos(), r * a.sin())
            })
            .collect();
        b.add_node(1, pts[0]);
        b.add_node(2, pts[180]);
        b.add_edge(1, 1, 2, true, pts[1..180].to_vec());
        let mut sc = SimScenario::new("arc", Arc::new(b.build().unwrap()), vec![1], 20.0);
        sc.turn_radius = r;
        let out = simulate(&sc).unwrap();
        let expected = (sc.spec.wheelbase / r).atan().to_degrees();
        // counter-clockwise in the local frame is a left turn: positive angle
        let mid: Vec<f64> = out
            .log
            .iter()
            .filter(|f| f.id == sc.decoder.id)
            .map(|f| decode_angle(&sc.decoder, f).unwrap().angle)
            .collect();
        let n = mid.len();
        for a in &mid[n / 4..3 * n / 4] {
            assert!((a - expected).abs() <= 0.01 + 1e-9, "{a} vs {expected}");
        }
    }

    #[test]
    fn quantization_and_speed_invariants() {
        let sc = suite::s_curve(LatLon::new(45.0, 11.0));
        let out = simulate(&sc).unwrap();
        let mut i = 0;
        for f in &out.log {
            if f.id == sc.decoder.id {
                let a = decode_angle(&sc.decoder, f).unwrap().angle;
                assert!((a - out.analytic_angles[i]).abs() <= sc.decoder.scale);
                i += 1;
            } else {
                let r = decode_speed_response(f).unwrap();
                assert_eq!(f64::from(r.speed_kmh), sc.speed_profile[0].kmh.round());
            }
        }
        assert!(out.log.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn bearing_error_offsets_start() {
        let mut sc = SimScenario::new("straight", straight_graph(), vec![1], 36.0);
        sc.start_bearing_error = 30.0;
        let out = simulate(&sc).unwrap();
        assert!((out.start.bearing - 120.0).abs() < 1e-6, "{}", out.start.bearing);
    }
}
