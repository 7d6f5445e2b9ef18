//! Client for a Valhalla-compatible `trace_route` endpoint.

use std::time::Duration;

use serde_json::{json, Value};

use super::{MatchError, MatchResult, Matcher, MatcherConfig};
use crate::geokin::LatLon;

/// Environment variable consulted for the service base URL.
pub const MATCHER_URL_ENV: &str = "CANPATH_MATCHER_URL";

/// Request body: `shape` as `{lat, lon}` objects, auto costing, map-snap matching.
pub fn build_external_request(points: &[LatLon], config: &MatcherConfig) -> Result<Value, MatchError> {
    if points.is_empty() {
        return Err(MatchError::EmptyInput);
    }
    let shape: Vec<Value> = points.iter().map(|p| json!({ "lat": p.lat, "lon": p.lon })).collect();
    Ok(json!({
        "shape": shape,
        "costing": "auto",
        "shape_match": "map_snap",
        "trace_options": {
            "search_radius": config.candidate_radius,
            "gps_accuracy": config.emission_sigma,
        },
    }))
}

fn service_error(doc: &Value) -> Option<MatchError> {
    let status_is_error = doc
        .get("status")
        .and_then(Value::as_str)
        .is_some_and(|s| s.eq_ignore_ascii_case("error"));
    if !(status_is_error || doc.get("error").is_some() || doc.get("error_code").is_some()) {
        return None;
    }
    let code = doc
        .get("error_code")
        .or_else(|| doc.get("status_code"))
        .and_then(Value::as_i64)
        .unwrap_or(-1);
    let message = doc
        .get("error")
        .or_else(|| doc.get("message"))
        .and_then(Value::as_str)
        .unwrap_or("unspecified service error")
        .to_string();
    Some(MatchError::Service { code, message })
}

/// Extracts the matched point list. Accepts either a `matched_points` array
/// (trace_attributes style) or a `trip.legs[].shape` polyline (trace_route).
/// The point count is whatever the service returned.
pub fn parse_external_response(doc: &Value) -> Result<MatchResult, MatchError> {
    if !doc.is_object() {
        return Err(MatchError::Malformed("response is not an object".into()));
    }
    if let Some(err) = service_error(doc) {
        return Err(err);
    }

    let mut points = Vec::new();
    let mut edge_ids = Vec::new();
    if let Some(matched) = doc.get("matched_points") {
        let arr = matched
            .as_array()
            .ok_or_else(|| MatchError::Malformed("matched_points is not an array".into()))?;
        for (i, mp) in arr.iter().enumerate() {
            let lat = mp.get("lat").and_then(Value::as_f64);
            let lon = mp.get("lon").and_then(Value::as_f64);
            let (Some(lat), Some(lon)) = (lat, lon) else {
                return Err(MatchError::Malformed(format!("matched_points[{i}] lacks lat/lon")));
            };
            if mp.get("type").and_then(Value::as_str) == Some("unmatched") {
                continue;
            }
            points.push(LatLon::new(lat, lon));
            edge_ids.push(mp.get("edge_index").and_then(Value::as_u64));
        }
    } else if let Some(trip) = doc.get("trip") {
        if let Some(status) = trip.get("status").and_then(Value::as_i64) {
            if status != 0 {
                let message = trip
                    .get("status_message")
                    .and_then(Value::as_str)
                    .unwrap_or("trip status not ok")
                    .to_string();
                return Err(MatchError::Service { code: status, message });
            }
        }
        let legs = trip
            .get("legs")
            .and_then(Value::as_array)
            .ok_or_else(|| MatchError::Malformed("trip.legs missing".into()))?;
        for (i, leg) in legs.iter().enumerate() {
            let shape = leg
                .get("shape")
                .and_then(Value::as_str)
                .ok_or_else(|| MatchError::Malformed(format!("trip.legs[{i}].shape missing")))?;
            let decoded = decode_polyline6(shape).map_err(MatchError::Malformed)?;
            for p in decoded {
                if points.last() != Some(&p) {
                    points.push(p);
                    edge_ids.push(None);
                }
            }
        }
    } else {
        return Err(MatchError::Malformed("neither matched_points nor trip present".into()));
    }

    if points.is_empty() {
        return Err(MatchError::Unmatched { index: 0 });
    }
    Ok(MatchResult { matched_points: points, edge_ids, score: None })
}

/// Decodes an encoded polyline with six decimal digits of precision.
pub fn decode_polyline6(s: &str) -> Result<Vec<LatLon>, String> {
    let bytes = s.as_bytes();
    let mut i = 0;
    let mut next = || -> Result<Option<i64>, String> {
        if i >= bytes.len() {
            return Ok(None);
        }
        let mut result: i64 = 0;
        let mut shift = 0;
        loop {
            let b = *bytes.get(i).ok_or("truncated polyline")? as i64 - 63;
            i += 1;
            if !(0..64).contains(&b) || shift > 60 {
                return Err("invalid polyline character".into());
            }
            result |= (b & 0x1F) << shift;
            shift += 5;
            if b < 0x20 {
                break;
            }
        }
        Ok(Some(if result & 1 != 0 { !(result >> 1) } else { result >> 1 }))
    };
    let (mut lat, mut lon) = (0i64, 0i64);
    let mut out = Vec::new();
    while let Some(dlat) = next()? {
        let dlon = next()?.ok_or("odd number of polyline values")?;
        lat += dlat;
        lon += dlon;
        out.push(LatLon::new(lat as f64 / 1e6, lon as f64 / 1e6));
    }
    Ok(out)
}

pub fn encode_polyline6(points: &[LatLon]) -> String {
    fn push(out: &mut String, v: i64) {
        let mut v = if v < 0 { !(v << 1) } else { v << 1 };
        while v >= 0x20 {
            out.push(char::from((0x20 | (v & 0x1F)) as u8 + 63));
            v >>= 5;
        }
        out.push(char::from(v as u8 + 63));
    }
    let mut out = String::new();
    let (mut plat, mut plon) = (0i64, 0i64);
    for p in points {
        let lat = (p.lat * 1e6).round() as i64;
        let lon = (p.lon * 1e6).round() as i64;
        push(&mut out, lat - plat);
        push(&mut out, lon - plon);
        plat = lat;
        plon = lon;
    }
    out
}

/// Blocking HTTP client; safe to share across threads.
#[derive(Debug, Clone)]
pub struct ExternalMatcher {
    base_url: String,
    config: MatcherConfig,
    agent: ureq::Agent,
}

impl ExternalMatcher {
    pub fn new(base_url: impl Into<String>, config: MatcherConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { base_url: base_url.into(), config, agent }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/trace_route", self.base_url.trim_end_matches('/'))
    }
}

impl Matcher for ExternalMatcher {
    fn match_trace(&self, points: &[LatLon]) -> Result<MatchResult, MatchError> {
        let body = build_external_request(points, &self.config)?;
        let mut resp = self
            .agent
            .post(&self.endpoint())
            .send_json(&body)
            .map_err(|e| MatchError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| MatchError::Transport(e.to_string()))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| {
            if status >= 400 {
                MatchError::Service { code: i64::from(status), message: text.trim().to_string() }
            } else {
                MatchError::Malformed(e.to_string())
            }
        })?;
        parse_external_response(&doc)
    }
}
