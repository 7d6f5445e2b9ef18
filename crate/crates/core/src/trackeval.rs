//! GPX 1.1 track I/O and Needleman-Wunsch comparison of two point tracks.

use std::fmt::Write as _;

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use crate::geokin::{distance, lerp, polyline_length, LatLon};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpxError {
    #[error("xml error: {0}")]
    Xml(String),
    #[error("{line}:{col}: {message}")]
    Invalid { line: u32, col: u32, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub pos: LatLon,
    pub time: Option<DateTime<Utc>>,
}

impl From<LatLon> for TrackPoint {
    fn from(pos: LatLon) -> Self {
        Self { pos, time: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Track {
    pub name: Option<String>,
    pub points: Vec<TrackPoint>,
}

impl Track {
    pub fn from_positions(points: impl IntoIterator<Item = LatLon>) -> Self {
        Self { name: None, points: points.into_iter().map(TrackPoint::from).collect() }
    }

    pub fn positions(&self) -> Vec<LatLon> {
        self.points.iter().map(|p| p.pos).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Along-track length in meters.
    pub fn length(&self) -> f64 {
        polyline_length(&self.positions())
    }
}

/// Reads every `trk/trkseg/trkpt`, concatenating segments (and tracks) in order.
pub fn read_gpx(doc: &str) -> Result<Track, GpxError> {
    let xml = roxmltree::Document::parse(doc).map_err(|e| GpxError::Xml(e.to_string()))?;
    let root = xml.root_element();
    if root.tag_name().name() != "gpx" {
        let pos = xml.text_pos_at(root.range().start);
        return Err(GpxError::Invalid { line: pos.row, col: pos.col, message: "root element is not gpx".into() });
    }
    let mut track = Track::default();
    for trk in root.children().filter(|n| n.has_tag_name("trk")) {
        if track.name.is_none() {
            track.name = trk
                .children()
                .find(|n| n.has_tag_name("name"))
                .and_then(|n| n.text())
                .map(|s| s.trim().to_string());
        }
        for seg in trk.children().filter(|n| n.has_tag_name("trkseg")) {
            for pt in seg.children().filter(|n| n.has_tag_name("trkpt")) {
                let invalid = |message: String| {
                    let pos = xml.text_pos_at(pt.range().start);
                    GpxError::Invalid { line: pos.row, col: pos.col, message }
                };
                let coord = |name: &str| -> Result<f64, GpxError> {
                    let raw = pt.attribute(name).ok_or_else(|| invalid(format!("trkpt missing {name}")))?;
                    raw.trim().parse::<f64>().map_err(|_| invalid(format!("bad {name} value {raw:?}")))
                };
                let pos = LatLon::new(coord("lat")?, coord("lon")?);
                if !pos.is_valid() {
                    return Err(invalid(format!("coordinate out of range: {pos:?}")));
                }
                let time = match pt.children().find(|n| n.has_tag_name("time")).and_then(|n| n.text()) {
                    Some(t) => Some(
                        DateTime::parse_from_rfc3339(t.trim())
                            .map_err(|e| invalid(format!("bad time {t:?}: {e}")))?
                            .with_timezone(&Utc),
                    ),
                    None => None,
                };
                track.points.push(TrackPoint { pos, time });
            }
        }
    }
    Ok(track)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Single track, single segment. Coordinates are written with nine decimals.
pub fn write_gpx(track: &Track) -> String {
    let mut s = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <gpx version=\"1.1\" creator=\"canpath\" xmlns=\"http://www.topografix.com/GPX/1/1\">\n  <trk>\n",
    );
    if let Some(name) = &track.name {
        let _ = writeln!(s, "    <name>{}</name>", escape(name));
    }
    s.push_str("    <trkseg>\n");
    for p in &track.points {
        let _ = write!(s, "      <trkpt lat=\"{:.9}\" lon=\"{:.9}\"", p.pos.lat, p.pos.lon);
        match p.time {
            Some(t) => {
                let _ = writeln!(s, "><time>{}</time></trkpt>", t.to_rfc3339_opts(SecondsFormat::Micros, true));
            }
            None => s.push_str("/>\n"),
        }
    }
    s.push_str("    </trkseg>\n  </trk>\n</gpx>\n");
    s
}

/// Points every `spacing` meters along the polyline, first and last included.
pub fn resample(points: &[LatLon], spacing: f64) -> Vec<LatLon> {
    assert!(spacing > 0.0, "spacing must be positive");
    let Some(&first) = points.first() else {
        return Vec::new();
    };
    let mut out = vec![first];
    let mut next = spacing;
    let mut travelled = 0.0;
    for w in points.windows(2) {
        let seg = distance(w[0], w[1]);
        while seg > 0.0 && next <= travelled + seg {
            out.push(lerp(w[0], w[1], (next - travelled) / seg));
            next += spacing;
        }
        travelled += seg;
    }
    let last = *points.last().unwrap();
    if points.len() > 1 && out.last().is_some_and(|p| distance(*p, last) > 1e-6) {
        out.push(last);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignParams {
    /// Two points match when their great-circle distance is at most this (meters).
    pub match_epsilon: f64,
    pub match_score: i32,
    pub mismatch_score: i32,
    pub gap_score: i32,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self { match_epsilon: 10.0, match_score: 1, mismatch_score: -1, gap_score: -1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub score: i64,
    pub matched_pairs: usize,
    /// Columns in the alignment (pairs plus gaps).
    pub aligned_length: usize,
    /// `matched_pairs / max(len_a, len_b)`, 0 for two empty tracks.
    pub accuracy: f64,
    pub matched_a: Vec<bool>,
    pub matched_b: Vec<bool>,
}

const DIAG: u8 = 0;
const UP: u8 = 1; // consume a, gap in b
const LEFT: u8 = 2; // consume b, gap in a

/// Global alignment maximizing score; among equal scores the alignment with
/// more matched pairs wins. Remaining ties trace back diagonal, then gap-in-b,
/// then gap-in-a.
pub fn nw_align(a: &[LatLon], b: &[LatLon], params: &AlignParams) -> AlignmentResult {
    let (n, m) = (a.len(), b.len());
    let gap = i64::from(params.gap_score);
    let mut dirs = vec![DIAG; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;

    // (score, matches), compared lexicographically.
    let mut prev: Vec<(i64, i64)> = (0..=m).map(|j| (gap * j as i64, 0)).collect();
    for j in 1..=m {
        dirs[at(0, j)] = LEFT;
    }
    let mut cur = vec![(0i64, 0i64); m + 1];
    for i in 1..=n {
        cur[0] = (gap * i as i64, 0);
        dirs[at(i, 0)] = UP;
        for j in 1..=m {
            let is_match = distance(a[i - 1], b[j - 1]) <= params.match_epsilon;
            let diag = (
                prev[j - 1].0 + i64::from(if is_match { params.match_score } else { params.mismatch_score }),
                prev[j - 1].1 + i64::from(is_match),
            );
            let up = (prev[j].0 + gap, prev[j].1);
            let left = (cur[j - 1].0 + gap, cur[j - 1].1);
            let (mut best, mut dir) = (diag, DIAG);
            if up > best {
                best = up;
                dir = UP;
            }
            if left > best {
                best = left;
                dir = LEFT;
            }
            cur[j] = best;
            dirs[at(i, j)] = dir;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let score = prev[m].0;

    let mut matched_a = vec![false; n];
    let mut matched_b = vec![false; m];
    let (mut i, mut j) = (n, m);
    let mut aligned_length = 0;
    let mut matched_pairs = 0;
    while i > 0 || j > 0 {
        aligned_length += 1;
        match dirs[at(i, j)] {
            DIAG if i > 0 && j > 0 => {
                if distance(a[i - 1], b[j - 1]) <= params.match_epsilon {
                    matched_a[i - 1] = true;
                    matched_b[j - 1] = true;
                    matched_pairs += 1;
                }
                i -= 1;
                j -= 1;
            }
            UP => i -= 1,
            _ => j -= 1,
        }
    }

    let denom = n.max(m);
    AlignmentResult {
        score,
        matched_pairs,
        aligned_length,
        accuracy: if denom == 0 { 0.0 } else { matched_pairs as f64 / denom as f64 },
        matched_a,
        matched_b,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    pub align: AlignParams,
    /// Resample both tracks to this spacing (meters) before aligning, so that
    /// tracks logged at different rates are comparable. `None` aligns raw points.
    pub resample_spacing: Option<f64>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { align: AlignParams::default(), resample_spacing: Some(5.0) }
    }
}

pub fn compare_tracks(a: &Track, b: &Track, opts: &CompareOptions) -> AlignmentResult {
    let (pa, pb) = (a.positions(), b.positions());
    match opts.resample_spacing {
        Some(s) => nw_align(&resample(&pa, s), &resample(&pb, s), &opts.align),
        None => nw_align(&pa, &pb, &opts.align),
    }
}

/// `track_id,length_km,accuracy`
pub fn comparison_csv_row(track_id: &str, length_m: f64, accuracy: f64) -> String {
    format!("{track_id},{:.3},{accuracy:.4}", length_m / 1000.0)
}

pub const COMPARISON_CSV_HEADER: &str = "track,length_km,accuracy";
