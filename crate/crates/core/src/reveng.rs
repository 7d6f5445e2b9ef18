//! Steering-wheel-angle reverse engineering: per-ID change statistics for
//! locating the sensor broadcast, and the word-to-degrees decoding.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::canlog::{CanFrame, Timestamp, MAX_STD_ID};

/// Default upper bound (exclusive) for candidate IDs.
pub const DEFAULT_ID_CEILING: u16 = 0x300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AngleError {
    #[error("frame id {found:#05x} does not match decoder id {expected:#05x}")]
    WrongId { expected: u16, found: u16 },
    #[error("payload of {len} bytes too short for byte index {needed}")]
    PayloadTooShort { len: usize, needed: usize },
    #[error("angle {0} deg not representable by this decoder")]
    OutOfRange(f64),
    #[error("invalid decoder: {0}")]
    InvalidDecoder(String),
}

#[derive(Debug, Error)]
pub enum SheetError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unsupported sheet version {0}")]
    Version(String),
    #[error("missing version line")]
    MissingVersion,
}

/// Bit-level distance between two payloads. Bytes beyond the shorter payload
/// count as fully flipped.
pub fn hamming_distance(a: &[u8], b: &[u8]) -> u32 {
    let common: u32 = a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum();
    common + 8 * a.len().abs_diff(b.len()) as u32
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdChangeStats {
    pub id: u16,
    pub frame_count: usize,
    pub avg_hamming: f64,
    pub per_byte_change_rate: [f64; 8],
}

/// One entry per distinct ID, ordered by ID.
pub fn compute_change_stats(frames: &[CanFrame]) -> Vec<IdChangeStats> {
    struct Acc<'a> {
        count: usize,
        last: Option<&'a [u8]>,
        total_bits: u64,
        pairs: usize,
        byte_changes: [usize; 8],
    }

    let mut by_id: BTreeMap<u16, Acc> = BTreeMap::new();
    for frame in frames {
        let acc = by_id.entry(frame.id).or_insert(Acc {
            count: 0,
            last: None,
            total_bits: 0,
            pairs: 0,
            byte_changes: [0; 8],
        });
        acc.count += 1;
        if let Some(prev) = acc.last {
            acc.total_bits += u64::from(hamming_distance(prev, &frame.data));
            acc.pairs += 1;
            for (i, slot) in acc.byte_changes.iter_mut().enumerate() {
                if prev.get(i) != frame.data.get(i) {
                    *slot += 1;
                }
            }
        }
        acc.last = Some(&frame.data);
    }

    by_id
        .into_iter()
        .map(|(id, acc)| {
            let pairs = acc.pairs.max(1) as f64;
            let mut rates = [0.0; 8];
            if acc.pairs > 0 {
                for (r, c) in rates.iter_mut().zip(acc.byte_changes) {
                    *r = c as f64 / pairs;
                }
            }
            IdChangeStats {
                id,
                frame_count: acc.count,
                avg_hamming: if acc.pairs == 0 { 0.0 } else { acc.total_bits as f64 / pairs },
                per_byte_change_rate: rates,
            }
        })
        .collect()
}

/// Keeps changing IDs below `id_ceiling`, smoothest first.
pub fn rank_swa_candidates(stats: &[IdChangeStats], id_ceiling: u16) -> Vec<IdChangeStats> {
    let mut out: Vec<_> = stats
        .iter()
        .filter(|s| s.id < id_ceiling && s.avg_hamming > 0.0)
        .cloned()
        .collect();
    out.sort_by(|a, b| a.avg_hamming.total_cmp(&b.avg_hamming).then(a.id.cmp(&b.id)));
    out
}

/// CSV candidate report: id, count, avg_hamming, b0..b7 change rates.
pub fn format_candidate_report(stats: &[IdChangeStats]) -> String {
    let mut s = String::from("id,count,avg_hamming,b0,b1,b2,b3,b4,b5,b6,b7\n");
    for st in stats {
        let _ = write!(s, "{:03X},{},{:.4}", st.id, st.frame_count, st.avg_hamming);
        for r in st.per_byte_change_rate {
            let _ = write!(s, ",{r:.4}");
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AngleMode {
    /// `(word - offset) * scale`
    Offset,
    /// word read as i16, times scale
    TwosComplement,
}

impl fmt::Display for AngleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AngleMode::Offset => "offset",
            AngleMode::TwosComplement => "twos-complement",
        })
    }
}

impl FromStr for AngleMode {
    type Err = AngleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "offset" => Ok(AngleMode::Offset),
            "twos-complement" | "twos" | "signed" => Ok(AngleMode::TwosComplement),
            other => Err(AngleError::InvalidDecoder(format!("unknown mode {other}"))),
        }
    }
}

/// Decoding recipe for a steering-angle broadcast. Positive angles are left turns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleDecoder {
    pub id: u16,
    pub byte_hi: usize,
    pub byte_lo: usize,
    pub offset: u16,
    /// Degrees per count.
    pub scale: f64,
    pub mode: AngleMode,
}

impl AngleDecoder {
    /// Offset-mode decoder on bytes 0/1 around 0x7FFF with 0.01 deg/count.
    pub fn offset_7fff(id: u16) -> Self {
        Self {
            id,
            byte_hi: 0,
            byte_lo: 1,
            offset: 0x7FFF,
            scale: 0.01,
            mode: AngleMode::Offset,
        }
    }

    pub fn validate(&self) -> Result<(), AngleError> {
        let bad = |m: &str| Err(AngleError::InvalidDecoder(m.to_string()));
        if self.id > MAX_STD_ID {
            return bad("id exceeds 11 bits");
        }
        if self.byte_hi > 7 || self.byte_lo > 7 {
            return bad("byte index must be 0..=7");
        }
        if self.byte_hi == self.byte_lo {
            return bad("byte_hi and byte_lo must differ");
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("scale must be positive");
        }
        Ok(())
    }

    fn counts(&self, word: u16) -> i32 {
        match self.mode {
            AngleMode::Offset => i32::from(word) - i32::from(self.offset),
            AngleMode::TwosComplement => i32::from(word as i16),
        }
    }

    pub fn word_to_degrees(&self, word: u16) -> f64 {
        f64::from(self.counts(word)) * self.scale
    }

    pub fn read_word(&self, data: &[u8]) -> Result<u16, AngleError> {
        let needed = self.byte_hi.max(self.byte_lo);
        if data.len() <= needed {
            return Err(AngleError::PayloadTooShort { len: data.len(), needed });
        }
        Ok(u16::from(data[self.byte_hi]) << 8 | u16::from(data[self.byte_lo]))
    }

    /// Nearest representable word for `angle` degrees.
    pub fn encode(&self, angle: f64) -> Result<u16, AngleError> {
        if !angle.is_finite() {
            return Err(AngleError::OutOfRange(angle));
        }
        let counts = (angle / self.scale).round();
        let word = match self.mode {
            AngleMode::Offset => counts + f64::from(self.offset),
            AngleMode::TwosComplement => {
                if !(f64::from(i16::MIN)..=f64::from(i16::MAX)).contains(&counts) {
                    return Err(AngleError::OutOfRange(angle));
                }
                return Ok(counts as i16 as u16);
            }
        };
        if !(0.0..=f64::from(u16::MAX)).contains(&word) {
            return Err(AngleError::OutOfRange(angle));
        }
        Ok(word as u16)
    }

    /// Eight-byte payload with the encoded word in place and zeros elsewhere.
    pub fn encode_frame(&self, timestamp: Timestamp, interface: &str, angle: f64) -> Result<CanFrame, AngleError> {
        let word = self.encode(angle)?;
        let mut data = [0u8; 8];
        data[self.byte_hi] = (word >> 8) as u8;
        data[self.byte_lo] = (word & 0xFF) as u8;
        Ok(CanFrame::new(timestamp, interface, self.id, &data))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringSample {
    pub timestamp: Timestamp,
    /// Degrees, positive = left.
    pub angle: f64,
}

pub fn decode_angle(decoder: &AngleDecoder, frame: &CanFrame) -> Result<SteeringSample, AngleError> {
    if frame.id != decoder.id {
        return Err(AngleError::WrongId { expected: decoder.id, found: frame.id });
    }
    let word = decoder.read_word(&frame.data)?;
    Ok(SteeringSample {
        timestamp: frame.timestamp,
        angle: decoder.word_to_degrees(word),
    })
}

pub fn encode_angle(decoder: &AngleDecoder, angle: f64) -> Result<u16, AngleError> {
    decoder.encode(angle)
}

/// A decoder sheet row.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetEntry {
    pub model: String,
    pub decoder: AngleDecoder,
    /// Meters; optional because the ID/decoding is what the sheet is for.
    pub wheelbase: Option<f64>,
}

pub const SHEET_VERSION: &str = "1";
const SHEET_HEADER: &str = "model,id,byte_hi,byte_lo,offset,scale,mode,wheelbase_m";

/// Shipped sheet for the vehicles whose steering-angle ID is known.
/// Wheelbases are manufacturer figures.
pub const KNOWN_SHEET: &str = "\
# steering-angle decoder sheet
version 1
model,id,byte_hi,byte_lo,offset,scale,mode,wheelbase_m
Renault Captur,0C6,0,1,7FFF,0.01,offset,2.606
Dacia Duster,0C6,0,1,7FFF,0.01,offset,2.674
Opel Crossland,2F5,0,1,7FFF,0.01,offset,2.604
Peugeot 5008,2EB,0,1,7FFF,0.01,offset,2.840
";

fn normalize_model(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_sheet(text: &str) -> Result<Vec<SheetEntry>, SheetError> {
    let mut version_seen = false;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !version_seen {
            let v = line
                .strip_prefix("version")
                .ok_or(SheetError::MissingVersion)?
                .trim();
            if v != SHEET_VERSION {
                return Err(SheetError::Version(v.to_string()));
            }
            version_seen = true;
            continue;
        }
        if line.starts_with("model,") {
            continue;
        }
        let syntax = |message: String| SheetError::Syntax { line: line_no, message };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() < 7 || cols.len() > 8 {
            return Err(syntax(format!("expected 7 or 8 columns, got {}", cols.len())));
        }
        let hex = |s: &str, what: &str| {
            let s = s.trim_start_matches("0x").trim_start_matches("0X");
            u16::from_str_radix(s, 16).map_err(|_| syntax(format!("bad {what}: {s}")))
        };
        let idx_col = |s: &str, what: &str| s.parse::<usize>().map_err(|_| syntax(format!("bad {what}: {s}")));
        let decoder = AngleDecoder {
            id: hex(cols[1], "id")?,
            byte_hi: idx_col(cols[2], "byte_hi")?,
            byte_lo: idx_col(cols[3], "byte_lo")?,
            offset: hex(cols[4], "offset")?,
            scale: cols[5].parse().map_err(|_| syntax(format!("bad scale: {}", cols[5])))?,
            mode: cols[6].parse().map_err(|e: AngleError| syntax(e.to_string()))?,
        };
        decoder.validate().map_err(|e| syntax(e.to_string()))?;
        let wheelbase = match cols.get(7) {
            Some(s) if !s.is_empty() => {
                let w: f64 = s.parse().map_err(|_| syntax(format!("bad wheelbase: {s}")))?;
                if w.is_nan() || w <= 0.0 {
                    return Err(syntax("wheelbase must be positive".into()));
                }
                Some(w)
            }
            _ => None,
        };
        entries.push(SheetEntry { model: cols[0].to_string(), decoder, wheelbase });
    }
    if !version_seen {
        return Err(SheetError::MissingVersion);
    }
    Ok(entries)
}

pub fn format_sheet(entries: &[SheetEntry]) -> String {
    let mut s = format!("version {SHEET_VERSION}\n{SHEET_HEADER}\n");
    for e in entries {
        let d = &e.decoder;
        let _ = write!(
            s,
            "{},{:03X},{},{},{:04X},{},{}",
            e.model, d.id, d.byte_hi, d.byte_lo, d.offset, d.scale, d.mode
        );
        if let Some(w) = e.wheelbase {
            let _ = write!(s, ",{w}");
        }
        s.push('\n');
    }
    s
}

/// Looks `model` up in `entries` (case and whitespace insensitive).
pub fn lookup_in<'a>(entries: &'a [SheetEntry], model: &str) -> Option<&'a SheetEntry> {
    let key = normalize_model(model);
    entries.iter().find(|e| normalize_model(&e.model) == key)
}

pub fn known_sheet() -> Vec<SheetEntry> {
    parse_sheet(KNOWN_SHEET).expect("shipped sheet parses")
}

/// Shipped entry for `model`, or `None` when the vehicle is not on the sheet.
pub fn lookup_known_swa(model: &str) -> Option<SheetEntry> {
    let sheet = known_sheet();
    let key = normalize_model(model);
    // "Capture" is a common misspelling of the Captur.
    let key = if key == "renault capture" { "renault captur".to_string() } else { key };
    lookup_in(&sheet, &key).cloned()
}
