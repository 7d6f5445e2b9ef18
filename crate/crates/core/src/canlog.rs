//! candump "log" format: `(<epoch.micros>) <iface> <HEXID>#<HEXDATA>`.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use thiserror::Error;

/// Largest valid standard (11-bit) identifier.
pub const MAX_STD_ID: u16 = 0x7FF;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed timestamp: {0}")]
    Timestamp(String),
    #[error("malformed interface: {0}")]
    Interface(String),
    #[error("malformed identifier: {0}")]
    Id(String),
    #[error("identifier out of 11-bit range: {0}")]
    IdRange(String),
    #[error("malformed data: {0}")]
    Data(String),
    #[error("malformed filter: {0}")]
    Filter(String),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Line { line: usize, source: ParseError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Capture time in whole microseconds since the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const fn from_micros(micros: u64) -> Self {
        Self(micros)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Rounds to the nearest microsecond. Negative or non-finite input is clamped to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if !secs.is_finite() || secs <= 0.0 {
            return Self(0);
        }
        Self((secs * 1e6).round() as u64)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

impl FromStr for Timestamp {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseError::Timestamp(s.to_string());
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if whole.is_empty()
            || !whole.bytes().all(|b| b.is_ascii_digit())
            || frac.len() > 6
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let secs: u64 = whole.parse().map_err(|_| bad())?;
        let mut micros = 0u64;
        for (i, b) in frac.bytes().enumerate() {
            micros += u64::from(b - b'0') * 10u64.pow(5 - i as u32);
        }
        secs.checked_mul(1_000_000)
            .and_then(|v| v.checked_add(micros))
            .map(Self)
            .ok_or_else(bad)
    }
}

/// One timestamped classic CAN frame with a standard identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanFrame {
    pub timestamp: Timestamp,
    pub interface: String,
    pub id: u16,
    pub data: Vec<u8>,
}

impl CanFrame {
    /// Panics if `id` exceeds 11 bits or `data` exceeds 8 bytes.
    pub fn new(timestamp: Timestamp, interface: impl Into<String>, id: u16, data: &[u8]) -> Self {
        assert!(id <= MAX_STD_ID, "CAN id {id:#x} exceeds 11 bits");
        assert!(data.len() <= 8, "CAN payload longer than 8 bytes");
        Self {
            timestamp,
            interface: interface.into(),
            id,
            data: data.to_vec(),
        }
    }
}

impl fmt::Display for CanFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {} {:03X}#", self.timestamp, self.interface, self.id)?;
        for b in &self.data {
            write!(f, "{b:02X}")?;
        }
        Ok(())
    }
}

impl FromStr for CanFrame {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_line(s)
    }
}

/// Parses a single candump log line.
pub fn parse_line(line: &str) -> Result<CanFrame, ParseError> {
    let line = line.trim();
    let rest = line
        .strip_prefix('(')
        .ok_or_else(|| ParseError::Timestamp(line.to_string()))?;
    let (ts, rest) = rest
        .split_once(')')
        .ok_or_else(|| ParseError::Timestamp(line.to_string()))?;
    let timestamp: Timestamp = ts.trim().parse()?;

    let mut fields = rest.split_whitespace();
    let interface = fields
        .next()
        .ok_or_else(|| ParseError::Interface(line.to_string()))?;
    let frame = fields.next().ok_or_else(|| ParseError::Id(line.to_string()))?;
    if fields.next().is_some() {
        return Err(ParseError::Data(line.to_string()));
    }

    let (id_hex, data_hex) = frame
        .split_once('#')
        .ok_or_else(|| ParseError::Id(frame.to_string()))?;
    if id_hex.is_empty() || id_hex.len() > 3 || !id_hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        // Eight-digit identifiers are the extended format.
        return Err(if id_hex.len() == 8 && id_hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            ParseError::IdRange(id_hex.to_string())
        } else {
            ParseError::Id(id_hex.to_string())
        });
    }
    let id = u16::from_str_radix(id_hex, 16).map_err(|_| ParseError::Id(id_hex.to_string()))?;
    if id > MAX_STD_ID {
        return Err(ParseError::IdRange(id_hex.to_string()));
    }

    if data_hex.len() % 2 != 0 || data_hex.len() > 16 {
        return Err(ParseError::Data(data_hex.to_string()));
    }
    let data = (0..data_hex.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&data_hex[i..i + 2], 16))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| ParseError::Data(data_hex.to_string()))?;

    Ok(CanFrame {
        timestamp,
        interface: interface.to_string(),
        id,
        data,
    })
}

/// Canonical line: uppercase hex, three-digit ID, six fractional digits.
pub fn format_line(frame: &CanFrame) -> String {
    frame.to_string()
}

/// Parsed log plus the lines skipped in permissive mode.
#[derive(Debug, Default)]
pub struct ParsedLog {
    pub frames: Vec<CanFrame>,
    pub skipped: Vec<(usize, ParseError)>,
}

/// Reads a whole log. Blank lines are ignored. In strict mode the first bad
/// line aborts; otherwise it is recorded (1-based line number) and skipped.
pub fn read_log<R: BufRead>(reader: R, strict: bool) -> Result<ParsedLog, LogError> {
    let mut out = ParsedLog::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(frame) => out.frames.push(frame),
            Err(source) if strict => return Err(LogError::Line { line: idx + 1, source }),
            Err(source) => out.skipped.push((idx + 1, source)),
        }
    }
    Ok(out)
}

pub fn parse_log(text: &str, strict: bool) -> Result<ParsedLog, LogError> {
    read_log(text.as_bytes(), strict)
}

pub fn write_log<W: std::io::Write>(mut w: W, frames: &[CanFrame]) -> std::io::Result<()> {
    for frame in frames {
        writeln!(w, "{frame}")?;
    }
    Ok(())
}

/// candump-style acceptance filter: `id:mask` entries, any of which may match.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdFilter {
    pub entries: Vec<(u16, u16)>,
}

impl IdFilter {
    pub fn new(entries: Vec<(u16, u16)>) -> Self {
        Self { entries }
    }

    /// The capture filter used while collecting: OBD responses on 0x7E8 and the
    /// steering-angle ID, both with the full 11-bit mask.
    pub fn collection(swa_id: u16) -> Self {
        Self::new(vec![(0x7E8, MAX_STD_ID), (swa_id, MAX_STD_ID)])
    }

    pub fn matches(&self, id: u16) -> bool {
        self.entries
            .iter()
            .any(|&(fid, mask)| id & mask == fid & mask)
    }
}

impl FromStr for IdFilter {
    type Err = ParseError;

    /// Parses `7E8:7FF,0C6:7FF`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseError::Filter(s.to_string());
        let mut entries = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (id, mask) = part.split_once(':').ok_or_else(bad)?;
            let id = u16::from_str_radix(id, 16).map_err(|_| bad())?;
            let mask = u16::from_str_radix(mask, 16).map_err(|_| bad())?;
            if id > MAX_STD_ID || mask > MAX_STD_ID {
                return Err(bad());
            }
            entries.push((id, mask));
        }
        Ok(Self { entries })
    }
}

impl fmt::Display for IdFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (id, mask)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{id:03X}:{mask:03X}")?;
        }
        Ok(())
    }
}

pub fn filter_frames<'a, I>(frames: I, filter: &IdFilter) -> Vec<CanFrame>
where
    I: IntoIterator<Item = &'a CanFrame>,
{
    frames
        .into_iter()
        .filter(|f| filter.matches(f.id))
        .cloned()
        .collect()
}
