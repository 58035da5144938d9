//! Measurement frames: parsing, serialization, resampling and derived channels.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const NANOS_PER_SEC: f64 = 1e9;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("missing timestamp column (looked for {0})")]
    MissingTimestampColumn(String),
    #[error("timestamps not strictly increasing at row {row}")]
    NonMonotoneTimestamps { row: usize },
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("gap of {buckets} empty buckets from {start} to {end} exceeds fill limit {limit}")]
    GapTooLarge {
        start: Timestamp,
        end: Timestamp,
        buckets: usize,
        limit: usize,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("channel `{0}` has no present values")]
    EmptyChannel(String),
    #[error("duplicate channel `{0}`")]
    DuplicateChannel(String),
    #[error("resample interval must be positive, got {0}")]
    InvalidInterval(f64),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Instant in UTC, nanoseconds since the Unix epoch. Serializes as ISO-8601.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Serialize for Timestamp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_iso())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Timestamp::parse(&text).ok_or_else(|| serde::de::Error::custom(format!("invalid timestamp `{text}`")))
    }
}

impl Timestamp {
    pub const fn from_nanos(ns: i64) -> Self {
        Self(ns)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Self((s * NANOS_PER_SEC).round() as i64)
    }

    pub const fn nanos(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC
    }

    /// Shifts by a (possibly fractional) number of seconds, rounded to the nanosecond.
    pub fn add_secs(self, secs: f64) -> Self {
        Self(self.0 + (secs * NANOS_PER_SEC).round() as i64)
    }

    pub fn add_nanos(self, ns: i64) -> Self {
        Self(self.0 + ns)
    }

    /// Parses ISO-8601 / RFC 3339 text or an integer epoch. Epoch units are
    /// inferred from magnitude: seconds below 1e11, milliseconds below 1e14,
    /// microseconds below 1e17, nanoseconds otherwise.
    pub fn parse(text: &str) -> Option<Self> {
        let s = text.trim();
        if s.is_empty() {
            return None;
        }
        if let Ok(n) = s.parse::<i64>() {
            let mag = n.unsigned_abs();
            let ns = if mag < 100_000_000_000 {
                n.checked_mul(1_000_000_000)?
            } else if mag < 100_000_000_000_000 {
                n.checked_mul(1_000_000)?
            } else if mag < 100_000_000_000_000_000 {
                n.checked_mul(1_000)?
            } else {
                n
            };
            return Some(Self(ns));
        }
        if let Ok(secs) = s.parse::<f64>() {
            return secs.is_finite().then(|| Self::from_secs_f64(secs));
        }
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return dt.timestamp_nanos_opt().map(Self);
        }
        for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
                return dt.and_utc().timestamp_nanos_opt().map(Self);
            }
        }
        None
    }

    /// ISO-8601 with nine fractional digits and a `Z` suffix.
    pub fn to_iso(self) -> String {
        DateTime::<Utc>::from_timestamp_nanos(self.0)
            .format("%Y-%m-%dT%H:%M:%S%.9fZ")
            .to_string()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    VoltageMagnitude,
    CurrentMagnitude,
    VoltageAngle,
    CurrentAngle,
    PowerFactor,
    Derived,
}

impl ChannelKind {
    pub fn is_angle(self) -> bool {
        matches!(self, Self::VoltageAngle | Self::CurrentAngle)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
    #[default]
    #[serde(rename = "none")]
    None,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub kind: ChannelKind,
    #[serde(default)]
    pub phase: Phase,
    #[serde(default)]
    pub units: String,
}

impl ChannelSpec {
    pub fn new(name: impl Into<String>, kind: ChannelKind, phase: Phase, units: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind,
            phase,
            units: units.into(),
        }
    }

    pub fn derived(name: impl Into<String>) -> Self {
        Self::new(name, ChannelKind::Derived, Phase::None, "")
    }
}

/// One source column mapped onto a channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub column: String,
    /// Channel name in the frame; defaults to the column name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: ChannelKind,
    #[serde(default)]
    pub phase: Phase,
    #[serde(default)]
    pub units: String,
}

impl ColumnMapping {
    fn spec(&self) -> ChannelSpec {
        ChannelSpec {
            name: self.name.clone().unwrap_or_else(|| self.column.clone()),
            kind: self.kind,
            phase: self.phase,
            units: self.units.clone(),
        }
    }
}

/// Column-name to channel mapping, loaded from TOML.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSchema {
    /// Header of the timestamp column. When absent, the first header named
    /// `timestamp`, `ts`, `time` or `datetime` (case-insensitive) is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_column: Option<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default, rename = "channel")]
    pub channels: Vec<ColumnMapping>,
}

fn default_delimiter() -> char {
    ','
}

impl Default for ChannelSchema {
    fn default() -> Self {
        Self {
            timestamp_column: None,
            delimiter: ',',
            channels: Vec::new(),
        }
    }
}

impl ChannelSchema {
    pub fn from_toml_str(text: &str) -> Result<Self, FrameError> {
        let schema: Self = toml::from_str(text).map_err(|e| FrameError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, FrameError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        if !self.delimiter.is_ascii() {
            return Err(FrameError::Schema("delimiter must be a single ASCII character".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.channels {
            if !seen.insert(m.spec().name) {
                return Err(FrameError::DuplicateChannel(m.spec().name));
            }
        }
        Ok(())
    }

    pub fn with_channel(mut self, column: &str, kind: ChannelKind, phase: Phase, units: &str) -> Self {
        self.channels.push(ColumnMapping {
            column: column.to_string(),
            name: None,
            kind,
            phase,
            units: units.to_string(),
        });
        self
    }

    /// Schema that re-reads a frame written by [`MeasurementFrame::write_csv`].
    pub fn from_frame(frame: &MeasurementFrame) -> Self {
        Self {
            timestamp_column: Some("timestamp".into()),
            delimiter: ',',
            channels: frame
                .channels
                .iter()
                .map(|c| ColumnMapping {
                    column: c.spec.name.clone(),
                    name: None,
                    kind: c.spec.kind,
                    phase: c.spec.phase,
                    units: c.spec.units.clone(),
                })
                .collect(),
        }
    }

    /// Schema mapping every non-timestamp header as a derived channel.
    pub fn infer(headers: &[&str]) -> Self {
        let mut schema = Self::default();
        for h in headers {
            if is_timestamp_header(h) || h.eq_ignore_ascii_case("truth") || h.eq_ignore_ascii_case("flag") {
                continue;
            }
            let kind = infer_kind(h);
            schema.channels.push(ColumnMapping {
                column: h.to_string(),
                name: None,
                kind,
                phase: Phase::None,
                units: String::new(),
            });
        }
        schema
    }
}

fn is_timestamp_header(h: &str) -> bool {
    ["timestamp", "ts", "time", "datetime"]
        .iter()
        .any(|c| h.trim().eq_ignore_ascii_case(c))
}

fn infer_kind(header: &str) -> ChannelKind {
    let h = header.to_ascii_lowercase();
    let angle = h.contains("ang");
    if h.starts_with('v') {
        if angle {
            ChannelKind::VoltageAngle
        } else {
            ChannelKind::VoltageMagnitude
        }
    } else if h.starts_with('i') || h.starts_with('c') {
        if angle {
            ChannelKind::CurrentAngle
        } else {
            ChannelKind::CurrentMagnitude
        }
    } else if h == "pf" || h.contains("power_factor") {
        ChannelKind::PowerFactor
    } else {
        ChannelKind::Derived
    }
}

#[derive(Clone, Debug)]
pub struct Channel {
    pub spec: ChannelSpec,
    /// Missing cells are NaN.
    pub values: Vec<f64>,
}

/// Timestamped multi-channel table. Missing cells are stored as NaN.
#[derive(Clone, Debug)]
pub struct MeasurementFrame {
    timestamps: Vec<Timestamp>,
    channels: Vec<Channel>,
    sample_interval: Option<f64>,
}

/// Outcome details from [`parse_pmu_csv_with_report`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParseReport {
    /// 1-based data-row numbers dropped for unparseable timestamps.
    pub rejected_rows: Vec<usize>,
}

impl MeasurementFrame {
    pub fn new(timestamps: Vec<Timestamp>, channels: Vec<Channel>) -> Result<Self, FrameError> {
        if let Some(row) = first_non_increasing(&timestamps) {
            return Err(FrameError::NonMonotoneTimestamps { row: row + 1 });
        }
        let mut names = std::collections::HashSet::new();
        for c in &channels {
            if c.values.len() != timestamps.len() {
                return Err(FrameError::LengthMismatch {
                    left: timestamps.len(),
                    right: c.values.len(),
                });
            }
            if !names.insert(c.spec.name.as_str()) {
                return Err(FrameError::DuplicateChannel(c.spec.name.clone()));
            }
        }
        Ok(Self {
            timestamps,
            channels,
            sample_interval: None,
        })
    }

    /// Builds a frame on a uniform grid starting at `start`.
    pub fn uniform(start: Timestamp, interval: f64, channels: Vec<Channel>) -> Result<Self, FrameError> {
        if !(interval > 0.0) {
            return Err(FrameError::InvalidInterval(interval));
        }
        let n = channels.first().map_or(0, |c| c.values.len());
        let step = (interval * NANOS_PER_SEC).round() as i64;
        let ts = (0..n as i64).map(|k| start.add_nanos(k * step)).collect();
        let mut f = Self::new(ts, channels)?;
        f.sample_interval = Some(interval);
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_names(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.spec.name.as_str()).collect()
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.spec.name == name)
    }

    /// Uniform interval in seconds, set after resampling.
    pub fn sample_interval(&self) -> Option<f64> {
        self.sample_interval
    }

    /// The resample interval if known, otherwise the median timestamp delta.
    pub fn nominal_interval(&self) -> Option<f64> {
        if let Some(s) = self.sample_interval {
            return Some(s);
        }
        let mut d: Vec<i64> = self.timestamps.windows(2).map(|w| w[1].0 - w[0].0).collect();
        if d.is_empty() {
            return None;
        }
        d.sort_unstable();
        Some(d[d.len() / 2] as f64 / NANOS_PER_SEC)
    }

    pub fn push_channel(&mut self, spec: ChannelSpec, values: Vec<f64>) -> Result<(), FrameError> {
        if values.len() != self.len() {
            return Err(FrameError::LengthMismatch {
                left: self.len(),
                right: values.len(),
            });
        }
        if self.channel(&spec.name).is_some() {
            return Err(FrameError::DuplicateChannel(spec.name));
        }
        self.channels.push(Channel { spec, values });
        Ok(())
    }

    /// Rows `range` as a new frame.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            timestamps: self.timestamps[range.clone()].to_vec(),
            channels: self
                .channels
                .iter()
                .map(|c| Channel {
                    spec: c.spec.clone(),
                    values: c.values[range.clone()].to_vec(),
                })
                .collect(),
            sample_interval: self.sample_interval,
        }
    }

    /// Keeps only the named channels, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self, FrameError> {
        let channels = names
            .iter()
            .map(|n| {
                self.channel(n)
                    .cloned()
                    .ok_or_else(|| FrameError::UnknownChannel(n.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            timestamps: self.timestamps.clone(),
            channels,
            sample_interval: self.sample_interval,
        })
    }

    /// Exact equality with NaN cells compared by bit pattern.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.timestamps == other.timestamps
            && self.channels.len() == other.channels.len()
            && self.channels.iter().zip(&other.channels).all(|(a, b)| {
                a.spec == b.spec
                    && a.values.len() == b.values.len()
                    && a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// Writes `timestamp,<channels...>` with ISO-8601 nanosecond timestamps;
    /// missing cells are written empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FrameError> {
        self.write_csv_with(out, &[])
    }

    /// Like [`Self::write_csv`] with extra trailing columns (e.g. truth flags).
    pub fn write_csv_with<W: Write>(&self, out: W, extra: &[(&str, &[f64])]) -> Result<(), FrameError> {
        for (_, col) in extra {
            if col.len() != self.len() {
                return Err(FrameError::LengthMismatch {
                    left: self.len(),
                    right: col.len(),
                });
            }
        }
        let mut w = csv::WriterBuilder::new().from_writer(out);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.channels.iter().map(|c| c.spec.name.clone()));
        header.extend(extra.iter().map(|(n, _)| n.to_string()));
        w.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            row.clear();
            row.push(self.timestamps[i].to_iso());
            for c in &self.channels {
                row.push(format_cell(c.values[i]));
            }
            for (_, col) in extra {
                row.push(format_cell(col[i]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn format_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn first_non_increasing(ts: &[Timestamp]) -> Option<usize> {
    ts.windows(2).position(|w| w[1] <= w[0]).map(|i| i + 1)
}

/// Maps an angle in degrees onto [-180, 180). Values already in range are
/// returned unchanged.
pub fn normalize_angle(deg: f64) -> f64 {
    if (-180.0..180.0).contains(&deg) || !deg.is_finite() {
        return deg;
    }
    let r = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if r >= 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Parses delimiter-separated text into a frame. Rows whose timestamp cannot
/// be parsed are dropped; blank or non-numeric cells become missing.
pub fn parse_pmu_csv<R: Read>(source: R, schema: &ChannelSchema) -> Result<MeasurementFrame, FrameError> {
    parse_pmu_csv_with_report(source, schema).map(|(f, _)| f)
}

pub fn parse_pmu_csv_with_report<R: Read>(
    source: R,
    schema: &ChannelSchema,
) -> Result<(MeasurementFrame, ParseReport), FrameError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(str::to_string).collect(),
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
        Err(_) => return Err(FrameError::EmptyInput),
    };
    if headers.iter().all(|h| h.is_empty()) {
        return Err(FrameError::EmptyInput);
    }
    let ts_col = match &schema.timestamp_column {
        Some(name) => headers.iter().position(|h| h == name),
        None => headers.iter().position(|h| is_timestamp_header(h)),
    }
    .ok_or_else(|| {
        FrameError::MissingTimestampColumn(
            schema
                .timestamp_column
                .clone()
                .unwrap_or_else(|| "timestamp|ts|time|datetime".into()),
        )
    })?;

    let mappings: Vec<ColumnMapping> = if schema.channels.is_empty() {
        let refs: Vec<&str> = headers.iter().map(String::as_str).collect();
        let mut inferred = ChannelSchema::infer(&refs);
        inferred.channels.retain(|m| m.column != headers[ts_col]);
        inferred.channels
    } else {
        schema.channels.clone()
    };
    let mut cols = Vec::with_capacity(mappings.len());
    for m in &mappings {
        let idx = headers
            .iter()
            .position(|h| *h == m.column)
            .ok_or_else(|| FrameError::UnknownChannel(m.column.clone()))?;
        cols.push(idx);
    }

    let mut timestamps = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); mappings.len()];
    let mut report = ParseReport::default();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    while rdr.read_record(&mut record)? {
        row += 1;
        let Some(ts) = record.get(ts_col).and_then(Timestamp::parse) else {
            log::warn!("row {row}: unparseable timestamp, row rejected");
            report.rejected_rows.push(row);
            continue;
        };
        if let Some(&last) = timestamps.last() {
            if ts <= last {
                return Err(FrameError::NonMonotoneTimestamps { row });
            }
        }
        timestamps.push(ts);
        for (k, (&c, m)) in cols.iter().zip(&mappings).enumerate() {
            let v = record.get(c).map_or(f64::NAN, parse_cell);
            values[k].push(if m.kind.is_angle() { normalize_angle(v) } else { v });
        }
    }
    if timestamps.is_empty() {
        return Err(FrameError::EmptyInput);
    }
    let channels = mappings
        .iter()
        .zip(values)
        .map(|(m, values)| Channel { spec: m.spec(), values })
        .collect();
    Ok((MeasurementFrame::new(timestamps, channels)?, report))
}

fn parse_cell(s: &str) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_nan() => f64::NAN,
        Ok(v) => v,
        Err(_) => f64::NAN,
    }
}

/// Reads a CSV file. When `schema` is `None` every non-timestamp column is
/// mapped with a kind inferred from its header.
pub fn read_csv_file(path: &Path, schema: Option<&ChannelSchema>) -> Result<MeasurementFrame, FrameError> {
    let file = std::fs::File::open(path)?;
    let default = ChannelSchema::default();
    parse_pmu_csv(std::io::BufReader::new(file), schema.unwrap_or(&default))
}

/// Buckets samples by `floor(t / interval)` and averages present values per
/// bucket. Runs of empty buckets up to `fill_limit` long are forward-filled;
/// longer runs fail with `GapTooLarge`. Per-channel missing runs longer than
/// `fill_limit` stay missing.
pub fn resample(frame: &MeasurementFrame, interval: f64, fill_limit: usize) -> Result<MeasurementFrame, FrameError> {
    if !(interval > 0.0) || !interval.is_finite() {
        return Err(FrameError::InvalidInterval(interval));
    }
    if frame.is_empty() {
        return Err(FrameError::EmptyInput);
    }
    let step = (interval * NANOS_PER_SEC).round() as i64;
    if step <= 0 {
        return Err(FrameError::InvalidInterval(interval));
    }
    let first = frame.timestamps[0].0.div_euclid(step);
    let last = frame.timestamps[frame.len() - 1].0.div_euclid(step);
    let nb = (last - first + 1) as usize;
    let nc = frame.channels.len();

    let mut occupied = vec![false; nb];
    // running means stay exact for constant buckets
    let mut means = vec![vec![0.0f64; nb]; nc];
    let mut counts = vec![vec![0u32; nb]; nc];
    for (i, t) in frame.timestamps.iter().enumerate() {
        let b = (t.0.div_euclid(step) - first) as usize;
        occupied[b] = true;
        for (c, ch) in frame.channels.iter().enumerate() {
            let v = ch.values[i];
            if !v.is_nan() {
                counts[c][b] += 1;
                means[c][b] += (v - means[c][b]) / counts[c][b] as f64;
            }
        }
    }

    let mut run = 0usize;
    for b in 0..nb {
        if occupied[b] {
            run = 0;
            continue;
        }
        run += 1;
        let ends_here = b + 1 == nb || occupied[b + 1];
        if ends_here && run > fill_limit {
            let start = b + 1 - run;
            return Err(FrameError::GapTooLarge {
                start: Timestamp((first + start as i64) * step),
                end: Timestamp((first + b as i64) * step),
                buckets: run,
                limit: fill_limit,
            });
        }
    }

    let channels = frame
        .channels
        .iter()
        .enumerate()
        .map(|(c, ch)| {
            let mut vals: Vec<f64> = (0..nb)
                .map(|b| if counts[c][b] > 0 { means[c][b] } else { f64::NAN })
                .collect();
            forward_fill(&mut vals, fill_limit);
            Channel {
                spec: ch.spec.clone(),
                values: vals,
            }
        })
        .collect();
    let timestamps = (0..nb as i64).map(|b| Timestamp((first + b) * step)).collect();
    let mut out = MeasurementFrame::new(timestamps, channels)?;
    out.sample_interval = Some(step as f64 / NANOS_PER_SEC);
    Ok(out)
}

fn forward_fill(vals: &mut [f64], limit: usize) {
    let mut i = 0;
    while i < vals.len() {
        if !vals[i].is_nan() || i == 0 || vals[i - 1].is_nan() {
            i += 1;
            continue;
        }
        let prev = vals[i - 1];
        let mut j = i;
        while j < vals.len() && vals[j].is_nan() {
            j += 1;
        }
        if j - i <= limit {
            vals[i..j].fill(prev);
        }
        i = j;
    }
}

/// Element-wise cos(v − i) with the difference normalized to [-180, 180)
/// degrees. Missing inputs give missing outputs.
pub fn compute_power_factor(v_angle: &[f64], i_angle: &[f64]) -> Result<Vec<f64>, FrameError> {
    if v_angle.len() != i_angle.len() {
        return Err(FrameError::LengthMismatch {
            left: v_angle.len(),
            right: i_angle.len(),
        });
    }
    Ok(v_angle
        .iter()
        .zip(i_angle)
        .map(|(&v, &i)| {
            let d = normalize_angle(normalize_angle(v) - normalize_angle(i));
            d.to_radians().cos().clamp(-1.0, 1.0)
        })
        .collect())
}

/// A channel with missing cells filled and its timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSeries {
    pub name: String,
    pub values: Vec<f64>,
    pub timestamps: Vec<Timestamp>,
}

/// Returns the named channel with missing cells linearly interpolated in time
/// between present neighbours; leading/trailing gaps take the nearest value.
pub fn select_channel(frame: &MeasurementFrame, name: &str) -> Result<ChannelSeries, FrameError> {
    let ch = frame
        .channel(name)
        .ok_or_else(|| FrameError::UnknownChannel(name.to_string()))?;
    let values =
        interpolate_missing(&ch.values, &frame.timestamps).ok_or_else(|| FrameError::EmptyChannel(name.to_string()))?;
    Ok(ChannelSeries {
        name: name.to_string(),
        values,
        timestamps: frame.timestamps.clone(),
    })
}

/// Fills NaN cells by time-linear interpolation; `None` if nothing is present.
pub fn interpolate_missing(values: &[f64], ts: &[Timestamp]) -> Option<Vec<f64>> {
    let present: Vec<usize> = (0..values.len()).filter(|&i| !values[i].is_nan()).collect();
    let (&first, &last) = (present.first()?, present.last()?);
    let mut out = values.to_vec();
    out[..first].fill(values[first]);
    out[last + 1..].fill(values[last]);
    for w in present.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b == a + 1 {
            continue;
        }
        let (ta, tb) = (ts[a].0 as f64, ts[b].0 as f64);
        for k in a + 1..b {
            let s = (ts[k].0 as f64 - ta) / (tb - ta);
            out[k] = values[a] + s * (values[b] - values[a]);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema_va_ia() -> ChannelSchema {
        ChannelSchema::default()
            .with_channel("VA_mag", ChannelKind::VoltageMagnitude, Phase::A, "pu")
            .with_channel("IA_mag", ChannelKind::CurrentMagnitude, Phase::A, "pu")
    }

    #[test]
    fn parses_three_rows_two_channels() {
        let csv = "ts,VA_mag,IA_mag\n1,1.0,0.5\n2,1.01,0.51\n3,0.99,0.49\n";
        let f = parse_pmu_csv(csv.as_bytes(), &schema_va_ia()).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.channels().len(), 2);
        assert_eq!(f.timestamps()[1], Timestamp::from_nanos(2_000_000_000));
    }

    #[test]
    fn blank_cell_is_missing() {
        let csv = "ts,VA_mag,IA_mag\n1,1.0,0.5\n2,,0.51\n3,0.99,0.49\n";
        let f = parse_pmu_csv(csv.as_bytes(), &schema_va_ia()).unwrap();
        assert_eq!(f.len(), 3);
        assert!(f.channel("VA_mag").unwrap().values[1].is_nan());
    }

    #[test]
    fn out_of_order_reports_row() {
        let csv = "ts,VA_mag,IA_mag\n2,1,1\n1,1,1\n";
        match parse_pmu_csv(csv.as_bytes(), &schema_va_ia()) {
            Err(FrameError::NonMonotoneTimestamps { row }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_timestamp_and_empty() {
        let r = parse_pmu_csv("a,VA_mag\n1,2\n".as_bytes(), &ChannelSchema::default());
        assert!(matches!(r, Err(FrameError::MissingTimestampColumn(_))));
        assert!(matches!(
            parse_pmu_csv("".as_bytes(), &schema_va_ia()),
            Err(FrameError::EmptyInput)
        ));
        assert!(matches!(
            parse_pmu_csv("ts,VA_mag,IA_mag\n".as_bytes(), &schema_va_ia()),
            Err(FrameError::EmptyInput)
        ));
    }

    #[test]
    fn bad_timestamp_rows_rejected() {
        let csv = "ts,VA_mag,IA_mag\n1,1,1\nnope,2,2\n3,3,3\n";
        let (f, rep) = parse_pmu_csv_with_report(csv.as_bytes(), &schema_va_ia()).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(rep.rejected_rows, vec![2]);
    }

    #[test]
    fn unmapped_columns_ignored() {
        let csv = "ts,VA_mag,IA_mag,extra\n1,1,1,9\n";
        let schema = ChannelSchema::default().with_channel("IA_mag", ChannelKind::CurrentMagnitude, Phase::A, "pu");
        let f = parse_pmu_csv(csv.as_bytes(), &schema).unwrap();
        assert_eq!(f.channel_names(), vec!["IA_mag"]);
    }

    #[test]
    fn timestamp_formats() {
        let iso = Timestamp::parse("2024-01-01T00:00:01.5Z").unwrap();
        assert_eq!(Timestamp::parse("1704067201500").unwrap(), iso);
        assert_eq!(Timestamp::parse("1704067201500000").unwrap(), iso);
        assert_eq!(Timestamp::parse("1704067201500000000").unwrap(), iso);
        assert_eq!(Timestamp::parse("2024-01-01 00:00:01.5").unwrap(), iso);
        assert_eq!(Timestamp::parse(&iso.to_iso()).unwrap(), iso);
        assert_eq!(iso.to_iso(), "2024-01-01T00:00:01.500000000Z");
        assert!(Timestamp::parse("yesterday").is_none());
    }

    #[test]
    fn schema_toml() {
        let s = ChannelSchema::from_toml_str(
            r#"
            timestamp_column = "ts"
            [[channel]]
            column = "VA_ang"
            kind = "voltage_angle"
            phase = "A"
            units = "deg"
            "#,
        )
        .unwrap();
        let f = parse_pmu_csv("ts,VA_ang\n1,350\n2,-190\n".as_bytes(), &s).unwrap();
        assert_eq!(f.channel("VA_ang").unwrap().values, vec![-10.0, 170.0]);
    }

    fn frame_of(ts_secs: &[f64], vals: &[f64]) -> MeasurementFrame {
        MeasurementFrame::new(
            ts_secs.iter().map(|&s| Timestamp::from_secs_f64(s)).collect(),
            vec![Channel {
                spec: ChannelSpec::derived("x"),
                values: vals.to_vec(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn resample_constant() {
        let ts: Vec<f64> = (0..240).map(|k| k as f64 / 120.0).collect();
        let f = frame_of(&ts, &vec![7.2; 240]);
        let r = resample(&f, 1.0, 2).unwrap();
        assert_eq!(r.channel("x").unwrap().values, vec![7.2, 7.2]);
        assert_eq!(r.sample_interval(), Some(1.0));
    }

    #[test]
    fn resample_bucket_means() {
        let f = frame_of(&[0.0, 0.4, 1.2], &[1.0, 3.0, 5.0]);
        let r = resample(&f, 1.0, 0).unwrap();
        assert_eq!(r.channel("x").unwrap().values, vec![2.0, 5.0]);
    }

    #[test]
    fn resample_gap_too_large() {
        let f = frame_of(&[0.0, 4.0], &[1.0, 2.0]);
        match resample(&f, 1.0, 2) {
            Err(FrameError::GapTooLarge { buckets, .. }) => assert_eq!(buckets, 3),
            other => panic!("unexpected {other:?}"),
        }
        let r = resample(&f, 1.0, 3).unwrap();
        assert_eq!(r.channel("x").unwrap().values, vec![1.0, 1.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn power_factor_examples() {
        assert_eq!(
            compute_power_factor(&[12.0, -40.0], &[12.0, -40.0]).unwrap(),
            vec![1.0, 1.0]
        );
        let pf = compute_power_factor(&[60.0], &[0.0]).unwrap();
        assert!((pf[0] - 0.5).abs() < 1e-12);
        let pf = compute_power_factor(&[350.0], &[10.0]).unwrap();
        assert!((pf[0] - 20f64.to_radians().cos()).abs() < 1e-12);
        assert!((pf[0] - 0.9397).abs() < 1e-4);
        assert!(matches!(
            compute_power_factor(&[1.0], &[]),
            Err(FrameError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn select_channel_interpolates() {
        let f = frame_of(&[0.0, 1.0, 2.0], &[1.0, f64::NAN, 3.0]);
        assert_eq!(select_channel(&f, "x").unwrap().values, vec![1.0, 2.0, 3.0]);
        let g = frame_of(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        assert_eq!(select_channel(&g, "x").unwrap().values, vec![1.0, 2.0, 3.0]);
        assert!(matches!(select_channel(&f, "XX"), Err(FrameError::UnknownChannel(_))));
    }

    #[test]
    fn normalize_angle_range() {
        assert_eq!(normalize_angle(180.0), -180.0);
        assert_eq!(normalize_angle(-180.0), -180.0);
        assert_eq!(normalize_angle(540.0), -180.0);
        assert_eq!(normalize_angle(-190.0), 170.0);
        assert_eq!(normalize_angle(0.25), 0.25);
    }

    fn arb_frame() -> impl Strategy<Value = MeasurementFrame> {
        (1usize..40, 1usize..4).prop_flat_map(|(n, nc)| {
            (
                proptest::collection::vec(1i64..5_000_000_000, n),
                proptest::collection::vec(
                    proptest::collection::vec(prop_oneof![9 => -1e6f64..1e6, 1 => Just(f64::NAN)], n),
                    nc,
                ),
                -1_000_000_000_000_000_000i64..2_000_000_000_000_000_000,
            )
                .prop_map(|(deltas, cols, t0)| {
                    let mut t = t0;
                    let ts = deltas
                        .iter()
                        .map(|d| {
                            t += d;
                            Timestamp::from_nanos(t)
                        })
                        .collect();
                    let channels = cols
                        .into_iter()
                        .enumerate()
                        .map(|(k, values)| Channel {
                            spec: ChannelSpec::new(format!("c{k}"), ChannelKind::Derived, Phase::None, "pu"),
                            values,
                        })
                        .collect();
                    MeasurementFrame::new(ts, channels).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_bit_identical(f in arb_frame()) {
            let mut buf = Vec::new();
            f.write_csv(&mut buf).unwrap();
            let g = parse_pmu_csv(buf.as_slice(), &ChannelSchema::from_frame(&f)).unwrap();
            prop_assert!(f.bitwise_eq(&g));
            let mut buf2 = Vec::new();
            g.write_csv(&mut buf2).unwrap();
            prop_assert_eq!(buf, buf2);
        }

        #[test]
        fn resample_idempotent(f in arb_frame(), interval in prop_oneof![Just(0.5f64), Just(1.0), Just(2.5)]) {
            if let Ok(once) = resample(&f, interval, 1_000_000) {
                let twice = resample(&once, interval, 1_000_000).unwrap();
                prop_assert!(once.bitwise_eq(&twice));
                let step = (interval * 1e9).round() as i64;
                for w in once.timestamps().windows(2) {
                    prop_assert!((w[1].nanos() - w[0].nanos() - step).abs() <= 1_000);
                }
            }
        }

        #[test]
        fn power_factor_bounded_and_periodic(v in -1e4f64..1e4, i in -1e4f64..1e4) {
            let a = compute_power_factor(&[v], &[i]).unwrap()[0];
            let b = compute_power_factor(&[v + 360.0], &[i]).unwrap()[0];
            prop_assert!((-1.0..=1.0).contains(&a));
            prop_assert!((a - b).abs() <= 1e-9);
        }

        #[test]
        fn power_factor_exact_periodicity_on_grid(v in -720i32..720, i in -720i32..720) {
            let v = v as f64 * 0.5;
            let i = i as f64 * 0.5;
            let a = compute_power_factor(&[v], &[i]).unwrap()[0];
            let b = compute_power_factor(&[v + 360.0], &[i]).unwrap()[0];
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
