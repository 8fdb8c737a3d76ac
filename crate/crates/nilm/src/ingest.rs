//! Channel files: one `<unix_timestamp> <watts>` pair per line.

use std::fs;
use std::path::{Path, PathBuf};

use nilm_core::series::{PowerSeries, SAMPLE_PERIOD_SECS};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{}: no readings", path.display())]
    EmptySeries { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Series {
        path: PathBuf,
        #[source]
        source: nilm_core::Error,
    },
    #[error("{}: not a power-series cache ({reason})", path.display())]
    Cache { path: PathBuf, reason: &'static str },
}

/// Counts of lines that were read but altered or dropped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub readings: usize,
    pub duplicate_timestamps: usize,
    pub clamped_negative: usize,
}

/// Converts a watts token to kW by shifting the decimal exponent, so the
/// result is the correctly rounded value of `watts / 1000`.
fn watts_to_kw(token: &str) -> Option<f64> {
    token.parse::<f64>().ok().filter(|v| v.is_finite())?;
    let (mantissa, exp) = match token.find(['e', 'E']) {
        Some(at) => (&token[..at], token[at + 1..].parse::<i32>().ok()?),
        None => (token, 0),
    };
    format!("{mantissa}e{}", exp - 3).parse().ok()
}

fn kw_to_watts(kw: f64) -> String {
    let sci = format!("{kw:e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let shifted = format!("{mantissa}e{}", exp + 3);
    let plain = shifted.parse::<f64>().expect("valid float").to_string();
    if watts_to_kw(&plain).map(f64::to_bits) == Some(kw.to_bits()) {
        plain
    } else {
        shifted
    }
}

/// Parses channel text. Lines are sorted by timestamp, the last of several
/// readings for one timestamp wins, and negative readings become zero.
pub fn parse_channel_text(text: &str, appliance_id: u8, path: &Path) -> Result<(PowerSeries, ParseReport), IngestError> {
    let mut readings: Vec<(i64, f64)> = Vec::new();
    let mut report = ParseReport::default();
    for (k, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let format_err = |message: String| IngestError::Format { path: path.to_path_buf(), line: k + 1, message };
        if fields.len() != 2 {
            return Err(format_err(format!("expected 2 fields, found {}", fields.len())));
        }
        let ts: i64 = fields[0].parse().map_err(|_| format_err(format!("bad timestamp {:?}", fields[0])))?;
        let mut kw = watts_to_kw(fields[1]).ok_or_else(|| format_err(format!("bad power value {:?}", fields[1])))?;
        if kw < 0.0 {
            kw = 0.0;
            report.clamped_negative += 1;
        }
        if kw == 0.0 {
            kw = 0.0; // drop the sign of -0
        }
        readings.push((ts, kw));
    }
    if readings.is_empty() {
        return Err(IngestError::EmptySeries { path: path.to_path_buf() });
    }
    readings.sort_by_key(|r| r.0);
    let mut deduped: Vec<(i64, f64)> = Vec::with_capacity(readings.len());
    for r in readings {
        match deduped.last_mut() {
            Some(last) if last.0 == r.0 => {
                *last = r;
                report.duplicate_timestamps += 1;
            }
            _ => deduped.push(r),
        }
    }
    report.readings = deduped.len();
    let (timestamps, power) = deduped.into_iter().unzip();
    let series = PowerSeries::new(appliance_id, timestamps, power, SAMPLE_PERIOD_SECS)
        .map_err(|source| IngestError::Series { path: path.to_path_buf(), source })?;
    Ok((series, report))
}

pub fn parse_channel(path: &Path, appliance_id: u8) -> Result<PowerSeries, IngestError> {
    parse_channel_with_report(path, appliance_id).map(|(s, _)| s)
}

pub fn parse_channel_with_report(path: &Path, appliance_id: u8) -> Result<(PowerSeries, ParseReport), IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    parse_channel_text(&text, appliance_id, path)
}

/// Channel-file text for `series`; parsing it gives back the same series.
pub fn serialize_channel(series: &PowerSeries) -> String {
    let mut out = String::with_capacity(series.len() * 20);
    for (t, p) in series.timestamps().iter().zip(series.power()) {
        out.push_str(&t.to_string());
        out.push(' ');
        out.push_str(&kw_to_watts(*p));
        out.push('\n');
    }
    out
}

pub fn write_channel(path: &Path, series: &PowerSeries) -> Result<(), IngestError> {
    fs::write(path, serialize_channel(series)).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

const CACHE_MAGIC: &[u8; 8] = b"NILMPS01";

/// Little-endian binary image: magic, appliance id, sample period, length,
/// then timestamps and power bits.
pub fn encode_cache(series: &PowerSeries) -> Vec<u8> {
    let n = series.len();
    let mut out = Vec::with_capacity(21 + 16 * n);
    out.extend_from_slice(CACHE_MAGIC);
    out.push(series.appliance_id());
    out.extend_from_slice(&series.sample_period().to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for t in series.timestamps() {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for p in series.power() {
        out.extend_from_slice(&p.to_bits().to_le_bytes());
    }
    out
}

pub fn decode_cache(bytes: &[u8], path: &Path) -> Result<PowerSeries, IngestError> {
    let bad = |reason| IngestError::Cache { path: path.to_path_buf(), reason };
    let header = bytes.get(..21).ok_or(bad("truncated header"))?;
    if &header[..8] != CACHE_MAGIC {
        return Err(bad("wrong magic"));
    }
    let appliance_id = header[8];
    let period = u32::from_le_bytes(header[9..13].try_into().expect("4 bytes"));
    let n = u64::from_le_bytes(header[13..21].try_into().expect("8 bytes")) as usize;
    let body = &bytes[21..];
    if n.checked_mul(16) != Some(body.len()) {
        return Err(bad("length mismatch"));
    }
    let word = |k: usize| u64::from_le_bytes(body[8 * k..8 * k + 8].try_into().expect("8 bytes"));
    let timestamps = (0..n).map(|k| word(k) as i64).collect();
    let power = (0..n).map(|k| f64::from_bits(word(n + k))).collect();
    PowerSeries::new(appliance_id, timestamps, power, period).map_err(|source| IngestError::Series { path: path.to_path_buf(), source })
}

pub fn write_cache(path: &Path, series: &PowerSeries) -> Result<(), IngestError> {
    fs::write(path, encode_cache(series)).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

pub fn read_cache(path: &Path) -> Result<PowerSeries, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    decode_cache(&bytes, path)
}
