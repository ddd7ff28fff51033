//! Reading single-channel records from disk.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleFormat {
    /// One integer per row (optionally in a chosen comma-separated column).
    CsvInt16,
    CsvFloat,
    /// Headerless little-endian two's-complement 16-bit samples.
    RawLeInt16,
}

impl FromStr for SampleFormat {
    type Err = CsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv-int16" => Ok(Self::CsvInt16),
            "csv-float" => Ok(Self::CsvFloat),
            "raw-le-int16" => Ok(Self::RawLeInt16),
            other => Err(CsError::Config(format!(
                "unknown sample format `{other}` (csv-int16|csv-float|raw-le-int16)"
            ))),
        }
    }
}

impl fmt::Display for SampleFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CsvInt16 => "csv-int16",
            Self::CsvFloat => "csv-float",
            Self::RawLeInt16 => "raw-le-int16",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

/// Loads `path` and multiplies every sample by `gain`.
pub fn ingest(path: &Path, format: SampleFormat, gain: f64, column: usize, sample_rate_hz: f64) -> Result<Record> {
    let bytes = std::fs::read(path)?;
    let samples = parse_bytes(&bytes, path, format, gain, column)?;
    Ok(Record {
        samples,
        sample_rate_hz,
    })
}

pub fn parse_bytes(bytes: &[u8], path: &Path, format: SampleFormat, gain: f64, column: usize) -> Result<Vec<f64>> {
    let samples = match format {
        SampleFormat::RawLeInt16 => {
            if !bytes.len().is_multiple_of(2) {
                return Err(CsError::Format(format!(
                    "{}: raw int16 data has odd length {}",
                    path.display(),
                    bytes.len()
                )));
            }
            bytes
                .chunks_exact(2)
                .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])) * gain)
                .collect()
        }
        SampleFormat::CsvInt16 | SampleFormat::CsvFloat => parse_csv(bytes, path, format, gain, column)?,
    };
    if samples.is_empty() {
        return Err(CsError::Format(format!("{}: no samples", path.display())));
    }
    Ok(samples)
}

fn parse_csv(bytes: &[u8], path: &Path, format: SampleFormat, gain: f64, column: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let parse_err = |line: u64, message: String| CsError::Parse {
        path: PathBuf::from(path),
        line: line as usize,
        message,
    };
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = rec
            .get(column)
            .ok_or_else(|| parse_err(line, format!("row has {} fields, need column {column}", rec.len())))?;
        let value = match format {
            SampleFormat::CsvInt16 => field
                .parse::<i16>()
                .map(f64::from)
                .map_err(|e| parse_err(line, format!("`{field}` is not an int16: {e}")))?,
            _ => {
                let v = field
                    .parse::<f64>()
                    .map_err(|e| parse_err(line, format!("`{field}` is not a number: {e}")))?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("non-finite sample `{field}`")));
                }
                v
            }
        };
        out.push(value * gain);
    }
    Ok(out)
}

/// Writes samples as one float per line.
pub fn write_csv_float(path: &Path, samples: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in samples {
        w.write_record([s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
