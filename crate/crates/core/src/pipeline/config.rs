//! Run configuration: one TOML file plus `key=value` overrides.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CsError, Result};
use crate::odl::OdlConfig;
use crate::pipeline::ingest::SampleFormat;
use crate::preprocess::FilterSpec;
use crate::types::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub format: SampleFormat,
    /// Multiplier from stored integers (or floats) to physical units.
    pub gain: f64,
    /// Zero-based CSV column holding the samples.
    pub column: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data/ecg_excerpt.csv"),
            format: SampleFormat::CsvInt16,
            gain: 0.005,
            column: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub init: usize,
    pub train: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            init: 512,
            train: 1621,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisSelector {
    Trained,
    Joint,
    Both,
}

impl BasisSelector {
    pub fn trained(self) -> bool {
        matches!(self, Self::Trained | Self::Both)
    }

    pub fn joint(self) -> bool {
        matches!(self, Self::Joint | Self::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    /// Nominal compression ratios; ignored when `m` is non-empty.
    pub cr: Vec<f64>,
    /// Explicit measurement counts.
    pub m: Vec<usize>,
    pub seed: u64,
    pub basis: BasisSelector,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            cr: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            m: Vec::new(),
            seed: 7,
            basis: BasisSelector::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformConfig {
    pub cr: f64,
    /// Leading test epochs written to the waveform CSV.
    pub epochs: usize,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self { cr: 10.0, epochs: 3 }
    }
}

/// Everything `run_experiment` needs.
///
/// In the pipeline `solver.epsilon` is relative: the per-epoch bound is
/// `epsilon * ‖y⊥‖`, where `y⊥` is the measurement vector with its component
/// along `Φ·1` removed. `solver.lambda` is only used by the lasso decoder of
/// the `reconstruct` subcommand when `epsilon` is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub k: usize,
    pub output: PathBuf,
    pub data: DataConfig,
    pub filter: FilterSpec,
    pub split: SplitConfig,
    pub odl: OdlConfig,
    pub solver: SolverConfig,
    pub sensing: SensingConfig,
    pub waveform: WaveformConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 256,
            k: 512,
            output: PathBuf::from("out"),
            data: DataConfig::default(),
            filter: FilterSpec::default(),
            split: SplitConfig::default(),
            odl: OdlConfig::default(),
            solver: SolverConfig {
                epsilon: 0.05,
                ..SolverConfig::default()
            },
            sensing: SensingConfig::default(),
            waveform: WaveformConfig::default(),
        }
    }
}

/// One compression level: nominal CR (or `n/m` when given as m) and m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrPoint {
    pub nominal: f64,
    pub m: usize,
}

/// `m = round(n / cr)`.
pub fn measurements_for(n: usize, cr: f64) -> Result<usize> {
    if !(cr > 0.0) || !cr.is_finite() {
        return Err(CsError::Config(format!("compression ratio must be positive, got {cr}")));
    }
    let m = (n as f64 / cr).round();
    if m < 1.0 || m > n as f64 {
        return Err(CsError::Config(format!(
            "CR {cr} with n = {n} gives m = {m}, outside 1..={n}"
        )));
    }
    Ok(m as usize)
}

impl RunConfig {
    /// Reads a TOML file, applies overrides, and resolves relative paths
    /// against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CsError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CsError::Config(format!("config: {e}")))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| CsError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if self.data.path.is_relative() {
            self.data.path = base.join(&self.data.path);
        }
        if self.output.is_relative() {
            self.output = base.join(&self.output);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(CsError::Config(format!("n must be >= 2, got {}", self.n)));
        }
        if self.k == 0 {
            return Err(CsError::Config("k must be >= 1".into()));
        }
        if self.k > self.split.init {
            return Err(CsError::Config(format!(
                "k = {} atoms need at least as many init epochs (split.init = {})",
                self.k, self.split.init
            )));
        }
        if !(self.data.gain.is_finite() && self.data.gain != 0.0) {
            return Err(CsError::Config(format!(
                "data.gain must be finite and nonzero, got {}",
                self.data.gain
            )));
        }
        self.filter.validate()?;
        self.odl.validate()?;
        if !(self.solver.epsilon >= 0.0 && self.solver.epsilon < 1.0) {
            return Err(CsError::Config(format!(
                "solver.epsilon is relative and must lie in [0, 1), got {}",
                self.solver.epsilon
            )));
        }
        if self.solver.max_iterations == 0 || !(self.solver.convergence_tol > 0.0) {
            return Err(CsError::Config(
                "solver needs max_iterations >= 1 and convergence_tol > 0".into(),
            ));
        }
        let points = self.cr_points()?;
        if points.is_empty() {
            return Err(CsError::Config("sensing.cr and sensing.m are both empty".into()));
        }
        measurements_for(self.n, self.waveform.cr)?;
        Ok(())
    }

    pub fn cr_points(&self) -> Result<Vec<CrPoint>> {
        if !self.sensing.m.is_empty() {
            return self
                .sensing
                .m
                .iter()
                .map(|&m| {
                    if m == 0 || m > self.n {
                        Err(CsError::Config(format!("m = {m} outside 1..={}", self.n)))
                    } else {
                        Ok(CrPoint {
                            nominal: self.n as f64 / m as f64,
                            m,
                        })
                    }
                })
                .collect();
        }
        self.sensing
            .cr
            .iter()
            .map(|&cr| {
                Ok(CrPoint {
                    nominal: cr,
                    m: measurements_for(self.n, cr)?,
                })
            })
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Sets a dotted key in a TOML table; the value is parsed as TOML and
/// falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CsError::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(CsError::Config(format!("override `{assignment}` has an empty key")));
    }
    let value = parse_value(raw);
    set_path(table, key, value)
}

pub fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CsError::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl FromStr for BasisSelector {
    type Err = CsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trained" => Ok(Self::Trained),
            "joint" => Ok(Self::Joint),
            "both" => Ok(Self::Both),
            other => Err(CsError::Config(format!("unknown basis `{other}` (trained|joint|both)"))),
        }
    }
}
