//! Cartesian parameter sweeps over a base configuration.
//!
//! A grid file is a TOML table of dotted config keys mapped to arrays:
//!
//! ```toml
//! [grid]
//! "odl.lambda" = [0.05, 0.1, 0.2]
//! n = [128, 256]
//! ```
//!
//! Cells run in key order (keys sorted, last key varying fastest). Each cell
//! writes its artifacts to `<output>/cell_NNN`; trained dictionaries are
//! shared between cells with equal training inputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{CsError, Result};
use crate::pipeline::config::{set_path, RunConfig};
use crate::pipeline::experiment::{run_experiment_cached, ModelCache, ResultRow, RESULTS_HEADER};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<toml::Value>)>,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CsError::Config(format!("grid: {e}")))?;
        let grid = match table.remove("grid") {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(CsError::Config("grid: `grid` must be a table".into())),
            None => return Err(CsError::Config("grid: missing [grid] table".into())),
        };
        if let Some(extra) = table.keys().next() {
            return Err(CsError::Config(format!("grid: unexpected top-level key `{extra}`")));
        }
        let mut axes = Vec::new();
        for (key, value) in grid {
            match value {
                toml::Value::Array(vals) if !vals.is_empty() => axes.push((key, vals)),
                _ => return Err(CsError::Config(format!("grid: `{key}` must be a non-empty array"))),
            }
        }
        Ok(Self { axes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CsError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn single() -> Self {
        Self { axes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid coordinates of cell `index`.
    pub fn cell(&self, index: usize) -> Vec<(&str, &toml::Value)> {
        let mut rem = index;
        let mut coords = vec![None; self.axes.len()];
        for (slot, (key, vals)) in coords.iter_mut().zip(&self.axes).rev() {
            *slot = Some((key.as_str(), &vals[rem % vals.len()]));
            rem /= vals.len();
        }
        coords.into_iter().map(|c| c.expect("filled")).collect()
    }
}

/// Result of one grid cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub index: usize,
    pub coords: Vec<(String, String)>,
    pub result: std::result::Result<Vec<ResultRow>, String>,
}

/// Runs every cell of `grid` on top of `base` (TOML text of the base config,
/// already including overrides); `base_dir` resolves relative paths.
pub fn sweep(base: &toml::Table, base_dir: &Path, grid: &Grid) -> Result<Vec<CellOutcome>> {
    let base_cfg = config_from(base.clone(), base_dir)?;
    let mut cache = ModelCache::new();
    let mut out = Vec::with_capacity(grid.len());
    for index in 0..grid.len() {
        let coords = grid.cell(index);
        let mut table = base.clone();
        let applied = coords
            .iter()
            .try_for_each(|(k, v)| set_path(&mut table, k, (*v).clone()));
        let result = applied.and_then(|()| {
            let mut cfg = config_from(table, base_dir)?;
            cfg.output = base_cfg.output.join(format!("cell_{index:03}"));
            run_experiment_cached(&cfg, &mut cache).map(|o| o.rows)
        });
        if let Err(e) = &result {
            log::warn!("sweep cell {index} failed: {e}");
        }
        out.push(CellOutcome {
            index,
            coords: coords.iter().map(|(k, v)| (k.to_string(), value_text(v))).collect(),
            result: result.map_err(|e| e.to_string()),
        });
    }
    Ok(out)
}

fn config_from(table: toml::Table, base_dir: &Path) -> Result<RunConfig> {
    let mut cfg: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CsError::Config(format!("config: {e}")))?;
    cfg.validate()?;
    cfg.resolve_paths(base_dir);
    Ok(cfg)
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// `cell,<grid keys>,status,<results columns>`; failed cells get one row with
/// `status = error: ...` and empty result columns.
pub fn write_sweep<W: Write>(out: W, grid: &Grid, cells: &[CellOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["cell".to_string()];
    header.extend(grid.axes.iter().map(|(k, _)| k.clone()));
    header.push("status".into());
    header.extend(RESULTS_HEADER.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for cell in cells {
        let mut prefix = vec![cell.index.to_string()];
        prefix.extend(cell.coords.iter().map(|(_, v)| v.clone()));
        match &cell.result {
            Ok(rows) => {
                for r in rows {
                    let mut rec = prefix.clone();
                    rec.push("ok".into());
                    rec.extend(r.record());
                    w.write_record(&rec)?;
                }
            }
            Err(msg) => {
                let mut rec = prefix.clone();
                rec.push(format!("error: {msg}"));
                rec.extend(std::iter::repeat_n(String::new(), RESULTS_HEADER.len()));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_file(path: &Path, grid: &Grid, cells: &[CellOutcome]) -> Result<()> {
    write_sweep(BufWriter::new(File::create(path)?), grid, cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_enumerates_last_key_fastest() {
        let g = Grid::parse("[grid]\n\"odl.lambda\" = [0.1, 0.2]\nn = [64, 128, 256]\n").unwrap();
        assert_eq!(g.len(), 6);
        let c = g.cell(1);
        assert_eq!(c[0].0, "n");
        assert_eq!(c[0].1.as_integer(), Some(64));
        assert_eq!(c[1].1.as_float(), Some(0.2));
        assert_eq!(g.cell(5)[0].1.as_integer(), Some(256));
        assert_eq!(Grid::single().len(), 1);
        assert!(Grid::single().cell(0).is_empty());
    }

    #[test]
    fn grid_errors() {
        assert!(Grid::parse("x = 1\n").is_err());
        assert!(Grid::parse("[grid]\nn = 3\n").is_err());
        assert!(Grid::parse("[grid]\nn = []\n").is_err());
        assert!(Grid::parse("[grid]\nn = [1]\n[other]\n").is_err());
    }
}
