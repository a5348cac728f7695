//! File layout of fit and prediction directories, and small I/O helpers.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use depmix_core::inference::{Chain, ChainMeta, Draw};
use depmix_core::models::ModelSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, write_err, CliError, CliResult};

pub const SPEC_FILE: &str = "spec.json";
pub const META_FILE: &str = "meta.json";
pub const DRAWS_FILE: &str = "draws.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const GRID_FILE: &str = "ygrid.json";
pub const PARTITION_FILE: &str = "partition.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REGRESSION_FILE: &str = "regression.csv";
pub const DENSITY_FILE: &str = "density.csv";
pub const PREDICT_FILE: &str = "predict.json";
pub const METRICS_FILE: &str = "metrics.json";

/// Equispaced response grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub size: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        depmix_core::predictive::linspace(self.lo, self.hi, self.size)
    }

    pub fn from_values(grid: &[f64]) -> Self {
        GridSpec {
            lo: grid[0],
            hi: grid[grid.len() - 1],
            size: grid.len(),
        }
    }

    /// `lo:hi:size`
    pub fn parse(s: &str) -> CliResult<Self> {
        let bad = || CliError::usage(format!("bad grid `{s}`; expected auto or lo:hi:size"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let size: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if lo >= hi || size < 2 || !lo.is_finite() || !hi.is_finite() {
            return Err(bad());
        }
        Ok(GridSpec { lo, hi, size })
    }
}

/// Sidecar written next to prediction outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictInfo {
    pub family: depmix_core::models::ModelFamily,
    /// Example whose covariate law produced the test points, if any.
    pub example: Option<u8>,
    pub test_size: usize,
    pub grid: GridSpec,
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| write_err(dir, e))
}

/// Write via a temporary sibling and rename, so readers never see half a file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| write_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| write_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| write_err(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let f = fs::File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Render into a buffer with `f`, then write atomically.
pub fn write_with<F>(path: &Path, f: F) -> CliResult<()>
where
    F: FnOnce(&mut Vec<u8>) -> depmix_core::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| write_err(path, e))?;
    write_atomic(path, &buf)
}

pub fn save_chain(dir: &Path, spec: &ModelSpec, chain: &Chain) -> CliResult<()> {
    write_json(&dir.join(SPEC_FILE), spec)?;
    write_with(&dir.join(DRAWS_FILE), |w| chain.write_draws(w))?;
    // metadata last: its presence marks a finished write
    write_json(&dir.join(META_FILE), &chain.meta)
}

pub struct StoredChain {
    pub spec: ModelSpec,
    pub meta: ChainMeta,
    pub draws: Vec<Draw>,
}

pub fn load_chain(dir: &Path) -> CliResult<StoredChain> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!("{}: not a chain directory", dir.display())));
    }
    let meta: ChainMeta = read_json(&dir.join(META_FILE))?;
    let spec: ModelSpec = read_json(&dir.join(SPEC_FILE))?;
    let path = dir.join(DRAWS_FILE);
    let f = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
    let draws =
        Chain::read_draws(BufReader::new(f)).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok(StoredChain { spec, meta, draws })
}

/// Covariate rows from a CSV whose header names x1..xp (a leading y column is ignored).
pub fn read_test_points(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let f = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let header = r
        .headers()
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        .clone();
    let skip = usize::from(header.get(0).is_some_and(|h| h.trim() == "y"));
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .skip(skip)
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::usage(format!("{} row {}: {e}", path.display(), k + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::usage(format!("{}: no test points", path.display())));
    }
    Ok(rows)
}
