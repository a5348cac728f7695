//! End-to-end simulation study: generate, fit, predict and score every
//! (example, model) cell, then write one metrics table per example.
//!
//! Each cell draws from its own RNG stream derived from the study seed, so
//! results do not depend on how many worker threads run the cells or in what
//! order they finish.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use depmix_core::data::{fmt_num, Dataset};
use depmix_core::inference::McmcConfig;
use depmix_core::models::{LsbpVariant, ModelFamily, ModelOptions, ModelSpec};
use depmix_core::predictive::{predictive_summary, y_grid, PredictOptions, DEFAULT_GRID_SIZE};
use depmix_core::simstudy::{self, Example, MetricsReport};
use depmix_core::{inference, RngStream};
use serde::{Deserialize, Serialize};

use crate::commands::{partition_estimate, sidecar_path, write_partition_csv, GeneratedInfo};
use crate::error::{CliError, CliResult};
use crate::files::*;

/// Table order of the model rows.
pub const TABLE_ORDER: [ModelFamily; 6] = [
    ModelFamily::JointDp,
    ModelFamily::Lddp,
    ModelFamily::LddpBs,
    ModelFamily::Nw,
    ModelFamily::Lsbp,
    ModelFamily::LsbpNs,
];

pub const EXCLUDED_NOTE: &str = "joint enriched DP (EDP) is not implemented and has no row";

#[derive(Debug, Clone)]
pub struct Study {
    pub examples: Vec<Example>,
    pub models: Vec<ModelFamily>,
    pub seed: u64,
    pub mcmc: McmcConfig,
    pub options: ModelOptions,
    /// Sample size override; the example default when `None`.
    pub n: Option<usize>,
    pub test_size: usize,
    pub test_seed: u64,
    pub jobs: usize,
    pub keep_chains: bool,
}

/// One table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub model: String,
    pub family: ModelFamily,
    pub prior: Option<LsbpVariant>,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleTable {
    pub example: u8,
    pub n: usize,
    pub seed: u64,
    pub rows: Vec<Row>,
    /// Prior-variance sensitivity rows for the logit stick-breaking models.
    pub sensitivity: Vec<Row>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
struct Cell {
    example: Example,
    family: ModelFamily,
    prior: Option<LsbpVariant>,
}

impl Cell {
    fn label(&self) -> String {
        match self.prior {
            Some(v) if v != LsbpVariant::P1 => format!("{} ({v})", self.family),
            _ => self.family.to_string(),
        }
    }

    fn dir_name(&self) -> String {
        match self.prior {
            Some(v) if v != LsbpVariant::P1 => format!("{}-{}", self.family, v.to_string().to_lowercase()),
            _ => self.family.to_string(),
        }
    }

    /// Stable per-cell stream index.
    fn key(&self) -> u64 {
        let f = ModelFamily::ALL.iter().position(|m| *m == self.family).unwrap_or(0) as u64;
        let v = match self.prior {
            None | Some(LsbpVariant::P1) => 0,
            Some(LsbpVariant::P2) => 1,
            Some(LsbpVariant::P3) => 2,
        };
        u64::from(self.example.id()) * 1000 + f * 10 + v
    }
}

fn is_lsbp(f: ModelFamily) -> bool {
    matches!(f, ModelFamily::Lsbp | ModelFamily::LsbpNs)
}

fn cells_for(example: Example, models: &[ModelFamily]) -> Vec<Cell> {
    let mut cells: Vec<Cell> = TABLE_ORDER
        .iter()
        .filter(|f| models.contains(f))
        .map(|&family| Cell {
            example,
            family,
            prior: is_lsbp(family).then_some(LsbpVariant::P1),
        })
        .collect();
    if example == Example::Three {
        for &family in TABLE_ORDER.iter().filter(|f| is_lsbp(**f) && models.contains(f)) {
            for v in [LsbpVariant::P2, LsbpVariant::P3] {
                cells.push(Cell {
                    example,
                    family,
                    prior: Some(v),
                });
            }
        }
    }
    cells
}

struct CellOutcome {
    row: Row,
}

fn run_cell(study: &Study, cell: &Cell, data: &Dataset, out: &Path) -> CliResult<MetricsReport> {
    let mut opts = study.options.clone();
    if let Some(v) = cell.prior {
        opts.lsbp_prior = v;
    }
    let spec = ModelSpec::build(cell.family, data, &opts)?;
    let mut cfg = study.mcmc.clone();
    cfg.seed = study.seed;
    cfg.stream = RngStream::new(study.seed, 0).derive(cell.key()).stream;
    let chain = inference::fit(data, &spec, &cfg)?;
    let dir = out.join(cell.dir_name());
    create_dir(&dir)?;
    if study.keep_chains {
        save_chain(&dir, &spec, &chain)?;
    } else {
        write_json(&dir.join(SPEC_FILE), &spec)?;
        write_json(&dir.join(META_FILE), &chain.meta)?;
    }
    if let Some(est) = partition_estimate(&chain.draws)? {
        write_with(&dir.join(PARTITION_FILE), |w| write_partition_csv(w, data, &est))?;
    }
    let grid = y_grid(data, DEFAULT_GRID_SIZE);
    let points = cell.example.test_set(study.test_size, study.test_seed);
    let popts = PredictOptions {
        seed: cfg.stream,
        ..PredictOptions::default()
    };
    let summary = predictive_summary(&spec, &chain.draws, &points, &grid, &popts)?;
    crate::commands::write_prediction(
        &dir,
        &summary,
        cell.family,
        Some(cell.example.id()),
        GridSpec::from_values(&grid),
    )?;
    let metrics = simstudy::evaluate(&summary, cell.example)?;
    write_json(&dir.join(METRICS_FILE), &metrics)?;
    Ok(metrics)
}

/// Run the study; returns the tables and whether every cell succeeded.
pub fn replicate(study: &Study, out: &Path) -> CliResult<(Vec<ExampleTable>, bool)> {
    if study.examples.is_empty() || study.models.is_empty() {
        return Err(CliError::usage("nothing to run: no examples or no models"));
    }
    study.mcmc.validate()?;
    create_dir(out)?;
    let mut datasets = Vec::new();
    for &ex in &study.examples {
        let n = study.n.unwrap_or(ex.default_n());
        let data = ex.generate(n, study.seed)?;
        let dir = example_dir(out, ex);
        let path = dir.join("data.csv");
        write_with(&path, |w| data.write_csv(w))?;
        write_json(
            &sidecar_path(&path),
            &GeneratedInfo {
                example: ex.id(),
                n,
                seed: study.seed,
            },
        )?;
        datasets.push(data);
    }
    let cells: Vec<(usize, Cell)> = study
        .examples
        .iter()
        .enumerate()
        .flat_map(|(k, &ex)| cells_for(ex, &study.models).into_iter().map(move |c| (k, c)))
        .collect();

    let results: Mutex<Vec<Option<CellOutcome>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some((k, cell)) = cells.get(i) else { break };
        let dir = example_dir(out, cell.example);
        eprintln!("example {} {}: fitting", cell.example, cell.label());
        let res = run_cell(study, cell, &datasets[*k], &dir);
        let row = match res {
            Ok(m) => Row {
                model: cell.label(),
                family: cell.family,
                prior: cell.prior,
                metrics: Some(m),
                error: None,
            },
            Err(e) => {
                eprintln!("example {} {}: {e}", cell.example, cell.label());
                Row {
                    model: cell.label(),
                    family: cell.family,
                    prior: cell.prior,
                    metrics: None,
                    error: Some(e.to_string()),
                }
            }
        };
        results.lock().expect("no worker panicked")[i] = Some(CellOutcome { row });
    };
    let jobs = study.jobs.clamp(1, cells.len().max(1));
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let outcomes = results.into_inner().expect("no worker panicked");

    let mut tables = Vec::new();
    let mut all_ok = true;
    for (k, &ex) in study.examples.iter().enumerate() {
        let mut table = ExampleTable {
            example: ex.id(),
            n: datasets[k].len(),
            seed: study.seed,
            rows: Vec::new(),
            sensitivity: Vec::new(),
            notes: vec![EXCLUDED_NOTE.to_string()],
        };
        for ((kk, cell), outcome) in cells.iter().zip(&outcomes) {
            if *kk != k {
                continue;
            }
            let row = outcome.as_ref().expect("every cell ran").row.clone();
            all_ok &= row.error.is_none();
            if ex == Example::Three && is_lsbp(cell.family) {
                table.sensitivity.push(row.clone());
            }
            if !matches!(cell.prior, Some(LsbpVariant::P2 | LsbpVariant::P3)) {
                table.rows.push(row);
            }
        }
        table.sensitivity.sort_by_key(|r| (r.family, r.prior.map(|v| v as u8)));
        write_table(&example_dir(out, ex), &table)?;
        tables.push(table);
    }
    Ok((tables, all_ok))
}

pub fn example_dir(out: &Path, ex: Example) -> PathBuf {
    out.join(format!("example{}", ex.id()))
}

fn rows_csv(rows: &[Row]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::runtime(e.to_string());
    w.write_record([
        "model",
        "regression_err",
        "density_err",
        "coverage",
        "ci_length",
        "status",
    ])
    .map_err(err)?;
    for r in rows {
        let rec: Vec<String> = match (&r.metrics, &r.error) {
            (Some(m), _) => vec![
                r.model.clone(),
                fmt_num(m.regression_err),
                fmt_num(m.density_err),
                fmt_num(m.coverage),
                fmt_num(m.ci_length),
                "ok".into(),
            ],
            (None, e) => vec![
                r.model.clone(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format!("error: {}", e.as_deref().unwrap_or("unknown")),
            ],
        };
        w.write_record(&rec).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::runtime(e.to_string()))
}

/// Plain-text rendering in the layout of a results table.
pub fn render_table(t: &ExampleTable) -> String {
    let mut s = format!("Example {} (n = {}, seed {})\n", t.example, t.n, t.seed);
    s.push_str(&format!(
        "{:<16} {:>10} {:>10} {:>10} {:>10}\n",
        "model", "reg. err", "dens. err", "coverage", "CI length"
    ));
    let line = |s: &mut String, r: &Row| match &r.metrics {
        Some(m) => s.push_str(&format!(
            "{:<16} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n",
            r.model, m.regression_err, m.density_err, m.coverage, m.ci_length
        )),
        None => s.push_str(&format!(
            "{:<16} failed: {}\n",
            r.model,
            r.error.as_deref().unwrap_or("?")
        )),
    };
    for r in &t.rows {
        line(&mut s, r);
    }
    if !t.sensitivity.is_empty() {
        s.push_str("\nstick-coefficient prior sensitivity\n");
        for r in &t.sensitivity {
            line(&mut s, r);
        }
    }
    for n in &t.notes {
        s.push_str(&format!("note: {n}\n"));
    }
    s
}

fn write_table(dir: &Path, t: &ExampleTable) -> CliResult<()> {
    write_atomic(&dir.join("metrics.csv"), &rows_csv(&t.rows)?)?;
    if !t.sensitivity.is_empty() {
        write_atomic(&dir.join("prior_sensitivity.csv"), &rows_csv(&t.sensitivity)?)?;
    }
    write_json(&dir.join(METRICS_FILE), t)?;
    write_atomic(&dir.join("metrics.txt"), render_table(t).as_bytes())
}
