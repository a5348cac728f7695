//! The generate, fit, predict and evaluate commands.

use std::path::{Path, PathBuf};

use depmix_core::data::{fmt_num, Dataset};
use depmix_core::inference::{self, Chain, Draw};
use depmix_core::models::{ModelFamily, ModelSpec};
use depmix_core::partition::{binder_point_estimate, posterior_similarity, PartitionEstimate};
use depmix_core::predictive::{
    predictive_summary, y_grid, JointMode, PredictOptions, PredictiveSummary, DEFAULT_GRID_SIZE,
};
use depmix_core::simstudy::{self, Example, MetricsReport};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TestSpec};
use crate::error::{CliError, CliResult};
use crate::files::*;

/// Sidecar describing a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedInfo {
    pub example: u8,
    pub n: usize,
    pub seed: u64,
}

pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("json")
}

pub fn generate(example: Example, n: Option<usize>, seed: u64, out: &Path) -> CliResult<Dataset> {
    let n = n.unwrap_or(example.default_n());
    let data = example.generate(n, seed)?;
    write_with(out, |w| data.write_csv(w))?;
    write_json(
        &sidecar_path(out),
        &GeneratedInfo {
            example: example.id(),
            n,
            seed,
        },
    )?;
    Ok(data)
}

pub fn load_data(path: &Path) -> CliResult<Dataset> {
    Dataset::load(path).map_err(|e| CliError::from(e).context(path.display()))
}

/// Fit `cfg.model` to `data` and write the chain directory `out`.
pub fn fit(cfg: &RunConfig, data: &Dataset, out: &Path) -> CliResult<(ModelSpec, Chain)> {
    cfg.validate()?;
    let family = cfg.model.ok_or_else(|| CliError::usage("no model given"))?;
    let spec = ModelSpec::build(family, data, &cfg.options)?;
    let chain = inference::fit(data, &spec, &cfg.mcmc)?;
    create_dir(out)?;
    write_json(&out.join(CONFIG_FILE), cfg)?;
    write_json(
        &out.join(GRID_FILE),
        &GridSpec::from_values(&y_grid(data, DEFAULT_GRID_SIZE)),
    )?;
    if let Some(est) = partition_estimate(&chain.draws)? {
        write_with(&out.join(PARTITION_FILE), |w| write_partition_csv(w, data, &est))?;
    }
    save_chain(out, &spec, &chain)?;
    for w in &chain.meta.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    Ok((spec, chain))
}

pub fn partition_estimate(draws: &[Draw]) -> CliResult<Option<PartitionEstimate>> {
    if draws.is_empty() {
        return Ok(None);
    }
    let allocs: Vec<Vec<usize>> = draws.iter().map(|d| d.allocations.clone()).collect();
    let sim = posterior_similarity(&allocs)?;
    Ok(Some(binder_point_estimate(&allocs, &sim)?))
}

/// Dataset rows with the point-estimate cluster label appended.
pub fn write_partition_csv<W: std::io::Write>(
    w: W,
    data: &Dataset,
    est: &PartitionEstimate,
) -> depmix_core::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["y".to_string()];
    header.extend(data.names.iter().cloned());
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec = vec![fmt_num(data.y[i])];
        rec.extend(data.row(i).into_iter().map(fmt_num));
        rec.push(est.labels[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub enum GridChoice {
    Auto,
    Explicit(GridSpec),
}

impl GridChoice {
    pub fn parse(s: &str) -> CliResult<Self> {
        if s == "auto" {
            Ok(GridChoice::Auto)
        } else {
            Ok(GridChoice::Explicit(GridSpec::parse(s)?))
        }
    }
}

pub struct PredictRequest<'a> {
    pub chain_dir: &'a Path,
    pub test: TestSpec,
    pub grid: GridChoice,
    pub out: &'a Path,
    pub options: PredictOptions,
}

pub fn resolve_test(test: &TestSpec) -> CliResult<(Vec<Vec<f64>>, Option<u8>)> {
    match test {
        TestSpec::Example { example, size, seed } => Ok((example.test_set(*size, *seed), Some(example.id()))),
        TestSpec::File { path } => Ok((read_test_points(path)?, None)),
    }
}

pub fn predict(req: &PredictRequest<'_>) -> CliResult<PredictiveSummary> {
    let stored = load_chain(req.chain_dir)?;
    if !stored.meta.complete {
        return Err(CliError::runtime(format!(
            "{}: chain is incomplete ({} of {} iterations)",
            req.chain_dir.display(),
            stored.meta.iterations_completed,
            stored.meta.config.iterations
        )));
    }
    let grid = match req.grid {
        GridChoice::Auto => read_json::<GridSpec>(&req.chain_dir.join(GRID_FILE))?,
        GridChoice::Explicit(g) => g,
    };
    let (points, example) = resolve_test(&req.test)?;
    let summary = predictive_summary(&stored.spec, &stored.draws, &points, &grid.values(), &req.options)?;
    write_prediction(req.out, &summary, stored.spec.family, example, grid)?;
    Ok(summary)
}

pub fn write_prediction(
    out: &Path,
    summary: &PredictiveSummary,
    family: ModelFamily,
    example: Option<u8>,
    grid: GridSpec,
) -> CliResult<()> {
    create_dir(out)?;
    write_json(&out.join(SUMMARY_FILE), summary)?;
    write_with(&out.join(REGRESSION_FILE), |w| summary.write_regression_csv(w))?;
    write_with(&out.join(DENSITY_FILE), |w| summary.write_density_csv(w))?;
    write_json(
        &out.join(PREDICT_FILE),
        &PredictInfo {
            family,
            example,
            test_size: summary.points.len(),
            grid,
        },
    )
}

/// Score a prediction directory against an example's truth.
pub fn evaluate(pred_dir: &Path, example: Example) -> CliResult<MetricsReport> {
    let summary: PredictiveSummary = read_json(&pred_dir.join(SUMMARY_FILE))?;
    let info_path = pred_dir.join(PREDICT_FILE);
    if info_path.exists() {
        let info: PredictInfo = read_json(&info_path)?;
        if let Some(id) = info.example.filter(|id| *id != example.id()) {
            return Err(CliError::usage(format!(
                "predictions were made on example {id} test points, not example {example}"
            )));
        }
    }
    if summary.points.iter().any(|p| p.x.len() != example.covariates()) {
        return Err(CliError::usage(format!(
            "test points do not have the {} covariate(s) of example {example}",
            example.covariates()
        )));
    }
    simstudy::evaluate(&summary, example).map_err(|e| CliError::usage(e.to_string()))
}

pub fn parse_joint_mode(s: &str) -> CliResult<JointMode> {
    match s {
        "sampled" => Ok(JointMode::Sampled),
        "collapsed" => Ok(JointMode::Collapsed),
        _ => Err(CliError::usage(format!(
            "unknown joint mode `{s}`; expected sampled or collapsed"
        ))),
    }
}
