//! Command-line driver for depmix: simulate data, fit models, predict, score,
//! and replicate the full simulation study.
//!
//! Exit codes: 0 on success, 2 for usage, config or input errors, 3 for
//! numeric or runtime failures.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod replicate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use depmix_core::models::ModelFamily;
use depmix_core::predictive::PredictOptions;
use depmix_core::simstudy::{Example, DEFAULT_TEST_SEED, DEFAULT_TEST_SIZE};

pub use config::{RunConfig, TestSpec};
pub use error::{CliError, CliResult, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "depmix",
    version,
    about = "Bayesian density regression with covariate-dependent mixtures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one of the benchmark examples to CSV.
    Generate(GenerateArgs),
    /// Fit a model by MCMC and store the chain.
    Fit(FitArgs),
    /// Posterior predictive means, densities and bands at test points.
    Predict(PredictArgs),
    /// Score predictions against an example's ground truth.
    Evaluate(EvaluateArgs),
    /// Run generate, fit, predict and evaluate for every (example, model) pair.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub example: Example,
    /// Sample size (200, 400 or 600 by default for examples 1, 2, 3).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// One of joint-dp, lddp, lddp-bs, lsbp, lsbp-ns, nw.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "DEPMIX_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub chain: PathBuf,
    /// CSV of test covariates with header x1..xp.
    #[arg(long, conflicts_with = "example_test")]
    pub test: Option<PathBuf>,
    /// Use the held-out covariate set of example K.
    #[arg(long, value_name = "K")]
    pub example_test: Option<Example>,
    #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
    pub test_size: usize,
    #[arg(long, default_value_t = DEFAULT_TEST_SEED)]
    pub test_seed: u64,
    /// `auto` (training-data range) or `lo:hi:size`.
    #[arg(long, default_value = "auto")]
    pub ygrid: String,
    /// Joint-model bands: `sampled` (parameter draws) or `collapsed`.
    #[arg(long, default_value = "sampled")]
    pub joint_mode: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory written by `predict`.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub example: Example,
    /// Metrics JSON path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// 1, 2, 3 or all.
    #[arg(long, default_value = "all")]
    pub example: String,
    /// Comma-separated model names, or all.
    #[arg(long, default_value = "all")]
    pub models: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, env = "DEPMIX_OUT")]
    pub out: PathBuf,
    /// JSON run configuration supplying mcmc and model options.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Override every example's sample size.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
    pub test_size: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Also store the full chains of every cell.
    #[arg(long)]
    pub keep_chains: bool,
}

pub fn parse_models(s: &str) -> CliResult<Vec<ModelFamily>> {
    if s.trim() == "all" {
        return Ok(ModelFamily::ALL.to_vec());
    }
    let mut out = Vec::new();
    for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let m: ModelFamily = name.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("no models given"));
    }
    Ok(out)
}

pub fn parse_examples(s: &str) -> CliResult<Vec<Example>> {
    if s.trim() == "all" {
        return Ok(Example::ALL.to_vec());
    }
    s.split(',')
        .map(|e| e.parse::<Example>().map_err(CliError::from))
        .collect()
}

fn apply_mcmc_overrides(
    cfg: &mut RunConfig,
    seed: Option<u64>,
    iterations: Option<usize>,
    burn_in: Option<usize>,
    thin: Option<usize>,
) {
    if let Some(s) = seed {
        cfg.mcmc.seed = s;
    }
    if let Some(v) = iterations {
        cfg.mcmc.iterations = v;
    }
    if let Some(v) = burn_in {
        cfg.mcmc.burn_in = v;
    }
    if let Some(v) = thin {
        cfg.mcmc.thin = v;
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => {
            let data = commands::generate(a.example, a.n, a.seed, &a.out)?;
            eprintln!("wrote {} rows to {}", data.len(), a.out.display());
            Ok(())
        }
        Command::Fit(a) => {
            let mut cfg = match &a.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(m) = &a.model {
                cfg.model = Some(m.parse()?);
            }
            if let Some(d) = &a.data {
                cfg.data = Some(d.clone());
            }
            if let Some(o) = &a.out {
                cfg.out = Some(o.clone());
            }
            apply_mcmc_overrides(&mut cfg, a.seed, a.iterations, a.burn_in, a.thin);
            cfg.validate()?;
            let data_path = cfg.data.clone().ok_or_else(|| CliError::usage("no --data given"))?;
            let out = cfg.out.clone().ok_or_else(|| CliError::usage("no --out given"))?;
            let data = commands::load_data(&data_path)?;
            let (_, chain) = commands::fit(&cfg, &data, &out)?;
            eprintln!(
                "stored {} draws in {} ({:.1}s)",
                chain.draws.len(),
                out.display(),
                chain.meta.wall_time_secs
            );
            Ok(())
        }
        Command::Predict(a) => {
            let test = match (&a.test, a.example_test) {
                (Some(path), _) => TestSpec::File { path: path.clone() },
                (None, Some(example)) => TestSpec::Example {
                    example,
                    size: a.test_size,
                    seed: a.test_seed,
                },
                (None, None) => return Err(CliError::usage("give --test PATH or --example-test K")),
            };
            let req = commands::PredictRequest {
                chain_dir: &a.chain,
                test,
                grid: commands::GridChoice::parse(&a.ygrid)?,
                out: &a.out,
                options: PredictOptions {
                    joint: commands::parse_joint_mode(&a.joint_mode)?,
                    seed: a.seed,
                    ..PredictOptions::default()
                },
            };
            let s = commands::predict(&req)?;
            eprintln!("predicted at {} points into {}", s.points.len(), a.out.display());
            Ok(())
        }
        Command::Evaluate(a) => {
            let m = commands::evaluate(&a.pred, a.example)?;
            match &a.out {
                Some(p) => files::write_json(p, &m)?,
                None => println!("{}", serde_json::to_string_pretty(&m).expect("metrics serialise")),
            }
            Ok(())
        }
        Command::Replicate(a) => {
            let mut cfg = match &a.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            apply_mcmc_overrides(&mut cfg, None, a.iterations, a.burn_in, a.thin);
            cfg.validate()?;
            if a.test_size == 0 {
                return Err(CliError::usage("--test-size must be at least 1"));
            }
            let study = replicate::Study {
                examples: parse_examples(&a.example)?,
                models: parse_models(&a.models)?,
                seed: a.seed,
                mcmc: cfg.mcmc,
                options: cfg.options,
                n: a.n,
                test_size: a.test_size,
                test_seed: DEFAULT_TEST_SEED,
                jobs: a.jobs,
                keep_chains: a.keep_chains,
            };
            let (tables, ok) = replicate::replicate(&study, &a.out)?;
            for t in &tables {
                println!("{}", replicate::render_table(t));
            }
            if ok {
                Ok(())
            } else {
                Err(CliError::runtime("some cells failed; see the status column"))
            }
        }
    }
}

/// Parse `args`, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
