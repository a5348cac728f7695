//! MCMC samplers and chain storage.
//!
//! Each family has a sampler implementing [`Sampler`]; [`run_chain`] drives one
//! through burn-in and thinning. Chains persist as JSON-lines draws plus a JSON
//! metadata document.

pub(crate) mod joint;
mod lddp;
mod lsbp;
mod nw;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use joint::{AllocationOption, JointDpSampler};
pub use lddp::LddpSampler;
pub use lsbp::LsbpSampler;
pub use nw::{NwSampler, NwState};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{ModelFamily, ModelSpec, Priors};
use crate::rng::{Rng, RngStream};
use crate::stats::conjugate::{MvnStats, RegressionStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub stream: u64,
    /// Initial random-walk scales, keyed by block name.
    pub proposal_scales: BTreeMap<String, f64>,
    /// Add Gibbs-style independence proposals to the NW sampler's random walk.
    pub conditional_moves: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 10_000,
            burn_in: 5_000,
            thin: 5,
            seed: 1,
            stream: 0,
            proposal_scales: BTreeMap::new(),
            conditional_moves: false,
        }
    }
}

impl McmcConfig {
    pub fn short(iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        McmcConfig {
            iterations,
            burn_in,
            thin,
            seed,
            ..McmcConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::param("burn_in must be smaller than iterations"));
        }
        if self.thin < 1 {
            return Err(Error::param("thin must be at least 1"));
        }
        if self.proposal_scales.values().any(|s| !(*s > 0.0)) {
            return Err(Error::param("proposal scales must be positive"));
        }
        Ok(())
    }

    pub fn stored_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn rng_stream(&self) -> RngStream {
        RngStream::new(self.seed, self.stream)
    }
}

/// Regression kernel parameters of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

/// Sufficient statistics of one joint-model cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub n: usize,
    pub x_sum: Vec<f64>,
    /// Row-major p x p sum of x x'.
    pub x_sum_sq: Vec<f64>,
    /// Row-major Q x Q design cross-product.
    pub xtx: Vec<f64>,
    pub xty: Vec<f64>,
    pub yty: f64,
}

impl ClusterStats {
    pub fn from_stats(x: &MvnStats, r: &RegressionStats) -> Self {
        let p = x.sum.len();
        let q = r.xty.len();
        ClusterStats {
            n: x.n,
            x_sum: x.sum.iter().copied().collect(),
            x_sum_sq: (0..p * p).map(|k| x.sum_sq[(k / p, k % p)]).collect(),
            xtx: (0..q * q).map(|k| r.xtx[(k / q, k % q)]).collect(),
            xty: r.xty.iter().copied().collect(),
            yty: r.yty,
        }
    }

    pub fn mvn(&self) -> MvnStats {
        let p = self.x_sum.len();
        MvnStats {
            n: self.n,
            sum: nalgebra::DVector::from_column_slice(&self.x_sum),
            sum_sq: nalgebra::DMatrix::from_row_slice(p, p, &self.x_sum_sq),
        }
    }

    pub fn regression(&self) -> RegressionStats {
        let q = self.xty.len();
        RegressionStats {
            n: self.n,
            xtx: nalgebra::DMatrix::from_row_slice(q, q, &self.xtx),
            xty: nalgebra::DVector::from_column_slice(&self.xty),
            yty: self.yty,
        }
    }
}

/// Family-specific weight parameters of one draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightDraw {
    /// Covariate-free weights.
    Sticks { omega: Vec<f64> },
    /// Row j holds the logit stick coefficients b_j, j < J.
    Logit { coefficients: Vec<Vec<f64>> },
    /// Baseline weights with Gaussian covariate kernels (variances in `scale`).
    Normalized {
        omega: Vec<f64>,
        location: Vec<Vec<f64>>,
        scale: Vec<Vec<f64>>,
    },
    /// Joint model: the partition's cluster statistics.
    Partition { clusters: Vec<ClusterStats> },
}

/// One stored MCMC iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub allocations: Vec<usize>,
    /// Empty for the joint model, whose parameters are integrated out.
    pub components: Vec<Component>,
    pub weights: WeightDraw,
}

impl Draw {
    pub fn n_components(&self) -> usize {
        match &self.weights {
            WeightDraw::Partition { clusters } => clusters.len(),
            _ => self.components.len(),
        }
    }

    /// Number of distinct allocated components.
    pub fn occupied(&self) -> usize {
        let mut seen = vec![false; self.n_components()];
        for &s in &self.allocations {
            seen[s] = true;
        }
        seen.iter().filter(|b| **b).count()
    }

    /// Check simplex, positivity and indexing invariants.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.allocations.len() != n {
            return Err(Error::numeric("allocation vector has the wrong length"));
        }
        let k = self.n_components();
        if self.allocations.iter().any(|&s| s >= k) {
            return Err(Error::numeric("allocation indexes a missing component"));
        }
        if self
            .components
            .iter()
            .any(|c| !(c.sigma2 > 0.0) || c.beta.iter().any(|b| !b.is_finite()))
        {
            return Err(Error::numeric("component parameters are not finite and positive"));
        }
        let simplex = |w: &[f64]| w.iter().all(|v| *v >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        match &self.weights {
            WeightDraw::Sticks { omega } => {
                if omega.len() != k || !simplex(omega) {
                    return Err(Error::numeric("weights are not a simplex"));
                }
            }
            WeightDraw::Logit { coefficients } => {
                if coefficients.len() + 1 != k || coefficients.iter().flatten().any(|b| !b.is_finite()) {
                    return Err(Error::numeric("stick coefficients are malformed"));
                }
            }
            WeightDraw::Normalized { omega, location, scale } => {
                if omega.len() != k || !simplex(omega) || location.len() != k || scale.len() != k {
                    return Err(Error::numeric("normalized-weight parameters are malformed"));
                }
                if scale.iter().flatten().any(|s| !(*s > 0.0)) {
                    return Err(Error::numeric("kernel scales must be positive"));
                }
            }
            WeightDraw::Partition { clusters } => {
                let mut counts = vec![0usize; k];
                for &s in &self.allocations {
                    counts[s] += 1;
                }
                if clusters.iter().zip(&counts).any(|(c, &m)| c.n != m || m == 0) {
                    return Err(Error::numeric("cluster sizes disagree with allocations"));
                }
            }
        }
        Ok(())
    }
}

/// Per-block acceptance bookkeeping and warnings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub acceptance: BTreeMap<String, f64>,
    pub proposal_scales: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub family: ModelFamily,
    pub truncation: usize,
    pub alpha: f64,
    pub spec_digest: String,
    pub data_digest: String,
    pub config: McmcConfig,
    pub n: usize,
    pub iterations_completed: usize,
    pub complete: bool,
    pub wall_time_secs: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub meta: ChainMeta,
    pub draws: Vec<Draw>,
}

impl Chain {
    pub fn write_draws<W: Write>(&self, mut w: W) -> Result<()> {
        for d in &self.draws {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_draws<R: BufRead>(r: R) -> Result<Vec<Draw>> {
        let mut draws = Vec::new();
        for line in r.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                draws.push(serde_json::from_str(&line)?);
            }
        }
        Ok(draws)
    }
}

/// One MCMC transition kernel with an observable state.
pub trait Sampler {
    fn sweep(&mut self, rng: &mut Rng) -> Result<()>;

    fn draw(&self, iteration: usize) -> Draw;

    /// Called once when burn-in ends; adaptive samplers freeze here.
    fn end_burn_in(&mut self) {}

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics::default()
    }
}

/// Hex SHA-256 of a value's canonical JSON.
pub fn digest<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn data_digest(data: &Dataset) -> Result<String> {
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    Ok(hex::encode(Sha256::digest(buf)))
}

/// Drive `sampler` for `cfg.iterations` sweeps, storing thinned post-burn-in draws.
///
/// When `stop` becomes true the run ends early and the chain is flagged incomplete.
pub fn run_chain<S: Sampler + ?Sized>(
    sampler: &mut S,
    cfg: &McmcConfig,
    meta: ChainMeta,
    stop: Option<&AtomicBool>,
) -> Result<Chain> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = cfg.rng_stream().rng();
    let mut draws = Vec::with_capacity(cfg.stored_draws());
    let mut completed = 0;
    for t in 0..cfg.iterations {
        if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
            break;
        }
        if t == cfg.burn_in {
            sampler.end_burn_in();
        }
        sampler.sweep(&mut rng)?;
        completed = t + 1;
        if t >= cfg.burn_in && (t + 1 - cfg.burn_in).is_multiple_of(cfg.thin) {
            let d = sampler.draw(t);
            if cfg!(debug_assertions) {
                d.validate(meta.n)?;
            }
            draws.push(d);
        }
    }
    let mut meta = meta;
    meta.config = cfg.clone();
    meta.iterations_completed = completed;
    meta.complete = completed == cfg.iterations;
    meta.wall_time_secs = start.elapsed().as_secs_f64();
    meta.diagnostics = sampler.diagnostics();
    Ok(Chain { meta, draws })
}

/// Build the family's sampler for `spec`.
pub fn sampler_for(data: &Dataset, spec: &ModelSpec, cfg: &McmcConfig) -> Result<Box<dyn Sampler>> {
    spec.validate()?;
    let fit_data = match &spec.scaling {
        Some(s) => s.apply(data)?,
        None => data.clone(),
    };
    Ok(match (&spec.priors, spec.family) {
        (Priors::JointDp(_), _) => Box::new(JointDpSampler::new(&fit_data, spec)?),
        (Priors::Lddp(_), _) => Box::new(LddpSampler::new(&fit_data, spec)?),
        (Priors::Lsbp(_), _) => Box::new(LsbpSampler::new(&fit_data, spec)?),
        (Priors::Nw(_), _) => Box::new(NwSampler::new(
            &fit_data,
            spec,
            &cfg.proposal_scales,
            cfg.conditional_moves,
        )?),
    })
}

/// Fit `spec` to `data`.
pub fn fit(data: &Dataset, spec: &ModelSpec, cfg: &McmcConfig) -> Result<Chain> {
    fit_with_stop(data, spec, cfg, None)
}

pub fn fit_with_stop(data: &Dataset, spec: &ModelSpec, cfg: &McmcConfig, stop: Option<&AtomicBool>) -> Result<Chain> {
    if data.len() < 2 {
        return Err(Error::DegenerateData("need at least two observations".into()));
    }
    let mut sampler = sampler_for(data, spec, cfg)?;
    let meta = ChainMeta {
        family: spec.family,
        truncation: spec.truncation,
        alpha: spec.alpha,
        spec_digest: digest(spec)?,
        data_digest: data_digest(data)?,
        config: cfg.clone(),
        n: data.len(),
        iterations_completed: 0,
        complete: false,
        wall_time_secs: 0.0,
        diagnostics: Diagnostics::default(),
    };
    run_chain(sampler.as_mut(), cfg, meta, stop)
}

/// Stick proportions for the truncated DP posterior given component counts:
/// v_j ~ Beta(1 + n_j, alpha + sum_{l>j} n_l), v_J = 1.
pub(crate) fn sample_dp_sticks(counts: &[usize], alpha: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    let j = counts.len();
    let mut tail: usize = counts.iter().sum();
    let mut v = Vec::with_capacity(j.saturating_sub(1));
    for &c in counts.iter().take(j.saturating_sub(1)) {
        tail -= c;
        v.push(crate::stats::sample::sample_beta(
            1.0 + c as f64,
            alpha + tail as f64,
            rng,
        )?);
    }
    crate::weights::stick_break(&v)
}
