//! Normalised-weights mixture of regressions.
//!
//! Allocations and regression kernels are Gibbs updates. The baseline weights
//! and the Gaussian covariate kernels enter the likelihood through the
//! normalising sum D(x_i) = sum_j omega_j N(x_i; mu_j, tau_j), so they get
//! random-walk Metropolis updates whose ratio evaluates that product
//! explicitly. Proposal scales adapt during burn-in and are frozen afterwards.
//! With `conditional_moves` set, each sweep also proposes baseline sticks
//! from their Beta full conditional and kernel means and variances from their
//! conjugate conditionals given the allocated covariates. Those proposals
//! cancel everything but the normalising sums, which then form the whole MH
//! ratio.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Component, Diagnostics, Draw, Sampler, WeightDraw};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{ModelSpec, NwPrior, Priors};
use crate::rng::Rng;
use crate::stats::conjugate::{KernelUpdater, RegressionStats};
use crate::stats::sample::{sample_beta, sample_categorical_log, sample_gamma};
use crate::stats::special::{ln_normal_pdf, log_sum_exp, softplus};
use crate::weights::log_stick_break_logits;

const ADAPT_EVERY: usize = 50;
pub const WEIGHTS_BLOCK: &str = "weights";
pub const KERNEL_BLOCK: &str = "kernel";
pub const CONDITIONAL_BLOCK: &str = "conditional";

/// The Metropolis-updated part of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct NwState {
    /// Stick logits, length J - 1.
    pub eta: Vec<f64>,
    /// J x p kernel means.
    pub location: DMatrix<f64>,
    /// J x p log kernel variances.
    pub log_scale: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Counter {
    accepted: usize,
    tried: usize,
}

impl Counter {
    fn rate(&self) -> f64 {
        if self.tried == 0 {
            0.0
        } else {
            self.accepted as f64 / self.tried as f64
        }
    }
}

pub struct NwSampler {
    design: DMatrix<f64>,
    x: DMatrix<f64>,
    y: DVector<f64>,
    prior: NwPrior,
    kernel: KernelUpdater,
    stick_a: Vec<f64>,
    stick_b: Vec<f64>,
    x_sd: Vec<f64>,
    allocations: Vec<usize>,
    state: NwState,
    betas: DMatrix<f64>,
    sigma2: Vec<f64>,
    log_omega: Vec<f64>,
    /// n x J log kernel values.
    log_k: DMatrix<f64>,
    log_d: Vec<f64>,
    weight_scale: f64,
    kernel_scale: Vec<f64>,
    weight_acc: Counter,
    kernel_acc: Vec<Counter>,
    conditional_acc: Counter,
    conditional: bool,
    adapting: bool,
    sweeps: usize,
    scratch: Vec<f64>,
}

impl NwSampler {
    pub fn new(data: &Dataset, spec: &ModelSpec, scales: &BTreeMap<String, f64>, conditional: bool) -> Result<Self> {
        let Priors::Nw(prior) = &spec.priors else {
            return Err(Error::param("NW sampler needs an NW prior"));
        };
        let j = spec.truncation;
        let p = data.covariates();
        let design = spec.atom()?.design(&data.x)?;
        let kernel = prior.kernel.updater()?;
        let (beta0, s20) = prior.kernel.center();
        let mut betas = DMatrix::zeros(design.ncols(), j);
        for k in 0..j {
            betas.set_column(k, &beta0);
        }
        // Dirichlet(gamma, ..., gamma) as independent Beta sticks
        let g = prior.dirichlet;
        let stick_a = vec![g; j - 1];
        let stick_b: Vec<f64> = (0..j - 1).map(|k| (j - 1 - k) as f64 * g).collect();
        // prior means: uniform baseline weights, kernels at the covariate moments
        let eta: Vec<f64> = (0..j - 1).map(|k| -((j - 1 - k) as f64).ln()).collect();
        let location = DMatrix::from_fn(j, p, |_, d| prior.loc_mean[d]);
        let log_scale = DMatrix::from_fn(j, p, |_, d| {
            (prior.scale_rate[d] / (prior.scale_shape[d] - 1.0).max(1.0)).ln()
        });
        let mut s = NwSampler {
            x: data.x.clone(),
            y: data.y.clone(),
            stick_a,
            stick_b,
            x_sd: prior.loc_var.iter().map(|v| v.sqrt()).collect(),
            allocations: vec![0; data.len()],
            state: NwState {
                eta,
                location,
                log_scale,
            },
            betas,
            sigma2: vec![s20; j],
            log_omega: Vec::new(),
            log_k: DMatrix::zeros(data.len(), j),
            log_d: vec![0.0; data.len()],
            weight_scale: scales.get(WEIGHTS_BLOCK).copied().unwrap_or(0.3),
            kernel_scale: vec![scales.get(KERNEL_BLOCK).copied().unwrap_or(0.2); j],
            weight_acc: Counter::default(),
            kernel_acc: vec![Counter::default(); j],
            conditional_acc: Counter::default(),
            conditional,
            adapting: true,
            sweeps: 0,
            scratch: Vec::with_capacity(j),
            prior: prior.clone(),
            kernel,
            design,
        };
        s.refresh_caches();
        Ok(s)
    }

    pub fn truncation(&self) -> usize {
        self.sigma2.len()
    }

    pub fn state(&self) -> &NwState {
        &self.state
    }

    pub fn allocations(&self) -> &[usize] {
        &self.allocations
    }

    fn ln_kernel(&self, location: &DMatrix<f64>, log_scale: &DMatrix<f64>, j: usize, i: usize) -> f64 {
        (0..self.x.ncols())
            .map(|d| ln_normal_pdf(self.x[(i, d)], location[(j, d)], log_scale[(j, d)].exp()))
            .sum()
    }

    fn refresh_caches(&mut self) {
        log_stick_break_logits(&self.state.eta, &mut self.log_omega);
        for j in 0..self.truncation() {
            for i in 0..self.x.nrows() {
                self.log_k[(i, j)] = self.ln_kernel(&self.state.location, &self.state.log_scale, j, i);
            }
        }
        let mut terms = vec![0.0; self.truncation()];
        for i in 0..self.x.nrows() {
            for (j, t) in terms.iter_mut().enumerate() {
                *t = self.log_omega[j] + self.log_k[(i, j)];
            }
            self.log_d[i] = log_sum_exp(&terms);
        }
    }

    fn ln_prior_eta(&self, eta: &[f64]) -> f64 {
        // Beta(a, b) on v = logistic(eta), including the Jacobian v (1 - v)
        eta.iter()
            .zip(self.stick_a.iter().zip(&self.stick_b))
            .map(|(e, (a, b))| -a * softplus(-e) - b * softplus(*e))
            .sum()
    }

    fn ln_prior_kernel(&self, location: &DMatrix<f64>, log_scale: &DMatrix<f64>, j: usize) -> f64 {
        (0..self.x.ncols())
            .map(|d| {
                let l = log_scale[(j, d)];
                ln_normal_pdf(location[(j, d)], self.prior.loc_mean[d], self.prior.loc_var[d])
                    - self.prior.scale_shape[d] * l
                    - self.prior.scale_rate[d] * (-l).exp()
            })
            .sum()
    }

    /// Log density of `state` given the current allocations, up to a constant.
    pub fn log_target(&self, state: &NwState) -> f64 {
        let j = self.truncation();
        let mut log_omega = Vec::with_capacity(j);
        log_stick_break_logits(&state.eta, &mut log_omega);
        let mut total = self.ln_prior_eta(&state.eta);
        for k in 0..j {
            total += self.ln_prior_kernel(&state.location, &state.log_scale, k);
        }
        let mut terms = vec![0.0; j];
        for i in 0..self.x.nrows() {
            for (k, t) in terms.iter_mut().enumerate() {
                *t = log_omega[k] + self.ln_kernel(&state.location, &state.log_scale, k, i);
            }
            total += terms[self.allocations[i]] - log_sum_exp(&terms);
        }
        total
    }

    /// Metropolis log ratio for a symmetric move from `a` to `b`.
    pub fn mh_log_ratio(&self, a: &NwState, b: &NwState) -> f64 {
        self.log_target(b) - self.log_target(a)
    }

    fn update_allocations(&mut self, rng: &mut Rng) -> Result<()> {
        let means = &self.design * &self.betas;
        let j = self.truncation();
        let mut logw = Vec::with_capacity(j);
        for i in 0..self.y.len() {
            logw.clear();
            for k in 0..j {
                logw.push(
                    self.log_omega[k] + self.log_k[(i, k)] + ln_normal_pdf(self.y[i], means[(i, k)], self.sigma2[k]),
                );
            }
            self.allocations[i] = sample_categorical_log(&logw, &mut self.scratch, rng)?;
        }
        Ok(())
    }

    fn update_kernels(&mut self, rng: &mut Rng) -> Result<()> {
        let q = self.design.ncols();
        let mut stats = vec![RegressionStats::empty(q); self.truncation()];
        let mut row = vec![0.0; q];
        for (i, &k) in self.allocations.iter().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.design[(i, c)];
            }
            stats[k].add(&row, self.y[i]);
        }
        for (k, st) in stats.iter().enumerate() {
            let (b, s2) = self.kernel.update(st, self.sigma2[k], rng)?;
            self.betas.set_column(k, &b);
            self.sigma2[k] = s2;
        }
        Ok(())
    }

    fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.truncation()];
        for &s in &self.allocations {
            c[s] += 1;
        }
        c
    }

    fn update_weights(&mut self, rng: &mut Rng) {
        let j = self.truncation();
        if j < 2 {
            return;
        }
        let counts = self.counts();
        let proposal: Vec<f64> = self
            .state
            .eta
            .iter()
            .map(|e| {
                let z: f64 = StandardNormal.sample(rng);
                e + self.weight_scale * z
            })
            .collect();
        let mut log_omega = Vec::with_capacity(j);
        log_stick_break_logits(&proposal, &mut log_omega);
        let mut log_d = vec![0.0; self.x.nrows()];
        let mut terms = vec![0.0; j];
        let mut ratio = self.ln_prior_eta(&proposal) - self.ln_prior_eta(&self.state.eta);
        for k in 0..j {
            ratio += counts[k] as f64 * (log_omega[k] - self.log_omega[k]);
        }
        for (i, ld) in log_d.iter_mut().enumerate() {
            for (k, t) in terms.iter_mut().enumerate() {
                *t = log_omega[k] + self.log_k[(i, k)];
            }
            *ld = log_sum_exp(&terms);
            ratio -= *ld - self.log_d[i];
        }
        self.weight_acc.tried += 1;
        if accept(ratio, rng) {
            self.weight_acc.accepted += 1;
            self.state.eta = proposal;
            self.log_omega = log_omega;
            self.log_d = log_d;
        }
    }

    fn update_component(&mut self, j: usize, rng: &mut Rng) {
        let p = self.x.ncols();
        let n = self.x.nrows();
        let mut location = self.state.location.clone();
        let mut log_scale = self.state.log_scale.clone();
        let s = self.kernel_scale[j];
        for d in 0..p {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            location[(j, d)] += s * self.x_sd[d] * z1;
            log_scale[(j, d)] += s * z2;
        }
        let column: Vec<f64> = (0..n).map(|i| self.ln_kernel(&location, &log_scale, j, i)).collect();
        let mut log_d = vec![0.0; n];
        let mut ratio = self.ln_prior_kernel(&location, &log_scale, j)
            - self.ln_prior_kernel(&self.state.location, &self.state.log_scale, j)
            - self.replace_column(j, &column, &mut log_d);
        for (i, c) in column.iter().enumerate() {
            if self.allocations[i] == j {
                ratio += c - self.log_k[(i, j)];
            }
        }
        self.kernel_acc[j].tried += 1;
        if accept(ratio, rng) {
            self.kernel_acc[j].accepted += 1;
            self.state.location = location;
            self.state.log_scale = log_scale;
            for (i, v) in column.into_iter().enumerate() {
                self.log_k[(i, j)] = v;
            }
            self.log_d = log_d;
        }
    }

    /// Sticks drawn from Beta(a + n_k, b + n_{>k}); only the normalising sums remain in the ratio.
    fn update_weights_conditional(&mut self, rng: &mut Rng) -> Result<()> {
        let j = self.truncation();
        if j < 2 {
            return Ok(());
        }
        let counts = self.counts();
        let mut tail: usize = counts.iter().sum();
        let mut proposal = Vec::with_capacity(j - 1);
        for (k, &c) in counts.iter().enumerate().take(j - 1) {
            tail -= c;
            let v = sample_beta(self.stick_a[k] + c as f64, self.stick_b[k] + tail as f64, rng)?;
            let v = v.clamp(1e-300, 1.0 - 1e-16);
            proposal.push(v.ln() - (-v).ln_1p());
        }
        let mut log_omega = Vec::with_capacity(j);
        log_stick_break_logits(&proposal, &mut log_omega);
        let mut log_d = vec![0.0; self.x.nrows()];
        let mut terms = vec![0.0; j];
        let mut ratio = 0.0;
        for (i, ld) in log_d.iter_mut().enumerate() {
            for (k, t) in terms.iter_mut().enumerate() {
                *t = log_omega[k] + self.log_k[(i, k)];
            }
            *ld = log_sum_exp(&terms);
            ratio -= *ld - self.log_d[i];
        }
        self.conditional_acc.tried += 1;
        if accept(ratio, rng) {
            self.conditional_acc.accepted += 1;
            self.state.eta = proposal;
            self.log_omega = log_omega;
            self.log_d = log_d;
        }
        Ok(())
    }

    /// Mean then variance of kernel `j` in dimension `d`, each proposed from its
    /// conjugate conditional given the covariates allocated to `j`.
    fn update_kernel_conditional(&mut self, j: usize, d: usize, rng: &mut Rng) -> Result<()> {
        let (m0, v0) = (self.prior.loc_mean[d], self.prior.loc_var[d]);
        let (a0, b0) = (self.prior.scale_shape[d], self.prior.scale_rate[d]);
        let members: Vec<f64> = self
            .allocations
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == j)
            .map(|(i, _)| self.x[(i, d)])
            .collect();
        let n = members.len() as f64;
        let sum: f64 = members.iter().sum();

        let tau = self.state.log_scale[(j, d)].exp();
        let v = 1.0 / (1.0 / v0 + n / tau);
        let z: f64 = StandardNormal.sample(rng);
        let mu = v * (m0 / v0 + sum / tau) + v.sqrt() * z;
        self.try_kernel_move(j, d, mu, tau.ln(), rng);

        let mu = self.state.location[(j, d)];
        let ss: f64 = members.iter().map(|x| (x - mu) * (x - mu)).sum();
        let tau = 1.0 / sample_gamma(a0 + 0.5 * n, b0 + 0.5 * ss, rng)?;
        self.try_kernel_move(j, d, mu, tau.ln(), rng);
        Ok(())
    }

    fn try_kernel_move(&mut self, j: usize, d: usize, mu: f64, log_tau: f64, rng: &mut Rng) {
        let (mu0, lt0) = (self.state.location[(j, d)], self.state.log_scale[(j, d)]);
        if !mu.is_finite() || !log_tau.is_finite() {
            return;
        }
        let n = self.x.nrows();
        let column: Vec<f64> = (0..n)
            .map(|i| {
                let x = self.x[(i, d)];
                self.log_k[(i, j)] - ln_normal_pdf(x, mu0, lt0.exp()) + ln_normal_pdf(x, mu, log_tau.exp())
            })
            .collect();
        let mut log_d = vec![0.0; n];
        let ratio = -self.replace_column(j, &column, &mut log_d);
        self.conditional_acc.tried += 1;
        if accept(ratio, rng) {
            self.conditional_acc.accepted += 1;
            self.state.location[(j, d)] = mu;
            self.state.log_scale[(j, d)] = log_tau;
            for (i, v) in column.into_iter().enumerate() {
                self.log_k[(i, j)] = v;
            }
            self.log_d = log_d;
        }
    }

    /// Normalising sums with kernel column `j` replaced, written to `log_d`;
    /// returns the change in sum_i log D(x_i).
    fn replace_column(&self, j: usize, column: &[f64], log_d: &mut [f64]) -> f64 {
        let lw = self.log_omega[j];
        let mut terms = vec![0.0; self.truncation()];
        let mut change = 0.0;
        for (i, ld) in log_d.iter_mut().enumerate() {
            let old = (lw + self.log_k[(i, j)] - self.log_d[i]).exp();
            let rest = 1.0 - old;
            *ld = if rest > 1e-8 {
                self.log_d[i] + (rest + (lw + column[i] - self.log_d[i]).exp()).ln()
            } else {
                // component j dominates the sum: recompute to avoid cancellation
                for (k, t) in terms.iter_mut().enumerate() {
                    *t = self.log_omega[k] + if k == j { column[i] } else { self.log_k[(i, k)] };
                }
                log_sum_exp(&terms)
            };
            change += *ld - self.log_d[i];
        }
        change
    }

    fn adapt(&mut self) {
        let tune = |scale: &mut f64, c: &mut Counter| {
            let r = c.rate();
            if r < 0.2 {
                *scale *= 0.7;
            } else if r > 0.4 {
                *scale *= 1.4;
            }
            *c = Counter::default();
        };
        tune(&mut self.weight_scale, &mut self.weight_acc);
        for j in 0..self.truncation() {
            tune(&mut self.kernel_scale[j], &mut self.kernel_acc[j]);
        }
    }
}

fn accept(log_ratio: f64, rng: &mut Rng) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

impl Sampler for NwSampler {
    fn sweep(&mut self, rng: &mut Rng) -> Result<()> {
        // incremental updates of the sums drift slowly; start each sweep exact
        self.refresh_caches();
        self.update_allocations(rng)?;
        self.update_kernels(rng)?;
        self.update_weights(rng);
        if self.conditional {
            self.update_weights_conditional(rng)?;
        }
        for j in 0..self.truncation() {
            self.update_component(j, rng);
            if self.conditional {
                for d in 0..self.x.ncols() {
                    self.update_kernel_conditional(j, d, rng)?;
                }
            }
        }
        self.sweeps += 1;
        if self.adapting && self.sweeps.is_multiple_of(ADAPT_EVERY) {
            self.adapt();
        }
        if self.log_d.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("normalising sums underflowed"));
        }
        Ok(())
    }

    fn end_burn_in(&mut self) {
        self.adapting = false;
        self.weight_acc = Counter::default();
        self.kernel_acc = vec![Counter::default(); self.truncation()];
        self.conditional_acc = Counter::default();
    }

    fn diagnostics(&self) -> Diagnostics {
        let mut d = Diagnostics::default();
        let kernel = self.kernel_acc.iter().fold(Counter::default(), |a, c| Counter {
            accepted: a.accepted + c.accepted,
            tried: a.tried + c.tried,
        });
        if self.truncation() > 1 {
            d.acceptance.insert(WEIGHTS_BLOCK.into(), self.weight_acc.rate());
        }
        d.acceptance.insert(KERNEL_BLOCK.into(), kernel.rate());
        if self.conditional {
            d.acceptance
                .insert(CONDITIONAL_BLOCK.into(), self.conditional_acc.rate());
        }
        d.proposal_scales.insert(WEIGHTS_BLOCK.into(), self.weight_scale);
        d.proposal_scales.insert(
            KERNEL_BLOCK.into(),
            self.kernel_scale.iter().sum::<f64>() / self.kernel_scale.len() as f64,
        );
        for (block, rate) in &d.acceptance {
            if !(0.05..=0.8).contains(rate) {
                d.warnings
                    .push(format!("{block} acceptance rate {rate:.3} outside [0.05, 0.8]"));
            }
        }
        d
    }

    fn draw(&self, iteration: usize) -> Draw {
        let j = self.truncation();
        let rows = |m: &DMatrix<f64>, f: fn(f64) -> f64| -> Vec<Vec<f64>> {
            (0..j).map(|k| m.row(k).iter().map(|v| f(*v)).collect()).collect()
        };
        Draw {
            iteration,
            allocations: self.allocations.clone(),
            components: (0..j)
                .map(|k| Component {
                    beta: self.betas.column(k).iter().copied().collect(),
                    sigma2: self.sigma2[k],
                })
                .collect(),
            weights: WeightDraw::Normalized {
                omega: self.log_omega.iter().map(|v| v.exp()).collect(),
                location: rows(&self.state.location, |v| v),
                scale: rows(&self.state.log_scale, f64::exp),
            },
        }
    }
}
