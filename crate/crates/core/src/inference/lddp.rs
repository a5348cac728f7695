//! Truncated blocked Gibbs sampler for single-weights models with a
//! hierarchical normal-gamma base measure.

use nalgebra::{DMatrix, DVector};

use super::{sample_dp_sticks, Component, Draw, Sampler, WeightDraw};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{LddpPrior, ModelSpec, Priors};
use crate::rng::Rng;
use crate::stats::conjugate::{normal_gamma_update, RegressionStats};
use crate::stats::linalg::{spd_inverse, symmetrize};
use crate::stats::sample::{sample_categorical_log, sample_mvn_canonical, sample_wishart};
use crate::stats::special::ln_normal_pdf;

pub struct LddpSampler {
    design: DMatrix<f64>,
    y: DVector<f64>,
    alpha: f64,
    prior: LddpPrior,
    s0_inv: DMatrix<f64>,
    s0_inv_m0: DVector<f64>,
    nu_psi: DMatrix<f64>,
    allocations: Vec<usize>,
    omega: Vec<f64>,
    betas: DMatrix<f64>,
    sigma2: Vec<f64>,
    m: DVector<f64>,
    s_inv: DMatrix<f64>,
    scratch: Vec<f64>,
    logw: Vec<f64>,
}

impl LddpSampler {
    pub fn new(data: &Dataset, spec: &ModelSpec) -> Result<Self> {
        let Priors::Lddp(prior) = &spec.priors else {
            return Err(Error::param("LDDP sampler needs an LDDP prior"));
        };
        let design = spec.atom()?.design(&data.x)?;
        let j = spec.truncation;
        let q = design.ncols();
        let s0_inv = spd_inverse(&prior.s0)?;
        let s0_inv_m0 = &s0_inv * &prior.m0;
        let v = vec![1.0 / (1.0 + spec.alpha); j - 1];
        let mut betas = DMatrix::zeros(q, j);
        for k in 0..j {
            betas.set_column(k, &prior.m0);
        }
        Ok(LddpSampler {
            y: data.y.clone(),
            alpha: spec.alpha,
            s0_inv,
            s0_inv_m0,
            nu_psi: &prior.psi * prior.nu,
            allocations: vec![0; design.nrows()],
            omega: crate::weights::stick_break(&v)?,
            betas,
            sigma2: vec![prior.b / prior.a; j],
            m: prior.m0.clone(),
            s_inv: spd_inverse(&prior.psi)?,
            prior: prior.clone(),
            design,
            scratch: Vec::with_capacity(j),
            logw: Vec::with_capacity(j),
        })
    }

    pub fn truncation(&self) -> usize {
        self.omega.len()
    }

    /// Replace the response vector (used by joint-distribution tests).
    pub fn set_response(&mut self, y: DVector<f64>) -> Result<()> {
        crate::error::check_dim("response length", self.y.len(), y.len())?;
        self.y = y;
        Ok(())
    }

    /// Draw y_i ~ N(lambda(x_i)' beta_{s_i}, sigma^2_{s_i}) from the current state.
    pub fn simulate_response(&self, rng: &mut Rng) -> DVector<f64> {
        use rand_distr::{Distribution, StandardNormal};
        DVector::from_fn(self.y.len(), |i, _| {
            let k = self.allocations[i];
            let mean = self.design.row(i).dot(&self.betas.column(k).transpose());
            let z: f64 = StandardNormal.sample(rng);
            mean + self.sigma2[k].sqrt() * z
        })
    }

    /// Ancestral draw of all parameters and allocations from the prior.
    pub fn sample_prior_state(&mut self, rng: &mut Rng) -> Result<()> {
        let q = self.m.len();
        let j = self.truncation();
        let m = sample_mvn_canonical(&self.s0_inv, &self.s0_inv_m0, rng)?;
        let s_inv = sample_wishart(self.prior.nu, &spd_inverse(&self.nu_psi)?, rng)?;
        let counts = vec![0; j];
        self.omega = sample_dp_sticks(&counts, self.alpha, rng)?;
        let lin = &s_inv * &m;
        let empty = RegressionStats::empty(q);
        for k in 0..j {
            let (b, s2) = normal_gamma_update(&s_inv, &lin, self.prior.a, self.prior.b, &empty, 1.0, rng)?;
            self.betas.set_column(k, &b);
            self.sigma2[k] = s2;
        }
        for i in 0..self.allocations.len() {
            self.allocations[i] = crate::stats::sample::sample_categorical(&self.omega, rng)?;
        }
        self.m = m;
        self.s_inv = s_inv;
        Ok(())
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    fn update_allocations(&mut self, rng: &mut Rng) -> Result<()> {
        let means = &self.design * &self.betas;
        let j = self.truncation();
        let log_omega: Vec<f64> = self.omega.iter().map(|w| w.ln()).collect();
        for i in 0..self.y.len() {
            self.logw.clear();
            for k in 0..j {
                self.logw
                    .push(log_omega[k] + ln_normal_pdf(self.y[i], means[(i, k)], self.sigma2[k]));
            }
            self.allocations[i] = sample_categorical_log(&self.logw, &mut self.scratch, rng)?;
        }
        Ok(())
    }

    fn component_stats(&self) -> Vec<RegressionStats> {
        let q = self.design.ncols();
        let mut stats = vec![RegressionStats::empty(q); self.truncation()];
        let mut row = vec![0.0; q];
        for (i, &k) in self.allocations.iter().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.design[(i, c)];
            }
            stats[k].add(&row, self.y[i]);
        }
        stats
    }

    fn update_hyper(&mut self, rng: &mut Rng) -> Result<()> {
        let j = self.truncation();
        let beta_sum: DVector<f64> = self.betas.column_sum();
        let mut prec = &self.s0_inv + &self.s_inv * (j as f64);
        symmetrize(&mut prec);
        let lin = &self.s0_inv_m0 + &self.s_inv * beta_sum;
        self.m = sample_mvn_canonical(&prec, &lin, rng)?;
        let mut scatter = self.nu_psi.clone();
        for k in 0..j {
            let d = self.betas.column(k) - &self.m;
            scatter += &d * d.transpose();
        }
        symmetrize(&mut scatter);
        self.s_inv = sample_wishart(self.prior.nu + j as f64, &spd_inverse(&scatter)?, rng)?;
        Ok(())
    }
}

impl Sampler for LddpSampler {
    fn sweep(&mut self, rng: &mut Rng) -> Result<()> {
        self.update_allocations(rng)?;
        let stats = self.component_stats();
        let counts: Vec<usize> = stats.iter().map(|s| s.n).collect();
        self.omega = sample_dp_sticks(&counts, self.alpha, rng)?;
        let lin = &self.s_inv * &self.m;
        for (k, st) in stats.iter().enumerate() {
            let (b, s2) = normal_gamma_update(&self.s_inv, &lin, self.prior.a, self.prior.b, st, self.sigma2[k], rng)?;
            self.betas.set_column(k, &b);
            self.sigma2[k] = s2;
        }
        self.update_hyper(rng)
    }

    fn draw(&self, iteration: usize) -> Draw {
        Draw {
            iteration,
            allocations: self.allocations.clone(),
            components: (0..self.truncation())
                .map(|k| Component {
                    beta: self.betas.column(k).iter().copied().collect(),
                    sigma2: self.sigma2[k],
                })
                .collect(),
            weights: WeightDraw::Sticks {
                omega: self.omega.clone(),
            },
        }
    }
}
