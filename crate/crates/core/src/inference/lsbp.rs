//! Logit stick-breaking mixture of regressions, Gibbs sampled with
//! Polya-Gamma augmentation of each stick's logistic regression.

use nalgebra::{DMatrix, DVector};

use super::{Component, Draw, Sampler, WeightDraw};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{ModelSpec, Priors};
use crate::rng::Rng;
use crate::stats::conjugate::{KernelUpdater, RegressionStats};
use crate::stats::polya_gamma::sample_pg1;
use crate::stats::sample::{sample_categorical_log, sample_mvn_canonical};
use crate::stats::special::ln_normal_pdf;
use crate::weights::log_stick_break_logits;

pub struct LsbpSampler {
    design: DMatrix<f64>,
    weight_design: DMatrix<f64>,
    y: DVector<f64>,
    kernel: KernelUpdater,
    coef_prec: DVector<f64>,
    coef_prec_mean: DVector<f64>,
    allocations: Vec<usize>,
    /// (J-1) x Q_w, row j = b_j.
    coefs: DMatrix<f64>,
    betas: DMatrix<f64>,
    sigma2: Vec<f64>,
    scratch: Vec<f64>,
}

impl LsbpSampler {
    pub fn new(data: &Dataset, spec: &ModelSpec) -> Result<Self> {
        let Priors::Lsbp(prior) = &spec.priors else {
            return Err(Error::param("LSBP sampler needs an LSBP prior"));
        };
        let wb = spec
            .weight_basis
            .as_ref()
            .ok_or_else(|| Error::param("LSBP sampler needs a weight basis"))?;
        let design = spec.atom()?.design(&data.x)?;
        let weight_design = wb.compile()?.design(&data.x)?;
        let j = spec.truncation;
        let kernel = prior.kernel.updater()?;
        let (beta0, s20) = prior.kernel.center();
        let mut betas = DMatrix::zeros(design.ncols(), j);
        for k in 0..j {
            betas.set_column(k, &beta0);
        }
        let coef_prec = prior.coef_var.map(|v| 1.0 / v);
        let coef_prec_mean = coef_prec.component_mul(&prior.coef_mean);
        let mut coefs = DMatrix::zeros(j - 1, weight_design.ncols());
        for r in 0..j - 1 {
            coefs.set_row(r, &prior.coef_mean.transpose());
        }
        Ok(LsbpSampler {
            allocations: vec![0; design.nrows()],
            y: data.y.clone(),
            design,
            weight_design,
            kernel,
            coef_prec,
            coef_prec_mean,
            coefs,
            betas,
            sigma2: vec![s20; j],
            scratch: Vec::with_capacity(j),
        })
    }

    pub fn truncation(&self) -> usize {
        self.sigma2.len()
    }

    fn update_allocations(&mut self, rng: &mut Rng) -> Result<()> {
        let means = &self.design * &self.betas;
        let eta = &self.weight_design * self.coefs.transpose();
        let j = self.truncation();
        let mut log_w = Vec::with_capacity(j);
        let mut row = vec![0.0; j - 1];
        for i in 0..self.y.len() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = eta[(i, k)];
            }
            log_stick_break_logits(&row, &mut log_w);
            for (k, lw) in log_w.iter_mut().enumerate() {
                *lw += ln_normal_pdf(self.y[i], means[(i, k)], self.sigma2[k]);
            }
            self.allocations[i] = sample_categorical_log(&log_w, &mut self.scratch, rng)?;
        }
        Ok(())
    }

    fn update_sticks(&mut self, rng: &mut Rng) -> Result<()> {
        let qw = self.weight_design.ncols();
        for level in 0..self.truncation() - 1 {
            let mut prec = DMatrix::from_diagonal(&self.coef_prec);
            let mut lin = self.coef_prec_mean.clone();
            let b = self.coefs.row(level).transpose();
            for (i, &s) in self.allocations.iter().enumerate() {
                if s < level {
                    continue;
                }
                let w = self.weight_design.row(i);
                let eta = w.dot(&b.transpose());
                let omega = sample_pg1(eta, rng);
                let kappa = if s == level { 0.5 } else { -0.5 };
                for a in 0..qw {
                    lin[a] += kappa * w[a];
                    let wa = omega * w[a];
                    for c in a..qw {
                        prec[(a, c)] += wa * w[c];
                    }
                }
            }
            for a in 0..qw {
                for c in 0..a {
                    prec[(a, c)] = prec[(c, a)];
                }
            }
            let draw = sample_mvn_canonical(&prec, &lin, rng)?;
            self.coefs.set_row(level, &draw.transpose());
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
}

impl Sampler for LsbpSampler {
    fn sweep(&mut self, rng: &mut Rng) -> Result<()> {
        self.update_allocations(rng)?;
        self.update_sticks(rng)?;
        self.update_kernels(rng)
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
            weights: WeightDraw::Logit {
                coefficients: self.coefs.row_iter().map(|r| r.iter().copied().collect()).collect(),
            },
        }
    }
}
