//! Mixture-weight constructions.
//!
//! Every function here returns a simplex. Logit sticks and normalised kernels
//! are evaluated in log space, since the examples place components many
//! standard deviations apart.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, BasisSpec};
use crate::error::{check_dim, Error, Result};
use crate::stats::special::{ln_normal_pdf, softplus};

/// Stick proportions v_1..v_{J-1}; the J-th stick is implicitly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickState {
    pub proportions: Vec<f64>,
}

impl StickState {
    pub fn truncation(&self) -> usize {
        self.proportions.len() + 1
    }

    pub fn weights(&self) -> Result<Vec<f64>> {
        stick_break(&self.proportions)
    }
}

/// omega_j = v_j prod_{l<j} (1 - v_l), with the remainder on the last component.
pub fn stick_break(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(v.len() + 1);
    let mut remaining = 1.0;
    for &vj in v {
        if !(0.0..=1.0).contains(&vj) {
            return Err(Error::param(format!("stick proportion {vj} outside [0, 1]")));
        }
        out.push(vj * remaining);
        remaining *= 1.0 - vj;
    }
    out.push(remaining);
    Ok(out)
}

/// Log weights from logits eta_j = logit(v_j), j < J.
///
/// log v = -softplus(-eta) and log(1 - v) = -softplus(eta) keep saturated
/// sticks finite.
pub fn log_stick_break_logits(eta: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let mut log_remaining = 0.0;
    for &e in eta {
        out.push(log_remaining - softplus(-e));
        log_remaining -= softplus(e);
    }
    out.push(log_remaining);
}

/// Normalise log weights in place into a probability vector.
///
/// Fails when every entry is -inf or any entry is NaN.
pub fn normalize_log_weights(log_w: &[f64], out: &mut Vec<f64>) -> Result<()> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || log_w.iter().any(|v| v.is_nan()) {
        return Err(Error::numeric("all kernel weights underflow"));
    }
    out.clear();
    out.extend(log_w.iter().map(|v| (v - max).exp()));
    let total: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= total;
    }
    Ok(())
}

/// Logit stick-breaking coefficients: row j holds b_j for stick j < J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitStickParams {
    pub coefficients: DMatrix<f64>,
    pub basis: BasisSpec,
}

impl LogitStickParams {
    pub fn truncation(&self) -> usize {
        self.coefficients.nrows() + 1
    }
}

pub fn logit_stick_weights(params: &LogitStickParams, x: &[f64]) -> Result<Vec<f64>> {
    let basis = params.basis.compile()?;
    logit_stick_weights_with(&params.coefficients, &basis, x)
}

/// As [`logit_stick_weights`] with a precompiled basis.
pub fn logit_stick_weights_with(coefficients: &DMatrix<f64>, basis: &Basis, x: &[f64]) -> Result<Vec<f64>> {
    check_dim("logit stick coefficients", basis.dim(), coefficients.ncols())?;
    let lambda = basis.eval(x)?;
    let eta = logits(coefficients, &lambda);
    let mut log_w = Vec::with_capacity(eta.len() + 1);
    log_stick_break_logits(&eta, &mut log_w);
    let mut w = Vec::new();
    normalize_log_weights(&log_w, &mut w)?;
    Ok(w)
}

/// eta_j = b_j' lambda for every stick.
pub fn logits(coefficients: &DMatrix<f64>, lambda: &[f64]) -> Vec<f64> {
    (0..coefficients.nrows())
        .map(|j| lambda.iter().enumerate().map(|(q, l)| coefficients[(j, q)] * l).sum())
        .collect()
}

/// Baseline weights and diagonal Gaussian covariate kernels.
///
/// `scale` holds kernel variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelWeightParams {
    pub omega: Vec<f64>,
    pub location: DMatrix<f64>,
    pub scale: DMatrix<f64>,
}

impl KernelWeightParams {
    pub fn validate(&self) -> Result<()> {
        let j = self.omega.len();
        check_dim("kernel locations", j, self.location.nrows())?;
        check_dim("kernel scales", j, self.scale.nrows())?;
        check_dim("kernel scale columns", self.location.ncols(), self.scale.ncols())?;
        if self.omega.iter().any(|w| !(*w >= 0.0)) || (self.omega.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
            return Err(Error::param("baseline weights must be a simplex"));
        }
        if self.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::param("kernel scales must be positive"));
        }
        Ok(())
    }

    /// log prod_d N(x_d; location_jd, scale_jd)
    pub fn ln_kernel(&self, j: usize, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(d, &xd)| ln_normal_pdf(xd, self.location[(j, d)], self.scale[(j, d)]))
            .sum()
    }
}

pub fn normalized_kernel_weights(params: &KernelWeightParams, x: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    check_dim("kernel covariates", params.location.ncols(), x.len())?;
    let log_k: Vec<f64> = (0..params.omega.len()).map(|j| params.ln_kernel(j, x)).collect();
    joint_implied_weights(&params.omega, &log_k)
}

/// omega*_j(x) proportional to omega_j k_j(x), from log kernel values.
pub fn joint_implied_weights(omega: &[f64], log_kernel: &[f64]) -> Result<Vec<f64>> {
    check_dim("implied weights", omega.len(), log_kernel.len())?;
    let log_w: Vec<f64> = omega.iter().zip(log_kernel).map(|(w, k)| w.ln() + k).collect();
    let mut out = Vec::with_capacity(omega.len());
    normalize_log_weights(&log_w, &mut out)?;
    Ok(out)
}
