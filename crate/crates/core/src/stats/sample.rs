//! Random variate generation.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Beta, ChiSquared, Distribution, Gamma, StandardNormal};

use super::linalg::cholesky;
use super::special::log_sum_exp;
use crate::error::{Error, Result};
use crate::rng::Rng;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::param(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Gamma(shape, rate); mean shape / rate.
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut Rng) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma rate", rate)?;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::param(e.to_string()))?;
    Ok(g.sample(rng))
}

/// log of a Gamma(shape, 1) draw; stays finite for tiny shapes where the draw
/// itself underflows.
pub fn sample_ln_gamma(shape: f64, rng: &mut Rng) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).map_err(|e| Error::param(e.to_string()))?;
        return Ok(g.sample(rng).ln());
    }
    // G(a) = G(a + 1) * U^{1/a}
    let g = Gamma::new(shape + 1.0, 1.0).map_err(|e| Error::param(e.to_string()))?;
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    Ok(g.sample(rng).ln() + u.ln() / shape)
}

pub fn sample_beta(a: f64, b: f64, rng: &mut Rng) -> Result<f64> {
    check_positive("beta a", a)?;
    check_positive("beta b", b)?;
    if a < 1.0 || b < 1.0 {
        // via log-gammas so tiny shape parameters do not collapse to 0/0
        let la = sample_ln_gamma(a, rng)?;
        let lb = sample_ln_gamma(b, rng)?;
        let m = la.max(lb);
        let (ea, eb) = ((la - m).exp(), (lb - m).exp());
        return Ok(ea / (ea + eb));
    }
    let d = Beta::new(a, b).map_err(|e| Error::param(e.to_string()))?;
    Ok(d.sample(rng))
}

pub fn sample_dirichlet(alpha: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::param("dirichlet needs at least one concentration"));
    }
    for &a in alpha {
        check_positive("dirichlet concentration", a)?;
    }
    let logs = alpha
        .iter()
        .map(|&a| sample_ln_gamma(a, rng))
        .collect::<Result<Vec<_>>>()?;
    let norm = log_sum_exp(&logs);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - norm).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

pub fn standard_normal_vec(n: usize, rng: &mut Rng) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub fn sample_mvn(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut Rng) -> Result<DVector<f64>> {
    crate::error::check_dim("sample_mvn", mean.len(), cov.nrows())?;
    let c = cholesky(cov)?;
    let z = standard_normal_vec(mean.len(), rng);
    Ok(mean + c.l() * z)
}

/// Draw from N(P^{-1} h, P^{-1}) given the precision `P` and linear term `h`.
pub fn sample_mvn_canonical(precision: &DMatrix<f64>, linear: &DVector<f64>, rng: &mut Rng) -> Result<DVector<f64>> {
    crate::error::check_dim("sample_mvn_canonical", precision.nrows(), linear.len())?;
    let c = cholesky(precision)?;
    let mean = c.solve(linear);
    let z = standard_normal_vec(linear.len(), rng);
    let dev = c
        .l_dirty()
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| Error::Decomposition("singular factor".into()))?;
    Ok(mean + dev)
}

/// Wishart(df, scale) via the Bartlett decomposition; mean `df * scale`.
pub fn sample_wishart(df: f64, scale: &DMatrix<f64>, rng: &mut Rng) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if !(df > p as f64 - 1.0) {
        return Err(Error::param(format!(
            "wishart df {df} must exceed dim - 1 = {}",
            p as f64 - 1.0
        )));
    }
    let l = cholesky(scale)?.l();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| Error::param(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let la = l * a;
    let mut w = &la * la.transpose();
    super::linalg::symmetrize(&mut w);
    Ok(w)
}

pub fn sample_categorical(weights: &[f64], rng: &mut Rng) -> Result<usize> {
    if weights.is_empty() {
        return Err(Error::param("categorical needs at least one weight"));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::param("categorical weights must be nonnegative and finite"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::param(format!("categorical weights sum to {total}, not 1")));
    }
    Ok(pick(weights, total, rng))
}

fn pick(weights: &[f64], total: f64, rng: &mut Rng) -> usize {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Categorical draw from unnormalised log weights. `scratch` avoids a heap
/// allocation in hot loops.
pub fn sample_categorical_log(log_weights: &[f64], scratch: &mut Vec<f64>, rng: &mut Rng) -> Result<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::numeric(format!(
            "categorical log weights have no finite maximum ({max})"
        )));
    }
    scratch.clear();
    scratch.extend(log_weights.iter().map(|l| (l - max).exp()));
    let total: f64 = scratch.iter().sum();
    Ok(pick(scratch, total, rng))
}
