//! Simulated benchmark problems, their ground truth and the evaluation metrics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::predictive::PredictiveSummary;
use crate::rng::{Rng, RngStream};
use crate::stats::special::normal_pdf;

/// Seed of the held-out covariate sets, fixed so every model sees the same points.
pub const DEFAULT_TEST_SEED: u64 = 20_240_917;
pub const DEFAULT_TEST_SIZE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Example {
    One,
    Two,
    Three,
}

impl Example {
    pub const ALL: [Example; 3] = [Example::One, Example::Two, Example::Three];

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Example::One),
            2 => Ok(Example::Two),
            3 => Ok(Example::Three),
            _ => Err(Error::param(format!("unknown example {id}; expected 1, 2 or 3"))),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Example::One => 1,
            Example::Two => 2,
            Example::Three => 3,
        }
    }

    pub fn default_n(self) -> usize {
        match self {
            Example::One => 200,
            Example::Two => 400,
            Example::Three => 600,
        }
    }

    pub fn covariates(self) -> usize {
        match self {
            Example::Two => 1,
            _ => 2,
        }
    }

    /// One covariate vector from the example's covariate law.
    pub fn sample_x(self, rng: &mut Rng) -> Vec<f64> {
        match self {
            Example::One => {
                let x1 = rng.random_range(-1.0..8.0);
                let z: f64 = StandardNormal.sample(rng);
                vec![x1, (x1 - 3.5).powi(2) / 3.0 - 1.0 + 0.05 * z]
            }
            Example::Two => vec![rng.random_range(-2.0..10.0)],
            Example::Three => vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
        }
    }

    pub fn true_mean(self, x: &[f64]) -> f64 {
        match self {
            Example::One => 5.0 - (x[0] + 2.0).ln(),
            Example::Two => {
                let x = x[0];
                if x <= 2.0 {
                    0.0
                } else if x <= 5.0 {
                    2.0 * x - 4.0
                } else {
                    6.0
                }
            }
            Example::Three => {
                if (x[0] * x[1] * std::f64::consts::FRAC_PI_2).sin() <= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Noise standard deviation at `x`; breakpoints take the left segment's value.
    pub fn true_sd(self, x: &[f64]) -> f64 {
        match self {
            Example::One => 0.05,
            Example::Two => {
                let x = x[0];
                if x <= 2.0 {
                    0.2
                } else if x <= 5.0 {
                    0.05
                } else {
                    ((x - 5.0).powi(2) / 15.0 + 0.01).sqrt()
                }
            }
            Example::Three => 0.1,
        }
    }

    pub fn true_density(self, x: &[f64], grid: &[f64]) -> Vec<f64> {
        let (m, s) = (self.true_mean(x), self.true_sd(x));
        grid.iter().map(|y| normal_pdf(*y, m, s * s)).collect()
    }

    pub fn generate(self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::param("sample size must be at least 1"));
        }
        let mut rng = RngStream::new(seed, u64::from(self.id())).rng();
        let p = self.covariates();
        let mut x = DMatrix::zeros(n, p);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let xi = self.sample_x(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            y[i] = self.true_mean(&xi) + self.true_sd(&xi) * z;
            for (d, v) in xi.into_iter().enumerate() {
                x[(i, d)] = v;
            }
        }
        Dataset::new(y, x)
    }

    /// Held-out covariate points drawn from the covariate law.
    pub fn test_set(self, size: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(seed, 100 + u64::from(self.id())).rng();
        (0..size).map(|_| self.sample_x(&mut rng)).collect()
    }

    pub fn default_test_set(self) -> Vec<Vec<f64>> {
        self.test_set(DEFAULT_TEST_SIZE, DEFAULT_TEST_SEED)
    }
}

impl TryFrom<u8> for Example {
    type Error = Error;
    fn try_from(id: u8) -> Result<Self> {
        Example::from_id(id)
    }
}

impl From<Example> for u8 {
    fn from(e: Example) -> u8 {
        e.id()
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

impl FromStr for Example {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let id: u8 = s
            .trim()
            .parse()
            .map_err(|_| Error::param(format!("unknown example `{s}`; expected 1, 2 or 3")))?;
        Example::from_id(id)
    }
}

pub fn generate_example(id: u8, n: usize, seed: u64) -> Result<Dataset> {
    Example::from_id(id)?.generate(n, seed)
}

pub fn rmse_regression(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    check_dim("true means", predicted.len(), truth.len())?;
    if predicted.is_empty() {
        return Err(Error::param("no test points"));
    }
    let sse: f64 = predicted.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

/// Trapezoid rule on a (possibly uneven) grid.
pub fn trapezoid(values: &[f64], grid: &[f64]) -> Result<f64> {
    check_dim("grid", grid.len(), values.len())?;
    Ok(grid
        .windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
        .sum())
}

/// Average over test points of the integrated absolute density difference.
pub fn l1_density_error(estimated: &[Vec<f64>], truth: &[Vec<f64>], grid: &[f64]) -> Result<f64> {
    check_dim("true densities", estimated.len(), truth.len())?;
    if estimated.is_empty() {
        return Err(Error::param("no test points"));
    }
    let mut total = 0.0;
    let mut diff = vec![0.0; grid.len()];
    for (e, t) in estimated.iter().zip(truth) {
        check_dim("estimated density grid", grid.len(), e.len())?;
        check_dim("true density grid", grid.len(), t.len())?;
        for ((d, a), b) in diff.iter_mut().zip(e).zip(t) {
            *d = (a - b).abs();
        }
        total += trapezoid(&diff, grid)?;
    }
    Ok(total / estimated.len() as f64)
}

/// Fraction of truths inside their interval, and the mean interval length.
pub fn coverage_and_length(bounds: &[(f64, f64)], truth: &[f64]) -> Result<(f64, f64)> {
    check_dim("true means", bounds.len(), truth.len())?;
    if bounds.is_empty() {
        return Err(Error::param("no test points"));
    }
    let mut covered = 0usize;
    let mut length = 0.0;
    for (&(lo, hi), &m) in bounds.iter().zip(truth) {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::param(format!("interval bounds out of order: ({lo}, {hi})")));
        }
        if lo <= m && m <= hi {
            covered += 1;
        }
        length += hi - lo;
    }
    let k = bounds.len() as f64;
    Ok((covered as f64 / k, length / k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub regression_err: f64,
    pub density_err: f64,
    pub coverage: f64,
    pub ci_length: f64,
}

/// Score a predictive summary against an example's ground truth.
pub fn evaluate(summary: &PredictiveSummary, example: Example) -> Result<MetricsReport> {
    let xs = summary.test_points();
    for x in &xs {
        check_dim("test covariates", example.covariates(), x.len())?;
    }
    let truth: Vec<f64> = xs.iter().map(|x| example.true_mean(x)).collect();
    let true_dens: Vec<Vec<f64>> = xs.iter().map(|x| example.true_density(x, &summary.grid)).collect();
    let (coverage, ci_length) = coverage_and_length(&summary.intervals(), &truth)?;
    Ok(MetricsReport {
        regression_err: rmse_regression(&summary.means(), &truth)?,
        density_err: l1_density_error(&summary.density_means(), &true_dens, &summary.grid)?,
        coverage,
        ci_length,
    })
}
