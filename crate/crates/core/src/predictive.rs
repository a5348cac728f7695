//! Posterior predictive regression functions and conditional densities.
//!
//! For every stored draw and covariate value the model reduces to a finite
//! mixture of univariate kernels in y (a [`LocalMixture`]): normal kernels for
//! the truncated models, Student-t kernels for the collapsed joint model.
//! Means and densities are per-draw functionals of that mixture; summaries
//! average across draws and take pointwise equal-tailed quantiles.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::data::{fmt_num, Dataset};
use crate::error::{check_dim, Error, Result};
use crate::inference::joint::{draw_predictives, sample_measure, ClusterPredictive, SampledMeasure};
use crate::inference::{Draw, WeightDraw};
use crate::models::{ModelFamily, ModelSpec, Priors};
use crate::rng::RngStream;
use crate::stats::special::{ln_gamma, ln_student_t_pdf, log_sum_exp, LN_2PI};
use crate::stats::summary::{mean, quantile_sorted, variance};
use crate::weights::{log_stick_break_logits, logits, normalize_log_weights};

/// Components whose weight falls below this are skipped in density sums.
const NEGLIGIBLE_WEIGHT: f64 = 1e-14;

/// A finite mixture of location-scale kernels in y; `df` is infinite for normals.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMixture {
    pub weights: Vec<f64>,
    pub loc: Vec<f64>,
    pub scale: Vec<f64>,
    pub df: Vec<f64>,
}

impl LocalMixture {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.loc).map(|(w, m)| w * m).sum()
    }

    pub fn ln_kernel(&self, k: usize, y: f64) -> f64 {
        if self.df[k].is_infinite() {
            let z = (y - self.loc[k]) / self.scale[k];
            -0.5 * (LN_2PI + z * z) - self.scale[k].ln()
        } else {
            ln_student_t_pdf(y, self.loc[k], self.scale[k], self.df[k])
        }
    }

    pub fn ln_density(&self, y: f64) -> f64 {
        let terms: Vec<f64> = (0..self.len())
            .map(|k| self.weights[k].ln() + self.ln_kernel(k, y))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn density(&self, y: f64) -> f64 {
        let mut out = [0.0];
        self.densities(&[y], &mut out);
        out[0]
    }

    /// Density at every grid point, written into `out`.
    pub fn densities(&self, grid: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.len() {
            let w = self.weights[k];
            if w < NEGLIGIBLE_WEIGHT {
                continue;
            }
            let (m, s, df) = (self.loc[k], self.scale[k], self.df[k]);
            if df.is_infinite() {
                let c = w / (s * (2.0 * std::f64::consts::PI).sqrt());
                for (o, &y) in out.iter_mut().zip(grid) {
                    let z = (y - m) / s;
                    *o += c * (-0.5 * z * z).exp();
                }
            } else {
                let c = w.ln() + ln_gamma(0.5 * (df + 1.0))
                    - ln_gamma(0.5 * df)
                    - 0.5 * (df * std::f64::consts::PI).ln()
                    - s.ln();
                let e = -0.5 * (df + 1.0);
                for (o, &y) in out.iter_mut().zip(grid) {
                    let z = (y - m) / s;
                    *o += (c + e * (z * z / df).ln_1p()).exp();
                }
            }
        }
    }
}

/// How a stored joint-model partition is turned into a conditional mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointMode {
    /// Urn weights and cluster predictives given the partition: the exact
    /// conditional expectation, so bands only reflect partition uncertainty.
    Collapsed,
    /// One draw of the weights and cluster parameters per partition, so bands
    /// also carry parameter uncertainty.
    #[default]
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictOptions {
    pub levels: (f64, f64),
    pub joint: JointMode,
    /// Seeds the parameter draws of [`JointMode::Sampled`].
    pub seed: u64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            levels: DEFAULT_LEVELS,
            joint: JointMode::default(),
            seed: 0,
        }
    }
}

/// Compiled evaluation context for one model specification.
pub struct Predictor<'a> {
    spec: &'a ModelSpec,
    atom: Basis,
    weight: Option<Basis>,
    joint: JointMode,
    stream: RngStream,
}

enum Prepared {
    Plain,
    Logit(DMatrix<f64>),
    Joint(Vec<ClusterPredictive>, ClusterPredictive),
    JointSampled(SampledMeasure),
}

/// A draw with its per-draw caches built.
pub struct PreparedDraw<'a> {
    predictor: &'a Predictor<'a>,
    draw: &'a Draw,
    prepared: Prepared,
}

impl<'a> Predictor<'a> {
    pub fn new(spec: &'a ModelSpec) -> Result<Self> {
        Self::with_options(spec, &PredictOptions::default())
    }

    pub fn with_options(spec: &'a ModelSpec, opts: &PredictOptions) -> Result<Self> {
        Ok(Predictor {
            atom: spec.atom()?,
            weight: spec.weight_basis.as_ref().map(|b| b.compile()).transpose()?,
            spec,
            joint: opts.joint,
            stream: RngStream::new(opts.seed, 0x6a6f696e74),
        })
    }

    pub fn prepare(&'a self, draw: &'a Draw) -> Result<PreparedDraw<'a>> {
        let prepared = match (&draw.weights, &self.spec.priors) {
            (WeightDraw::Partition { clusters }, Priors::JointDp(prior)) => match self.joint {
                JointMode::Collapsed => {
                    let (preds, base) = draw_predictives(prior, clusters)?;
                    Prepared::Joint(preds, base)
                }
                JointMode::Sampled => {
                    let mut rng = self.stream.derive(draw.iteration as u64).rng();
                    Prepared::JointSampled(sample_measure(prior, clusters, self.spec.alpha, &mut rng)?)
                }
            },
            (WeightDraw::Partition { .. }, _) | (_, Priors::JointDp(_)) => {
                return Err(Error::param("draw does not match the model family"));
            }
            (WeightDraw::Logit { coefficients }, _) => {
                let wb = self
                    .weight
                    .as_ref()
                    .ok_or_else(|| Error::param("logit weights need a weight basis"))?;
                let rows = coefficients.len();
                let mut m = DMatrix::zeros(rows, wb.dim());
                for (r, row) in coefficients.iter().enumerate() {
                    check_dim("stick coefficients", wb.dim(), row.len())?;
                    for (c, v) in row.iter().enumerate() {
                        m[(r, c)] = *v;
                    }
                }
                Prepared::Logit(m)
            }
            _ => Prepared::Plain,
        };
        Ok(PreparedDraw {
            predictor: self,
            draw,
            prepared,
        })
    }
}

impl PreparedDraw<'_> {
    /// The conditional mixture of y at covariate value `x` (original scale).
    pub fn local_mixture(&self, x: &[f64]) -> Result<LocalMixture> {
        let spec = self.predictor.spec;
        check_dim("test covariates", spec.covariates(), x.len())?;
        let xs = match &spec.scaling {
            Some(s) => s.x(x),
            None => x.to_vec(),
        };
        let lambda = self.predictor.atom.eval(&xs)?;
        let mut mix = match (&self.prepared, &self.draw.weights) {
            (Prepared::Joint(preds, base), WeightDraw::Partition { clusters }) => {
                let mut logw: Vec<f64> = preds
                    .iter()
                    .zip(clusters)
                    .map(|(p, c)| (c.n as f64).ln() + p.ln_x(&xs))
                    .collect();
                logw.push(spec.alpha.ln() + base.ln_x(&xs));
                let mut weights = Vec::new();
                normalize_log_weights(&logw, &mut weights)?;
                let mut loc = Vec::with_capacity(weights.len());
                let mut scale = Vec::with_capacity(weights.len());
                let mut df = Vec::with_capacity(weights.len());
                for p in preds.iter().chain(std::iter::once(base)) {
                    let (l, s, d) = p.y_params(&lambda);
                    loc.push(l);
                    scale.push(s);
                    df.push(d);
                }
                LocalMixture {
                    weights,
                    loc,
                    scale,
                    df,
                }
            }
            (Prepared::JointSampled(m), WeightDraw::Partition { .. }) => {
                let k = m.len();
                let logw: Vec<f64> = (0..=k).map(|c| m.ln_weights[c] + m.ln_x(c, &xs)).collect();
                let mut weights = Vec::new();
                normalize_log_weights(&logw, &mut weights)?;
                let mut loc: Vec<f64> = m
                    .components
                    .iter()
                    .map(|(b, _)| b.iter().zip(&lambda).map(|(b, l)| b * l).sum())
                    .collect();
                let mut scale: Vec<f64> = m.components.iter().map(|(_, s2)| s2.sqrt()).collect();
                let mut df = vec![f64::INFINITY; k];
                let (l, s, d) = m.base.y_params(&lambda);
                loc.push(l);
                scale.push(s);
                df.push(d);
                LocalMixture {
                    weights,
                    loc,
                    scale,
                    df,
                }
            }
            (prepared, weights) => {
                let comps = &self.draw.components;
                let weights = match (prepared, weights) {
                    (_, WeightDraw::Sticks { omega }) => omega.clone(),
                    (Prepared::Logit(coefs), WeightDraw::Logit { .. }) => {
                        let wx = self.predictor.weight.as_ref().expect("checked in prepare").eval(&xs)?;
                        let mut lw = Vec::with_capacity(comps.len());
                        log_stick_break_logits(&logits(coefs, &wx), &mut lw);
                        let mut w = Vec::new();
                        normalize_log_weights(&lw, &mut w)?;
                        w
                    }
                    (_, WeightDraw::Normalized { omega, location, scale }) => {
                        let lw: Vec<f64> = (0..omega.len())
                            .map(|k| {
                                omega[k].ln()
                                    + xs.iter()
                                        .enumerate()
                                        .map(|(d, v)| {
                                            crate::stats::special::ln_normal_pdf(*v, location[k][d], scale[k][d])
                                        })
                                        .sum::<f64>()
                            })
                            .collect();
                        let mut w = Vec::new();
                        normalize_log_weights(&lw, &mut w)?;
                        w
                    }
                    _ => return Err(Error::param("draw does not match the model family")),
                };
                check_dim("component count", weights.len(), comps.len())?;
                LocalMixture {
                    loc: comps
                        .iter()
                        .map(|c| c.beta.iter().zip(&lambda).map(|(b, l)| b * l).sum())
                        .collect(),
                    scale: comps.iter().map(|c| c.sigma2.sqrt()).collect(),
                    df: vec![f64::INFINITY; comps.len()],
                    weights,
                }
            }
        };
        if let Some(s) = &spec.scaling {
            for l in mix.loc.iter_mut() {
                *l = s.y_back(*l);
            }
            for sc in mix.scale.iter_mut() {
                *sc *= s.y_sd;
            }
        }
        Ok(mix)
    }
}

/// Per-draw predictive mean and density curve at one covariate value.
#[derive(Debug, Clone, PartialEq)]
pub struct PointDraws {
    pub x: Vec<f64>,
    pub means: Vec<f64>,
    /// densities[draw][grid index]
    pub densities: Vec<Vec<f64>>,
}

/// Per-draw predictions at each of `x_new` over `grid`.
pub fn predict_draws(spec: &ModelSpec, draws: &[Draw], x_new: &[Vec<f64>], grid: &[f64]) -> Result<Vec<PointDraws>> {
    predict_draws_with(spec, draws, x_new, grid, &PredictOptions::default())
}

pub fn predict_draws_with(
    spec: &ModelSpec,
    draws: &[Draw],
    x_new: &[Vec<f64>],
    grid: &[f64],
    opts: &PredictOptions,
) -> Result<Vec<PointDraws>> {
    let predictor = Predictor::with_options(spec, opts)?;
    let prepared = draws.iter().map(|d| predictor.prepare(d)).collect::<Result<Vec<_>>>()?;
    x_new.iter().map(|x| point_draws(&prepared, x, grid)).collect()
}

fn point_draws(prepared: &[PreparedDraw<'_>], x: &[f64], grid: &[f64]) -> Result<PointDraws> {
    let mut means = Vec::with_capacity(prepared.len());
    let mut densities = Vec::with_capacity(prepared.len());
    for p in prepared {
        let mix = p.local_mixture(x)?;
        means.push(mix.mean());
        let mut dens = vec![0.0; grid.len()];
        mix.densities(grid, &mut dens);
        densities.push(dens);
    }
    Ok(PointDraws {
        x: x.to_vec(),
        means,
        densities,
    })
}

fn expect_family(spec: &ModelSpec, allowed: &[ModelFamily]) -> Result<()> {
    if allowed.contains(&spec.family) {
        Ok(())
    } else {
        Err(Error::param(format!("model `{}` is not handled here", spec.family)))
    }
}

/// Single-weights models: mean = sum_j omega_j lambda(x)' beta_j.
pub fn predict_lddp(spec: &ModelSpec, draws: &[Draw], x_new: &[Vec<f64>], grid: &[f64]) -> Result<Vec<PointDraws>> {
    expect_family(spec, &[ModelFamily::Lddp, ModelFamily::LddpBs])?;
    predict_draws(spec, draws, x_new, grid)
}

/// Joint model: covariate-dependent urn weights over clusters plus a new cluster.
pub fn predict_joint_dp(spec: &ModelSpec, draws: &[Draw], x_new: &[Vec<f64>], grid: &[f64]) -> Result<Vec<PointDraws>> {
    expect_family(spec, &[ModelFamily::JointDp])?;
    predict_draws(spec, draws, x_new, grid)
}

/// Dependent-weight models: logit sticks or normalised kernels.
pub fn predict_depweights(
    spec: &ModelSpec,
    draws: &[Draw],
    x_new: &[Vec<f64>],
    grid: &[f64],
) -> Result<Vec<PointDraws>> {
    expect_family(spec, &[ModelFamily::Lsbp, ModelFamily::LsbpNs, ModelFamily::Nw])?;
    predict_draws(spec, draws, x_new, grid)
}

/// Pointwise mean and equal-tailed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

pub const DEFAULT_LEVELS: (f64, f64) = (0.025, 0.975);

/// Mean and type-7 quantiles at `levels` of a set of draws.
pub fn summarize(values: &[f64], levels: (f64, f64)) -> Result<Interval> {
    if values.len() < 2 {
        return Err(Error::param("need at least two draws to summarise"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(Interval {
        mean: mean(values),
        lower: quantile_sorted(&sorted, levels.0),
        upper: quantile_sorted(&sorted, levels.1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub x: Vec<f64>,
    pub regression: Interval,
    pub density: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub levels: (f64, f64),
    pub grid: Vec<f64>,
    pub points: Vec<PointSummary>,
}

impl PredictiveSummary {
    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.regression.mean).collect()
    }

    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| (p.regression.lower, p.regression.upper))
            .collect()
    }

    pub fn density_means(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .map(|p| p.density.iter().map(|d| d.mean).collect())
            .collect()
    }

    pub fn test_points(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.x.clone()).collect()
    }

    /// One row per test point: point, x1..xp, mean, lower, upper.
    pub fn write_regression_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let p = self.points.first().map_or(0, |pt| pt.x.len());
        let mut header = vec!["point".to_string()];
        header.extend((1..=p).map(|d| format!("x{d}")));
        header.extend(["mean", "lower", "upper"].map(String::from));
        w.write_record(&header)?;
        for (k, pt) in self.points.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(pt.x.iter().map(|v| fmt_num(*v)));
            rec.extend([pt.regression.mean, pt.regression.lower, pt.regression.upper].map(fmt_num));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per (test point, grid value): point, x1..xp, y, mean, lower, upper.
    pub fn write_density_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let p = self.points.first().map_or(0, |pt| pt.x.len());
        let mut header = vec!["point".to_string()];
        header.extend((1..=p).map(|d| format!("x{d}")));
        header.extend(["y", "density", "lower", "upper"].map(String::from));
        w.write_record(&header)?;
        for (k, pt) in self.points.iter().enumerate() {
            for (y, d) in self.grid.iter().zip(&pt.density) {
                let mut rec = vec![k.to_string()];
                rec.extend(pt.x.iter().map(|v| fmt_num(*v)));
                rec.extend([*y, d.mean, d.lower, d.upper].map(fmt_num));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn summarize_point(pd: &PointDraws, levels: (f64, f64)) -> Result<PointSummary> {
    let regression = summarize(&pd.means, levels)?;
    let g = pd.densities.first().map_or(0, Vec::len);
    let mut column = vec![0.0; pd.densities.len()];
    let density = (0..g)
        .map(|k| {
            for (c, d) in column.iter_mut().zip(&pd.densities) {
                *c = d[k];
            }
            summarize(&column, levels)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointSummary {
        x: pd.x.clone(),
        regression,
        density,
    })
}

/// Predict at `x_new` and reduce to pointwise summaries.
pub fn predictive_summary(
    spec: &ModelSpec,
    draws: &[Draw],
    x_new: &[Vec<f64>],
    grid: &[f64],
    opts: &PredictOptions,
) -> Result<PredictiveSummary> {
    let levels = opts.levels;
    let predictor = Predictor::with_options(spec, opts)?;
    let prepared = draws.iter().map(|d| predictor.prepare(d)).collect::<Result<Vec<_>>>()?;
    let points = x_new
        .iter()
        .map(|x| summarize_point(&point_draws(&prepared, x, grid)?, levels))
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictiveSummary {
        levels,
        grid: grid.to_vec(),
        points,
    })
}

/// `size` equispaced values over [min y - 3 sd(y), max y + 3 sd(y)].
pub fn y_grid(data: &Dataset, size: usize) -> Vec<f64> {
    let y = data.y_slice();
    let sd = variance(y).sqrt();
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * sd;
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * sd;
    linspace(lo, hi, size)
}

pub fn linspace(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (size - 1) as f64;
    (0..size).map(|k| lo + step * k as f64).collect()
}

pub const DEFAULT_GRID_SIZE: usize = 201;
