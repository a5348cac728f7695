//! Collapsed Gibbs sampler for the joint DP mixture of (x, y).
//!
//! Cluster parameters are integrated out: each cluster keeps sufficient
//! statistics and cached posterior predictives (multivariate t for x, and the
//! Student-t of y given x), so an allocation update costs one predictive
//! evaluation per cluster.

use nalgebra::{DMatrix, DVector};

use super::{ClusterStats, Draw, Sampler, WeightDraw};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{JointDpPrior, ModelSpec, Priors};
use crate::rng::Rng;
use crate::stats::conjugate::{MultivariateT, MvnStats, RegressionStats};
use crate::stats::linalg::{cholesky, inv_quad_form, log_det_chol};
use crate::stats::sample::{sample_categorical_log, sample_dirichlet};
use crate::stats::special::{ln_student_t_pdf, LN_2PI};

/// Posterior predictive of one cluster (or of the base measure).
#[derive(Debug, Clone)]
pub(crate) struct ClusterPredictive {
    x: MultivariateT,
    mean: DVector<f64>,
    /// V_n, the coefficient covariance per unit sigma^2.
    cov: DMatrix<f64>,
    shape: f64,
    rate: f64,
}

impl ClusterPredictive {
    pub(crate) fn new(prior: &JointDpPrior, x: &MvnStats, r: &RegressionStats) -> Result<Self> {
        let niw = prior.covariates.posterior_from_stats(x)?;
        let nig = prior.regression.posterior_from_stats(r)?;
        Ok(ClusterPredictive {
            x: niw.predictive()?,
            cov: nig.covariance()?,
            mean: nig.mean,
            shape: nig.shape,
            rate: nig.rate,
        })
    }

    pub(crate) fn ln_x(&self, x: &[f64]) -> f64 {
        self.x.ln_pdf(x)
    }

    /// (location, scale, df) of y given the design row.
    pub(crate) fn y_params(&self, xt: &[f64]) -> (f64, f64, f64) {
        let q = xt.len();
        let mut loc = 0.0;
        let mut quad = 0.0;
        for a in 0..q {
            loc += xt[a] * self.mean[a];
            for b in 0..q {
                quad += xt[a] * self.cov[(a, b)] * xt[b];
            }
        }
        (loc, (self.rate / self.shape * (1.0 + quad)).sqrt(), 2.0 * self.shape)
    }

    pub(crate) fn ln_y(&self, xt: &[f64], y: f64) -> f64 {
        let (loc, scale, df) = self.y_params(xt);
        ln_student_t_pdf(y, loc, scale, df)
    }
}

#[derive(Debug, Clone)]
struct Cluster {
    x: MvnStats,
    r: RegressionStats,
    pred: ClusterPredictive,
}

/// One possible destination of an observation in its allocation update.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationOption {
    /// Other observations already in the cluster; empty for a new cluster.
    pub members: Vec<usize>,
    pub probability: f64,
}

pub struct JointDpSampler {
    x: Vec<Vec<f64>>,
    design: Vec<Vec<f64>>,
    y: Vec<f64>,
    alpha: f64,
    prior: JointDpPrior,
    base: ClusterPredictive,
    allocations: Vec<usize>,
    clusters: Vec<Cluster>,
    scratch: Vec<f64>,
}

impl JointDpSampler {
    pub fn new(data: &Dataset, spec: &ModelSpec) -> Result<Self> {
        let Priors::JointDp(prior) = &spec.priors else {
            return Err(Error::param("joint sampler needs a joint prior"));
        };
        let design = spec.atom()?.design(&data.x)?;
        let sampler = JointDpSampler::from_parts(
            data.rows(),
            design.row_iter().map(|r| r.iter().copied().collect()).collect(),
            data.y.iter().copied().collect(),
            spec.alpha,
            prior.clone(),
            vec![0; data.len()],
        )?;
        Ok(sampler)
    }

    /// Build with an explicit starting partition (labels need not be contiguous).
    pub fn from_parts(
        x: Vec<Vec<f64>>,
        design: Vec<Vec<f64>>,
        y: Vec<f64>,
        alpha: f64,
        prior: JointDpPrior,
        allocations: Vec<usize>,
    ) -> Result<Self> {
        if x.len() != y.len() || design.len() != y.len() || allocations.len() != y.len() {
            return Err(Error::param("joint sampler inputs have different lengths"));
        }
        let p = prior.covariates.dim();
        let q = prior.regression.dim();
        let base = ClusterPredictive::new(&prior, &MvnStats::empty(p), &RegressionStats::empty(q))?;
        let mut s = JointDpSampler {
            x,
            design,
            y,
            alpha,
            base,
            prior,
            allocations: Vec::new(),
            clusters: Vec::new(),
            scratch: Vec::new(),
        };
        s.set_partition(&allocations)?;
        Ok(s)
    }

    /// Replace the current partition.
    pub fn set_partition(&mut self, labels: &[usize]) -> Result<()> {
        let p = self.prior.covariates.dim();
        let q = self.prior.regression.dim();
        let mut map = std::collections::BTreeMap::new();
        self.clusters.clear();
        self.allocations = Vec::with_capacity(labels.len());
        for (i, &l) in labels.iter().enumerate() {
            let next = map.len();
            let c = *map.entry(l).or_insert(next);
            if c == self.clusters.len() {
                self.clusters.push(Cluster {
                    x: MvnStats::empty(p),
                    r: RegressionStats::empty(q),
                    pred: self.base.clone(),
                });
            }
            self.clusters[c].x.add(&self.x[i]);
            self.clusters[c].r.add(&self.design[i], self.y[i]);
            self.allocations.push(c);
        }
        for c in 0..self.clusters.len() {
            self.refresh(c)?;
        }
        Ok(())
    }

    pub fn allocations(&self) -> &[usize] {
        &self.allocations
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    fn refresh(&mut self, c: usize) -> Result<()> {
        let cl = &self.clusters[c];
        self.clusters[c].pred = ClusterPredictive::new(&self.prior, &cl.x, &cl.r)?;
        Ok(())
    }

    /// Take observation i out of its cluster, deleting the cluster if it empties.
    fn detach(&mut self, i: usize) -> Result<()> {
        let c = self.allocations[i];
        self.clusters[c].x.remove(&self.x[i]);
        self.clusters[c].r.remove(&self.design[i], self.y[i]);
        if self.clusters[c].x.n == 0 {
            let last = self.clusters.len() - 1;
            self.clusters.swap_remove(c);
            if c != last {
                for s in self.allocations.iter_mut() {
                    if *s == last {
                        *s = c;
                    }
                }
            }
        } else {
            self.refresh(c)?;
        }
        self.allocations[i] = usize::MAX;
        Ok(())
    }

    fn attach(&mut self, i: usize, c: usize) -> Result<()> {
        if c == self.clusters.len() {
            let p = self.prior.covariates.dim();
            let q = self.prior.regression.dim();
            self.clusters.push(Cluster {
                x: MvnStats::empty(p),
                r: RegressionStats::empty(q),
                pred: self.base.clone(),
            });
        }
        self.clusters[c].x.add(&self.x[i]);
        self.clusters[c].r.add(&self.design[i], self.y[i]);
        self.allocations[i] = c;
        self.refresh(c)
    }

    /// Log weights for observation i (already detached): existing clusters then new.
    fn log_weights(&self, i: usize, out: &mut Vec<f64>) {
        out.clear();
        let (x, xt, y) = (&self.x[i], &self.design[i], self.y[i]);
        for cl in &self.clusters {
            out.push((cl.x.n as f64).ln() + cl.pred.ln_x(x) + cl.pred.ln_y(xt, y));
        }
        out.push(self.alpha.ln() + self.base.ln_x(x) + self.base.ln_y(xt, y));
    }

    /// Full conditional of observation i's allocation given all other allocations.
    pub fn allocation_options(&self, i: usize) -> Result<Vec<AllocationOption>> {
        let mut tmp = JointDpSampler {
            x: self.x.clone(),
            design: self.design.clone(),
            y: self.y.clone(),
            alpha: self.alpha,
            prior: self.prior.clone(),
            base: self.base.clone(),
            allocations: self.allocations.clone(),
            clusters: self.clusters.clone(),
            scratch: Vec::new(),
        };
        tmp.detach(i)?;
        let mut logw = Vec::new();
        tmp.log_weights(i, &mut logw);
        let mut probs = Vec::new();
        crate::weights::normalize_log_weights(&logw, &mut probs)?;
        Ok(probs
            .into_iter()
            .enumerate()
            .map(|(c, probability)| AllocationOption {
                members: (0..tmp.y.len())
                    .filter(|&l| l != i && tmp.allocations[l] == c)
                    .collect(),
                probability,
            })
            .collect())
    }
}

impl Sampler for JointDpSampler {
    fn sweep(&mut self, rng: &mut Rng) -> Result<()> {
        let mut logw = Vec::with_capacity(self.clusters.len() + 1);
        for i in 0..self.y.len() {
            self.detach(i)?;
            self.log_weights(i, &mut logw);
            let c = sample_categorical_log(&logw, &mut self.scratch, rng)?;
            self.attach(i, c)?;
        }
        Ok(())
    }

    fn draw(&self, iteration: usize) -> Draw {
        // relabel by first appearance so equal partitions serialise identically
        let mut map = vec![usize::MAX; self.clusters.len()];
        let mut order = Vec::with_capacity(self.clusters.len());
        let allocations = self
            .allocations
            .iter()
            .map(|&c| {
                if map[c] == usize::MAX {
                    map[c] = order.len();
                    order.push(c);
                }
                map[c]
            })
            .collect();
        Draw {
            iteration,
            allocations,
            components: Vec::new(),
            weights: WeightDraw::Partition {
                clusters: order
                    .into_iter()
                    .map(|c| ClusterStats::from_stats(&self.clusters[c].x, &self.clusters[c].r))
                    .collect(),
            },
        }
    }
}

/// Predictives of every cluster of a stored draw plus the base measure.
pub(crate) fn draw_predictives(
    prior: &JointDpPrior,
    clusters: &[ClusterStats],
) -> Result<(Vec<ClusterPredictive>, ClusterPredictive)> {
    let preds = clusters
        .iter()
        .map(|c| ClusterPredictive::new(prior, &c.mvn(), &c.regression()))
        .collect::<Result<Vec<_>>>()?;
    let base = ClusterPredictive::new(
        prior,
        &MvnStats::empty(prior.covariates.dim()),
        &RegressionStats::empty(prior.regression.dim()),
    )?;
    Ok((preds, base))
}

/// One realisation of the mixing measure given a stored partition: Dirichlet
/// weights over the clusters and the remaining base-measure mass, with cluster
/// parameters drawn from their conjugate posteriors. The base-measure part
/// enters through its prior predictive.
pub(crate) struct SampledMeasure {
    pub(crate) ln_weights: Vec<f64>,
    x_kernels: Vec<(DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>, f64)>,
    pub(crate) components: Vec<(DVector<f64>, f64)>,
    pub(crate) base: ClusterPredictive,
}

impl SampledMeasure {
    /// log N(x; mu_k, Sigma_k); `k == len` is the base measure.
    pub(crate) fn ln_x(&self, k: usize, x: &[f64]) -> f64 {
        if k == self.x_kernels.len() {
            return self.base.ln_x(x);
        }
        let (mu, chol, norm) = &self.x_kernels[k];
        let d = DVector::from_iterator(mu.len(), x.iter().zip(mu.iter()).map(|(a, b)| a - b));
        norm - 0.5 * inv_quad_form(chol, &d)
    }

    pub(crate) fn len(&self) -> usize {
        self.components.len()
    }
}

pub(crate) fn sample_measure(
    prior: &JointDpPrior,
    clusters: &[ClusterStats],
    alpha: f64,
    rng: &mut Rng,
) -> Result<SampledMeasure> {
    let mut conc: Vec<f64> = clusters.iter().map(|c| c.n as f64).collect();
    conc.push(alpha);
    let ln_weights = sample_dirichlet(&conc, rng)?.into_iter().map(f64::ln).collect();
    let p = prior.covariates.dim() as f64;
    let mut x_kernels = Vec::with_capacity(clusters.len());
    let mut components = Vec::with_capacity(clusters.len());
    for c in clusters {
        let (mu, sigma) = prior.covariates.posterior_from_stats(&c.mvn())?.sample(rng)?;
        let chol = cholesky(&sigma)?;
        let norm = -0.5 * (p * LN_2PI + log_det_chol(&chol));
        x_kernels.push((mu, chol, norm));
        components.push(prior.regression.posterior_from_stats(&c.regression())?.sample(rng)?);
    }
    let base = ClusterPredictive::new(
        prior,
        &MvnStats::empty(prior.covariates.dim()),
        &RegressionStats::empty(prior.regression.dim()),
    )?;
    Ok(SampledMeasure {
        ln_weights,
        x_kernels,
        components,
        base,
    })
}
