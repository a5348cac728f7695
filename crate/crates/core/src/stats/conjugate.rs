//! Conjugate and semi-conjugate priors for the normal linear regression kernel
//! and the multivariate normal covariate kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::linalg::{cholesky, inv_quad_form, is_symmetric, log_det_chol, spd_inverse, symmetrize};
use super::sample::{sample_gamma, sample_mvn, sample_mvn_canonical, sample_wishart};
use super::special::{ln_gamma, ln_student_t_pdf};
use crate::error::{check_dim, Error, Result};
use crate::rng::Rng;

/// Sufficient statistics of a normal linear regression: X'X, X'y, y'y, n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionStats {
    pub n: usize,
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
}

impl RegressionStats {
    pub fn empty(q: usize) -> Self {
        RegressionStats {
            n: 0,
            xtx: DMatrix::zeros(q, q),
            xty: DVector::zeros(q),
            yty: 0.0,
        }
    }

    pub fn from_data(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        check_dim("regression stats rows", x.nrows(), y.len())?;
        Ok(RegressionStats {
            n: y.len(),
            xtx: x.transpose() * x,
            xty: x.transpose() * y,
            yty: y.norm_squared(),
        })
    }

    pub fn add(&mut self, x: &[f64], y: f64) {
        self.update(x, y, 1.0);
        self.n += 1;
    }

    pub fn remove(&mut self, x: &[f64], y: f64) {
        self.update(x, y, -1.0);
        self.n -= 1;
        if self.n == 0 {
            let q = self.xty.len();
            *self = RegressionStats::empty(q);
        }
    }

    fn update(&mut self, x: &[f64], y: f64, sign: f64) {
        let q = x.len();
        for a in 0..q {
            self.xty[a] += sign * x[a] * y;
            for b in 0..q {
                self.xtx[(a, b)] += sign * x[a] * x[b];
            }
        }
        self.yty += sign * y * y;
    }

    pub fn dim(&self) -> usize {
        self.xty.len()
    }

    /// ||y - X beta||^2 from the statistics, floored at zero.
    pub fn rss(&self, beta: &DVector<f64>) -> f64 {
        let v = self.yty - 2.0 * beta.dot(&self.xty) + (beta.transpose() * &self.xtx * beta)[(0, 0)];
        v.max(0.0)
    }
}

/// Sufficient statistics of a multivariate normal sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvnStats {
    pub n: usize,
    pub sum: DVector<f64>,
    pub sum_sq: DMatrix<f64>,
}

impl MvnStats {
    pub fn empty(p: usize) -> Self {
        MvnStats {
            n: 0,
            sum: DVector::zeros(p),
            sum_sq: DMatrix::zeros(p, p),
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.update(x, 1.0);
        self.n += 1;
    }

    pub fn remove(&mut self, x: &[f64]) {
        self.update(x, -1.0);
        self.n -= 1;
        if self.n == 0 {
            *self = MvnStats::empty(x.len());
        }
    }

    fn update(&mut self, x: &[f64], sign: f64) {
        for a in 0..x.len() {
            self.sum[a] += sign * x[a];
            for b in 0..x.len() {
                self.sum_sq[(a, b)] += sign * x[a] * x[b];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixForm {
    Precision,
    Covariance,
}

/// Normal–inverse-gamma prior: sigma^2 ~ IG(shape, rate), beta | sigma^2 ~ N(mean, sigma^2 V).
///
/// `matrix` holds V or V^{-1} according to `form`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NigParams {
    pub mean: DVector<f64>,
    pub matrix: DMatrix<f64>,
    pub form: MatrixForm,
    pub shape: f64,
    pub rate: f64,
}

/// Location/scale/df of a univariate Student-t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentT {
    pub loc: f64,
    pub scale: f64,
    pub df: f64,
}

impl StudentT {
    pub fn ln_pdf(&self, y: f64) -> f64 {
        ln_student_t_pdf(y, self.loc, self.scale, self.df)
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.ln_pdf(y).exp()
    }
}

impl NigParams {
    pub fn new(mean: DVector<f64>, matrix: DMatrix<f64>, form: MatrixForm, shape: f64, rate: f64) -> Result<Self> {
        let p = NigParams {
            mean,
            matrix,
            form,
            shape,
            rate,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("NIG matrix", self.mean.len(), self.matrix.nrows())?;
        if !is_symmetric(&self.matrix, 1e-9) {
            return Err(Error::param("NIG matrix must be symmetric"));
        }
        cholesky(&self.matrix)?;
        if !(self.shape > 0.0 && self.rate > 0.0) {
            return Err(Error::param("NIG shape and rate must be positive"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision(&self) -> Result<DMatrix<f64>> {
        match self.form {
            MatrixForm::Precision => Ok(self.matrix.clone()),
            MatrixForm::Covariance => spd_inverse(&self.matrix),
        }
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        match self.form {
            MatrixForm::Covariance => Ok(self.matrix.clone()),
            MatrixForm::Precision => spd_inverse(&self.matrix),
        }
    }

    /// Exact conjugate update with design `x` (n x Q) and responses `y`.
    pub fn posterior(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<NigParams> {
        check_dim("NIG design columns", self.dim(), x.ncols())?;
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("design and response must be finite"));
        }
        self.posterior_from_stats(&RegressionStats::from_data(x, y)?)
    }

    pub fn posterior_from_stats(&self, stats: &RegressionStats) -> Result<NigParams> {
        check_dim("NIG stats", self.dim(), stats.dim())?;
        if stats.n == 0 {
            return Ok(self.clone());
        }
        let prec0 = self.precision()?;
        let mut prec_n = &prec0 + &stats.xtx;
        symmetrize(&mut prec_n);
        let c = cholesky(&prec_n)?;
        let lin = &prec0 * &self.mean + &stats.xty;
        let mean_n = c.solve(&lin);
        let quad0 = self.mean.dot(&(&prec0 * &self.mean));
        let quad_n = mean_n.dot(&lin);
        let rate_n = self.rate + 0.5 * (stats.yty + quad0 - quad_n).max(0.0);
        Ok(NigParams {
            mean: mean_n,
            matrix: prec_n,
            form: MatrixForm::Precision,
            shape: self.shape + 0.5 * stats.n as f64,
            rate: rate_n,
        })
    }

    /// Marginal predictive of y at design row `xt`, integrating out (beta, sigma^2).
    pub fn student_t_predictive(&self, xt: &DVector<f64>) -> Result<StudentT> {
        check_dim("NIG predictive", self.dim(), xt.len())?;
        let v_quad = match self.form {
            MatrixForm::Precision => inv_quad_form(&cholesky(&self.matrix)?, xt),
            MatrixForm::Covariance => xt.dot(&(&self.matrix * xt)),
        };
        Ok(StudentT {
            loc: xt.dot(&self.mean),
            scale: (self.rate / self.shape * (1.0 + v_quad)).sqrt(),
            df: 2.0 * self.shape,
        })
    }

    /// Joint draw (beta, sigma^2).
    pub fn sample(&self, rng: &mut Rng) -> Result<(DVector<f64>, f64)> {
        let sigma2 = 1.0 / sample_gamma(self.shape, self.rate, rng)?;
        let beta = match self.form {
            MatrixForm::Covariance => sample_mvn(&self.mean, &(&self.matrix * sigma2), rng)?,
            MatrixForm::Precision => {
                let prec = &self.matrix / sigma2;
                let lin = &prec * &self.mean;
                sample_mvn_canonical(&prec, &lin, rng)?
            }
        };
        Ok((beta, sigma2))
    }
}

/// Normal–inverse-Wishart prior for a multivariate normal kernel:
/// Sigma ~ IW(df, scale), mu | Sigma ~ N(mean, Sigma / kappa).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwParams {
    pub mean: DVector<f64>,
    pub kappa: f64,
    pub df: f64,
    pub scale: DMatrix<f64>,
}

/// Multivariate Student-t with a cached factorisation of its shape matrix.
#[derive(Debug, Clone)]
pub struct MultivariateT {
    pub loc: DVector<f64>,
    pub df: f64,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl MultivariateT {
    pub fn new(loc: DVector<f64>, shape: &DMatrix<f64>, df: f64) -> Result<Self> {
        let p = loc.len() as f64;
        let chol = cholesky(shape)?;
        let log_norm = ln_gamma(0.5 * (df + p))
            - ln_gamma(0.5 * df)
            - 0.5 * p * (df * std::f64::consts::PI).ln()
            - 0.5 * log_det_chol(&chol);
        Ok(MultivariateT {
            loc,
            df,
            chol,
            log_norm,
        })
    }

    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        let p = self.loc.len() as f64;
        let d = DVector::from_iterator(self.loc.len(), x.iter().zip(self.loc.iter()).map(|(a, b)| a - b));
        let q = inv_quad_form(&self.chol, &d);
        self.log_norm - 0.5 * (self.df + p) * (q / self.df).ln_1p()
    }
}

impl NiwParams {
    pub fn new(mean: DVector<f64>, kappa: f64, df: f64, scale: DMatrix<f64>) -> Result<Self> {
        let p = NiwParams { mean, kappa, df, scale };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.mean.len();
        check_dim("NIW scale", p, self.scale.nrows())?;
        if !(self.kappa > 0.0) {
            return Err(Error::param("NIW kappa must be positive"));
        }
        if !(self.df > p as f64 - 1.0) {
            return Err(Error::param("NIW df must exceed dim - 1"));
        }
        if !is_symmetric(&self.scale, 1e-9) {
            return Err(Error::param("NIW scale must be symmetric"));
        }
        cholesky(&self.scale)?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Conjugate update with the rows of `x` (n x p).
    pub fn posterior(&self, x: &DMatrix<f64>) -> Result<NiwParams> {
        check_dim("NIW data columns", self.dim(), x.ncols())?;
        let mut stats = MvnStats::empty(self.dim());
        for row in x.row_iter() {
            let r: Vec<f64> = row.iter().copied().collect();
            stats.add(&r);
        }
        self.posterior_from_stats(&stats)
    }

    pub fn posterior_from_stats(&self, stats: &MvnStats) -> Result<NiwParams> {
        check_dim("NIW stats", self.dim(), stats.sum.len())?;
        if stats.n == 0 {
            return Ok(self.clone());
        }
        let n = stats.n as f64;
        let xbar = &stats.sum / n;
        let scatter = &stats.sum_sq - &xbar * xbar.transpose() * n;
        let kappa_n = self.kappa + n;
        let diff = &xbar - &self.mean;
        let mut scale = &self.scale + scatter + &diff * diff.transpose() * (self.kappa * n / kappa_n);
        symmetrize(&mut scale);
        Ok(NiwParams {
            mean: (&self.mean * self.kappa + &stats.sum) / kappa_n,
            kappa: kappa_n,
            df: self.df + n,
            scale,
        })
    }

    /// The multivariate Student-t obtained by integrating the normal kernel
    /// against these parameters.
    pub fn predictive(&self) -> Result<MultivariateT> {
        let p = self.dim() as f64;
        let df = self.df - p + 1.0;
        let shape = &self.scale * ((self.kappa + 1.0) / (self.kappa * df));
        MultivariateT::new(self.mean.clone(), &shape, df)
    }

    pub fn marginal_density(&self, x: &[f64]) -> Result<f64> {
        check_dim("NIW marginal", self.dim(), x.len())?;
        Ok(self.predictive()?.ln_pdf(x).exp())
    }

    /// Draw (mu, Sigma).
    pub fn sample(&self, rng: &mut Rng) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let prec = sample_wishart(self.df, &spd_inverse(&self.scale)?, rng)?;
        let sigma = spd_inverse(&prec)?;
        let mu = sample_mvn(&self.mean, &(&sigma / self.kappa), rng)?;
        Ok((mu, sigma))
    }
}

/// Semi-conjugate prior: beta ~ N(mean, cov) independent of sigma^{-2} ~ Gamma(shape, rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalGammaPrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub shape: f64,
    pub rate: f64,
}

impl NormalGammaPrior {
    pub fn validate(&self) -> Result<()> {
        check_dim("normal-gamma cov", self.mean.len(), self.cov.nrows())?;
        cholesky(&self.cov)?;
        if !(self.shape > 0.0 && self.rate > 0.0) {
            return Err(Error::param("normal-gamma shape and rate must be positive"));
        }
        Ok(())
    }
}

/// Prior for the (beta, sigma^2) parameters of one regression component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelPrior {
    Conjugate(NigParams),
    Independent(NormalGammaPrior),
}

/// Precomputed quantities for repeated kernel updates under a fixed prior.
#[derive(Debug, Clone)]
pub struct KernelUpdater {
    prior: KernelPrior,
    prec0: DMatrix<f64>,
    prec_mean0: DVector<f64>,
}

impl KernelPrior {
    pub fn dim(&self) -> usize {
        match self {
            KernelPrior::Conjugate(p) => p.dim(),
            KernelPrior::Independent(p) => p.mean.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelPrior::Conjugate(p) => p.validate(),
            KernelPrior::Independent(p) => p.validate(),
        }
    }

    /// (beta, sigma^2) at the prior means of beta and of the precision.
    pub fn center(&self) -> (DVector<f64>, f64) {
        match self {
            KernelPrior::Conjugate(p) => (p.mean.clone(), p.rate / p.shape),
            KernelPrior::Independent(p) => (p.mean.clone(), p.rate / p.shape),
        }
    }

    pub fn updater(&self) -> Result<KernelUpdater> {
        let (prec0, mean) = match self {
            KernelPrior::Conjugate(p) => (p.precision()?, &p.mean),
            KernelPrior::Independent(p) => (spd_inverse(&p.cov)?, &p.mean),
        };
        let prec_mean0 = &prec0 * mean;
        Ok(KernelUpdater {
            prior: self.clone(),
            prec0,
            prec_mean0,
        })
    }
}

impl KernelUpdater {
    pub fn prior(&self) -> &KernelPrior {
        &self.prior
    }

    pub fn sample_prior(&self, rng: &mut Rng) -> Result<(DVector<f64>, f64)> {
        match &self.prior {
            KernelPrior::Conjugate(p) => p.sample(rng),
            KernelPrior::Independent(p) => {
                let sigma2 = 1.0 / sample_gamma(p.shape, p.rate, rng)?;
                let beta = sample_mvn_canonical(&self.prec0, &self.prec_mean0, rng)?;
                Ok((beta, sigma2))
            }
        }
    }

    /// One conditional update of a component given its allocated data.
    ///
    /// Conjugate priors give an exact joint posterior draw. Independent priors
    /// do one Gibbs cycle: beta | sigma^2, then sigma^2 | beta.
    pub fn update(&self, stats: &RegressionStats, sigma2: f64, rng: &mut Rng) -> Result<(DVector<f64>, f64)> {
        if stats.n == 0 {
            return self.sample_prior(rng);
        }
        match &self.prior {
            KernelPrior::Conjugate(p) => p.posterior_from_stats(stats)?.sample(rng),
            KernelPrior::Independent(p) => {
                let prec = &self.prec0 + &stats.xtx / sigma2;
                let lin = &self.prec_mean0 + &stats.xty / sigma2;
                let beta = sample_mvn_canonical(&prec, &lin, rng)?;
                let rss = stats.rss(&beta);
                let tau = sample_gamma(p.shape + 0.5 * stats.n as f64, p.rate + 0.5 * rss, rng)?;
                Ok((beta, 1.0 / tau))
            }
        }
    }
}

/// Independent-prior update used by samplers whose prior mean and precision
/// change between sweeps.
pub fn normal_gamma_update(
    prec0: &DMatrix<f64>,
    prec_mean0: &DVector<f64>,
    shape: f64,
    rate: f64,
    stats: &RegressionStats,
    sigma2: f64,
    rng: &mut Rng,
) -> Result<(DVector<f64>, f64)> {
    if stats.n == 0 {
        let beta = sample_mvn_canonical(prec0, prec_mean0, rng)?;
        return Ok((beta, 1.0 / sample_gamma(shape, rate, rng)?));
    }
    let prec = prec0 + &stats.xtx / sigma2;
    let lin = prec_mean0 + &stats.xty / sigma2;
    let beta = sample_mvn_canonical(&prec, &lin, rng)?;
    let tau = sample_gamma(shape + 0.5 * stats.n as f64, rate + 0.5 * stats.rss(&beta), rng)?;
    Ok((beta, 1.0 / tau))
}
