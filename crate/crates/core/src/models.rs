//! Model specifications and priors for the six supported families.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, BasisKind, BasisSpec};
use crate::data::{Dataset, Scaling};
use crate::error::{Error, Result};
use crate::inference::Draw;
use crate::predictive::Predictor;
use crate::stats::conjugate::{KernelPrior, MatrixForm, NigParams, NiwParams, NormalGammaPrior};
use crate::stats::special::log_sum_exp;
use crate::stats::summary::{mean, variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    JointDp,
    Lddp,
    LddpBs,
    Lsbp,
    LsbpNs,
    Nw,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 6] = [
        ModelFamily::JointDp,
        ModelFamily::Lddp,
        ModelFamily::LddpBs,
        ModelFamily::Lsbp,
        ModelFamily::LsbpNs,
        ModelFamily::Nw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::JointDp => "joint-dp",
            ModelFamily::Lddp => "lddp",
            ModelFamily::LddpBs => "lddp-bs",
            ModelFamily::Lsbp => "lsbp",
            ModelFamily::LsbpNs => "lsbp-ns",
            ModelFamily::Nw => "nw",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param(format!("unknown model `{s}`")))
    }
}

/// Which hyperparameter recipe to use for the single-weights models.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LddpPriorKind {
    #[default]
    DataDriven,
    /// Fixed constants on standardised data.
    Noninformative,
}

/// Prior covariance settings for the logit stick coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LsbpVariant {
    #[default]
    P1,
    P2,
    P3,
}

impl FromStr for LsbpVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P1" => Ok(LsbpVariant::P1),
            "P2" => Ok(LsbpVariant::P2),
            "P3" => Ok(LsbpVariant::P3),
            _ => Err(Error::param(format!("unknown prior variant `{s}`"))),
        }
    }
}

impl fmt::Display for LsbpVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Base measure N(m, S) x Gamma(a, b) on (beta, sigma^{-2}) with
/// m ~ N(m0, S0) and S^{-1} ~ Wishart(nu, (nu Psi)^{-1}).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LddpPrior {
    pub m0: DVector<f64>,
    pub s0: DMatrix<f64>,
    pub nu: f64,
    pub psi: DMatrix<f64>,
    pub a: f64,
    pub b: f64,
}

impl LddpPrior {
    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.dim();
        crate::error::check_dim("LDDP S0", q, self.s0.nrows())?;
        crate::error::check_dim("LDDP Psi", q, self.psi.nrows())?;
        crate::stats::linalg::cholesky(&self.s0)?;
        crate::stats::linalg::cholesky(&self.psi)?;
        if !(self.nu > q as f64 - 1.0) {
            return Err(Error::param("LDDP nu must exceed Q - 1"));
        }
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::param("LDDP a and b must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDpPrior {
    pub regression: NigParams,
    pub covariates: NiwParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsbpPrior {
    pub variant: LsbpVariant,
    pub coef_mean: DVector<f64>,
    /// Diagonal of the coefficient prior covariance.
    pub coef_var: DVector<f64>,
    pub kernel: KernelPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NwPrior {
    pub loc_mean: Vec<f64>,
    pub loc_var: Vec<f64>,
    /// Inverse-gamma shape and rate for each kernel variance.
    pub scale_shape: Vec<f64>,
    pub scale_rate: Vec<f64>,
    /// Symmetric Dirichlet parameter for each baseline weight.
    pub dirichlet: f64,
    pub kernel: KernelPrior,
}

impl NwPrior {
    pub fn validate(&self) -> Result<()> {
        let p = self.loc_mean.len();
        for (name, v) in [
            ("loc_var", &self.loc_var),
            ("scale_shape", &self.scale_shape),
            ("scale_rate", &self.scale_rate),
        ] {
            if v.len() != p {
                return Err(Error::param(format!("NW prior {name} has wrong length")));
            }
            if v.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::param(format!("NW prior {name} must be positive")));
            }
        }
        if !(self.dirichlet > 0.0) {
            return Err(Error::param("NW Dirichlet parameter must be positive"));
        }
        self.kernel.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Priors {
    JointDp(JointDpPrior),
    Lddp(LddpPrior),
    Lsbp(LsbpPrior),
    Nw(NwPrior),
}

/// Full declarative description of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    /// Design of the regression kernel, lambda(x).
    pub atom_basis: BasisSpec,
    /// Design of the logit sticks (LSBP variants only).
    #[serde(default)]
    pub weight_basis: Option<BasisSpec>,
    pub truncation: usize,
    pub alpha: f64,
    pub priors: Priors,
    /// Present when the model is fit on standardised data.
    #[serde(default)]
    pub scaling: Option<Scaling>,
}

/// Knobs for building a [`ModelSpec`] from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub truncation: usize,
    pub alpha: f64,
    pub lddp_prior: LddpPriorKind,
    pub lsbp_prior: LsbpVariant,
    pub spline_knots: usize,
    /// Multiplier g in the joint model's coefficient prior V = g n (X'X)^{-1}.
    pub joint_g: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            truncation: 20,
            alpha: 1.0,
            lddp_prior: LddpPriorKind::DataDriven,
            lsbp_prior: LsbpVariant::P1,
            spline_knots: 4,
            joint_g: 10.0,
        }
    }
}

impl ModelSpec {
    /// Build the default specification of `family` for `data`.
    pub fn build(family: ModelFamily, data: &Dataset, opts: &ModelOptions) -> Result<Self> {
        let p = data.covariates();
        let linear = BasisSpec::linear(p);
        let mut spec = match family {
            ModelFamily::JointDp => ModelSpec {
                family,
                atom_basis: linear.clone(),
                weight_basis: None,
                truncation: opts.truncation,
                alpha: opts.alpha,
                priors: Priors::JointDp(joint_dp_prior(data, opts.joint_g)?),
                scaling: None,
            },
            ModelFamily::Lddp | ModelFamily::LddpBs => {
                let (fit_data, scaling) = match opts.lddp_prior {
                    LddpPriorKind::DataDriven => (data.clone(), None),
                    LddpPriorKind::Noninformative => {
                        let s = Scaling::fit(data)?;
                        (s.apply(data)?, Some(s))
                    }
                };
                let atom_basis = if family == ModelFamily::Lddp {
                    linear.clone()
                } else {
                    BasisSpec::spline_from_data(BasisKind::CubicBspline, &fit_data.x, 0)?
                };
                let prior = match opts.lddp_prior {
                    LddpPriorKind::DataDriven => empirical_lddp_prior(&fit_data, &atom_basis)?,
                    LddpPriorKind::Noninformative => noninformative_lddp_prior(atom_basis.dim())?,
                };
                ModelSpec {
                    family,
                    atom_basis,
                    weight_basis: None,
                    truncation: opts.truncation,
                    alpha: opts.alpha,
                    priors: Priors::Lddp(prior),
                    scaling,
                }
            }
            ModelFamily::Lsbp | ModelFamily::LsbpNs => {
                let weight_basis = if family == ModelFamily::Lsbp {
                    linear.clone()
                } else {
                    BasisSpec::spline_from_data(BasisKind::NaturalCubicSpline, &data.x, opts.spline_knots)?
                };
                let mut prior = lsbp_prior(opts.lsbp_prior, weight_basis.dim())?;
                prior.kernel = empirical_kernel_prior(data, &linear)?;
                ModelSpec {
                    family,
                    atom_basis: linear.clone(),
                    weight_basis: Some(weight_basis),
                    truncation: opts.truncation,
                    alpha: opts.alpha,
                    priors: Priors::Lsbp(prior),
                    scaling: None,
                }
            }
            ModelFamily::Nw => ModelSpec {
                family,
                atom_basis: linear.clone(),
                weight_basis: None,
                truncation: opts.truncation,
                alpha: opts.alpha,
                priors: Priors::Nw(nw_empirical_prior(data, opts.alpha, opts.truncation)?),
                scaling: None,
            },
        };
        spec.atom_basis.intercept = true;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation < 1 {
            return Err(Error::param("truncation must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("concentration must be positive"));
        }
        self.atom_basis.validate()?;
        let q = self.atom_basis.dim();
        let family_ok = match (&self.priors, self.family) {
            (Priors::JointDp(p), ModelFamily::JointDp) => {
                p.regression.validate()?;
                p.covariates.validate()?;
                if p.regression.dim() != q || p.covariates.dim() != self.atom_basis.covariates {
                    return Err(Error::param("joint prior dimensions do not match the design"));
                }
                self.atom_basis.kind == BasisKind::Linear
            }
            (Priors::Lddp(p), ModelFamily::Lddp | ModelFamily::LddpBs) => {
                p.validate()?;
                if p.dim() != q {
                    return Err(Error::param("LDDP prior dimension does not match the design"));
                }
                true
            }
            (Priors::Lsbp(p), ModelFamily::Lsbp | ModelFamily::LsbpNs) => {
                let wb = self
                    .weight_basis
                    .as_ref()
                    .ok_or_else(|| Error::param("logit stick models need a weight basis"))?;
                wb.validate()?;
                if p.coef_var.len() != wb.dim() || p.coef_mean.len() != wb.dim() {
                    return Err(Error::param("stick coefficient prior does not match the weight basis"));
                }
                if p.coef_var.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::param("stick coefficient variances must be positive"));
                }
                p.kernel.validate()?;
                p.kernel.dim() == q
            }
            (Priors::Nw(p), ModelFamily::Nw) => {
                p.validate()?;
                p.kernel.dim() == q && p.loc_mean.len() == self.atom_basis.covariates
            }
            _ => false,
        };
        if !family_ok {
            return Err(Error::param(format!(
                "priors are inconsistent with model `{}`",
                self.family
            )));
        }
        if let Some(s) = &self.scaling {
            if s.x_mean.len() != self.atom_basis.covariates || !(s.y_sd > 0.0) {
                return Err(Error::param("scaling does not match the design"));
            }
        }
        Ok(())
    }

    pub fn atom(&self) -> Result<Basis> {
        self.atom_basis.compile()
    }

    pub fn covariates(&self) -> usize {
        self.atom_basis.covariates
    }
}

/// Ordinary least squares of y on lambda(x): (beta_hat, (X'X)^{-1}, sigma_hat).
pub fn ols(data: &Dataset, basis: &BasisSpec) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let x = basis.compile()?.design(&data.x)?;
    let (n, q) = (x.nrows(), x.ncols());
    if n <= q {
        return Err(Error::DegenerateData(format!(
            "need more than {q} observations, found {n}"
        )));
    }
    let xtx = x.transpose() * &x;
    let chol = nalgebra::Cholesky::new(xtx.clone())
        .ok_or_else(|| Error::DegenerateData("design matrix is rank deficient".into()))?;
    let l = chol.l();
    let diag: Vec<f64> = (0..q)
        .map(|k| l[(k, k)] * l[(k, k)] / xtx[(k, k)].max(f64::MIN_POSITIVE))
        .collect();
    if diag.iter().any(|d| *d < 1e-12) {
        return Err(Error::DegenerateData("design matrix is rank deficient".into()));
    }
    let beta = chol.solve(&(x.transpose() * &data.y));
    let resid = &data.y - &x * &beta;
    let sigma = (resid.norm_squared() / (n - q) as f64).sqrt();
    Ok((beta, chol.inverse(), sigma))
}

/// m0 = beta_hat, S0 = Sigma_hat, nu = Q + 2, Psi = 30 Sigma_hat, a = 2, b = sigma_hat / 2.
pub fn empirical_lddp_prior(data: &Dataset, atom_basis: &BasisSpec) -> Result<LddpPrior> {
    let (beta, xtx_inv, sigma) = ols(data, atom_basis)?;
    let sigma_hat = xtx_inv * (sigma * sigma);
    let q = beta.len();
    Ok(LddpPrior {
        m0: beta,
        psi: &sigma_hat * 30.0,
        s0: sigma_hat,
        nu: q as f64 + 2.0,
        a: 2.0,
        b: sigma / 2.0,
    })
}

/// Fixed constants intended for standardised data.
pub fn noninformative_lddp_prior(q: usize) -> Result<LddpPrior> {
    if q < 1 {
        return Err(Error::param("Q must be at least 1"));
    }
    Ok(LddpPrior {
        m0: DVector::zeros(q),
        s0: DMatrix::identity(q, q) * 10.0,
        nu: q as f64 + 2.0,
        psi: DMatrix::identity(q, q),
        a: 2.0,
        b: 0.5,
    })
}

/// Zero-mean stick coefficient prior; the kernel prior is a placeholder until
/// filled from data.
pub fn lsbp_prior(variant: LsbpVariant, q_weight: usize) -> Result<LsbpPrior> {
    if q_weight < 1 {
        return Err(Error::param("weight basis dimension must be at least 1"));
    }
    let coef_var = match variant {
        LsbpVariant::P1 => DVector::from_fn(q_weight, |k, _| if k == 0 { 100.0 } else { 10.0 }),
        LsbpVariant::P2 => DVector::from_element(q_weight, 1e4),
        LsbpVariant::P3 => DVector::from_element(q_weight, 1.0),
    };
    Ok(LsbpPrior {
        variant,
        coef_mean: DVector::zeros(q_weight),
        coef_var,
        kernel: KernelPrior::Independent(NormalGammaPrior {
            mean: DVector::zeros(1),
            cov: DMatrix::identity(1, 1),
            shape: 2.0,
            rate: 1.0,
        }),
    })
}

/// beta ~ N(beta_hat, 30 Sigma_hat) independent of sigma^{-2} ~ Gamma(2, sigma_hat / 2).
pub fn empirical_kernel_prior(data: &Dataset, basis: &BasisSpec) -> Result<KernelPrior> {
    let base = empirical_lddp_prior(data, basis)?;
    Ok(KernelPrior::Independent(NormalGammaPrior {
        mean: base.m0,
        cov: base.psi,
        shape: base.a,
        rate: base.b,
    }))
}

pub fn nw_empirical_prior(data: &Dataset, alpha: f64, truncation: usize) -> Result<NwPrior> {
    let p = data.covariates();
    let mut loc_mean = Vec::with_capacity(p);
    let mut loc_var = Vec::with_capacity(p);
    for d in 0..p {
        let col = data.column(d);
        let v = variance(&col);
        if !(v > 0.0) {
            return Err(Error::DegenerateData(format!("covariate {} is constant", d + 1)));
        }
        loc_mean.push(mean(&col));
        loc_var.push(v);
    }
    Ok(NwPrior {
        scale_shape: vec![2.0; p],
        scale_rate: loc_var.clone(),
        loc_mean,
        loc_var,
        dirichlet: alpha / truncation as f64,
        kernel: empirical_kernel_prior(data, &BasisSpec::linear(p))?,
    })
}

/// Conjugate joint prior: NIG regression part centred on least squares with
/// V = g n (X'X)^{-1}, and NIW covariate part centred on the sample moments.
pub fn joint_dp_prior(data: &Dataset, g: f64) -> Result<JointDpPrior> {
    let p = data.covariates();
    let (beta, xtx_inv, sigma) = ols(data, &BasisSpec::linear(p))?;
    let n = data.len() as f64;
    let regression = NigParams::new(beta, xtx_inv * (g * n), MatrixForm::Covariance, 2.0, sigma / 2.0)?;
    let mut x_mean = DVector::zeros(p);
    for d in 0..p {
        x_mean[d] = mean(&data.column(d));
    }
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..data.len() {
        let r = data.x.row(i).transpose() - &x_mean;
        cov += &r * r.transpose();
    }
    cov /= n - 1.0;
    let covariates = NiwParams::new(x_mean, 0.01, p as f64 + 2.0, cov)?;
    Ok(JointDpPrior { regression, covariates })
}

/// sum_i log sum_j omega_j(x_i) k_j(y_i | x_i) under one posterior draw.
pub fn conditional_loglik(spec: &ModelSpec, draw: &Draw, data: &Dataset) -> Result<f64> {
    let predictor = Predictor::new(spec)?;
    let prepared = predictor.prepare(draw)?;
    let mut total = 0.0;
    let mut terms = Vec::new();
    for i in 0..data.len() {
        let mix = prepared.local_mixture(&data.row(i))?;
        terms.clear();
        terms.extend((0..mix.len()).map(|k| mix.weights[k].ln() + mix.ln_kernel(k, data.y[i])));
        total += log_sum_exp(&terms);
    }
    if !total.is_finite() {
        return Err(Error::numeric("log-likelihood is not finite"));
    }
    Ok(total)
}
