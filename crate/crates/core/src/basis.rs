//! Covariate transformations lambda(x) feeding regression atoms and logit sticks.
//!
//! A [`BasisSpec`] is plain data (serialisable, comparable). Evaluation goes
//! through a compiled [`Basis`], which caches the per-covariate natural-spline
//! projections so the hot loops never refactorise anything.
//!
//! Multi-covariate spline expansions are additive: one shared intercept column
//! followed by one block per covariate. Spline blocks drop their first B-spline
//! column so the intercept stays identifiable. Spline inputs outside the
//! boundary knots are clamped to the nearest boundary.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::stats::summary::quantile_sorted;

const DEGREE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Linear,
    CubicBspline,
    NaturalCubicSpline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    /// Number of covariates.
    pub covariates: usize,
    /// Per-covariate (lower, upper) boundary knots; empty for `Linear`.
    #[serde(default)]
    pub boundary: Vec<(f64, f64)>,
    /// Per-covariate sorted interior knots; empty for `Linear`.
    #[serde(default)]
    pub interior: Vec<Vec<f64>>,
    pub intercept: bool,
}

impl BasisSpec {
    pub fn linear(covariates: usize) -> Self {
        BasisSpec {
            kind: BasisKind::Linear,
            covariates,
            boundary: Vec::new(),
            interior: Vec::new(),
            intercept: true,
        }
    }

    /// Spline spec with boundary knots at each column's min/max and
    /// `interior_count` interior knots at type-7 quantiles.
    pub fn spline_from_data(kind: BasisKind, x: &DMatrix<f64>, interior_count: usize) -> Result<Self> {
        if kind == BasisKind::Linear {
            return Ok(BasisSpec::linear(x.ncols()));
        }
        let mut boundary = Vec::with_capacity(x.ncols());
        let mut interior = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let values: Vec<f64> = col.iter().copied().collect();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                return Err(Error::DegenerateData("covariate column is constant".into()));
            }
            boundary.push((lo, hi));
            interior.push(if interior_count == 0 {
                Vec::new()
            } else {
                knots_from_quantiles(&values, interior_count)?
            });
        }
        let spec = BasisSpec {
            kind,
            covariates: x.ncols(),
            boundary,
            interior,
            intercept: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BasisKind::Linear {
            return Ok(());
        }
        if self.boundary.len() != self.covariates || self.interior.len() != self.covariates {
            return Err(Error::Spec(format!(
                "expected knots for {} covariates, found {} boundary and {} interior lists",
                self.covariates,
                self.boundary.len(),
                self.interior.len()
            )));
        }
        for (d, (&(lo, hi), knots)) in self.boundary.iter().zip(&self.interior).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Spec(format!(
                    "covariate {d}: boundary knots ({lo}, {hi}) not increasing"
                )));
            }
            if knots.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Spec(format!(
                    "covariate {d}: interior knots are not strictly sorted"
                )));
            }
            if knots.iter().any(|&k| !(k > lo && k < hi)) {
                return Err(Error::Spec(format!(
                    "covariate {d}: interior knot outside ({lo}, {hi})"
                )));
            }
            if self.kind == BasisKind::NaturalCubicSpline && knots.is_empty() {
                return Err(Error::Spec(format!(
                    "covariate {d}: natural splines need at least one interior knot"
                )));
            }
        }
        Ok(())
    }

    fn block_width(&self, d: usize) -> usize {
        match self.kind {
            BasisKind::Linear => 1,
            BasisKind::CubicBspline => self.interior[d].len() + DEGREE,
            BasisKind::NaturalCubicSpline => self.interior[d].len() + 1,
        }
    }

    /// Output dimension Q.
    pub fn dim(&self) -> usize {
        usize::from(self.intercept) + (0..self.covariates).map(|d| self.block_width(d)).sum::<usize>()
    }

    pub fn compile(&self) -> Result<Basis> {
        self.validate()?;
        let mut blocks = Vec::with_capacity(self.covariates);
        for d in 0..self.covariates {
            blocks.push(match self.kind {
                BasisKind::Linear => Block::Identity,
                BasisKind::CubicBspline => Block::Bspline(Bspline::new(self.boundary[d], &self.interior[d])),
                BasisKind::NaturalCubicSpline => {
                    let bs = Bspline::new(self.boundary[d], &self.interior[d]);
                    let projection = natural_projection(&bs)?;
                    Block::Natural(bs, projection)
                }
            });
        }
        Ok(Basis {
            spec: self.clone(),
            blocks,
        })
    }
}

#[derive(Debug, Clone)]
enum Block {
    Identity,
    Bspline(Bspline),
    /// B-spline basis without its first column, projected onto the null space of
    /// the second-derivative constraints at both boundary knots.
    Natural(Bspline, DMatrix<f64>),
}

/// A compiled, immutable basis evaluator.
#[derive(Debug, Clone)]
pub struct Basis {
    spec: BasisSpec,
    blocks: Vec<Block>,
}

impl Basis {
    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn covariates(&self) -> usize {
        self.spec.covariates
    }

    /// Append lambda(x) to `out` (cleared first).
    pub fn eval_into(&self, x: &[f64], out: &mut Vec<f64>) -> Result<()> {
        check_dim("basis covariates", self.spec.covariates, x.len())?;
        out.clear();
        if self.spec.intercept {
            out.push(1.0);
        }
        let mut scratch = [0.0; DEGREE + 1];
        for (block, &xd) in self.blocks.iter().zip(x) {
            match block {
                Block::Identity => out.push(xd),
                Block::Bspline(bs) => {
                    let first = bs.eval_nonzero(xd, &mut scratch);
                    let start = out.len();
                    out.resize(start + bs.count() - 1, 0.0);
                    for (k, v) in scratch.iter().enumerate() {
                        let idx = first + k;
                        if idx >= 1 {
                            out[start + idx - 1] = *v;
                        }
                    }
                }
                Block::Natural(bs, proj) => {
                    let first = bs.eval_nonzero(xd, &mut scratch);
                    for r in 0..proj.nrows() {
                        let mut acc = 0.0;
                        for (k, v) in scratch.iter().enumerate() {
                            let idx = first + k;
                            if idx >= 1 {
                                acc += proj[(r, idx - 1)] * v;
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// Design matrix with one row per row of `x`.
    pub fn design(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let q = self.dim();
        let mut m = DMatrix::zeros(x.nrows(), q);
        let mut row = Vec::with_capacity(q);
        let mut xi = vec![0.0; x.ncols()];
        for i in 0..x.nrows() {
            for (d, v) in xi.iter_mut().enumerate() {
                *v = x[(i, d)];
            }
            self.eval_into(&xi, &mut row)?;
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(m)
    }
}

/// Clamped cubic B-spline basis on one covariate.
#[derive(Debug, Clone)]
pub struct Bspline {
    knots: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl Bspline {
    pub fn new((lo, hi): (f64, f64), interior: &[f64]) -> Self {
        let mut knots = vec![lo; DEGREE + 1];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(hi, DEGREE + 1));
        Bspline { knots, lo, hi }
    }

    /// Number of basis functions.
    pub fn count(&self) -> usize {
        self.knots.len() - DEGREE - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn span(&self, x: f64) -> usize {
        let last = self.count() - 1;
        if x >= self.hi {
            return last;
        }
        // largest i in [DEGREE, last] with knots[i] <= x
        let mut i = DEGREE;
        while i < last && self.knots[i + 1] <= x {
            i += 1;
        }
        i
    }

    /// Values of the DEGREE+1 possibly-nonzero functions at `x` (clamped);
    /// returns the index of the first.
    pub fn eval_nonzero(&self, x: f64, out: &mut [f64; DEGREE + 1]) -> usize {
        let x = x.clamp(self.lo, self.hi);
        let span = self.span(x);
        let ders = self.derivatives(span, x, 0);
        out.copy_from_slice(&ders[0]);
        span - DEGREE
    }

    /// Derivatives up to `order` of the nonzero functions on `span` at `x`.
    fn derivatives(&self, span: usize, x: f64, order: usize) -> Vec<[f64; DEGREE + 1]> {
        let p = DEGREE;
        let u = &self.knots;
        let mut ndu = [[0.0; DEGREE + 1]; DEGREE + 1];
        let mut left = [0.0; DEGREE + 1];
        let mut right = [0.0; DEGREE + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![[0.0; DEGREE + 1]; order + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = [[0.0; DEGREE + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0, 1);
            a[0][0] = 1.0;
            for k in 1..=order {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for (k, row) in ders.iter_mut().enumerate().skip(1) {
            for v in row.iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }

    /// Full row of second derivatives of all basis functions at `x`.
    fn second_derivative_row(&self, x: f64) -> Vec<f64> {
        let span = self.span(x);
        let ders = self.derivatives(span, x, 2);
        let mut row = vec![0.0; self.count()];
        for (k, v) in ders[2].iter().enumerate() {
            row[span - DEGREE + k] = *v;
        }
        row
    }
}

/// Rows spanning the null space of the boundary second-derivative constraints,
/// expressed in the B-spline basis with its first column removed.
fn natural_projection(bs: &Bspline) -> Result<DMatrix<f64>> {
    let m = bs.count() - 1;
    let mut constraints_t = DMatrix::zeros(m, 2);
    for (c, x) in [bs.lo, bs.hi].into_iter().enumerate() {
        let row = bs.second_derivative_row(x);
        for j in 0..m {
            constraints_t[(j, c)] = row[j + 1];
        }
    }
    let qr = constraints_t.qr();
    let mut q_t = DMatrix::<f64>::identity(m, m);
    qr.q_tr_mul(&mut q_t);
    if q_t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Spec("natural spline constraint projection failed".into()));
    }
    Ok(q_t.rows(2, m - 2).into_owned())
}

/// lambda(x) = (1, x').
pub fn linear_basis(x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.push(1.0);
    v.extend_from_slice(x);
    v
}

pub fn bspline_basis(spec: &BasisSpec, x: &[f64]) -> Result<Vec<f64>> {
    if spec.kind != BasisKind::CubicBspline {
        return Err(Error::Spec("expected a cubic B-spline spec".into()));
    }
    spec.compile()?.eval(x)
}

pub fn natural_spline_basis(spec: &BasisSpec, x: &[f64]) -> Result<Vec<f64>> {
    if spec.kind != BasisKind::NaturalCubicSpline {
        return Err(Error::Spec("expected a natural cubic spline spec".into()));
    }
    spec.compile()?.eval(x)
}

/// `count` knots at type-7 quantile levels k / (count + 1).
pub fn knots_from_quantiles(column: &[f64], count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::Spec("need at least one knot".into()));
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted.is_empty() || sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::DegenerateData("cannot place knots on a constant column".into()));
    }
    Ok((1..=count)
        .map(|k| quantile_sorted(&sorted, k as f64 / (count + 1) as f64))
        .collect())
}

/// Evaluate the design row for a single point into a column vector.
pub fn design_row(basis: &Basis, x: &[f64]) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(basis.eval(x)?))
}
