//! Datasets: a response column and a covariate matrix.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::stats::summary::{mean, variance};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    /// n x p covariates.
    pub x: DMatrix<f64>,
    /// Covariate column names, `x1..xp` by default.
    pub names: Vec<String>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        check_dim("dataset rows", y.len(), x.nrows())?;
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData("dataset contains non-finite values".into()));
        }
        let names = (1..=x.ncols()).map(|d| format!("x{d}")).collect();
        Ok(Dataset { y, x, names })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i)).collect()
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        self.x.column(d).iter().copied().collect()
    }

    pub fn y_slice(&self) -> &[f64] {
        self.y.as_slice()
    }

    /// Read CSV with header `y,x1,...,xp`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "y" {
            return Err(Error::param(
                "dataset header must start with `y` followed by covariates",
            ));
        }
        let p = headers.len() - 1;
        let mut y = Vec::new();
        let mut x = Vec::new();
        for record in rdr.records() {
            let record = record?;
            for (k, field) in record.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::param(format!("cannot parse `{field}` as a number")))?;
                if k == 0 {
                    y.push(v);
                } else {
                    x.push(v);
                }
            }
        }
        let n = y.len();
        let mut ds = Dataset::new(DVector::from_vec(y), DMatrix::from_row_slice(n, p, &x))?;
        ds.names = headers.iter().skip(1).map(str::to_owned).collect();
        Ok(ds)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![fmt_num(self.y[i])];
            rec.extend(self.x.row(i).iter().map(|v| fmt_num(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Dataset::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

/// Shortest decimal that round-trips exactly.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

/// Affine standardisation of the response and each covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub y_mean: f64,
    pub y_sd: f64,
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
}

impl Scaling {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let sd = |v: &[f64]| variance(v).sqrt();
        let y = ds.y_slice();
        let y_sd = sd(y);
        let cols: Vec<Vec<f64>> = (0..ds.covariates()).map(|d| ds.column(d)).collect();
        let x_sd: Vec<f64> = cols.iter().map(|c| sd(c)).collect();
        if !(y_sd > 0.0) || x_sd.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::DegenerateData("cannot standardise a constant column".into()));
        }
        Ok(Scaling {
            y_mean: mean(y),
            y_sd,
            x_mean: cols.iter().map(|c| mean(c)).collect(),
            x_sd,
        })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        check_dim("scaling covariates", self.x_mean.len(), ds.covariates())?;
        let y = ds.y.map(|v| (v - self.y_mean) / self.y_sd);
        let mut x = ds.x.clone();
        for d in 0..x.ncols() {
            for i in 0..x.nrows() {
                x[(i, d)] = (x[(i, d)] - self.x_mean[d]) / self.x_sd[d];
            }
        }
        let mut out = Dataset::new(y, x)?;
        out.names = ds.names.clone();
        Ok(out)
    }

    pub fn x(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.x_mean.iter().zip(&self.x_sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_sd
    }

    pub fn y_back(&self, z: f64) -> f64 {
        self.y_mean + self.y_sd * z
    }
}
