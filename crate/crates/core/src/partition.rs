//! Posterior co-clustering and a Binder-loss point estimate of the partition.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionLoss {
    Binder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEstimate {
    /// Cluster ids, contiguous from 0 in order of first appearance.
    pub labels: Vec<usize>,
    pub expected_loss: f64,
    pub method: PartitionLoss,
    /// Index of the chosen draw among the candidates.
    pub draw: usize,
}

impl PartitionEstimate {
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

fn check_draws(draws: &[Vec<usize>]) -> Result<usize> {
    let n = draws
        .first()
        .ok_or_else(|| Error::param("need at least one stored draw"))?
        .len();
    for d in draws {
        check_dim("allocation vector", n, d.len())?;
    }
    Ok(n)
}

/// Fraction of draws in which each pair of observations shares a component.
pub fn posterior_similarity(draws: &[Vec<usize>]) -> Result<DMatrix<f64>> {
    let n = check_draws(draws)?;
    let mut counts = DMatrix::<u32>::zeros(n, n);
    for d in draws {
        for i in 0..n {
            for l in i + 1..n {
                if d[i] == d[l] {
                    counts[(i, l)] += 1;
                }
            }
        }
    }
    let m = draws.len() as f64;
    let mut sim = DMatrix::identity(n, n);
    for i in 0..n {
        for l in i + 1..n {
            let v = f64::from(counts[(i, l)]) / m;
            sim[(i, l)] = v;
            sim[(l, i)] = v;
        }
    }
    Ok(sim)
}

/// Expected Binder loss (unit costs) of `labels` given the similarity matrix.
pub fn binder_loss(labels: &[usize], similarity: &DMatrix<f64>) -> Result<f64> {
    let n = labels.len();
    check_dim("similarity matrix", n, similarity.nrows())?;
    check_dim("similarity matrix", n, similarity.ncols())?;
    let mut loss = 0.0;
    for i in 0..n {
        for l in i + 1..n {
            let together = if labels[i] == labels[l] { 1.0 } else { 0.0 };
            loss += (together - similarity[(i, l)]).abs();
        }
    }
    Ok(loss)
}

/// Relabel in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// The sampled partition with the smallest expected Binder loss; earliest wins ties.
pub fn binder_point_estimate(draws: &[Vec<usize>], similarity: &DMatrix<f64>) -> Result<PartitionEstimate> {
    check_draws(draws)?;
    let mut best: Option<(usize, f64)> = None;
    for (k, d) in draws.iter().enumerate() {
        let loss = binder_loss(d, similarity)?;
        if best.is_none_or(|(_, b)| loss < b) {
            best = Some((k, loss));
        }
    }
    let (draw, expected_loss) = best.expect("at least one draw");
    Ok(PartitionEstimate {
        labels: canonical_labels(&draws[draw]),
        expected_loss,
        method: PartitionLoss::Binder,
        draw,
    })
}
