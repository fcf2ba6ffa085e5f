use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const LRD_GUARD: f64 = 1e-10;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices and distances of the `k` nearest training rows to `x`, nearest
/// first, ties broken by index. `skip` excludes one row (the query itself).
fn knn(train: &Tensor, x: &[f64], k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = (0..train.rows())
        .filter(|&j| Some(j) != skip)
        .map(|j| (sq_dist(train.row(j), x), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if d.len() > k {
        d.select_nth_unstable_by(k - 1, cmp);
        d.truncate(k);
    }
    d.sort_by(cmp);
    d.into_iter().map(|(s, j)| (s.sqrt(), j)).collect()
}

/// Local outlier factor with exact k-nearest neighbours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lof {
    pub k: usize,
    pub train: Tensor,
    /// Distance from each training row to its k-th neighbour.
    pub k_distance: Vec<f64>,
    /// Local reachability density of each training row.
    pub lrd: Vec<f64>,
}

impl Lof {
    /// Fits the model and returns it with the training rows' own LOF values
    /// (each row excluded from its own neighbourhood).
    pub fn fit(x: &Tensor, k: usize) -> Result<(Self, Vec<f64>)> {
        let n = x.rows();
        if k == 0 || n <= k {
            return Err(Error::InvalidInput(format!(
                "LOF with k = {k} needs more than {k} samples, got {n}"
            )));
        }
        let neighbours: Vec<Vec<(f64, usize)>> = (0..n).into_par_iter().map(|i| knn(x, x.row(i), k, Some(i))).collect();
        let k_distance: Vec<f64> = neighbours.iter().map(|nb| nb[k - 1].0).collect();
        let lrd = neighbours.iter().map(|nb| lrd_of(nb, &k_distance)).collect::<Vec<_>>();
        let lof = neighbours.iter().zip(&lrd).map(|(nb, l)| ratio(nb, &lrd, *l)).collect();
        Ok((
            Lof {
                k,
                train: x.clone(),
                k_distance,
                lrd,
            },
            lof,
        ))
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let nb = knn(&self.train, x, self.k, None);
        ratio(&nb, &self.lrd, lrd_of(&nb, &self.k_distance))
    }
}

fn lrd_of(neighbours: &[(f64, usize)], k_distance: &[f64]) -> f64 {
    let reach: f64 = neighbours.iter().map(|&(d, j)| d.max(k_distance[j])).sum();
    1.0 / (reach / neighbours.len() as f64 + LRD_GUARD)
}

fn ratio(neighbours: &[(f64, usize)], lrd: &[f64], own: f64) -> f64 {
    neighbours.iter().map(|&(_, j)| lrd[j]).sum::<f64>() / neighbours.len() as f64 / own
}
