use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_indexed, rng_from};
use crate::tensor::Tensor;

/// Average unsuccessful-search path length in a binary search tree of `n`
/// points: `2H(n−1) − 2(n−1)/n`, with exact harmonic numbers.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        _ => {
            let m = n - 1;
            let harmonic: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
            2.0 * harmonic - 2.0 * m as f64 / n as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub subsample: usize,
    pub trees: Vec<Vec<Node>>,
}

fn grow(x: &Tensor, idx: &mut [usize], depth: usize, limit: usize, rng: &mut impl Rng, nodes: &mut Vec<Node>) -> usize {
    let me = nodes.len();
    nodes.push(Node::Leaf { size: idx.len() });
    if depth >= limit || idx.len() <= 1 {
        return me;
    }
    let d = x.cols();
    let mut features: Vec<usize> = (0..d).collect();
    let mut remaining = d;
    let chosen = loop {
        if remaining == 0 {
            return me;
        }
        let pick = rng.random_range(0..remaining);
        let f = features[pick];
        features.swap(pick, remaining - 1);
        remaining -= 1;
        let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = x.at(i, f);
            (lo.min(v), hi.max(v))
        });
        if hi > lo {
            break (f, lo, hi);
        }
    };
    let (feature, lo, hi) = chosen;
    let mut threshold = rng.random_range(lo..hi);
    if threshold <= lo {
        threshold = lo + (hi - lo) * 0.5;
    }
    let mut split = 0;
    for k in 0..idx.len() {
        if x.at(idx[k], feature) < threshold {
            idx.swap(k, split);
            split += 1;
        }
    }
    let (l, r) = idx.split_at_mut(split);
    let left = grow(x, l, depth + 1, limit, rng, nodes);
    let right = grow(x, r, depth + 1, limit, rng, nodes);
    nodes[me] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    me
}

impl IsolationForest {
    pub fn fit(x: &Tensor, trees: usize, subsample: usize, seed: u64) -> Result<Self> {
        let n = x.rows();
        if n < 2 {
            return Err(Error::InvalidInput("isolation forest needs at least 2 samples".into()));
        }
        if trees == 0 || subsample < 2 {
            return Err(Error::Config(
                "isolation forest needs trees >= 1 and subsample >= 2".into(),
            ));
        }
        let psi = subsample.min(n);
        let limit = (psi as f64).log2().ceil() as usize;
        let trees = (0..trees)
            .map(|t| {
                let mut rng = rng_from(derive_indexed(seed, t as u64));
                let mut idx = sample(&mut rng, n, psi).into_vec();
                let mut nodes = Vec::new();
                grow(x, &mut idx, 0, limit, &mut rng, &mut nodes);
                nodes
            })
            .collect();
        Ok(IsolationForest { subsample: psi, trees })
    }

    pub fn path_length(tree: &[Node], x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match tree[node] {
                Node::Leaf { size } => return depth + average_path_length(size),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }

    /// `2^(−E[h(x)]/c(ψ))`, in (0, 1].
    pub fn score(&self, x: &[f64]) -> f64 {
        let mean = self.trees.iter().map(|t| Self::path_length(t, x)).sum::<f64>() / self.trees.len() as f64;
        2f64.powf(-mean / average_path_length(self.subsample))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn path_normalisation() {
        assert_eq!(average_path_length(2), 1.0);
        assert_eq!(average_path_length(1), 0.0);
        assert!((average_path_length(3) - (2.0 * 1.5 - 4.0 / 3.0)).abs() < 1e-15);
        let h255: f64 = (1..=255).map(|i| 1.0 / i as f64).sum();
        assert!((average_path_length(256) - (2.0 * h255 - 510.0 / 256.0)).abs() < 1e-12);
    }

    fn blobs_with_outliers() -> Tensor {
        let mut rng = rng_from(7);
        let mut rows = Vec::new();
        for centre in [-10.0, 10.0] {
            for _ in 0..200 {
                rows.push(
                    (0..4)
                        .map(|_| centre + Distribution::<f64>::sample(&StandardNormal, &mut rng))
                        .collect::<Vec<f64>>(),
                );
            }
        }
        for k in 0..5 {
            let mut r = vec![0.0; 4];
            r[k % 4] = if k % 2 == 0 { 100.0 } else { -100.0 };
            r[(k + 1) % 4] = 60.0;
            rows.push(r);
        }
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn far_outliers_rank_highest() {
        let x = blobs_with_outliers();
        let f = IsolationForest::fit(&x, 100, 256, 1).unwrap();
        let scores: Vec<f64> = (0..x.rows()).map(|i| f.score(x.row(i))).collect();
        let mut order: Vec<usize> = (0..x.rows()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut top: Vec<usize> = order[..5].to_vec();
        top.sort();
        assert_eq!(top, vec![400, 401, 402, 403, 404]);
        assert!(scores.iter().all(|&s| s > 0.0 && s <= 1.0));
    }

    #[test]
    fn training_point_scores_below_a_distant_point() {
        let x = blobs_with_outliers();
        let f = IsolationForest::fit(&x, 100, 256, 2).unwrap();
        let far: Vec<f64> = x.row(0).iter().map(|v| v + 100.0).collect();
        assert!(f.score(x.row(0)) < f.score(&far));
    }

    #[test]
    fn deterministic_per_seed() {
        let x = blobs_with_outliers();
        assert_eq!(
            IsolationForest::fit(&x, 10, 64, 3).unwrap(),
            IsolationForest::fit(&x, 10, 64, 3).unwrap()
        );
    }
}
