use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lof::sq_dist;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const TAU: f64 = 1e-12;

/// One-class SVM with an RBF kernel, fitted by SMO on the dual
/// `min ½αᵀKα  s.t.  0 ≤ αᵢ ≤ 1/(νn), Σαᵢ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcSvm {
    pub nu: f64,
    pub gamma: f64,
    /// Upper bound on each coefficient, `1/(νn)`.
    pub bound: f64,
    pub support: Tensor,
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `1/(d·var(X))` over all entries of `x`.
pub fn scale_gamma(x: &Tensor) -> f64 {
    let n = x.len() as f64;
    let mean = x.data().iter().sum::<f64>() / n;
    let var = x.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let var = if var > 0.0 { var } else { 1.0 };
    1.0 / (x.cols() as f64 * var)
}

fn kernel_matrix(x: &Tensor, gamma: f64) -> Vec<f64> {
    let n = x.rows();
    let mut k = vec![0.0; n * n];
    k.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (-gamma * sq_dist(x.row(i), x.row(j))).exp();
        }
    });
    k
}

impl OcSvm {
    pub fn fit(x: &Tensor, nu: f64, gamma: f64, tol: f64, max_iter: usize) -> Result<Self> {
        let n = x.rows();
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::Config(format!("nu must lie in (0, 1], got {nu}")));
        }
        if !(gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        if n < 2 {
            return Err(Error::InvalidInput("one-class SVM needs at least 2 samples".into()));
        }
        let q = kernel_matrix(x, gamma);
        let bound = 1.0 / (nu * n as f64);
        let mut alpha = vec![0.0; n];
        let full = ((nu * n as f64).floor() as usize).min(n);
        alpha[..full].iter_mut().for_each(|a| *a = bound);
        if full < n {
            alpha[full] = 1.0 - full as f64 * bound;
        }
        let mut grad = vec![0.0; n];
        for (j, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                for (g, qv) in grad.iter_mut().zip(&q[j * n..(j + 1) * n]) {
                    *g += a * qv;
                }
            }
        }

        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iter {
            let (mut i, mut up) = (usize::MAX, f64::NEG_INFINITY);
            let (mut j, mut low) = (usize::MAX, f64::INFINITY);
            for t in 0..n {
                if alpha[t] < bound && -grad[t] > up {
                    up = -grad[t];
                    i = t;
                }
                if alpha[t] > 0.0 && -grad[t] < low {
                    low = -grad[t];
                    j = t;
                }
            }
            if i == usize::MAX || j == usize::MAX || up - low < tol {
                converged = true;
                break;
            }
            let eta = (q[i * n + i] + q[j * n + j] - 2.0 * q[i * n + j]).max(TAU);
            let delta = ((grad[j] - grad[i]) / eta).min(bound - alpha[i]).min(alpha[j]);
            alpha[i] += delta;
            alpha[j] -= delta;
            if bound - alpha[i] < 1e-15 * bound {
                alpha[i] = bound;
            }
            if alpha[j] < 1e-15 * bound {
                alpha[j] = 0.0;
            }
            let (qi, qj) = (&q[i * n..(i + 1) * n], &q[j * n..(j + 1) * n]);
            for ((g, a), b) in grad.iter_mut().zip(qi).zip(qj) {
                *g += delta * (a - b);
            }
            iterations += 1;
        }

        let free: Vec<f64> = (0..n)
            .filter(|&t| alpha[t] > 0.0 && alpha[t] < bound)
            .map(|t| grad[t])
            .collect();
        let rho = if free.is_empty() {
            let at_bound = (0..n)
                .filter(|&t| alpha[t] >= bound)
                .map(|t| grad[t])
                .fold(f64::NEG_INFINITY, f64::max);
            let at_zero = (0..n)
                .filter(|&t| alpha[t] <= 0.0)
                .map(|t| grad[t])
                .fold(f64::INFINITY, f64::min);
            match (at_bound.is_finite(), at_zero.is_finite()) {
                (true, true) => 0.5 * (at_bound + at_zero),
                (true, false) => at_bound,
                (false, true) => at_zero,
                (false, false) => 0.0,
            }
        } else {
            free.iter().sum::<f64>() / free.len() as f64
        };

        let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
        let support = Tensor::from_rows(&sv.iter().map(|&t| x.row(t).to_vec()).collect::<Vec<_>>())?;
        Ok(OcSvm {
            nu,
            gamma,
            bound,
            support,
            alpha: sv.iter().map(|&t| alpha[t]).collect(),
            rho,
            iterations,
            converged,
        })
    }

    /// `ρ − Σ αᵢ k(xᵢ, x)`; positive outside the learned support.
    pub fn score(&self, x: &[f64]) -> f64 {
        let s: f64 = self
            .alpha
            .iter()
            .enumerate()
            .map(|(i, a)| a * (-self.gamma * sq_dist(self.support.row(i), x)).exp())
            .sum();
        self.rho - s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = rng_from(seed);
        Tensor::from_fn(&[n, d], |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn dual_constraints_and_nu_property() {
        let x = gaussian(300, 3, 1);
        let nu = 0.05;
        let m = OcSvm::fit(&x, nu, scale_gamma(&x), 1e-4, 100_000).unwrap();
        assert!(m.converged);
        assert!((m.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(m.alpha.iter().all(|&a| a >= 0.0 && a <= m.bound + 1e-15));
        let outside = (0..300).filter(|&i| m.score(x.row(i)) > 1e-6).count() as f64 / 300.0;
        assert!(outside <= nu + 0.02, "fraction outside {outside}");
        assert!(m.alpha.len() as f64 >= nu * 300.0);
    }

    #[test]
    fn far_points_score_higher() {
        let x = gaussian(200, 2, 2);
        let m = OcSvm::fit(&x, 0.1, 0.5, 1e-4, 100_000).unwrap();
        assert!(m.score(&[8.0, 8.0]) > m.score(&[0.0, 0.0]));
        assert!(m.score(&[8.0, 8.0]) > 0.0);
    }

    #[test]
    fn bad_hyperparameters() {
        let x = gaussian(20, 2, 3);
        assert!(OcSvm::fit(&x, 0.0, 1.0, 1e-4, 10).is_err());
        assert!(OcSvm::fit(&x, 0.5, -1.0, 1e-4, 10).is_err());
    }
}
