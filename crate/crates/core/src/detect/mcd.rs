use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::linalg::{cholesky, cholesky_logdet, column_means, covariance, mahalanobis_sq};
use crate::error::{Error, Result};
use crate::pipeline::quantile;
use crate::rng::{derive_indexed, rng_from};
use crate::tensor::Tensor;

const KEEP_BEST: usize = 10;
const MAX_CSTEPS: usize = 100;

/// Robust location and scatter from FastMCD with consistency correction and
/// one reweighting step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustCovariance {
    pub location: Vec<f64>,
    /// `d×d`, symmetric positive definite.
    pub covariance: Vec<f64>,
    /// Lower Cholesky factor of `covariance`.
    pub cholesky: Vec<f64>,
    /// Size of the raw MCD subset.
    pub support_size: usize,
}

struct Estimate {
    rows: Vec<usize>,
    mean: Vec<f64>,
    chol: Vec<f64>,
    logdet: f64,
}

/// Mean and Cholesky of the MLE covariance of `rows`; a vanishing ridge is
/// added when the subset is exactly singular.
fn estimate(x: &Tensor, rows: Vec<usize>) -> Result<Estimate> {
    let d = x.cols();
    let mean = column_means(x, &rows);
    let mut cov = covariance(x, &rows, &mean, rows.len() as f64);
    let scale = (0..d).map(|i| cov[i * d + i]).sum::<f64>() / d as f64;
    let mut ridge = 1e-12 * scale.max(1e-300);
    for _ in 0..20 {
        if let Some(chol) = cholesky(&cov, d) {
            let logdet = cholesky_logdet(&chol, d);
            return Ok(Estimate {
                rows,
                mean,
                chol,
                logdet,
            });
        }
        for i in 0..d {
            cov[i * d + i] += ridge;
        }
        ridge *= 10.0;
    }
    Err(Error::InvalidInput("MCD subset covariance is singular".into()))
}

fn distances(x: &Tensor, e: &Estimate) -> Vec<f64> {
    (0..x.rows())
        .map(|i| mahalanobis_sq(&e.chol, &e.mean, x.row(i)))
        .collect()
}

fn c_step(x: &Tensor, e: &Estimate, h: usize) -> Result<Estimate> {
    let d = distances(x, e);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    order.truncate(h);
    order.sort_unstable();
    estimate(x, order)
}

impl RobustCovariance {
    pub fn fit(x: &Tensor, starts: usize, seed: u64) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if n <= d + 1 {
            return Err(Error::InvalidInput(format!(
                "MCD in {d} dims needs more than {} samples, got {n}",
                d + 1
            )));
        }
        let h = (n + d).div_ceil(2);
        let mut candidates = Vec::with_capacity(starts.max(1));
        for s in 0..starts.max(1) {
            let mut rng = rng_from(derive_indexed(seed, s as u64));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut size = d + 1;
            let mut e = loop {
                let rows = perm[..size].to_vec();
                let mean = column_means(x, &rows);
                let cov = covariance(x, &rows, &mean, size as f64);
                if let Some(chol) = cholesky(&cov, d) {
                    let logdet = cholesky_logdet(&chol, d);
                    break Estimate {
                        rows,
                        mean,
                        chol,
                        logdet,
                    };
                }
                if size >= h {
                    break estimate(x, perm[..h].to_vec())?;
                }
                size += 1;
            };
            for _ in 0..2 {
                e = c_step(x, &e, h)?;
            }
            candidates.push(e);
        }
        candidates.sort_by(|a, b| a.logdet.total_cmp(&b.logdet));
        candidates.truncate(KEEP_BEST);
        let mut best: Option<Estimate> = None;
        for mut e in candidates {
            for _ in 0..MAX_CSTEPS {
                let next = c_step(x, &e, h)?;
                let done = next.rows == e.rows || next.logdet >= e.logdet;
                if next.logdet <= e.logdet {
                    e = next;
                }
                if done {
                    break;
                }
            }
            if best.as_ref().is_none_or(|b| e.logdet < b.logdet) {
                best = Some(e);
            }
        }
        let raw = best.expect("at least one start");

        // Consistency correction of the raw scatter.
        let chi2 = ChiSquared::new(d as f64).map_err(|e| Error::Config(e.to_string()))?;
        let dist = distances(x, &raw);
        let factor = quantile(&dist, 0.5) / chi2.inverse_cdf(0.5);
        let cutoff = chi2.inverse_cdf(0.975) * factor;
        let keep: Vec<usize> = (0..n).filter(|&i| dist[i] <= cutoff).collect();
        let keep = if keep.len() > d { keep } else { raw.rows.clone() };

        let location = column_means(x, &keep);
        let covariance = covariance(x, &keep, &location, keep.len() as f64);
        let e = estimate(x, keep)?;
        Ok(RobustCovariance {
            location,
            covariance,
            cholesky: e.chol,
            support_size: raw.rows.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    /// Mahalanobis distance under the robust estimate.
    pub fn score(&self, x: &[f64]) -> f64 {
        mahalanobis_sq(&self.cholesky, &self.location, x).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::linalg::jacobi_eigen;
    use rand_distr::{Distribution, StandardNormal};

    fn contaminated(seed: u64) -> Tensor {
        let mut rng = rng_from(seed);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|i| {
                let z: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
                if i % 10 == 0 {
                    z.iter().map(|v| v + 20.0).collect()
                } else {
                    vec![z[0] * 2.0, z[0] + z[1], z[2] * 0.5]
                }
            })
            .collect();
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn resists_contamination() {
        let x = contaminated(1);
        let m = RobustCovariance::fit(&x, 30, 5).unwrap();
        assert_eq!(m.support_size, 152);
        assert!(m.location.iter().all(|v| v.abs() < 0.5), "{:?}", m.location);
        for i in 0..300 {
            let s = m.score(x.row(i));
            if i % 10 == 0 {
                assert!(s > 10.0);
            }
        }
    }

    #[test]
    fn centre_scores_zero_and_covariance_is_psd() {
        let x = contaminated(2);
        let m = RobustCovariance::fit(&x, 10, 6).unwrap();
        assert_eq!(m.score(&m.location.clone()), 0.0);
        let d = m.dim();
        for i in 0..d {
            for j in 0..d {
                assert_eq!(m.covariance[i * d + j], m.covariance[j * d + i]);
            }
        }
        let (vals, _) = jacobi_eigen(&m.covariance, d);
        assert!(vals.iter().all(|&v| v >= -1e-10));
    }

    #[test]
    fn too_few_samples() {
        assert!(RobustCovariance::fit(&Tensor::zeros(&[4, 3]), 5, 0).is_err());
    }
}
