//! Small dense symmetric-matrix routines: covariance, Cholesky, cyclic
//! Jacobi eigendecomposition and PCA. Matrices are row-major `Vec<f64>`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn column_means(x: &Tensor, rows: &[usize]) -> Vec<f64> {
    let d = x.cols();
    let mut mean = vec![0.0; d];
    for &i in rows {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// `Σ (x_i − mean)(x_i − mean)ᵀ / divisor` over the selected rows.
pub fn covariance(x: &Tensor, rows: &[usize], mean: &[f64], divisor: f64) -> Vec<f64> {
    let d = x.cols();
    let mut cov = vec![0.0; d * d];
    let mut centred = vec![0.0; d];
    for &i in rows {
        for ((c, v), m) in centred.iter_mut().zip(x.row(i)).zip(mean) {
            *c = v - m;
        }
        for a in 0..d {
            let ca = centred[a];
            if ca == 0.0 {
                continue;
            }
            let row = &mut cov[a * d..a * d + a + 1];
            for (o, cb) in row.iter_mut().zip(&centred[..=a]) {
                *o += ca * cb;
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = cov[a * d + b] / divisor;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    cov
}

/// Lower-triangular `L` with `L·Lᵀ = a`, or `None` if `a` is not positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            let v = a[i * n + j] - dot;
            if i == j {
                if !(v > 0.0) || !v.is_finite() {
                    return None;
                }
                l[i * n + i] = v.sqrt();
            } else {
                l[i * n + j] = v / l[j * n + j];
            }
        }
    }
    Some(l)
}

pub fn cholesky_logdet(l: &[f64], n: usize) -> f64 {
    (0..n).map(|i| 2.0 * l[i * n + i].ln()).sum()
}

/// `‖L⁻¹(x − mean)‖²` by forward substitution.
pub fn mahalanobis_sq(l: &[f64], mean: &[f64], x: &[f64]) -> f64 {
    let n = mean.len();
    let mut z = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * z[k]).sum();
        z[i] = (x[i] - mean[i] - s) / l[i * n + i];
        total += z[i] * z[i];
    }
    total
}

/// Eigenvalues (descending) and eigenvectors (rows of the second result,
/// matching order) of a symmetric `n×n` matrix by cyclic Jacobi rotations.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    // Row i of `vt` is the i-th eigenvector.
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|v| v * v).sum();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off <= 1e-30 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[p * n + k];
                    let akq = a[q * n + k];
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    a[p * n + k] = np;
                    a[k * n + p] = np;
                    a[q * n + k] = nq;
                    a[k * n + q] = nq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                let (lo, hi) = vt.split_at_mut(q * n);
                let (rp, rq) = (&mut lo[p * n..p * n + n], &mut hi[..n]);
                for (vp, vq) in rp.iter_mut().zip(rq.iter_mut()) {
                    let (x, y) = (*vp, *vq);
                    *vp = c * x - s * y;
                    *vq = s * x + c * y;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order.iter().flat_map(|&i| vt[i * n..(i + 1) * n].to_vec()).collect();
    (values, vectors)
}

/// Principal-component projection onto the leading `basis.cols()` directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `d×d′`, orthonormal columns ordered by explained variance.
    pub basis: Tensor,
    /// Variance along each retained component.
    pub variances: Vec<f64>,
    /// Fraction of total variance each retained component explains.
    pub explained_ratio: Vec<f64>,
}

impl Pca {
    pub fn fit(x: &Tensor, dims: usize) -> Result<Pca> {
        let (n, d) = (x.rows(), x.cols());
        if dims == 0 || dims > d {
            return Err(Error::Config(format!("cannot keep {dims} of {d} components")));
        }
        if n <= dims {
            return Err(Error::InvalidInput(format!(
                "PCA to {dims} dims needs more than {dims} samples, got {n}"
            )));
        }
        let rows: Vec<usize> = (0..n).collect();
        let mean = column_means(x, &rows);
        let cov = covariance(x, &rows, &mean, (n - 1) as f64);
        let (values, vectors) = jacobi_eigen(&cov, d);
        let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
        if !(values[dims - 1] > 1e-12 * values[0].max(f64::MIN_POSITIVE)) {
            return Err(Error::InvalidInput(format!("degenerate covariance: rank below {dims}")));
        }
        let mut basis = Tensor::zeros(&[d, dims]);
        for c in 0..dims {
            let v = &vectors[c * d..(c + 1) * d];
            // Deterministic sign: largest-magnitude entry positive.
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |m, e| if e.abs() > m.abs() { e } else { m });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            for (r, &e) in v.iter().enumerate() {
                basis.set(r, c, sign * e);
            }
        }
        Ok(Pca {
            mean,
            variances: values[..dims].to_vec(),
            explained_ratio: values[..dims].iter().map(|v| v / total).collect(),
            basis,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn project_row(&self, x: &[f64]) -> Vec<f64> {
        let k = self.output_dim();
        let mut out = vec![0.0; k];
        for (r, (v, m)) in x.iter().zip(&self.mean).enumerate() {
            let c = v - m;
            for (o, b) in out.iter_mut().zip(self.basis.row(r)) {
                *o += c * b;
            }
        }
        out
    }

    pub fn project(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "PCA expects {} dims, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let rows: Vec<f64> = (0..x.rows()).flat_map(|i| self.project_row(x.row(i))).collect();
        Tensor::matrix(x.rows(), self.output_dim(), rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.random_range(-1.0..1.0);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }

    #[test]
    fn jacobi_reconstructs_the_matrix() {
        let n = 7;
        let a = random_symmetric(n, 1);
        let (vals, vecs) = jacobi_eigen(&a, n);
        for w in vals.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|k| vecs[k * n + i] * vals[k] * vecs[k * n + j]).sum();
                assert!((r - a[i * n + j]).abs() < 1e-10);
                let dot: f64 = (0..n).map(|k| vecs[i * n + k] * vecs[j * n + k]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cholesky_and_mahalanobis() {
        let a = vec![4.0, 2.0, 2.0, 3.0];
        let l = cholesky(&a, 2).unwrap();
        assert_eq!(l, vec![2.0, 0.0, 1.0, 2.0f64.sqrt()]);
        assert!((cholesky_logdet(&l, 2) - 8.0f64.ln()).abs() < 1e-12);
        // Inverse of a is [[3, −2], [−2, 4]] / 8.
        let d = mahalanobis_sq(&l, &[0.0, 0.0], &[1.0, 1.0]);
        assert!((d - 3.0 / 8.0).abs() < 1e-12);
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn line_data_is_rank_one() {
        let mut rng = rng_from(3);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let t: f64 = rng.random_range(-5.0..5.0);
                vec![t, 2.0 * t + 1.0, -t]
            })
            .collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let p = Pca::fit(&x, 1).unwrap();
        assert!(p.explained_ratio[0] > 0.999);
        assert!(Pca::fit(&x, 2).is_err());
    }

    fn power_iteration(cov: &[f64], d: usize, deflate: &[Vec<f64>]) -> Vec<f64> {
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + i as f64 * 0.1).collect();
        for _ in 0..5000 {
            let mut w: Vec<f64> = (0..d).map(|i| (0..d).map(|j| cov[i * d + j] * v[j]).sum()).collect();
            for u in deflate {
                let dot: f64 = w.iter().zip(u).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
            v = w.iter().map(|a| a / norm).collect();
        }
        v
    }

    #[test]
    fn matches_power_iteration() {
        let mut rng = rng_from(4);
        let scales = [5.0, 3.0, 2.0, 1.0, 0.5];
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| scales.iter().map(|s| s * rng.random_range(-1.0..1.0)).collect())
            .collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let p = Pca::fit(&x, 5).unwrap();
        let all: Vec<usize> = (0..50).collect();
        let cov = covariance(&x, &all, &column_means(&x, &all), 49.0);
        let mut found: Vec<Vec<f64>> = Vec::new();
        for c in 0..5 {
            let v = power_iteration(&cov, 5, &found);
            let dot: f64 = (0..5).map(|r| p.basis.at(r, c) * v[r]).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-8, "component {c}: |dot| = {}", dot.abs());
            found.push(v);
        }
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = (0..5).map(|r| p.basis.at(r, i) * p.basis.at(r, j)).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
    }
}
