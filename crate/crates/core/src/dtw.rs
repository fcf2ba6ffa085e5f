//! Dependent multivariate dynamic time warping with Euclidean local cost.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DtwParams {
    /// Sakoe-Chiba band radius; `None` searches the full grid.
    pub band: Option<usize>,
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    a.expect_ndim(2, "dtw")?;
    b.expect_ndim(2, "dtw")?;
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "dtw: feature counts differ ({} vs {})",
            a.cols(),
            b.cols()
        )));
    }
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::InvalidInput("dtw: empty series".into()));
    }
    Ok(())
}

fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// DTW between two `N×F` series (lengths may differ).
pub fn dtw_distance(a: &Tensor, b: &Tensor, params: DtwParams) -> Result<f64> {
    check_pair(a, b)?;
    let (na, nb) = (a.rows(), b.rows());
    let mut prev = vec![f64::INFINITY; nb + 1];
    let mut cur = vec![f64::INFINITY; nb + 1];
    prev[0] = 0.0;
    for i in 1..=na {
        cur.fill(f64::INFINITY);
        let (lo, hi) = match params.band {
            // Band is measured on the diagonal rescaled to the shorter axis.
            Some(r) => {
                let centre = (i - 1) * nb / na;
                (centre.saturating_sub(r) + 1, (centre + r + 1).min(nb))
            }
            None => (1, nb),
        };
        let ar = a.row(i - 1);
        for j in lo..=hi {
            let best = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = euclidean(ar, b.row(j - 1)) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[nb];
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::InvalidInput(
            "dtw: band too narrow to connect the endpoints".into(),
        ))
    }
}

/// Largest `Na·Nb` accepted by [`dtw_bruteforce`].
pub const BRUTEFORCE_LIMIT: usize = 64;

/// Minimum over every monotone alignment path, by exhaustive enumeration.
pub fn dtw_bruteforce(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_pair(a, b)?;
    let (na, nb) = (a.rows(), b.rows());
    if na * nb > BRUTEFORCE_LIMIT {
        return Err(Error::InvalidInput(format!(
            "dtw_bruteforce: {na}x{nb} exceeds the {BRUTEFORCE_LIMIT}-cell limit"
        )));
    }
    fn walk(a: &Tensor, b: &Tensor, i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + euclidean(a.row(i), b.row(j));
        let (na, nb) = (a.rows(), b.rows());
        if i + 1 == na && j + 1 == nb {
            *best = best.min(acc);
            return;
        }
        if i + 1 < na {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < nb {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < na && j + 1 < nb {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    Ok(best)
}
