//! Time2Vec embedding of a multivariate window.
//!
//! An `N×F` window `X` maps to an `N×K` matrix whose first column is the
//! affine term `X·ω₀ + b₀` and whose remaining `K−1` columns are
//! `sin(X·ω + b)`, elementwise. `ω` is `F×(K−1)` and `b` is `N×(K−1)`, so the
//! biases are per timestep. The matrix is flattened row-major into the
//! `N·K` embedding vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{matmul, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct T2vLayer {
    /// ω₀, `F×1`
    pub linear_weight: Tensor,
    /// b₀, `N×1`
    pub linear_bias: Tensor,
    /// ω, `F×(K−1)`
    pub periodic_weight: Tensor,
    /// b, `N×(K−1)`
    pub periodic_bias: Tensor,
}

/// Gradients produced by [`T2vLayer::backward`].
#[derive(Clone, Debug)]
pub struct T2vGrads {
    pub input: Tensor,
    pub linear_weight: Tensor,
    pub linear_bias: Tensor,
    pub periodic_weight: Tensor,
    pub periodic_bias: Tensor,
}

impl T2vLayer {
    pub fn new(
        linear_weight: Tensor,
        linear_bias: Tensor,
        periodic_weight: Tensor,
        periodic_bias: Tensor,
    ) -> Result<Self> {
        linear_weight.expect_ndim(2, "t2v ω₀")?;
        periodic_weight.expect_ndim(2, "t2v ω")?;
        let f = linear_weight.shape()[0];
        let k1 = periodic_weight.shape()[1];
        let n = linear_bias.rows();
        if k1 == 0 {
            return Err(Error::Config("t2v: K must be at least 2".into()));
        }
        linear_weight.expect_shape(&[f, 1], "t2v ω₀")?;
        linear_bias.expect_shape(&[n, 1], "t2v b₀")?;
        periodic_weight.expect_shape(&[f, k1], "t2v ω")?;
        periodic_bias.expect_shape(&[n, k1], "t2v b")?;
        let layer = T2vLayer {
            linear_weight,
            linear_bias,
            periodic_weight,
            periodic_bias,
        };
        for p in [
            &layer.linear_weight,
            &layer.linear_bias,
            &layer.periodic_weight,
            &layer.periodic_bias,
        ] {
            p.check_finite("t2v parameters")?;
        }
        Ok(layer)
    }

    /// Weights uniform in `[−1/√F, 1/√F]`, biases zero.
    pub fn init(steps: usize, features: usize, width: usize, rng: &mut impl Rng) -> Result<Self> {
        if width < 2 {
            return Err(Error::Config(format!("t2v: K must be at least 2, got {width}")));
        }
        if steps == 0 || features == 0 {
            return Err(Error::Config("t2v: N and F must be positive".into()));
        }
        let limit = 1.0 / (features as f64).sqrt();
        let mut draw = |shape: &[usize]| Tensor::from_fn(shape, |_| rng.random_range(-limit..=limit));
        let linear_weight = draw(&[features, 1]);
        let periodic_weight = draw(&[features, width - 1]);
        Self::new(
            linear_weight,
            Tensor::zeros(&[steps, 1]),
            periodic_weight,
            Tensor::zeros(&[steps, width - 1]),
        )
    }

    pub fn zeros(steps: usize, features: usize, width: usize) -> Result<Self> {
        if width < 2 {
            return Err(Error::Config(format!("t2v: K must be at least 2, got {width}")));
        }
        Self::new(
            Tensor::zeros(&[features, 1]),
            Tensor::zeros(&[steps, 1]),
            Tensor::zeros(&[features, width - 1]),
            Tensor::zeros(&[steps, width - 1]),
        )
    }

    #[cfg(test)]
    pub(crate) fn randomize_biases(mut self, rng: &mut impl Rng) -> Self {
        for v in self.linear_bias.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        for v in self.periodic_bias.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        self
    }

    /// N
    pub fn steps(&self) -> usize {
        self.linear_bias.shape()[0]
    }

    /// F
    pub fn features(&self) -> usize {
        self.linear_weight.shape()[0]
    }

    /// K
    pub fn width(&self) -> usize {
        self.periodic_weight.shape()[1] + 1
    }

    pub fn embedding_len(&self) -> usize {
        self.steps() * self.width()
    }

    pub(crate) fn check_input(&self, x: &Tensor) -> Result<()> {
        x.expect_shape(&[self.steps(), self.features()], "t2v input")
    }

    /// `X·ω + b`, the argument of the sine columns.
    fn periodic_preactivation(&self, x: &Tensor) -> Result<Tensor> {
        let mut z = matmul(x, &self.periodic_weight)?;
        z.add_assign(&self.periodic_bias)?;
        Ok(z)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let (n, k) = (self.steps(), self.width());
        let mut lin = matmul(x, &self.linear_weight)?;
        lin.add_assign(&self.linear_bias)?;
        let z = self.periodic_preactivation(x)?;
        let mut out = Vec::with_capacity(n * k);
        for i in 0..n {
            out.push(lin.data()[i]);
            out.extend(z.row(i).iter().map(|v| v.sin()));
        }
        Tensor::matrix(n, k, out)
    }

    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<T2vGrads> {
        self.check_input(x)?;
        let (n, f, k) = (self.steps(), self.features(), self.width());
        upstream.expect_shape(&[n, k], "t2v upstream")?;
        let z = self.periodic_preactivation(x)?;

        // Column 0 is linear; sine columns are gated by cos of their pre-activation.
        let g_lin: Vec<f64> = (0..n).map(|i| upstream.at(i, 0)).collect();
        let mut g_per = vec![0.0; n * (k - 1)];
        for i in 0..n {
            for j in 0..k - 1 {
                g_per[i * (k - 1) + j] = upstream.at(i, j + 1) * z.at(i, j).cos();
            }
        }
        let g_lin = Tensor::matrix(n, 1, g_lin)?;
        let g_per = Tensor::matrix(n, k - 1, g_per)?;

        let xt = x.transpose()?;
        let linear_weight = matmul(&xt, &g_lin)?;
        let periodic_weight = matmul(&xt, &g_per)?;
        let mut input = matmul(&g_lin, &self.linear_weight.transpose()?)?;
        input.add_assign(&matmul(&g_per, &self.periodic_weight.transpose()?)?)?;
        debug_assert_eq!(input.shape(), &[n, f]);
        Ok(T2vGrads {
            input,
            linear_weight,
            linear_bias: g_lin,
            periodic_weight,
            periodic_bias: g_per,
        })
    }
}

/// Row-major flattening of an `N×K` embedding matrix.
pub fn flatten(m: &Tensor) -> Result<Tensor> {
    m.expect_ndim(2, "flatten")?;
    m.reshape(&[m.len()])
}

pub fn unflatten(v: &Tensor, steps: usize, width: usize) -> Result<Tensor> {
    v.reshape(&[steps, width])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand::Rng;

    /// Entrywise evaluation of the embedding, independent of the matrix code path.
    pub(crate) fn reference(layer: &T2vLayer, x: &Tensor) -> Tensor {
        let (n, f, k) = (layer.steps(), layer.features(), layer.width());
        let mut out = Tensor::zeros(&[n, k]);
        for r in 0..n {
            let mut lin = layer.linear_bias.data()[r];
            for c in 0..f {
                lin += x.data()[r * f + c] * layer.linear_weight.data()[c];
            }
            out.set(r, 0, lin);
            for i in 1..k {
                let mut arg = layer.periodic_bias.data()[r * (k - 1) + (i - 1)];
                for c in 0..f {
                    arg += x.data()[r * f + c] * layer.periodic_weight.data()[c * (k - 1) + (i - 1)];
                }
                out.set(r, i, arg.sin());
            }
        }
        out
    }

    #[test]
    fn zero_layer_gives_zero_embedding() {
        let layer = T2vLayer::zeros(4, 3, 5).unwrap();
        let x = Tensor::from_fn(&[4, 3], |i| i as f64 - 3.0);
        assert!(layer.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_linear_column() {
        let layer = T2vLayer::new(
            Tensor::matrix(1, 1, vec![1.0]).unwrap(),
            Tensor::zeros(&[2, 1]),
            Tensor::zeros(&[1, 1]),
            Tensor::zeros(&[2, 1]),
        )
        .unwrap();
        let x = Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap();
        let y = layer.forward(&x).unwrap();
        assert_eq!((y.at(0, 0), y.at(1, 0)), (3.0, 4.0));
    }

    #[test]
    fn random_layer_matches_entrywise_reference() {
        let mut rng = rng_from(21);
        let layer = T2vLayer::init(5, 3, 4, &mut rng).unwrap().randomize_biases(&mut rng);
        let x = Tensor::from_fn(&[5, 3], |_| rng.random_range(-2.0..2.0));
        let got = layer.forward(&x).unwrap();
        assert!(got.max_abs_diff(&reference(&layer, &x)) < 1e-12);
    }

    #[test]
    fn flatten_layout() {
        let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(flatten(&m).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
        let mut rng = rng_from(1);
        let big = Tensor::from_fn(&[100, 7], |_| rng.random());
        let v = flatten(&big).unwrap();
        assert_eq!(v.len(), 700);
        assert_eq!(unflatten(&v, 100, 7).unwrap(), big);
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = rng_from(2);
        let layer = T2vLayer::init(4, 2, 3, &mut rng).unwrap();
        let x = Tensor::from_fn(&[4, 2], |_| rng.random());
        let g = layer.backward(&x, &Tensor::zeros(&[4, 3])).unwrap();
        for t in [
            &g.input,
            &g.linear_weight,
            &g.linear_bias,
            &g.periodic_weight,
            &g.periodic_bias,
        ] {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_weight_grad_is_xt_upstream() {
        let mut rng = rng_from(3);
        let layer = T2vLayer::init(6, 3, 2, &mut rng).unwrap();
        let x = Tensor::from_fn(&[6, 3], |_| rng.random_range(-1.0..1.0));
        let up = Tensor::from_fn(&[6, 2], |_| rng.random_range(-1.0..1.0));
        let g = layer.backward(&x, &up).unwrap();
        for c in 0..3 {
            let expected: f64 = (0..6).map(|r| x.at(r, c) * up.at(r, 0)).sum();
            assert!((g.linear_weight.data()[c] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let layer = T2vLayer::zeros(4, 3, 2).unwrap();
        assert!(matches!(layer.forward(&Tensor::zeros(&[4, 2])), Err(Error::Shape(_))));
        assert!(T2vLayer::zeros(4, 3, 1).is_err());
    }

    proptest! {
        #[test]
        fn periodic_columns_bounded_and_linear_column_affine(seed in any::<u64>(), scale in 0.1f64..100.0) {
            let mut rng = rng_from(seed);
            let layer = T2vLayer::init(6, 3, 5, &mut rng).unwrap().randomize_biases(&mut rng);
            let x1 = Tensor::from_fn(&[6, 3], |_| rng.random_range(-scale..scale));
            let x2 = Tensor::from_fn(&[6, 3], |_| rng.random_range(-scale..scale));
            let mut sum = x1.clone();
            sum.add_assign(&x2).unwrap();
            let y1 = layer.forward(&x1).unwrap();
            let y2 = layer.forward(&x2).unwrap();
            let ys = layer.forward(&sum).unwrap();
            let y0 = layer.forward(&Tensor::zeros(&[6, 3])).unwrap();
            for r in 0..6 {
                for c in 1..5 {
                    prop_assert!(y1.at(r, c).abs() <= 1.0);
                }
                let lhs = ys.at(r, 0) + y0.at(r, 0);
                let rhs = y1.at(r, 0) + y2.at(r, 0);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            }
            prop_assert_eq!(flatten(&y1).unwrap().len(), 30);
        }
    }
}
