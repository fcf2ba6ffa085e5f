use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{matmul_into, Tensor};
use crate::error::{Error, Result};
use crate::t2v::T2vLayer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    T2v,
    Conv1d,
    Dense,
    Relu,
    Sin,
    Flatten,
    Reshape,
    Upsample,
}

/// 1-D convolution over the time axis of an `N×C_in` input with "same" zero
/// padding. With stride `s` the output has `N/s` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    /// `C_out × C_in × k`
    pub kernels: Tensor,
    /// `C_out`
    pub bias: Tensor,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(kernels: Tensor, bias: Tensor, stride: usize) -> Result<Self> {
        kernels.expect_ndim(3, "conv1d kernels")?;
        let (c_out, k) = (kernels.shape()[0], kernels.shape()[2]);
        if k % 2 == 0 {
            return Err(Error::Config(format!("conv1d kernel size must be odd, got {k}")));
        }
        if stride == 0 {
            return Err(Error::Config("conv1d stride must be >= 1".into()));
        }
        bias.expect_shape(&[c_out], "conv1d bias")?;
        Ok(Conv1d { kernels, bias, stride })
    }

    /// Glorot-uniform kernels, zero bias.
    pub fn init(c_in: usize, c_out: usize, k: usize, stride: usize, rng: &mut impl Rng) -> Result<Self> {
        let limit = (6.0 / ((c_in + c_out) * k) as f64).sqrt();
        let kernels = Tensor::from_fn(&[c_out, c_in, k], |_| rng.random_range(-limit..limit));
        Self::new(kernels, Tensor::zeros(&[c_out]), stride)
    }

    pub fn c_out(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[2]
    }

    fn out_len(&self, n: usize) -> Result<usize> {
        if n % self.stride != 0 {
            return Err(Error::Shape(format!(
                "conv1d: length {n} is not divisible by stride {}",
                self.stride
            )));
        }
        Ok(n / self.stride)
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        x.expect_ndim(2, "conv1d input")?;
        if x.cols() != self.c_in() {
            return Err(Error::Shape(format!(
                "conv1d: expected {} input channels, got {}",
                self.c_in(),
                x.cols()
            )));
        }
        let n = x.rows();
        Ok((n, self.out_len(n)?))
    }

    /// Kernel re-laid out as `[k][C_in][C_out]` so each tap is a dense C_in×C_out matrix.
    fn taps(&self) -> Vec<f64> {
        let (co, ci, k) = (self.c_out(), self.c_in(), self.kernel_size());
        let w = self.kernels.data();
        let mut taps = vec![0.0; k * ci * co];
        for o in 0..co {
            for c in 0..ci {
                for j in 0..k {
                    taps[(j * ci + c) * co + o] = w[(o * ci + c) * k + j];
                }
            }
        }
        taps
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, n_out) = self.check_input(x)?;
        let (co, ci, k) = (self.c_out(), self.c_in(), self.kernel_size());
        let half = (k / 2) as isize;
        let taps = self.taps();
        let mut out = vec![0.0; n_out * co];
        for t in 0..n_out {
            let row = &mut out[t * co..(t + 1) * co];
            row.copy_from_slice(self.bias.data());
            let centre = (t * self.stride) as isize;
            for j in 0..k {
                let src = centre + j as isize - half;
                if src < 0 || src >= n as isize {
                    continue;
                }
                let xr = x.row(src as usize);
                matmul_into(xr, &taps[j * ci * co..(j + 1) * ci * co], row, 1, ci, co);
            }
        }
        Tensor::matrix(n_out, co, out)
    }

    /// Returns (input grad, [kernel grad, bias grad]).
    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (n, n_out) = self.check_input(x)?;
        let (co, ci, k) = (self.c_out(), self.c_in(), self.kernel_size());
        upstream.expect_shape(&[n_out, co], "conv1d upstream")?;
        let half = (k / 2) as isize;
        let w = self.kernels.data();
        let g = upstream.data();
        let mut dx = vec![0.0; n * ci];
        let mut dw = vec![0.0; co * ci * k];
        let mut db = vec![0.0; co];
        for t in 0..n_out {
            let grow = &g[t * co..(t + 1) * co];
            for (d, gv) in db.iter_mut().zip(grow) {
                *d += gv;
            }
            let centre = (t * self.stride) as isize;
            for j in 0..k {
                let src = centre + j as isize - half;
                if src < 0 || src >= n as isize {
                    continue;
                }
                let src = src as usize;
                let xr = x.row(src);
                for (o, &go) in grow.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    for c in 0..ci {
                        let idx = (o * ci + c) * k + j;
                        dw[idx] += go * xr[c];
                        dx[src * ci + c] += go * w[idx];
                    }
                }
            }
        }
        Ok((
            Tensor::matrix(n, ci, dx)?,
            vec![Tensor::new(vec![co, ci, k], dw)?, Tensor::vector(db)],
        ))
    }
}

/// Affine map `x·W (+ b)` applied row-wise; `W` is `in × out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Option<Tensor>) -> Result<Self> {
        weight.expect_ndim(2, "dense weight")?;
        if let Some(b) = &bias {
            b.expect_shape(&[weight.shape()[1]], "dense bias")?;
        }
        Ok(Dense { weight, bias })
    }

    pub fn init(d_in: usize, d_out: usize, with_bias: bool, rng: &mut impl Rng) -> Result<Self> {
        let limit = (6.0 / (d_in + d_out) as f64).sqrt();
        let weight = Tensor::from_fn(&[d_in, d_out], |_| rng.random_range(-limit..limit));
        Self::new(weight, with_bias.then(|| Tensor::zeros(&[d_out])))
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[1]
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.ndim() > 2 || x.cols() != self.d_in() {
            return Err(Error::Shape(format!(
                "dense: expected trailing dimension {}, got shape {:?}",
                self.d_in(),
                x.shape()
            )));
        }
        Ok(())
    }

    fn out_shape(&self, in_shape: &[usize]) -> Vec<usize> {
        let mut s = in_shape.to_vec();
        *s.last_mut().expect("non-empty") = self.d_out();
        s
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let m = x.rows();
        let q = self.d_out();
        let mut out = vec![0.0; m * q];
        if let Some(b) = &self.bias {
            for row in out.chunks_exact_mut(q) {
                row.copy_from_slice(b.data());
            }
        }
        matmul_into(x.data(), self.weight.data(), &mut out, m, self.d_in(), q);
        Tensor::new(self.out_shape(x.shape()), out)
    }

    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        self.check_input(x)?;
        upstream.expect_shape(&self.out_shape(x.shape()), "dense upstream")?;
        let (m, p, q) = (x.rows(), self.d_in(), self.d_out());
        let w = self.weight.data();
        let g = upstream.data();
        let xd = x.data();
        let mut dx = vec![0.0; m * p];
        let mut dw = vec![0.0; p * q];
        for i in 0..m {
            let grow = &g[i * q..(i + 1) * q];
            for kk in 0..p {
                let wrow = &w[kk * q..(kk + 1) * q];
                dx[i * p + kk] = wrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                let xv = xd[i * p + kk];
                if xv != 0.0 {
                    for (d, gv) in dw[kk * q..(kk + 1) * q].iter_mut().zip(grow) {
                        *d += xv * gv;
                    }
                }
            }
        }
        let mut grads = vec![Tensor::matrix(p, q, dw)?];
        if self.bias.is_some() {
            let mut db = vec![0.0; q];
            for row in g.chunks_exact(q) {
                for (d, gv) in db.iter_mut().zip(row) {
                    *d += gv;
                }
            }
            grads.push(Tensor::vector(db));
        }
        Ok((Tensor::new(x.shape().to_vec(), dx)?, grads))
    }
}

/// One entry of a network's layer stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    T2v(T2vLayer),
    Conv1d(Conv1d),
    Dense(Dense),
    Relu,
    Sin,
    Flatten,
    Reshape { shape: Vec<usize> },
    Upsample { factor: usize },
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::T2v(_) => LayerKind::T2v,
            Layer::Conv1d(_) => LayerKind::Conv1d,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Relu => LayerKind::Relu,
            Layer::Sin => LayerKind::Sin,
            Layer::Flatten => LayerKind::Flatten,
            Layer::Reshape { .. } => LayerKind::Reshape,
            Layer::Upsample { .. } => LayerKind::Upsample,
        }
    }

    /// Output shape for a given input shape, without running the layer.
    pub fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        let probe = Tensor::zeros(in_shape);
        match self {
            Layer::Relu | Layer::Sin => Ok(in_shape.to_vec()),
            Layer::Flatten => Ok(vec![probe.len()]),
            Layer::Reshape { shape } => {
                if shape.iter().product::<usize>() == probe.len() {
                    Ok(shape.clone())
                } else {
                    Err(Error::Shape(format!("reshape: cannot view {in_shape:?} as {shape:?}")))
                }
            }
            Layer::Upsample { factor } => {
                probe.expect_ndim(2, "upsample")?;
                Ok(vec![in_shape[0] * factor, in_shape[1]])
            }
            Layer::Conv1d(c) => {
                let (_, n_out) = c.check_input(&probe)?;
                Ok(vec![n_out, c.c_out()])
            }
            Layer::Dense(d) => {
                d.check_input(&probe)?;
                Ok(d.out_shape(in_shape))
            }
            Layer::T2v(t) => {
                t.check_input(&probe)?;
                Ok(vec![t.steps(), t.width()])
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::T2v(t) => t.forward(x),
            Layer::Conv1d(c) => c.forward(x),
            Layer::Dense(d) => d.forward(x),
            Layer::Relu => Ok(x.map(|v| v.max(0.0))),
            Layer::Sin => Ok(x.map(f64::sin)),
            Layer::Flatten => x.reshape(&[x.len()]),
            Layer::Reshape { shape } => x.reshape(shape),
            Layer::Upsample { factor } => upsample(x, *factor),
        }
    }

    /// Gradients of a scalar loss w.r.t. this layer's input and parameters,
    /// given the input seen at forward time and the loss gradient at the output.
    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        match self {
            Layer::T2v(t) => {
                let g = t.backward(input, upstream)?;
                Ok((
                    g.input,
                    vec![g.linear_weight, g.linear_bias, g.periodic_weight, g.periodic_bias],
                ))
            }
            Layer::Conv1d(c) => c.backward(input, upstream),
            Layer::Dense(d) => d.backward(input, upstream),
            Layer::Relu => {
                upstream.expect_shape(input.shape(), "relu upstream")?;
                let data = input
                    .data()
                    .iter()
                    .zip(upstream.data())
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                Ok((Tensor::new(input.shape().to_vec(), data)?, vec![]))
            }
            Layer::Sin => {
                upstream.expect_shape(input.shape(), "sin upstream")?;
                let data = input
                    .data()
                    .iter()
                    .zip(upstream.data())
                    .map(|(&x, &g)| x.cos() * g)
                    .collect();
                Ok((Tensor::new(input.shape().to_vec(), data)?, vec![]))
            }
            Layer::Flatten | Layer::Reshape { .. } => {
                let expected = self.out_shape(input.shape())?;
                upstream.expect_shape(&expected, "reshape upstream")?;
                Ok((upstream.reshape(input.shape())?, vec![]))
            }
            Layer::Upsample { factor } => {
                let expected = self.out_shape(input.shape())?;
                upstream.expect_shape(&expected, "upsample upstream")?;
                let (n, c) = (input.rows(), input.cols());
                let mut dx = vec![0.0; n * c];
                for (r, grow) in upstream.data().chunks_exact(c).enumerate() {
                    let src = r / factor;
                    for (d, gv) in dx[src * c..(src + 1) * c].iter_mut().zip(grow) {
                        *d += gv;
                    }
                }
                Ok((Tensor::matrix(n, c, dx)?, vec![]))
            }
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::T2v(t) => vec![&t.linear_weight, &t.linear_bias, &t.periodic_weight, &t.periodic_bias],
            Layer::Conv1d(c) => vec![&c.kernels, &c.bias],
            Layer::Dense(d) => std::iter::once(&d.weight).chain(d.bias.as_ref()).collect(),
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::T2v(t) => vec![
                &mut t.linear_weight,
                &mut t.linear_bias,
                &mut t.periodic_weight,
                &mut t.periodic_bias,
            ],
            Layer::Conv1d(c) => vec![&mut c.kernels, &mut c.bias],
            Layer::Dense(d) => std::iter::once(&mut d.weight).chain(d.bias.as_mut()).collect(),
            _ => vec![],
        }
    }
}

fn upsample(x: &Tensor, factor: usize) -> Result<Tensor> {
    x.expect_ndim(2, "upsample")?;
    if factor == 0 {
        return Err(Error::Config("upsample factor must be >= 1".into()));
    }
    let (n, c) = (x.rows(), x.cols());
    let mut out = Vec::with_capacity(n * factor * c);
    for i in 0..n {
        for _ in 0..factor {
            out.extend_from_slice(x.row(i));
        }
    }
    Tensor::matrix(n * factor, c, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Tensor {
        let (n, ci) = (x.rows(), x.cols());
        let (co, k) = (w.shape()[0], w.shape()[2]);
        let half = k as isize / 2;
        let mut out = Tensor::zeros(&[n / stride, co]);
        for t in 0..n / stride {
            for o in 0..co {
                let mut s = b.data()[o];
                for j in 0..k {
                    let src = (t * stride) as isize + j as isize - half;
                    if src < 0 || src >= n as isize {
                        continue;
                    }
                    for c in 0..ci {
                        s += w.data()[(o * ci + c) * k + j] * x.at(src as usize, c);
                    }
                }
                out.set(t, o, s);
            }
        }
        out
    }

    #[test]
    fn conv_of_zeros_is_zero() {
        let mut rng = rng_from(1);
        let conv = Conv1d::init(2, 3, 3, 1, &mut rng).unwrap();
        let y = conv.forward(&Tensor::zeros(&[6, 2])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pointwise_affine_conv() {
        let conv = Conv1d::new(
            Tensor::new(vec![1, 1, 1], vec![2.0]).unwrap(),
            Tensor::vector(vec![1.0]),
            1,
        )
        .unwrap();
        let x = Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(conv.forward(&x).unwrap().data(), &[3.0, 5.0, 7.0]);
    }

    #[test]
    fn conv_matches_sliding_window_sum() {
        let mut rng = rng_from(11);
        let x = Tensor::from_fn(&[8, 2], |_| rng.random_range(-1.0..1.0));
        let w = Tensor::from_fn(&[3, 2, 3], |_| rng.random_range(-1.0..1.0));
        let b = Tensor::from_fn(&[3], |_| rng.random_range(-1.0..1.0));
        for stride in [1, 2] {
            let conv = Conv1d::new(w.clone(), b.clone(), stride).unwrap();
            let y = conv.forward(&x).unwrap();
            assert!(y.max_abs_diff(&naive_conv(&x, &w, &b, stride)) < 1e-14);
        }
    }

    #[test]
    fn even_kernel_rejected() {
        let r = Conv1d::new(Tensor::zeros(&[1, 1, 2]), Tensor::zeros(&[1]), 1);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn width_one_conv_equals_dense_per_step() {
        let mut rng = rng_from(5);
        let x = Tensor::from_fn(&[7, 3], |_| rng.random_range(-1.0..1.0));
        let conv = Conv1d::init(3, 4, 1, 1, &mut rng).unwrap();
        let mut w = Tensor::zeros(&[3, 4]);
        for o in 0..4 {
            for c in 0..3 {
                w.set(c, o, conv.kernels.data()[o * 3 + c]);
            }
        }
        let dense = Dense::new(w, Some(conv.bias.clone())).unwrap();
        let a = conv.forward(&x).unwrap();
        let b = dense.forward(&x).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn relu_and_sin_backward() {
        let x = Tensor::vector(vec![-1.0, 2.0]);
        let (g, _) = Layer::Relu.backward(&x, &Tensor::vector(vec![5.0, 5.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 5.0]);
        let (g, _) = Layer::Sin
            .backward(&Tensor::vector(vec![0.0]), &Tensor::vector(vec![1.0]))
            .unwrap();
        assert_eq!(g.data(), &[1.0]);
    }

    #[test]
    fn upsample_repeats_rows() {
        let x = Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap();
        let y = Layer::Upsample { factor: 2 }.forward(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn out_shape_agrees_with_forward() {
        let mut rng = rng_from(2);
        let layers = vec![
            Layer::Conv1d(Conv1d::init(2, 4, 3, 2, &mut rng).unwrap()),
            Layer::Relu,
            Layer::Upsample { factor: 2 },
            Layer::Flatten,
            Layer::Reshape { shape: vec![4, 8] },
            Layer::Dense(Dense::init(8, 3, true, &mut rng).unwrap()),
        ];
        let mut x = Tensor::from_fn(&[8, 2], |i| i as f64);
        for l in &layers {
            let expected = l.out_shape(x.shape()).unwrap();
            x = l.forward(&x).unwrap();
            assert_eq!(x.shape(), expected.as_slice());
        }
    }
}
