use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};
use crate::tensor::{AdamState, Dense, Layer, Network, Objective, Tensor};

/// Rows per parallel gradient chunk; partial sums are combined in order.
const ROW_CHUNK: usize = 16;
/// Center coordinates closer than this to zero are pushed away from it.
const CENTER_EPS: f64 = 1e-6;
const CENTER_OFFSET: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvddParams {
    /// Widths after the input layer; the last one is the output dimension.
    pub hidden: Vec<usize>,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for SvddParams {
    fn default() -> Self {
        SvddParams {
            hidden: vec![128, 32],
            weight_decay: 1e-4,
            epochs: 100,
            batch_size: 128,
            lr: 1e-3,
        }
    }
}

impl SvddParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("deep SVDD needs non-empty positive widths".into()));
        }
        if self.hidden.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("deep SVDD widths must decrease".into()));
        }
        if self.batch_size == 0 || !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("invalid deep SVDD training parameters".into()));
        }
        Ok(())
    }
}

/// Bias-free feed-forward map `φ` and its hypersphere center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepSvdd {
    pub network: Network,
    pub center: Vec<f64>,
    /// Objective over the training set before the first update.
    pub initial_loss: f64,
    pub loss_curve: Vec<f64>,
}

pub fn build_network(d_in: usize, hidden: &[usize], seed: u64) -> Result<Network> {
    let mut rng = rng_from(derive_seed(seed, "svdd-init"));
    let mut layers = Vec::new();
    let mut width = d_in;
    for (i, &w) in hidden.iter().enumerate() {
        layers.push(Layer::Dense(Dense::init(width, w, false, &mut rng)?));
        if i + 1 < hidden.len() {
            layers.push(Layer::Relu);
        }
        width = w;
    }
    Ok(Network::new(layers))
}

/// Mean over rows of `φ(x)`, with near-zero coordinates replaced by ±0.1.
pub fn initial_center(net: &Network, x: &Tensor) -> Result<Vec<f64>> {
    let phi = net.forward(x)?;
    let (n, k) = (phi.rows(), phi.cols());
    let mut c = vec![0.0; k];
    for i in 0..n {
        for (cj, v) in c.iter_mut().zip(phi.row(i)) {
            *cj += v / n as f64;
        }
    }
    for cj in &mut c {
        if cj.abs() < CENTER_EPS {
            *cj = if *cj < 0.0 { -CENTER_OFFSET } else { CENTER_OFFSET };
        }
    }
    Ok(c)
}

/// `Σ_rows ‖φ(x) − c‖²` and its parameter gradient for one block of rows.
fn block_grads(net: &Network, x: &Tensor, center: &[f64]) -> Result<(f64, Vec<Tensor>)> {
    let (phi, tape) = net.forward_taped(x)?;
    let k = center.len();
    let mut loss = 0.0;
    let up = Tensor::from_fn(phi.shape(), |i| {
        let d = phi.data()[i] - center[i % k];
        loss += d * d;
        2.0 * d
    });
    let (_, grads) = net.backward(&tape, up)?;
    Ok((loss, grads))
}

fn rows_of(x: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let d = x.cols();
    let data = idx.iter().flat_map(|&i| x.row(i).iter().copied()).collect();
    Tensor::new(vec![idx.len(), d], data)
}

/// Mean distance loss plus `½λ‖W‖²` over the given rows.
fn objective(net: &Network, x: &Tensor, idx: &[usize], center: &[f64], decay: f64) -> Result<(f64, Vec<Tensor>)> {
    let partials = idx
        .par_chunks(ROW_CHUNK)
        .map(|chunk| block_grads(net, &rows_of(x, chunk)?, center))
        .collect::<Result<Vec<_>>>()?;
    let mut iter = partials.into_iter();
    let (mut loss, mut grads) = iter.next().ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
    for (l, g) in iter {
        loss += l;
        for (a, b) in grads.iter_mut().zip(&g) {
            a.add_assign(b)?;
        }
    }
    let n = idx.len() as f64;
    loss /= n;
    for (g, w) in grads.iter_mut().zip(net.params()) {
        g.scale(1.0 / n);
        let mut wd = w.clone();
        wd.scale(decay);
        g.add_assign(&wd)?;
        loss += 0.5 * decay * w.data().iter().map(|v| v * v).sum::<f64>();
    }
    Ok((loss, grads))
}

impl DeepSvdd {
    pub fn fit(x: &Tensor, params: &SvddParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let n = x.rows();
        if n < 32 {
            return Err(Error::InvalidInput(format!(
                "deep SVDD needs at least 32 samples, got {n}"
            )));
        }
        let mut network = build_network(x.cols(), &params.hidden, seed)?;
        let center = initial_center(&network, x)?;
        let mut adam = AdamState::new(params.lr);
        let mut rng = rng_from(derive_seed(seed, "svdd-train"));
        let mut order: Vec<usize> = (0..n).collect();
        let (initial_loss, _) = objective(&network, x, &order, &center, params.weight_decay)?;
        let mut loss_curve = Vec::with_capacity(params.epochs);
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(params.batch_size) {
                let (loss, grads) = objective(&network, x, batch, &center, params.weight_decay)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("deep SVDD loss diverged at epoch {epoch}")));
                }
                adam.step(&mut network.params_mut(), &grads)?;
                total += loss * batch.len() as f64;
            }
            loss_curve.push(total / n as f64);
        }
        Ok(DeepSvdd {
            network,
            center,
            initial_loss,
            loss_curve,
        })
    }

    /// `‖φ(x) − c‖²` for each row of `x`.
    pub fn score_rows(&self, x: &Tensor) -> Result<Vec<f64>> {
        let phi = self.network.forward(x)?;
        Ok((0..phi.rows())
            .map(|i| {
                phi.row(i)
                    .iter()
                    .zip(&self.center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum()
            })
            .collect())
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.score_rows(&Tensor::matrix(1, x.len(), x.to_vec())?)?[0])
    }
}

/// The training objective on a fixed batch, for gradient checking.
pub struct SvddObjective<'a> {
    pub net: &'a mut Network,
    pub x: Tensor,
    pub center: Vec<f64>,
    pub weight_decay: f64,
}

impl Objective for SvddObjective<'_> {
    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.params_mut()
    }

    fn loss(&self) -> Result<f64> {
        Ok(self.loss_and_grads()?.0)
    }

    fn loss_and_grads(&self) -> Result<(f64, Vec<Tensor>)> {
        let idx: Vec<usize> = (0..self.x.rows()).collect();
        objective(self.net, &self.x, &idx, &self.center, self.weight_decay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand_distr::{Distribution, StandardNormal};

    fn blob(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = rng_from(seed);
        Tensor::from_fn(&[n, d], |_| {
            0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng)
        })
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = blob(6, 30, 1);
        let mut net = build_network(30, &[16, 4], 2).unwrap();
        let center = initial_center(&net, &x).unwrap();
        let mut obj = SvddObjective {
            net: &mut net,
            x,
            center,
            weight_decay: 1e-2,
        };
        let err = grad_check(&mut obj, 1e-6).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn zero_weights_give_constant_objective() {
        let x = blob(40, 5, 3);
        let mut net = build_network(5, &[4, 2], 4).unwrap();
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let phi = net.forward(&x).unwrap();
        assert!(phi.data().iter().all(|&v| v == 0.0));
        let center = initial_center(&net, &x).unwrap();
        assert_eq!(center, vec![0.1, 0.1]);
        let obj = SvddObjective {
            net: &mut net,
            x,
            center,
            weight_decay: 0.0,
        };
        assert!((obj.loss().unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn shifted_copies_score_higher() {
        let x = blob(200, 8, 5);
        let params = SvddParams {
            hidden: vec![16, 4],
            epochs: 30,
            batch_size: 32,
            ..Default::default()
        };
        let m = DeepSvdd::fit(&x, &params, 6).unwrap();
        assert!(m.loss_curve.last().unwrap() < &m.loss_curve[0]);
        let shifted = x.map(|v| v + 5.0 * 0.3);
        let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(m.score_rows(&x).unwrap()) < mean(m.score_rows(&shifted).unwrap()));
        let again = DeepSvdd::fit(&x, &params, 6).unwrap();
        assert_eq!(m.score_rows(&x).unwrap(), again.score_rows(&x).unwrap());
        assert_eq!(m.score(x.row(0)).unwrap(), m.score(x.row(0)).unwrap());
        assert!(m.score(x.row(0)).unwrap() >= 0.0);
    }

    #[test]
    fn rejects_tiny_training_sets() {
        assert!(DeepSvdd::fit(&blob(10, 3, 0), &SvddParams::default(), 0).is_err());
    }
}
