use serde::{Deserialize, Serialize};

use super::{Layer, Tensor};
use crate::error::{Error, Result};

/// Inputs seen by each layer during one taped forward pass, in forward order.
#[derive(Debug)]
pub struct GradTape {
    inputs: Vec<Tensor>,
}

impl GradTape {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// A sequential stack of layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Network { layers }
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        self.layers
            .iter()
            .try_fold(in_shape.to_vec(), |shape, l| l.out_shape(&shape))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_range(x, 0..self.layers.len())
    }

    /// Runs layers `range` only, e.g. the encoder prefix of an autoencoder.
    pub fn forward_range(&self, x: &Tensor, range: std::ops::Range<usize>) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in &self.layers[range] {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn forward_taped(&self, x: &Tensor) -> Result<(Tensor, GradTape)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let next = layer.forward(&cur)?;
            inputs.push(cur);
            cur = next;
        }
        Ok((cur, GradTape { inputs }))
    }

    /// Walks the tape in reverse. Returns the input gradient and one gradient
    /// per parameter, in [`Network::params`] order.
    pub fn backward(&self, tape: &GradTape, upstream: Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "tape has {} records for {} layers",
                tape.inputs.len(),
                self.layers.len()
            )));
        }
        let mut grad = upstream;
        let mut per_layer: Vec<Vec<Tensor>> = Vec::with_capacity(self.layers.len());
        for (layer, input) in self.layers.iter().zip(&tape.inputs).rev() {
            let (g_in, g_params) = layer.backward(input, &grad)?;
            per_layer.push(g_params);
            grad = g_in;
        }
        per_layer.reverse();
        Ok((grad, per_layer.into_iter().flatten().collect()))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Mean squared error and its gradient w.r.t. `pred`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    pred.expect_shape(target.shape(), "mse")?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}
