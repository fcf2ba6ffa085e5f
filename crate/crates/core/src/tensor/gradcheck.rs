use super::{mse_loss, Network, Tensor};
use crate::error::Result;

/// A scalar loss over a set of parameter tensors with an analytic gradient.
pub trait Objective {
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    fn loss(&self) -> Result<f64>;

    /// Loss plus one gradient per parameter, in `parameters_mut` order.
    fn loss_and_grads(&self) -> Result<(f64, Vec<Tensor>)>;
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

/// Max relative error between analytic gradients and central differences with step `h`.
pub fn grad_check(obj: &mut impl Objective, h: f64) -> Result<f64> {
    let (_, analytic) = obj.loss_and_grads()?;
    let mut worst = 0.0f64;
    let sizes: Vec<usize> = obj.parameters_mut().iter().map(|p| p.len()).collect();
    for (pi, &size) in sizes.iter().enumerate() {
        for i in 0..size {
            let orig = obj.parameters_mut()[pi].data()[i];
            obj.parameters_mut()[pi].data_mut()[i] = orig + h;
            let up = obj.loss()?;
            obj.parameters_mut()[pi].data_mut()[i] = orig - h;
            let down = obj.loss()?;
            obj.parameters_mut()[pi].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic[pi].data()[i], numeric));
        }
    }
    Ok(worst)
}

/// Mean squared error between `net(input)` and `target`.
pub struct ReconstructionObjective<'a> {
    pub net: &'a mut Network,
    pub input: Tensor,
    pub target: Tensor,
}

impl Objective for ReconstructionObjective<'_> {
    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.params_mut()
    }

    fn loss(&self) -> Result<f64> {
        let y = self.net.forward(&self.input)?;
        Ok(mse_loss(&y, &self.target)?.0)
    }

    fn loss_and_grads(&self) -> Result<(f64, Vec<Tensor>)> {
        let (y, tape) = self.net.forward_taped(&self.input)?;
        let (loss, g) = mse_loss(&y, &self.target)?;
        let (_, grads) = self.net.backward(&tape, g)?;
        Ok((loss, grads))
    }
}
