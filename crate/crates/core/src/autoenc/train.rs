use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::TrainedModel;
use crate::error::{Error, Result};
use crate::pipeline::{Standardizer, Window};
use crate::rng::{derive_seed, rng_from};
use crate::tensor::{mse_loss, AdamState, Network, Tensor};

/// Samples per gradient chunk. Chunks are summed in index order, so results
/// do not depend on how rayon schedules them.
const GRAD_CHUNK: usize = 4;

fn sample_grads(net: &Network, x: &Tensor) -> Result<(f64, Vec<Tensor>)> {
    let (y, tape) = net.forward_taped(x)?;
    let (loss, g) = mse_loss(&y, x)?;
    let (_, grads) = net.backward(&tape, g)?;
    Ok((loss, grads))
}

fn accumulate(into: &mut [Tensor], from: &[Tensor]) -> Result<()> {
    for (a, b) in into.iter_mut().zip(from) {
        a.add_assign(b)?;
    }
    Ok(())
}

/// Summed loss and gradients over `batch`.
pub(crate) fn batch_grads(net: &Network, batch: &[&Tensor]) -> Result<(f64, Vec<Tensor>)> {
    let partials = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut iter = chunk.iter();
            let first = iter.next().expect("non-empty chunk");
            let (mut loss, mut grads) = sample_grads(net, first)?;
            for x in iter {
                let (l, g) = sample_grads(net, x)?;
                loss += l;
                accumulate(&mut grads, &g)?;
            }
            Ok((loss, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = partials.into_iter();
    let (mut loss, mut grads) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        accumulate(&mut grads, &g)?;
    }
    Ok((loss, grads))
}

pub(crate) fn mean_loss(net: &Network, xs: &[Tensor]) -> Result<f64> {
    let total: f64 = xs
        .par_iter()
        .map(|x| Ok(mse_loss(&net.forward(x)?, x)?.0))
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok(total / xs.len() as f64)
}

/// Fits the autoencoder to reconstruct `windows` under mean squared error
/// with Adam minibatches. Deterministic given the config seed.
pub fn train(mut model: TrainedModel, windows: &[Window]) -> Result<TrainedModel> {
    if windows.is_empty() {
        return Err(Error::InvalidInput("no training windows".into()));
    }
    let cfg = model.config.clone();
    cfg.validate()?;
    model.scaler = if cfg.standardize {
        Standardizer::fit(windows)?
    } else {
        Standardizer::identity(model.features)
    };
    let xs = windows
        .iter()
        .map(|w| model.standardize(&w.data))
        .collect::<Result<Vec<_>>>()?;

    let initial = mean_loss(&model.network, &xs)?;
    if !initial.is_finite() {
        return Err(Error::NonFinite("initial training loss".into()));
    }
    model.initial_loss = Some(initial);
    model.loss_curve.clear();

    let mut rng = rng_from(derive_seed(cfg.seed, "train"));
    let mut adam = AdamState::new(cfg.lr);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Tensor> = idx.iter().map(|&i| &xs[i]).collect();
            let (loss, mut grads) = batch_grads(&model.network, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss diverged at epoch {epoch}, batch {b}"
                )));
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.scale(scale);
            }
            adam.step(&mut model.network.params_mut(), &grads)?;
            epoch_loss += loss;
        }
        model.loss_curve.push(epoch_loss / xs.len() as f64);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoenc::{build, AeConfig, Variant};
    use crate::pipeline::{synth_generate, SynthParams};

    fn constant_windows(n: usize) -> Vec<Window> {
        let data = Tensor::from_fn(&[10, 2], |i| if i % 2 == 0 { 0.7 } else { -0.3 });
        (0..n)
            .map(|i| Window::new(data.clone(), format!("c{i}")).unwrap())
            .collect()
    }

    fn constant_cfg(variant: Variant) -> AeConfig {
        AeConfig {
            variant,
            width: 3,
            layers: 1,
            filters: 4,
            kernel: 3,
            stride: 2,
            epochs: 200,
            batch_size: 10,
            lr: 1e-2,
            seed: 5,
            standardize: false,
        }
    }

    #[test]
    fn learns_a_constant_window() {
        for variant in [Variant::T2v, Variant::Reconstruction] {
            let windows = constant_windows(50);
            let m = build(&constant_cfg(variant), 10, 2).unwrap();
            let m = train(m, &windows).unwrap();
            assert_eq!(m.loss_curve.len(), 200);
            assert!(m.final_loss().unwrap() < 1e-3, "{variant:?}: {:?}", m.final_loss());
            let y = m.reconstruct(&windows[0]).unwrap();
            let mae = y
                .data()
                .iter()
                .zip(windows[0].data.data())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / y.len() as f64;
            assert!(mae < 0.05, "{variant:?}: mae {mae}");
        }
    }

    #[test]
    fn same_seed_same_curve() {
        let corpus = synth_generate(
            &SynthParams {
                windows: 40,
                steps: 20,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let cfg = AeConfig {
            epochs: 3,
            filters: 4,
            ..AeConfig::reference_t2v(9)
        };
        let run = || train(build(&cfg, 20, 6).unwrap(), &corpus.windows).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.network, b.network);
    }

    #[test]
    fn empty_training_set() {
        let m = build(&constant_cfg(Variant::T2v), 10, 2).unwrap();
        assert!(train(m, &[]).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = constant_cfg(Variant::T2v);
        cfg.epochs = 1;
        let m = build(&cfg, 10, 2).unwrap();
        let bad = Tensor::filled(&[10, 2], f64::NAN);
        let err = train(m, &[Window::new(bad, "nan").unwrap()]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
