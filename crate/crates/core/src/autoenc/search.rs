use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build, train, AeConfig, TrainedModel, Variant};
use crate::dtw::{dtw_distance, DtwParams};
use crate::error::{Error, Result};
use crate::pipeline::Window;
use crate::rng::{derive_indexed, derive_seed, rng_from};

/// Ranges sampled by [`hyper_search`]; inclusive on both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub width: (usize, usize),
    pub layers: (usize, usize),
    pub kernel: Vec<usize>,
    pub filters: Vec<usize>,
    pub epochs: (usize, usize),
    pub batch_size: Vec<usize>,
    pub lr: f64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            width: (4, 16),
            layers: (2, 4),
            kernel: vec![3, 5, 7],
            filters: vec![8, 16, 32],
            epochs: (20, 100),
            batch_size: vec![16, 32, 64],
            lr: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub config: AeConfig,
    pub final_loss: f64,
    /// Mean DTW between validation windows and their reconstructions.
    pub validation_dtw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub trials: Vec<Trial>,
    pub best: usize,
}

impl SearchResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }
}

fn sample_config(space: &SearchSpace, variant: Variant, steps: usize, seed: u64) -> Result<AeConfig> {
    let mut rng = rng_from(seed);
    let stride: usize = 2;
    // The reconstruction encoder halves the time axis per layer, so only
    // depths that divide the window length are admissible.
    let depths: Vec<usize> = (space.layers.0..=space.layers.1)
        .filter(|&l| variant == Variant::T2v || steps % stride.pow(l as u32) == 0)
        .collect();
    let empty = |what: &str| Error::Config(format!("search space has no admissible {what}"));
    Ok(AeConfig {
        variant,
        width: rng.random_range(space.width.0..=space.width.1),
        layers: *depths.choose(&mut rng).ok_or_else(|| empty("layer count"))?,
        filters: *space.filters.choose(&mut rng).ok_or_else(|| empty("filter count"))?,
        kernel: *space.kernel.choose(&mut rng).ok_or_else(|| empty("kernel size"))?,
        stride,
        epochs: rng.random_range(space.epochs.0..=space.epochs.1),
        batch_size: *space.batch_size.choose(&mut rng).ok_or_else(|| empty("batch size"))?,
        lr: space.lr,
        seed: derive_seed(seed, "trial"),
        standardize: true,
    })
}

/// Mean DTW between each window and its reconstruction, in standardized units.
pub fn mean_dtw(model: &TrainedModel, windows: &[Window]) -> Result<f64> {
    let total: f64 = windows
        .par_iter()
        .map(|w| {
            let x = model.standardize(&w.data)?;
            let y = model.reconstruct_standardized(&x)?;
            dtw_distance(&x, &y, DtwParams::default())
        })
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    Ok(total / windows.len() as f64)
}

/// Seeded random search. The last 10% of `windows` is held out for
/// validation; every trial trains on the rest with the L2 loss and is scored
/// by mean validation DTW. Returns all trials and the argmin.
pub fn hyper_search(
    windows: &[Window],
    variant: Variant,
    n_trials: usize,
    master_seed: u64,
    space: &SearchSpace,
) -> Result<SearchResult> {
    if n_trials < 1 {
        return Err(Error::Config("hyperparameter search needs at least one trial".into()));
    }
    if windows.len() < 10 {
        return Err(Error::InvalidInput("search needs at least 10 windows".into()));
    }
    let n_val = (windows.len() as f64 * 0.1).round().max(1.0) as usize;
    let (fit_set, val_set) = windows.split_at(windows.len() - n_val);
    let (steps, features) = (windows[0].steps(), windows[0].features());
    let search_seed = derive_seed(master_seed, "search");

    let trials = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let cfg = sample_config(space, variant, steps, derive_indexed(search_seed, i as u64))?;
            let model = train(build(&cfg, steps, features)?, fit_set)?;
            Ok(Trial {
                final_loss: model.final_loss().unwrap_or(f64::NAN),
                validation_dtw: mean_dtw(&model, val_set)?,
                config: cfg,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = trials
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.validation_dtw.total_cmp(&b.1.validation_dtw))
        .map(|(i, _)| i)
        .expect("at least one trial");
    Ok(SearchResult { trials, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{synth_generate, SynthParams};

    fn tiny_space() -> SearchSpace {
        SearchSpace {
            width: (2, 4),
            layers: (1, 2),
            kernel: vec![3],
            filters: vec![4],
            epochs: (1, 2),
            batch_size: vec![8],
            lr: 1e-3,
        }
    }

    fn windows() -> Vec<Window> {
        let p = SynthParams {
            windows: 30,
            steps: 20,
            ..Default::default()
        };
        synth_generate(&p, 2).unwrap().windows
    }

    #[test]
    fn single_trial_is_best() {
        let r = hyper_search(&windows(), Variant::T2v, 1, 3, &tiny_space()).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best, 0);
    }

    #[test]
    fn deterministic_and_argmin() {
        let w = windows();
        let a = hyper_search(&w, Variant::Reconstruction, 6, 11, &tiny_space()).unwrap();
        let b = hyper_search(&w, Variant::Reconstruction, 6, 11, &tiny_space()).unwrap();
        assert_eq!(a, b);
        let mut dtws: Vec<f64> = a.trials.iter().map(|t| t.validation_dtw).collect();
        assert!(dtws.iter().all(|&d| d >= a.best_trial().validation_dtw));
        dtws.sort_by(f64::total_cmp);
        assert!(a.best_trial().validation_dtw <= dtws[dtws.len() / 2]);
        for t in &a.trials {
            assert_eq!(20 % 2usize.pow(t.config.layers as u32), 0);
        }
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(hyper_search(&windows(), Variant::T2v, 0, 0, &tiny_space()).is_err());
    }
}
