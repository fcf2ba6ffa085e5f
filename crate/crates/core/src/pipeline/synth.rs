use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{split, Corpus, Provenance, Window, N_FEATURES, WINDOW_LEN};
use crate::error::{Error, Result};
use crate::rng::{derive_indexed, derive_seed, rng_from};
use crate::tensor::Tensor;

/// Indices of the two near-constant features.
pub const FLAT_FEATURES: [usize; 2] = [4, 5];

/// Knobs for the synthetic stand-in corpus. Features 0–3 mix a slow trend and
/// two sinusoids with shared latent factors plus Gaussian noise; features 4
/// and 5 sit on fixed levels with tiny drift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub windows: usize,
    pub steps: usize,
    pub noise_std: f64,
    pub slow_period: (f64, f64),
    pub fast_period: (f64, f64),
    pub flat_levels: [f64; 2],
    pub flat_drift: f64,
    pub flat_noise: f64,
    pub test_fraction: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            windows: 2950,
            steps: WINDOW_LEN,
            noise_std: 0.05,
            slow_period: (25.0, 50.0),
            fast_period: (8.0, 20.0),
            flat_levels: [10.0, 3.0],
            flat_drift: 0.002,
            flat_noise: 0.0005,
            test_fraction: 0.10,
        }
    }
}

fn generate_window(p: &SynthParams, rng: &mut impl Rng, origin: String) -> Result<Window> {
    let noise = Normal::new(0.0, p.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let flat_noise = Normal::new(0.0, p.flat_noise).map_err(|e| Error::Config(e.to_string()))?;
    let slow = rng.random_range(p.slow_period.0..=p.slow_period.1);
    let fast = rng.random_range(p.fast_period.0..=p.fast_period.1);
    let (phi1, phi2, phi3, phi4) = (
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
    );
    let a1 = rng.random_range(0.8..1.2);
    let a2 = rng.random_range(0.3..0.6);
    let slope = rng.random_range(-0.5..0.5);
    let level = rng.random_range(-0.5..0.5);

    let n = p.steps;
    let mut data = Vec::with_capacity(n * N_FEATURES);
    for t in 0..n {
        let tf = t as f64;
        let z1 = a1 * (TAU * tf / slow + phi1).sin();
        let z2 = a2 * (TAU * tf / fast + phi2).sin();
        let trend = slope * (tf / n as f64 - 0.5);
        let mut e = || noise.sample(rng);
        data.push(level + z1 + trend + e());
        data.push(0.7 * z1 + 0.5 * z2 + e());
        data.push(z2 + 0.3 * z1 - 0.6 * trend + e());
        data.push(0.5 * (z1 - z2) + 0.5 * level + e());
        let drift = (TAU * tf / n as f64 + phi3).sin();
        data.push(p.flat_levels[0] + p.flat_drift * drift + flat_noise.sample(rng));
        let drift = (TAU * tf / n as f64 + phi4).sin();
        data.push(p.flat_levels[1] + p.flat_drift * drift + flat_noise.sample(rng));
    }
    Window::new(Tensor::matrix(n, N_FEATURES, data)?, origin)
}

/// Deterministic corpus of `params.windows` windows, split train/test.
pub fn synth_generate(params: &SynthParams, seed: u64) -> Result<Corpus> {
    if params.windows < 10 || params.steps == 0 {
        return Err(Error::Config(format!(
            "synthetic corpus needs >= 10 windows and >= 1 step, got {} x {}",
            params.windows, params.steps
        )));
    }
    let gen_seed = derive_seed(seed, "synth");
    let windows = (0..params.windows)
        .map(|i| {
            let mut rng = rng_from(derive_indexed(gen_seed, i as u64));
            generate_window(params, &mut rng, format!("synth#{i}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = split(windows.len(), params.test_fraction, derive_seed(seed, "split"))?;
    Ok(Corpus {
        windows,
        train,
        test,
        provenance: Provenance {
            source: "synthetic".into(),
            seed,
            params: serde_json::to_value(params).expect("params serialize"),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature_std(c: &Corpus, f: usize) -> f64 {
        let vals: Vec<f64> = c
            .windows
            .iter()
            .flat_map(|w| (0..w.steps()).map(move |r| w.data.at(r, f)))
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64).sqrt()
    }

    #[test]
    fn default_shape_and_split() {
        let c = synth_generate(&SynthParams::default(), 7).unwrap();
        assert_eq!(c.windows.len(), 2950);
        assert!(c.windows.iter().all(|w| w.data.shape() == [100, 6]));
        assert_eq!((c.train.len(), c.test.len()), (2655, 295));
        c.validate().unwrap();
    }

    #[test]
    fn flat_features_are_flat() {
        let p = SynthParams {
            windows: 200,
            ..Default::default()
        };
        let c = synth_generate(&p, 3).unwrap();
        let s1 = feature_std(&c, 0);
        for f in FLAT_FEATURES {
            assert!(feature_std(&c, f) / s1 < 0.01);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let p = SynthParams {
            windows: 30,
            ..Default::default()
        };
        assert_eq!(synth_generate(&p, 5).unwrap(), synth_generate(&p, 5).unwrap());
        assert_ne!(synth_generate(&p, 5).unwrap(), synth_generate(&p, 6).unwrap());
    }

    #[test]
    fn invalid_counts() {
        let p = SynthParams {
            windows: 3,
            ..Default::default()
        };
        assert!(synth_generate(&p, 0).is_err());
    }
}
