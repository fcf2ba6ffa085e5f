//! Synthetic anomalies (steps, periodic GMM spikes) and non-anomalous noise
//! (single-point, salt-and-pepper), plus assembly of the four evaluation
//! sets A-6F, AN-6F, A-4F and AN-4F from a clean test split.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{Label, Tag, Window, FLAT_FEATURES};
use crate::rng::{derive_indexed, derive_seed, rng_from};

/// Gaussian mixture over spike amplitudes, in units of the feature's std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Default for Gmm {
    fn default() -> Self {
        Gmm {
            weights: vec![1.0 / 3.0; 3],
            means: vec![2.0, 4.0, 6.0],
            stds: vec![0.5; 3],
        }
    }
}

impl Gmm {
    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.stds.len() != k {
            return Err(Error::Config("GMM needs equally many weights, means and stds".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) || self.stds.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("GMM weights and stds must be non-negative".into()));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("GMM weights must sum to 1".into()));
        }
        if self.stds.iter().all(|&s| s == 0.0) {
            return Err(Error::Config("degenerate GMM: every component has zero std".into()));
        }
        Ok(())
    }

    /// One amplitude: pick a component by weight, then draw from its Gaussian.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                comp = i;
                break;
            }
        }
        let z: f64 = rand_distr::StandardNormal.sample(rng);
        self.means[comp] + self.stds[comp] * z
    }
}

/// Which features anomalies are injected into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScope {
    All6,
    Four,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionSpec {
    /// Fraction of test windows that receive an anomaly.
    pub anomaly_fraction: f64,
    /// Inclusive range of step onsets.
    pub step_onset: (usize, usize),
    /// Step height in feature stds.
    pub step_alpha: f64,
    /// Inclusive range of spike periods.
    pub spike_period: (usize, usize),
    pub gmm: Gmm,
    /// Fraction of windows receiving noise in the AN sets.
    pub noise_fraction: f64,
    pub salt_pepper_prob: f64,
    /// Single-point noise offset in feature stds.
    pub point_noise_sigma: f64,
    /// Features excluded from anomaly injection in the 4F sets.
    pub flat_features: Vec<usize>,
    pub seed: u64,
}

impl Default for InjectionSpec {
    fn default() -> Self {
        InjectionSpec {
            anomaly_fraction: 0.5,
            step_onset: (20, 60),
            step_alpha: 3.0,
            spike_period: (5, 15),
            gmm: Gmm::default(),
            noise_fraction: 0.10,
            salt_pepper_prob: 0.02,
            point_noise_sigma: 6.0,
            flat_features: FLAT_FEATURES.to_vec(),
            seed: 0,
        }
    }
}

impl InjectionSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("anomaly_fraction", self.anomaly_fraction),
            ("noise_fraction", self.noise_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.salt_pepper_prob > 0.0 && self.salt_pepper_prob < 1.0) {
            return Err(Error::Config("salt_pepper_prob must lie in (0, 1)".into()));
        }
        if self.step_onset.0 > self.step_onset.1 || self.spike_period.0 > self.spike_period.1 {
            return Err(Error::Config("empty onset or period range".into()));
        }
        if self.spike_period.0 < 2 {
            return Err(Error::Config("spike period must be >= 2".into()));
        }
        self.gmm.validate()
    }

    pub fn features(&self, scope: FeatureScope, n_features: usize) -> Vec<usize> {
        (0..n_features)
            .filter(|f| scope == FeatureScope::All6 || !self.flat_features.contains(f))
            .collect()
    }
}

/// Per-feature std, min and max of a clean window pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureStats {
    pub fn from_windows(windows: &[Window]) -> Result<Self> {
        let f = windows
            .first()
            .ok_or_else(|| Error::InvalidInput("no windows for feature statistics".into()))?
            .features();
        let mut sum = vec![0.0; f];
        let mut sq = vec![0.0; f];
        let mut min = vec![f64::INFINITY; f];
        let mut max = vec![f64::NEG_INFINITY; f];
        let mut n = 0.0;
        for w in windows {
            for r in 0..w.steps() {
                for (c, &v) in w.data.row(r).iter().enumerate() {
                    sum[c] += v;
                    sq[c] += v * v;
                    min[c] = min[c].min(v);
                    max[c] = max[c].max(v);
                }
                n += 1.0;
            }
        }
        let std = sum
            .iter()
            .zip(&sq)
            .map(|(s, q)| (q / n - (s / n) * (s / n)).max(0.0).sqrt())
            .collect();
        Ok(FeatureStats { std, min, max })
    }
}

fn check_features(w: &Window, features: &[usize]) -> Result<()> {
    if features.is_empty() {
        return Err(Error::InvalidInput(
            "anomaly injection needs at least one feature".into(),
        ));
    }
    if let Some(f) = features.iter().find(|&&f| f >= w.features()) {
        return Err(Error::InvalidInput(format!("feature {f} out of range")));
    }
    Ok(())
}

/// Adds `magnitudes[i]` to feature `features[i]` on every row from `onset` on.
pub fn inject_step(w: &Window, features: &[usize], onset: usize, magnitudes: &[f64]) -> Result<Window> {
    check_features(w, features)?;
    if onset >= w.steps() {
        return Err(Error::InvalidInput(format!(
            "step onset {onset} outside a {}-step window",
            w.steps()
        )));
    }
    if magnitudes.len() != features.len() {
        return Err(Error::InvalidInput("one magnitude per feature is required".into()));
    }
    let mut out = w.clone().with_tags([Tag::Step]);
    for r in onset..w.steps() {
        let row = out.data.row_mut(r);
        for (&f, m) in features.iter().zip(magnitudes) {
            row[f] += m;
        }
    }
    Ok(out)
}

/// Adds a random-sign GMM spike to each selected feature at rows
/// `period, 2·period, …`. `scale[f]` converts GMM units to feature units.
pub fn inject_spikes(
    w: &Window,
    features: &[usize],
    period: usize,
    gmm: &Gmm,
    scale: &[f64],
    seed: u64,
) -> Result<Window> {
    check_features(w, features)?;
    gmm.validate()?;
    if period < 2 {
        return Err(Error::InvalidInput(format!("spike period must be >= 2, got {period}")));
    }
    let mut rng = rng_from(seed);
    let mut out = w.clone().with_tags([Tag::Spikes]);
    for r in (period..w.steps()).step_by(period) {
        let row = out.data.row_mut(r);
        for &f in features {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            row[f] += sign * gmm.sample(&mut rng) * scale[f];
        }
    }
    Ok(out)
}

/// Offsets one uniformly chosen cell by `sigmas·std` with a random sign.
pub fn inject_point_noise(w: &Window, stats: &FeatureStats, sigmas: f64, seed: u64) -> Window {
    let mut rng = rng_from(seed);
    let r = rng.random_range(0..w.steps());
    let f = rng.random_range(0..w.features());
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut out = w.clone().with_tags([Tag::PointNoise]);
    let v = out.data.at(r, f) + sign * sigmas * stats.std[f];
    out.data.set(r, f, v);
    out
}

/// Each cell independently, with probability `point_prob`, becomes the
/// feature's minimum (pepper) or maximum (salt).
pub fn inject_saltpepper(w: &Window, point_prob: f64, stats: &FeatureStats, seed: u64) -> Window {
    let mut rng = rng_from(seed);
    let mut out = w.clone().with_tags([Tag::SaltPepper]);
    let f = w.features();
    for (i, v) in out.data.data_mut().iter_mut().enumerate() {
        if rng.random_bool(point_prob) {
            let c = i % f;
            *v = if rng.random_bool(0.5) {
                stats.max[c]
            } else {
                stats.min[c]
            };
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SetName {
    #[serde(rename = "A-6F")]
    A6F,
    #[serde(rename = "AN-6F")]
    AN6F,
    #[serde(rename = "A-4F")]
    A4F,
    #[serde(rename = "AN-4F")]
    AN4F,
}

impl SetName {
    pub const ALL: [SetName; 4] = [SetName::A6F, SetName::AN6F, SetName::A4F, SetName::AN4F];

    pub fn as_str(self) -> &'static str {
        match self {
            SetName::A6F => "A-6F",
            SetName::AN6F => "AN-6F",
            SetName::A4F => "A-4F",
            SetName::AN4F => "AN-4F",
        }
    }

    pub fn scope(self) -> FeatureScope {
        match self {
            SetName::A6F | SetName::AN6F => FeatureScope::All6,
            SetName::A4F | SetName::AN4F => FeatureScope::Four,
        }
    }

    pub fn noisy(self) -> bool {
        matches!(self, SetName::AN6F | SetName::AN4F)
    }
}

impl fmt::Display for SetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four labelled evaluation sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    pub spec: InjectionSpec,
    pub stats: FeatureStats,
    pub sets: BTreeMap<SetName, Vec<Window>>,
}

impl TestSuite {
    pub fn set(&self, name: SetName) -> &[Window] {
        self.sets.get(&name).map_or(&[], Vec::as_slice)
    }

    /// (windows, anomalous, noisy) per set.
    pub fn composition(&self) -> BTreeMap<SetName, (usize, usize, usize)> {
        self.sets
            .iter()
            .map(|(k, ws)| {
                let anomalous = ws.iter().filter(|w| w.label() == Label::Anomalous).count();
                let noisy = ws.iter().filter(|w| w.has_noise()).count();
                (*k, (ws.len(), anomalous, noisy))
            })
            .collect()
    }
}

enum AnomalyPlan {
    Step { onset: usize },
    Spikes { period: usize, seed: u64 },
}

enum NoisePlan {
    Point(u64),
    SaltPepper(u64),
}

/// Builds A-6F, AN-6F, A-4F and AN-4F from clean test windows. A-sets share
/// the same anomalous windows and draws; AN-sets add noise to a random
/// `⌊noise_fraction·n⌋` windows of the corresponding A-set.
pub fn build_testsets(clean: &[Window], spec: &InjectionSpec) -> Result<TestSuite> {
    spec.validate()?;
    if clean.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "need at least 10 clean test windows, got {}",
            clean.len()
        )));
    }
    if clean.iter().any(|w| w.label() != Label::Normal || w.has_noise()) {
        return Err(Error::InvalidInput("test windows must be clean and normal".into()));
    }
    let stats = FeatureStats::from_windows(clean)?;
    let n = clean.len();
    let base = derive_seed(spec.seed, "inject");

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(derive_seed(base, "anomalous")));
    let n_anom = (spec.anomaly_fraction * n as f64).round() as usize;
    let mut plans: Vec<Option<AnomalyPlan>> = (0..n).map(|_| None).collect();
    let anom_seed = derive_seed(base, "anomaly-draws");
    for &i in &order[..n_anom] {
        let mut rng = rng_from(derive_indexed(anom_seed, i as u64));
        plans[i] = Some(if rng.random_bool(0.5) {
            AnomalyPlan::Step {
                onset: rng.random_range(spec.step_onset.0..=spec.step_onset.1),
            }
        } else {
            AnomalyPlan::Spikes {
                period: rng.random_range(spec.spike_period.0..=spec.spike_period.1),
                seed: rng.random(),
            }
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(derive_seed(base, "noisy")));
    let n_noise = (spec.noise_fraction * n as f64).floor() as usize;
    let mut noise: Vec<Option<NoisePlan>> = (0..n).map(|_| None).collect();
    let noise_seed = derive_seed(base, "noise-draws");
    for &i in &order[..n_noise] {
        let mut rng = rng_from(derive_indexed(noise_seed, i as u64));
        let s: u64 = rng.random();
        noise[i] = Some(if rng.random_bool(0.5) {
            NoisePlan::Point(s)
        } else {
            NoisePlan::SaltPepper(s)
        });
    }

    let mut sets = BTreeMap::new();
    for name in SetName::ALL {
        let features = spec.features(name.scope(), clean[0].features());
        let windows = clean
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let mut w = match &plans[i] {
                    None => w.clone(),
                    Some(AnomalyPlan::Step { onset }) => {
                        let mags: Vec<f64> = features.iter().map(|&f| spec.step_alpha * stats.std[f]).collect();
                        inject_step(w, &features, *onset, &mags)?
                    }
                    Some(AnomalyPlan::Spikes { period, seed }) => {
                        inject_spikes(w, &features, *period, &spec.gmm, &stats.std, *seed)?
                    }
                };
                if name.noisy() {
                    w = match noise[i] {
                        None => w,
                        Some(NoisePlan::Point(s)) => inject_point_noise(&w, &stats, spec.point_noise_sigma, s),
                        Some(NoisePlan::SaltPepper(s)) => inject_saltpepper(&w, spec.salt_pepper_prob, &stats, s),
                    };
                }
                Ok(w)
            })
            .collect::<Result<Vec<_>>>()?;
        sets.insert(name, windows);
    }
    Ok(TestSuite {
        spec: spec.clone(),
        stats,
        sets,
    })
}
