//! Run configuration: every stage's parameters plus one master seed from
//! which all stage seeds are derived.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoenc::{AeConfig, SearchSpace};
use crate::detect::DetectorConfig;
use crate::error::{Error, Result};
use crate::eval::RunInfo;
use crate::inject::InjectionSpec;
use crate::pipeline::SynthParams;
use crate::rng::derive_seed;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessParams {
    /// CSV columns to keep, in order; empty keeps every column.
    pub features: Vec<String>,
    /// Interquartile-range multiplier of the outlier fences.
    pub quantile_k: f64,
    /// Resampling bucket in seconds; `None` picks one from the series length.
    pub bucket_width: Option<i64>,
    pub test_fraction: f64,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        PreprocessParams {
            features: Vec::new(),
            quantile_k: 1.5,
            bucket_width: None,
            test_fraction: 0.10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    pub trials: usize,
    pub space: SearchSpace,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            trials: 20,
            space: SearchSpace::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    pub synth: SynthParams,
    pub preprocess: PreprocessParams,
    pub search: SearchParams,
    pub t2v: AeConfig,
    pub recon: AeConfig,
    /// Training-score quantile used as the baseline threshold.
    pub recon_threshold_quantile: f64,
    pub injection: InjectionSpec,
    pub detectors: DetectorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 7,
            synth: SynthParams::default(),
            preprocess: PreprocessParams::default(),
            search: SearchParams::default(),
            t2v: AeConfig::reference_t2v(0),
            recon: AeConfig::reference_recon(0),
            recon_threshold_quantile: 0.99,
            injection: InjectionSpec::default(),
            detectors: DetectorConfig::default(),
        }
    }
}

/// Stage names used for seed derivation, in pipeline order.
pub const STAGES: [&str; 6] = ["generate", "search", "t2v", "recon", "detect", "inject"];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid run configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Version {
                found: self.schema_version,
                expected: CONFIG_SCHEMA_VERSION,
            });
        }
        if self.t2v.variant != crate::autoenc::Variant::T2v {
            return Err(Error::Config("`t2v` section must use variant t2v".into()));
        }
        if self.recon.variant != crate::autoenc::Variant::Reconstruction {
            return Err(Error::Config("`recon` section must use variant reconstruction".into()));
        }
        if !(self.recon_threshold_quantile > 0.0 && self.recon_threshold_quantile < 1.0) {
            return Err(Error::Config("recon_threshold_quantile must lie in (0, 1)".into()));
        }
        self.t2v.validate()?;
        self.recon.validate()?;
        self.injection.validate()?;
        self.detectors.validate()
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn stage_seeds(&self) -> BTreeMap<String, u64> {
        let mut m: BTreeMap<String, u64> = STAGES.iter().map(|s| (s.to_string(), self.stage_seed(s))).collect();
        m.insert("master".into(), self.seed);
        m
    }

    /// This configuration with every stage seed filled in from the master seed.
    pub fn effective(&self) -> RunConfig {
        let mut c = self.clone();
        c.t2v.seed = self.stage_seed("t2v");
        c.recon.seed = self.stage_seed("recon");
        c.detectors.seed = self.stage_seed("detect");
        c.injection.seed = self.stage_seed("inject");
        c
    }

    /// SHA-256 (hex) of the effective configuration's JSON.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(&self.effective()).expect("config serializes");
        hex_digest(&json)
    }

    /// Provenance block embedded in reports.
    pub fn run_info(&self) -> RunInfo {
        RunInfo {
            config_digest: self.digest(),
            seeds: self.stage_seeds(),
            config: serde_json::to_value(self.effective()).expect("config serializes"),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
