//! One-class detectors over fixed-length embeddings: isolation forest, local
//! outlier factor, one-class SVM, elliptic envelope (FastMCD) and Deep SVDD,
//! behind one fit/score/predict contract. Higher scores are more anomalous.

mod iforest;
pub mod linalg;
mod lof;
mod mcd;
mod ocsvm;
mod svdd;

pub use self::iforest::{average_path_length, IsolationForest, Node};
pub use self::linalg::Pca;
pub use self::lof::Lof;
pub use self::mcd::RobustCovariance;
pub use self::ocsvm::{scale_gamma, OcSvm};
pub use self::svdd::{build_network as build_svdd_network, initial_center, DeepSvdd, SvddObjective, SvddParams};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{quantile, Label};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    #[serde(rename = "iforest")]
    IForest,
    Lof,
    Ocsvm,
    Ee,
    DeepSvdd,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::IForest,
        DetectorKind::Ee,
        DetectorKind::Ocsvm,
        DetectorKind::Lof,
        DetectorKind::DeepSvdd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::IForest => "iforest",
            DetectorKind::Lof => "lof",
            DetectorKind::Ocsvm => "ocsvm",
            DetectorKind::Ee => "ee",
            DetectorKind::DeepSvdd => "deep_svdd",
        }
    }

    /// Display name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            DetectorKind::IForest => "IF",
            DetectorKind::Lof => "LOF",
            DetectorKind::Ocsvm => "OCSVM",
            DetectorKind::Ee => "EE",
            DetectorKind::DeepSvdd => "Deep SVDD",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "iforest" | "if" | "isolation_forest" => Ok(DetectorKind::IForest),
            "lof" => Ok(DetectorKind::Lof),
            "ocsvm" | "svm" => Ok(DetectorKind::Ocsvm),
            "ee" | "elliptic_envelope" => Ok(DetectorKind::Ee),
            "deep_svdd" | "svdd" => Ok(DetectorKind::DeepSvdd),
            other => Err(Error::Config(format!("unknown detector kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IForestParams {
    pub trees: usize,
    pub subsample: usize,
}

impl Default for IForestParams {
    fn default() -> Self {
        IForestParams {
            trees: 100,
            subsample: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LofParams {
    pub k: usize,
}

impl Default for LofParams {
    fn default() -> Self {
        LofParams { k: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcsvmParams {
    pub nu: f64,
    /// RBF width; `None` selects `1/(d·var)`.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OcsvmParams {
    fn default() -> Self {
        OcsvmParams {
            nu: 0.05,
            gamma: None,
            tol: 1e-4,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EeParams {
    /// Inputs wider than this are PCA-reduced first.
    pub pca_dims: usize,
    /// Random starts for FastMCD.
    pub starts: usize,
}

impl Default for EeParams {
    fn default() -> Self {
        EeParams {
            pca_dims: 32,
            starts: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub iforest: IForestParams,
    pub lof: LofParams,
    pub ocsvm: OcsvmParams,
    pub ee: EeParams,
    pub deep_svdd: SvddParams,
    /// Training-score quantile used as the decision threshold.
    pub threshold_quantile: f64,
    /// Z-score each embedding dimension with training statistics.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            iforest: IForestParams::default(),
            lof: LofParams::default(),
            ocsvm: OcsvmParams::default(),
            ee: EeParams::default(),
            deep_svdd: SvddParams::default(),
            threshold_quantile: 0.99,
            standardize: true,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_quantile > 0.0 && self.threshold_quantile < 1.0) {
            return Err(Error::Config("threshold_quantile must lie in (0, 1)".into()));
        }
        if !(self.ocsvm.nu > 0.0 && self.ocsvm.nu < 1.0) {
            return Err(Error::Config("ocsvm nu must lie in (0, 1)".into()));
        }
        if self.lof.k == 0 || self.ee.pca_dims == 0 || self.iforest.trees == 0 {
            return Err(Error::Config(
                "lof k, ee pca_dims and iforest trees must be positive".into(),
            ));
        }
        self.deep_svdd.validate()
    }
}

/// Per-dimension affine map applied to embeddings before fitting and scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl EmbeddingScaler {
    pub fn identity(d: usize) -> Self {
        EmbeddingScaler {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn fit(x: &Tensor) -> Self {
        let (n, d) = (x.rows() as f64, x.cols());
        let mut mean = vec![0.0; d];
        for i in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for i in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = var
            .iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        EmbeddingScaler { mean, std }
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let d = self.mean.len();
        Ok(Tensor::from_fn(x.shape(), |i| {
            (x.data()[i] - self.mean[i % d]) / self.std[i % d]
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "snake_case")]
pub enum DetectorState {
    #[serde(rename = "iforest")]
    IForest(IsolationForest),
    Lof(Lof),
    Ocsvm(OcSvm),
    Ee(RobustCovariance),
    DeepSvdd(DeepSvdd),
}

/// A fitted detector with its input transform and decision threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub kind: DetectorKind,
    pub config: DetectorConfig,
    /// Embedding dimension expected at score time.
    pub dim: usize,
    pub scaler: EmbeddingScaler,
    pub pca: Option<Pca>,
    pub state: DetectorState,
    pub threshold: f64,
}

fn check_rows(x: &Tensor) -> Result<()> {
    if x.ndim() != 2 || x.rows() == 0 {
        return Err(Error::Shape(format!(
            "detector input must be a non-empty n×d matrix, got {:?}",
            x.shape()
        )));
    }
    x.check_finite("detector input")
}

/// Fits `kind` to the rows of `x` (assumed normal) and sets the threshold to
/// the configured quantile of the training scores.
pub fn fit(kind: DetectorKind, x: &Tensor, cfg: &DetectorConfig) -> Result<DetectorModel> {
    cfg.validate()?;
    check_rows(x)?;
    let dim = x.cols();
    let scaler = if cfg.standardize {
        EmbeddingScaler::fit(x)
    } else {
        EmbeddingScaler::identity(dim)
    };
    let z = scaler.apply(x)?;
    let seed = derive_seed(cfg.seed, kind.as_str());
    let pca = match kind {
        DetectorKind::Ee if dim > cfg.ee.pca_dims => Some(Pca::fit(&z, cfg.ee.pca_dims)?),
        _ => None,
    };
    let z = match &pca {
        Some(p) => p.project(&z)?,
        None => z,
    };
    let mut training_scores = None;
    let state = match kind {
        DetectorKind::IForest => DetectorState::IForest(IsolationForest::fit(
            &z,
            cfg.iforest.trees,
            cfg.iforest.subsample,
            seed,
        )?),
        DetectorKind::Lof => {
            let (m, own) = Lof::fit(&z, cfg.lof.k)?;
            training_scores = Some(own);
            DetectorState::Lof(m)
        }
        DetectorKind::Ocsvm => {
            let gamma = cfg.ocsvm.gamma.unwrap_or_else(|| scale_gamma(&z));
            DetectorState::Ocsvm(OcSvm::fit(&z, cfg.ocsvm.nu, gamma, cfg.ocsvm.tol, cfg.ocsvm.max_iter)?)
        }
        DetectorKind::Ee => DetectorState::Ee(RobustCovariance::fit(&z, cfg.ee.starts, seed)?),
        DetectorKind::DeepSvdd => DetectorState::DeepSvdd(DeepSvdd::fit(&z, &cfg.deep_svdd, seed)?),
    };
    let mut model = DetectorModel {
        kind,
        config: cfg.clone(),
        dim,
        scaler,
        pca,
        state,
        threshold: f64::NAN,
    };
    let scores = match training_scores {
        Some(s) => s,
        None => model.score_transformed(&z)?,
    };
    let threshold = quantile(&scores, cfg.threshold_quantile);
    if !threshold.is_finite() {
        return Err(Error::NonFinite(format!("{kind} training scores")));
    }
    model.threshold = threshold;
    Ok(model)
}

impl DetectorModel {
    fn transform(&self, x: &Tensor) -> Result<Tensor> {
        check_rows(x)?;
        if x.cols() != self.dim {
            return Err(Error::Shape(format!(
                "{} detector expects {} dims, got {}",
                self.kind,
                self.dim,
                x.cols()
            )));
        }
        let z = self.scaler.apply(x)?;
        match &self.pca {
            Some(p) => p.project(&z),
            None => Ok(z),
        }
    }

    fn score_transformed(&self, z: &Tensor) -> Result<Vec<f64>> {
        if let DetectorState::DeepSvdd(m) = &self.state {
            return m.score_rows(z);
        }
        Ok((0..z.rows())
            .into_par_iter()
            .map(|i| {
                let r = z.row(i);
                match &self.state {
                    DetectorState::IForest(m) => m.score(r),
                    DetectorState::Lof(m) => m.score(r),
                    DetectorState::Ocsvm(m) => m.score(r),
                    DetectorState::Ee(m) => m.score(r),
                    DetectorState::DeepSvdd(_) => unreachable!("handled above"),
                }
            })
            .collect())
    }

    /// Scores for each row of an `n×d` matrix of raw embeddings.
    pub fn score_rows(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.score_transformed(&self.transform(x)?)
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.score_rows(&Tensor::matrix(1, x.len(), x.to_vec())?)?[0])
    }

    /// Anomalous iff the score strictly exceeds the threshold.
    pub fn decide(&self, score: f64) -> Label {
        if score > self.threshold {
            Label::Anomalous
        } else {
            Label::Normal
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(self.decide(self.score(x)?))
    }

    pub fn predict_rows(&self, x: &Tensor) -> Result<Vec<Label>> {
        Ok(self.score_rows(x)?.into_iter().map(|s| self.decide(s)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = rng_from(seed);
        Tensor::from_fn(&[n, d], |_| StandardNormal.sample(&mut rng))
    }

    fn small_cfg() -> DetectorConfig {
        DetectorConfig {
            deep_svdd: SvddParams {
                hidden: vec![16, 8],
                epochs: 10,
                batch_size: 32,
                ..Default::default()
            },
            ee: EeParams { pca_dims: 4, starts: 5 },
            ..Default::default()
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in DetectorKind::ALL {
            assert_eq!(k.as_str().parse::<DetectorKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
        assert!("knn".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn threshold_is_strict() {
        let x = gaussian(100, 3, 1);
        let m = fit(DetectorKind::Ee, &x, &small_cfg()).unwrap();
        assert_eq!(m.decide(m.threshold), Label::Normal);
        assert_eq!(m.decide(m.threshold + 1e-12), Label::Anomalous);
    }

    #[test]
    fn higher_quantile_flags_no_more() {
        let train = gaussian(200, 4, 2);
        let test = gaussian(100, 4, 3).map(|v| v * 1.5);
        for kind in DetectorKind::ALL {
            let count = |q: f64| {
                let cfg = DetectorConfig {
                    threshold_quantile: q,
                    ..small_cfg()
                };
                let m = fit(kind, &train, &cfg).unwrap();
                m.predict_rows(&test)
                    .unwrap()
                    .iter()
                    .filter(|l| **l == Label::Anomalous)
                    .count()
            };
            assert!(count(0.999) <= count(0.95), "{kind}");
        }
    }

    #[test]
    fn fit_is_deterministic_and_score_pure() {
        let x = gaussian(120, 6, 4);
        for kind in DetectorKind::ALL {
            let a = fit(kind, &x, &small_cfg()).unwrap();
            let b = fit(kind, &x, &small_cfg()).unwrap();
            assert_eq!(a, b, "{kind}");
            assert_eq!(a.score_rows(&x).unwrap(), a.score_rows(&x).unwrap());
            assert!(a.threshold.is_finite());
            assert_eq!(a.pca.is_some(), kind == DetectorKind::Ee);
        }
    }

    #[test]
    fn shifted_points_score_higher() {
        let x = gaussian(300, 5, 5);
        let mut rng = rng_from(6);
        for kind in DetectorKind::ALL {
            let m = fit(kind, &x, &small_cfg()).unwrap();
            let mut wins = 0;
            for i in 0..50 {
                let clean = x.row(i).to_vec();
                let mut moved = clean.clone();
                let f = rng.random_range(0..5);
                moved[f] += 10.0;
                if m.score(&moved).unwrap() > m.score(&clean).unwrap() {
                    wins += 1;
                }
            }
            assert!(wins >= 48, "{kind}: {wins}/50");
        }
    }

    #[test]
    fn errors() {
        let x = gaussian(15, 3, 7);
        assert!(fit(DetectorKind::Lof, &Tensor::zeros(&[10, 3]), &small_cfg()).is_err());
        assert!(fit(DetectorKind::DeepSvdd, &x, &small_cfg()).is_err());
        let m = fit(DetectorKind::IForest, &x, &small_cfg()).unwrap();
        assert!(m.score(&[0.0; 4]).is_err());
        let bad = DetectorConfig {
            threshold_quantile: 1.5,
            ..small_cfg()
        };
        assert!(fit(DetectorKind::IForest, &x, &bad).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let x = gaussian(60, 3, 8);
        for kind in DetectorKind::ALL {
            let m = fit(kind, &x, &small_cfg()).unwrap();
            let json = serde_json::to_string(&m).unwrap();
            let back: DetectorModel = serde_json::from_str(&json).unwrap();
            assert_eq!(back.score_rows(&x).unwrap(), m.score_rows(&x).unwrap(), "{kind}");
        }
    }
}
