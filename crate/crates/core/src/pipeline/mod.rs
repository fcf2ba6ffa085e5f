//! Ingestion and preprocessing: CSV loading, cleaning, resampling,
//! fixed-length windowing, train/test splitting, and a synthetic corpus
//! generator with the same shape as the plant data.

mod clean;
mod csv;
mod split;
mod synth;
mod window;

pub use self::clean::{auto_bucket_width, clean, dedupe, forward_fill, quantile, quantile_filter, resample};
pub use self::csv::load_csv;
pub use self::split::split;
pub use self::synth::{synth_generate, SynthParams, FLAT_FEATURES};
pub use self::window::{windowize, windowize_with, MIN_TAIL, WINDOW_LEN};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Features per window after selection.
pub const N_FEATURES: usize = 6;

/// A cleaned-or-raw multivariate series. `None` marks a missing cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    pub source_id: String,
    pub feature_names: Vec<String>,
    /// Integer seconds, strictly increasing.
    pub timestamps: Vec<i64>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn features(&self) -> usize {
        self.feature_names.len()
    }

    /// Builds a fully observed series; handy for tests and generators.
    pub fn from_rows(source_id: &str, timestamps: Vec<i64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let f = rows.first().map_or(0, Vec::len);
        if rows.len() != timestamps.len() || rows.iter().any(|r| r.len() != f) {
            return Err(Error::Shape("ragged series".into()));
        }
        Ok(RawSeries {
            source_id: source_id.to_string(),
            feature_names: (0..f).map(|i| format!("f{i}")).collect(),
            timestamps,
            values: rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Step,
    Spikes,
    PointNoise,
    SaltPepper,
    Padded,
}

impl Tag {
    pub fn is_anomaly(self) -> bool {
        matches!(self, Tag::Step | Tag::Spikes)
    }

    pub fn is_noise(self) -> bool {
        matches!(self, Tag::PointNoise | Tag::SaltPepper)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Anomalous,
}

/// One fixed-length `N×F` window. The label is derived from the tags: a
/// window is anomalous iff it carries a step or spike injection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WindowRepr", into = "WindowRepr")]
pub struct Window {
    pub data: Tensor,
    pub tags: BTreeSet<Tag>,
    pub origin: String,
}

#[derive(Clone, Serialize, Deserialize)]
struct WindowRepr {
    origin: String,
    label: Label,
    tags: BTreeSet<Tag>,
    data: Tensor,
}

impl From<Window> for WindowRepr {
    fn from(w: Window) -> Self {
        WindowRepr {
            label: w.label(),
            origin: w.origin,
            tags: w.tags,
            data: w.data,
        }
    }
}

impl TryFrom<WindowRepr> for Window {
    type Error = Error;

    fn try_from(r: WindowRepr) -> Result<Self> {
        let w = Window::new(r.data, r.origin)?.with_tags(r.tags);
        if w.label() != r.label {
            return Err(Error::Format(format!(
                "window {}: label {:?} contradicts its tags",
                w.origin, r.label
            )));
        }
        Ok(w)
    }
}

impl Window {
    pub fn new(data: Tensor, origin: impl Into<String>) -> Result<Self> {
        data.expect_ndim(2, "window")?;
        Ok(Window {
            data,
            tags: BTreeSet::new(),
            origin: origin.into(),
        })
    }

    pub fn with_tags(mut self, tags: impl IntoIterator<Item = Tag>) -> Self {
        self.tags.extend(tags);
        self
    }

    pub fn label(&self) -> Label {
        if self.tags.iter().any(|t| t.is_anomaly()) {
            Label::Anomalous
        } else {
            Label::Normal
        }
    }

    pub fn has_noise(&self) -> bool {
        self.tags.iter().any(|t| t.is_noise())
    }

    pub fn steps(&self) -> usize {
        self.data.rows()
    }

    pub fn features(&self) -> usize {
        self.data.cols()
    }
}

/// Where a corpus came from and which knobs produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub seed: u64,
    pub params: serde_json::Value,
}

/// Windows plus a disjoint, exhaustive train/test partition (by index).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub windows: Vec<Window>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn train_windows(&self) -> Vec<Window> {
        self.train.iter().map(|&i| self.windows[i].clone()).collect()
    }

    pub fn test_windows(&self) -> Vec<Window> {
        self.test.iter().map(|&i| self.windows[i].clone()).collect()
    }

    /// Checks the partition and window shapes.
    pub fn validate(&self) -> Result<()> {
        let n = self.windows.len();
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.test) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Format(format!("split index {i} is out of range or repeated")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Format("split does not cover every window".into()));
        }
        if let Some(first) = self.windows.first() {
            let shape = first.data.shape();
            if self.windows.iter().any(|w| w.data.shape() != shape) {
                return Err(Error::Format("windows have differing shapes".into()));
            }
        }
        Ok(())
    }
}

/// Cleans, resamples, and windows each series, then splits the pooled
/// windows into train and test. `bucket_width = None` picks a width per
/// series with [`auto_bucket_width`].
pub fn corpus_from_series(
    series: &[RawSeries],
    fence_k: f64,
    bucket_width: Option<i64>,
    test_fraction: f64,
    seed: u64,
) -> Result<Corpus> {
    if series.is_empty() {
        return Err(Error::InvalidInput("no input series".into()));
    }
    let mut windows = Vec::new();
    for s in series {
        let cleaned = clean(s, fence_k)?;
        let width = bucket_width.unwrap_or_else(|| auto_bucket_width(cleaned.len()));
        windows.extend(windowize(&resample(&cleaned, width)?)?);
    }
    let (train, test) = split(windows.len(), test_fraction, crate::rng::derive_seed(seed, "split"))?;
    Ok(Corpus {
        windows,
        train,
        test,
        provenance: Provenance {
            source: series
                .iter()
                .map(|s| s.source_id.as_str())
                .collect::<Vec<_>>()
                .join(","),
            seed,
            params: serde_json::json!({
                "fence_k": fence_k,
                "bucket_width": bucket_width,
                "test_fraction": test_fraction,
            }),
        },
    })
}

/// Per-feature z-scoring with statistics from a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(features: usize) -> Self {
        Standardizer {
            mean: vec![0.0; features],
            std: vec![1.0; features],
        }
    }

    pub fn fit(windows: &[Window]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot fit a standardizer on zero windows".into()))?;
        let f = first.features();
        let mut sum = vec![0.0; f];
        let mut sq = vec![0.0; f];
        let mut count = 0usize;
        for w in windows {
            for r in 0..w.steps() {
                for (c, &v) in w.data.row(r).iter().enumerate() {
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
            count += w.steps();
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let var = (s / n - m * m).max(0.0);
                if var.sqrt() > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "standardizer expects {} features, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let f = self.mean.len();
        Ok(Tensor::from_fn(x.shape(), |i| {
            let c = i % f;
            (x.data()[i] - self.mean[c]) / self.std[c]
        }))
    }
}
