//! Confusion-matrix metrics and the method × test-set benchmark report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoenc::{TrainedModel, Variant};
use crate::detect::{DetectorKind, DetectorModel};
use crate::error::{Error, Result};
use crate::inject::{SetName, TestSuite};
use crate::pipeline::{Label, Window};
use crate::tensor::Tensor;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Counts with anomalous as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(preds: &[Label], labels: &[Label]) -> Result<Confusion> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut c = Confusion::default();
    for (p, l) in preds.iter().zip(labels) {
        match (p, l) {
            (Label::Anomalous, Label::Anomalous) => c.tp += 1,
            (Label::Anomalous, Label::Normal) => c.fp += 1,
            (Label::Normal, Label::Normal) => c.tn += 1,
            (Label::Normal, Label::Anomalous) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1, with 0/0 taken as 0.
pub fn prf1(c: &Confusion) -> Metrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics { precision, recall, f1 }
}

/// A benchmarked method: the reconstruction baseline or T2V embeddings
/// followed by one detector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Reconstruction,
    T2v(DetectorKind),
}

impl Method {
    /// Reporting order: baseline first, then each detector.
    pub fn all() -> Vec<Method> {
        std::iter::once(Method::Reconstruction)
            .chain(DetectorKind::ALL.into_iter().map(Method::T2v))
            .collect()
    }

    pub fn name(self) -> String {
        match self {
            Method::Reconstruction => "Reconstruction AE".into(),
            Method::T2v(k) => format!("T2V + {}", k.label()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub windows: usize,
    pub anomalous: usize,
    pub noisy: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub set: SetName,
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Inputs identifying a run; embedded verbatim in the report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    /// SHA-256 of the effective run configuration.
    pub config_digest: String,
    pub seeds: BTreeMap<String, u64>,
    /// Effective run configuration.
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub run: RunInfo,
    pub methods: Vec<String>,
    pub sets: Vec<SetName>,
    pub composition: BTreeMap<SetName, Composition>,
    /// Decision threshold of each method.
    pub thresholds: BTreeMap<String, f64>,
    pub results: Vec<ResultRow>,
}

impl EvalReport {
    pub fn get(&self, method: Method, set: SetName) -> Option<&ResultRow> {
        let name = method.name();
        self.results.iter().find(|r| r.method == name && r.set == set)
    }

    /// Every reported metric value, row-major over (method, set, metric).
    pub fn metric_values(&self) -> Vec<f64> {
        self.results
            .iter()
            .flat_map(|r| [r.precision, r.recall, r.f1])
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Aligned text table: one row per method, P/R/F1 per test set.
    pub fn render_table(&self) -> String {
        let width = self.methods.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = write!(out, "{:width$}", "Method");
        for set in &self.sets {
            let _ = write!(out, " | {:^20}", set.as_str());
        }
        out.push('\n');
        let _ = write!(out, "{:width$}", "");
        for _ in &self.sets {
            let _ = write!(out, " | {:>6} {:>6} {:>6}", "P", "R", "F1");
        }
        out.push('\n');
        out.push_str(&"-".repeat(width + self.sets.len() * 23));
        out.push('\n');
        for m in &self.methods {
            let _ = write!(out, "{m:width$}");
            for set in &self.sets {
                match self.results.iter().find(|r| &r.method == m && r.set == *set) {
                    Some(r) => {
                        let _ = write!(out, " | {:>6.3} {:>6.3} {:>6.3}", r.precision, r.recall, r.f1);
                    }
                    None => {
                        let _ = write!(out, " | {:>20}", "n/a");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Flattened T2V embeddings of `windows`, one row each.
pub fn embed_windows(model: &TrainedModel, windows: &[Window]) -> Result<Tensor> {
    if windows.is_empty() {
        return Err(Error::InvalidInput("no windows to embed".into()));
    }
    let rows = windows.par_iter().map(|w| model.embed(w)).collect::<Result<Vec<_>>>()?;
    let d = rows[0].len();
    Tensor::new(
        vec![rows.len(), d],
        rows.into_iter().flat_map(Tensor::into_data).collect(),
    )
}

fn labels(windows: &[Window]) -> Vec<Label> {
    windows.iter().map(Window::label).collect()
}

/// Evaluates the baseline and every T2V + detector method on all four
/// test sets. `detectors` must contain one fitted model per kind.
pub fn run_benchmark(
    suite: &TestSuite,
    baseline: &TrainedModel,
    t2v: &TrainedModel,
    detectors: &[DetectorModel],
    run: RunInfo,
) -> Result<EvalReport> {
    if baseline.variant() != Variant::Reconstruction {
        return Err(Error::Config(
            "baseline model must be a reconstruction autoencoder".into(),
        ));
    }
    if t2v.variant() != Variant::T2v {
        return Err(Error::Config("embedding model must be a T2V autoencoder".into()));
    }
    let baseline_threshold = baseline
        .threshold
        .ok_or_else(|| Error::Missing("baseline threshold (calibrate the reconstruction model)".into()))?;
    let methods = Method::all();
    let mut by_kind = BTreeMap::new();
    for d in detectors {
        by_kind.insert(d.kind, d);
    }
    for m in &methods {
        if let Method::T2v(k) = m {
            if !by_kind.contains_key(k) {
                return Err(Error::Missing(format!("fitted {k} detector")));
            }
        }
    }

    let mut results = Vec::new();
    let mut composition = BTreeMap::new();
    for set in SetName::ALL {
        let windows = suite.set(set);
        let truth = labels(windows);
        composition.insert(
            set,
            Composition {
                windows: windows.len(),
                anomalous: truth.iter().filter(|l| **l == Label::Anomalous).count(),
                noisy: windows.iter().filter(|w| w.has_noise()).count(),
            },
        );
        let recon = windows
            .par_iter()
            .map(|w| baseline.anomaly_score(w))
            .collect::<Result<Vec<_>>>()?;
        let embeddings = embed_windows(t2v, windows)?;
        for m in &methods {
            let preds: Vec<Label> = match m {
                Method::Reconstruction => recon
                    .iter()
                    .map(|&s| {
                        if s > baseline_threshold {
                            Label::Anomalous
                        } else {
                            Label::Normal
                        }
                    })
                    .collect(),
                Method::T2v(k) => by_kind[k].predict_rows(&embeddings)?,
            };
            let c = confusion(&preds, &truth)?;
            let p = prf1(&c);
            results.push(ResultRow {
                method: m.name(),
                set,
                confusion: c,
                precision: p.precision,
                recall: p.recall,
                f1: p.f1,
            });
        }
    }
    let mut thresholds = BTreeMap::new();
    thresholds.insert(Method::Reconstruction.name(), baseline_threshold);
    for m in &methods {
        if let Method::T2v(k) = m {
            thresholds.insert(m.name(), by_kind[k].threshold);
        }
    }
    // Rows ordered method-major to match the table layout.
    let order: BTreeMap<String, usize> = methods.iter().enumerate().map(|(i, m)| (m.name(), i)).collect();
    results.sort_by_key(|r| (order[&r.method], r.set));
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        run,
        methods: methods.iter().map(|m| m.name()).collect(),
        sets: SetName::ALL.to_vec(),
        composition,
        thresholds,
        results,
    })
}
