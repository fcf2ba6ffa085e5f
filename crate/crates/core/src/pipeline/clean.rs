use std::collections::HashSet;

use super::RawSeries;
use crate::error::{Error, Result};

/// Linearly interpolated quantile of unsorted data (`q` in [0, 1]).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn keep_rows(s: &RawSeries, keep: &[bool]) -> RawSeries {
    let pick = |i: &usize| keep[*i];
    RawSeries {
        source_id: s.source_id.clone(),
        feature_names: s.feature_names.clone(),
        timestamps: (0..s.len()).filter(pick).map(|i| s.timestamps[i]).collect(),
        values: (0..s.len()).filter(pick).map(|i| s.values[i].clone()).collect(),
    }
}

/// Replaces missing cells with the previous row's value in the same column.
/// Rows with a missing cell and no earlier observation are dropped.
pub fn forward_fill(s: &RawSeries) -> RawSeries {
    let mut last: Vec<Option<f64>> = vec![None; s.features()];
    let mut out = RawSeries {
        source_id: s.source_id.clone(),
        feature_names: s.feature_names.clone(),
        timestamps: Vec::new(),
        values: Vec::new(),
    };
    for (t, row) in s.timestamps.iter().zip(&s.values) {
        let filled: Vec<Option<f64>> = row
            .iter()
            .zip(&mut last)
            .map(|(cell, prev)| {
                if let Some(v) = cell {
                    *prev = Some(*v);
                }
                *prev
            })
            .collect();
        if filled.iter().all(Option::is_some) {
            out.timestamps.push(*t);
            out.values.push(filled);
        }
    }
    out
}

/// Drops rows whose feature values exactly repeat an earlier row.
pub fn dedupe(s: &RawSeries) -> RawSeries {
    let mut seen = HashSet::new();
    let keep: Vec<bool> = s
        .values
        .iter()
        .map(|row| {
            let key: Vec<Option<u64>> = row.iter().map(|c| c.map(f64::to_bits)).collect();
            seen.insert(key)
        })
        .collect();
    keep_rows(s, &keep)
}

/// Keeps rows whose every feature lies within `[Q1 − k·IQR, Q3 + k·IQR]` of
/// its column. `k = 0` keeps only the interquartile band.
pub fn quantile_filter(s: &RawSeries, k: f64) -> RawSeries {
    if s.is_empty() {
        return s.clone();
    }
    let fences: Vec<(f64, f64)> = (0..s.features())
        .map(|c| {
            let col: Vec<f64> = s.values.iter().filter_map(|r| r[c]).collect();
            if col.is_empty() {
                return (f64::NEG_INFINITY, f64::INFINITY);
            }
            let q1 = quantile(&col, 0.25);
            let q3 = quantile(&col, 0.75);
            let iqr = q3 - q1;
            (q1 - k * iqr, q3 + k * iqr)
        })
        .collect();
    let keep: Vec<bool> = s
        .values
        .iter()
        .map(|row| {
            row.iter()
                .zip(&fences)
                .all(|(cell, (lo, hi))| cell.is_none_or(|v| v >= *lo && v <= *hi))
        })
        .collect();
    keep_rows(s, &keep)
}

/// Forward fill, then duplicate removal, then the quantile fence.
pub fn clean(s: &RawSeries, fence_k: f64) -> Result<RawSeries> {
    if !(fence_k >= 0.0) {
        return Err(Error::Config(format!("fence multiplier must be >= 0, got {fence_k}")));
    }
    let out = quantile_filter(&dedupe(&forward_fill(s)), fence_k);
    if out.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no rows left after cleaning",
            s.source_id
        )));
    }
    Ok(out)
}

/// Bucket width that brings a series of `len` rows down to at most 100.
pub fn auto_bucket_width(len: usize) -> i64 {
    len.div_ceil(super::WINDOW_LEN).max(1) as i64
}

/// Averages rows falling in the same `window_seconds` bucket (counted from
/// the first timestamp); each bucket keeps its last row's timestamp.
pub fn resample(s: &RawSeries, window_seconds: i64) -> Result<RawSeries> {
    if window_seconds < 1 {
        return Err(Error::Config(format!(
            "resample window must be >= 1 second, got {window_seconds}"
        )));
    }
    let mut out = RawSeries {
        source_id: s.source_id.clone(),
        feature_names: s.feature_names.clone(),
        timestamps: Vec::new(),
        values: Vec::new(),
    };
    let Some(&t0) = s.timestamps.first() else {
        return Ok(out);
    };
    let f = s.features();
    let mut i = 0;
    while i < s.len() {
        let bucket = (s.timestamps[i] - t0).div_euclid(window_seconds);
        let mut sums = vec![0.0; f];
        let mut counts = vec![0usize; f];
        let mut last_t = s.timestamps[i];
        while i < s.len() && (s.timestamps[i] - t0).div_euclid(window_seconds) == bucket {
            for (c, cell) in s.values[i].iter().enumerate() {
                if let Some(v) = cell {
                    sums[c] += v;
                    counts[c] += 1;
                }
            }
            last_t = s.timestamps[i];
            i += 1;
        }
        out.timestamps.push(last_t);
        out.values.push(
            sums.iter()
                .zip(&counts)
                .map(|(s, &n)| (n > 0).then(|| s / n as f64))
                .collect(),
        );
    }
    Ok(out)
}
