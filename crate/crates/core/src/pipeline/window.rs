use super::{RawSeries, Tag, Window};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Steps per window.
pub const WINDOW_LEN: usize = 100;

/// Shortest tail that is padded into a window; shorter tails are dropped.
pub const MIN_TAIL: usize = 10;

pub fn windowize(s: &RawSeries) -> Result<Vec<Window>> {
    windowize_with(s, WINDOW_LEN, MIN_TAIL)
}

/// Cuts consecutive non-overlapping windows of `len` rows. A final partial
/// window of at least `min_tail` rows is extended by repeating its last row
/// and tagged [`Tag::Padded`].
pub fn windowize_with(s: &RawSeries, len: usize, min_tail: usize) -> Result<Vec<Window>> {
    if s.is_empty() {
        return Err(Error::InvalidInput(format!("{}: empty series", s.source_id)));
    }
    if len == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    let rows: Vec<Vec<f64>> = s
        .values
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter().copied().collect::<Option<Vec<f64>>>().ok_or_else(|| {
                Error::InvalidInput(format!(
                    "{}: row {i} has missing values; clean before windowing",
                    s.source_id
                ))
            })
        })
        .collect::<Result<_>>()?;
    let f = s.features();
    let mut out = Vec::new();
    for (idx, chunk) in rows.chunks(len).enumerate() {
        let padded = chunk.len() < len;
        if padded && chunk.len() < min_tail {
            break;
        }
        let mut data: Vec<f64> = chunk.concat();
        let last = chunk.last().expect("non-empty chunk");
        for _ in chunk.len()..len {
            data.extend_from_slice(last);
        }
        let mut w = Window::new(Tensor::matrix(len, f, data)?, format!("{}#{idx}", s.source_id))?;
        if padded {
            w = w.with_tags([Tag::Padded]);
        }
        out.push(w);
    }
    Ok(out)
}
