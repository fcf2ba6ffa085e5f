//! C ABI for loading trained `mtsad` models and detectors and scoring windows.
//!
//! Every fallible function returns an [`MtsadStatus`]. On failure the
//! message is available from [`mtsad_last_error_message`] on the same thread.
//! Handles are opaque and must be released with the matching `_free`
//! function. Windows are row-major `steps × features` arrays of `double`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mtsad::autoenc::TrainedModel;
use mtsad::detect::DetectorModel;
use mtsad::dtw::{dtw_distance, DtwParams};
use mtsad::pipeline::{Label, Window};
use mtsad::tensor::Tensor;
use mtsad::{persist, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtsadStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    ShapeMismatch = 5,
    Panic = 6,
}

/// A trained autoencoder (T2V or reconstruction).
pub struct MtsadModel {
    inner: TrainedModel,
}

/// A fitted one-class detector.
pub struct MtsadDetector {
    inner: DetectorModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MtsadStatus {
    match e {
        Error::Io { .. } | Error::Missing(_) => MtsadStatus::Io,
        Error::Format(_) | Error::Checksum | Error::Version { .. } | Error::Parse { .. } => MtsadStatus::Format,
        Error::Shape(_) => MtsadStatus::ShapeMismatch,
        _ => MtsadStatus::InvalidArgument,
    }
}

struct Failure(MtsadStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MtsadStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MtsadStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            MtsadStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            MtsadStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Failure(MtsadStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out_slice<'a>(ptr: *mut f64, len: usize, expected: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    if len != expected {
        return Err(Failure(
            MtsadStatus::ShapeMismatch,
            format!("{what} has length {len}, expected {expected}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn model_ref<'a>(m: *const MtsadModel) -> Result<&'a TrainedModel, Failure> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn detector_ref<'a>(d: *const MtsadDetector) -> Result<&'a DetectorModel, Failure> {
    d.as_ref().map(|d| &d.inner).ok_or_else(|| null("detector"))
}

unsafe fn window_arg(model: &TrainedModel, data: *const f64, steps: usize, features: usize) -> Result<Window, Failure> {
    if (steps, features) != (model.steps, model.features) {
        return Err(Failure(
            MtsadStatus::ShapeMismatch,
            format!(
                "window is {steps}x{features}, model expects {}x{}",
                model.steps, model.features
            ),
        ));
    }
    let values = slice_arg(data, steps * features, "window")?;
    Ok(Window::new(
        Tensor::new(vec![steps, features], values.to_vec())?,
        "ffi",
    )?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mtsad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn mtsad_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a model file written by `mtsad train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtsad_model_load(path: *const c_char, out: *mut *mut MtsadModel) -> MtsadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let inner = persist::load_model(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(MtsadModel { inner }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`mtsad_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mtsad_model_free(model: *mut MtsadModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Window shape and embedding length (0 for reconstruction models).
///
/// # Safety
/// `model` must be a live handle; each output pointer must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn mtsad_model_shape(
    model: *const MtsadModel,
    steps: *mut usize,
    features: *mut usize,
    embedding_len: *mut usize,
) -> MtsadStatus {
    guard(|| {
        let m = model_ref(model)?;
        if let Some(p) = steps.as_mut() {
            *p = m.steps;
        }
        if let Some(p) = features.as_mut() {
            *p = m.features;
        }
        if let Some(p) = embedding_len.as_mut() {
            *p = m.embedding_len();
        }
        Ok(())
    })
}

/// Flattened T2V embedding of one window into `out[0..out_len]`;
/// `out_len` must equal the model's embedding length.
///
/// # Safety
/// `window` must hold `steps * features` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mtsad_model_embed(
    model: *const MtsadModel,
    window: *const f64,
    steps: usize,
    features: usize,
    out: *mut f64,
    out_len: usize,
) -> MtsadStatus {
    guard(|| {
        let m = model_ref(model)?;
        let w = window_arg(m, window, steps, features)?;
        let dst = out_slice(out, out_len, m.embedding_len(), "embedding buffer")?;
        dst.copy_from_slice(m.embed(&w)?.data());
        Ok(())
    })
}

/// Reconstruction of one window in input units into `out[0..out_len]`;
/// `out_len` must equal `steps * features`.
///
/// # Safety
/// `window` must hold `steps * features` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mtsad_model_reconstruct(
    model: *const MtsadModel,
    window: *const f64,
    steps: usize,
    features: usize,
    out: *mut f64,
    out_len: usize,
) -> MtsadStatus {
    guard(|| {
        let m = model_ref(model)?;
        let w = window_arg(m, window, steps, features)?;
        let dst = out_slice(out, out_len, steps * features, "reconstruction buffer")?;
        dst.copy_from_slice(m.reconstruct(&w)?.data());
        Ok(())
    })
}

/// Composite reconstruction anomaly score of a calibrated reconstruction
/// model. `is_anomaly` (optional) receives 1 when the score exceeds the
/// model's threshold.
///
/// # Safety
/// `window` must hold `steps * features` doubles; `score` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mtsad_model_anomaly_score(
    model: *const MtsadModel,
    window: *const f64,
    steps: usize,
    features: usize,
    score: *mut f64,
    is_anomaly: *mut i32,
) -> MtsadStatus {
    guard(|| {
        let m = model_ref(model)?;
        if score.is_null() {
            return Err(null("score"));
        }
        let w = window_arg(m, window, steps, features)?;
        let s = m.anomaly_score(&w)?;
        *score = s;
        if let Some(flag) = is_anomaly.as_mut() {
            *flag = m.threshold.is_some_and(|t| s > t) as i32;
        }
        Ok(())
    })
}

/// Loads a detector file written by `mtsad fit-detector`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtsad_detector_load(path: *const c_char, out: *mut *mut MtsadDetector) -> MtsadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let inner = persist::load_detector(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(MtsadDetector { inner }));
        Ok(())
    })
}

/// Releases a detector. Null is ignored.
///
/// # Safety
/// `detector` must come from [`mtsad_detector_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mtsad_detector_free(detector: *mut MtsadDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}

/// Input dimension and decision threshold.
///
/// # Safety
/// `detector` must be a live handle; each output pointer must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn mtsad_detector_info(
    detector: *const MtsadDetector,
    dim: *mut usize,
    threshold: *mut f64,
) -> MtsadStatus {
    guard(|| {
        let d = detector_ref(detector)?;
        if let Some(p) = dim.as_mut() {
            *p = d.dim;
        }
        if let Some(p) = threshold.as_mut() {
            *p = d.threshold;
        }
        Ok(())
    })
}

/// Anomaly score of one embedding (higher is more anomalous).
///
/// # Safety
/// `x` must hold `dim` doubles; `score` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mtsad_detector_score(
    detector: *const MtsadDetector,
    x: *const f64,
    dim: usize,
    score: *mut f64,
) -> MtsadStatus {
    guard(|| {
        let d = detector_ref(detector)?;
        if score.is_null() {
            return Err(null("score"));
        }
        *score = d.score(slice_arg(x, dim, "embedding")?)?;
        Ok(())
    })
}

/// Writes 1 to `is_anomaly` when the embedding's score exceeds the
/// detector's threshold, else 0.
///
/// # Safety
/// `x` must hold `dim` doubles; `is_anomaly` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mtsad_detector_predict(
    detector: *const MtsadDetector,
    x: *const f64,
    dim: usize,
    is_anomaly: *mut i32,
) -> MtsadStatus {
    guard(|| {
        let d = detector_ref(detector)?;
        if is_anomaly.is_null() {
            return Err(null("is_anomaly"));
        }
        *is_anomaly = (d.predict(slice_arg(x, dim, "embedding")?)? == Label::Anomalous) as i32;
        Ok(())
    })
}

/// Multivariate DTW between row-major `na × features` and `nb × features`
/// series. A negative `band` searches the full grid; otherwise it is the
/// Sakoe-Chiba radius.
///
/// # Safety
/// `a` and `b` must hold `na * features` and `nb * features` doubles.
#[no_mangle]
pub unsafe extern "C" fn mtsad_dtw_distance(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    features: usize,
    band: i64,
    out: *mut f64,
) -> MtsadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ta = Tensor::new(vec![na, features], slice_arg(a, na * features, "a")?.to_vec())?;
        let tb = Tensor::new(vec![nb, features], slice_arg(b, nb * features, "b")?.to_vec())?;
        let params = DtwParams {
            band: usize::try_from(band).ok(),
        };
        *out = dtw_distance(&ta, &tb, params)?;
        Ok(())
    })
}
