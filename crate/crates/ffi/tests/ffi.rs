use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use mtsad::autoenc::{build, train, AeConfig, TrainedModel};
use mtsad::detect::{fit, DetectorConfig, DetectorKind};
use mtsad::dtw::{dtw_distance, DtwParams};
use mtsad::eval::embed_windows;
use mtsad::persist;
use mtsad::pipeline::{synth_generate, SynthParams, Window};
use mtsad::tensor::Tensor;
use mtsad_ffi::*;

const STEPS: usize = 20;
const FEATURES: usize = 6;

struct Fixture {
    _dir: tempfile::TempDir,
    t2v_path: PathBuf,
    recon_path: PathBuf,
    detector_path: PathBuf,
    t2v: TrainedModel,
    recon: TrainedModel,
    windows: Vec<Window>,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_generate(
        &SynthParams {
            windows: 60,
            steps: STEPS,
            ..Default::default()
        },
        11,
    )
    .unwrap();
    let windows = corpus.train_windows();
    let t2v_cfg = AeConfig {
        epochs: 2,
        filters: 4,
        ..AeConfig::reference_t2v(1)
    };
    let t2v = train(build(&t2v_cfg, STEPS, FEATURES).unwrap(), &windows).unwrap();
    let recon_cfg = AeConfig {
        epochs: 2,
        filters: 4,
        ..AeConfig::reference_recon(2)
    };
    let mut recon = train(build(&recon_cfg, STEPS, FEATURES).unwrap(), &windows).unwrap();
    recon.calibrate(&windows, 0.99).unwrap();
    let emb = embed_windows(&t2v, &windows).unwrap();
    let det = fit(DetectorKind::Lof, &emb, &DetectorConfig::default()).unwrap();

    let t2v_path = dir.path().join("t2v.json");
    let recon_path = dir.path().join("recon.json");
    let detector_path = dir.path().join("detector-lof.json");
    persist::save_model(&t2v_path, &t2v).unwrap();
    persist::save_model(&recon_path, &recon).unwrap();
    persist::save_detector(&detector_path, &det).unwrap();
    Fixture {
        _dir: dir,
        t2v_path,
        recon_path,
        detector_path,
        t2v,
        recon,
        windows,
    }
}

fn c_path(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mtsad_last_error_message()) }
        .to_str()
        .unwrap()
        .to_string()
}

unsafe fn load_model(p: &Path) -> *mut MtsadModel {
    let mut m = ptr::null_mut();
    assert_eq!(
        mtsad_model_load(c_path(p).as_ptr(), &mut m),
        MtsadStatus::Ok,
        "{}",
        last_error()
    );
    m
}

#[test]
fn embeddings_match_the_library_bit_for_bit() {
    let fx = fixture();
    unsafe {
        let m = load_model(&fx.t2v_path);
        let (mut steps, mut features, mut len) = (0, 0, 0);
        assert_eq!(
            mtsad_model_shape(m, &mut steps, &mut features, &mut len),
            MtsadStatus::Ok
        );
        assert_eq!((steps, features, len), (STEPS, FEATURES, STEPS * 7));
        let mut out = vec![0.0; len];
        for w in &fx.windows[..10] {
            let st = mtsad_model_embed(m, w.data.data().as_ptr(), STEPS, FEATURES, out.as_mut_ptr(), len);
            assert_eq!(st, MtsadStatus::Ok);
            let expected = fx.t2v.embed(w).unwrap();
            assert!(out.iter().zip(expected.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        mtsad_model_free(m);
    }
}

#[test]
fn reconstruction_and_score_match_the_library() {
    let fx = fixture();
    unsafe {
        let m = load_model(&fx.recon_path);
        let w = &fx.windows[3];
        let mut out = vec![0.0; STEPS * FEATURES];
        let st = mtsad_model_reconstruct(m, w.data.data().as_ptr(), STEPS, FEATURES, out.as_mut_ptr(), out.len());
        assert_eq!(st, MtsadStatus::Ok);
        assert_eq!(out, fx.recon.reconstruct(w).unwrap().into_data());

        let (mut score, mut flag) = (0.0, -1);
        let st = mtsad_model_anomaly_score(m, w.data.data().as_ptr(), STEPS, FEATURES, &mut score, &mut flag);
        assert_eq!(st, MtsadStatus::Ok);
        assert_eq!(score, fx.recon.anomaly_score(w).unwrap());
        assert_eq!(flag, (score > fx.recon.threshold.unwrap()) as i32);
        mtsad_model_free(m);
    }
}

#[test]
fn detector_scores_and_predicts() {
    let fx = fixture();
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(
            mtsad_detector_load(c_path(&fx.detector_path).as_ptr(), &mut d),
            MtsadStatus::Ok
        );
        let (mut dim, mut threshold) = (0, 0.0);
        assert_eq!(mtsad_detector_info(d, &mut dim, &mut threshold), MtsadStatus::Ok);
        assert_eq!(dim, STEPS * 7);

        let inlier = fx.t2v.embed(&fx.windows[0]).unwrap().into_data();
        let far: Vec<f64> = inlier.iter().map(|v| v + 50.0).collect();
        let (mut s_in, mut s_far) = (0.0, 0.0);
        assert_eq!(
            mtsad_detector_score(d, inlier.as_ptr(), dim, &mut s_in),
            MtsadStatus::Ok
        );
        assert_eq!(mtsad_detector_score(d, far.as_ptr(), dim, &mut s_far), MtsadStatus::Ok);
        assert!(s_far > s_in);
        let mut flag = -1;
        assert_eq!(mtsad_detector_predict(d, far.as_ptr(), dim, &mut flag), MtsadStatus::Ok);
        assert_eq!(flag, 1);

        let st = mtsad_detector_score(d, inlier.as_ptr(), dim - 1, &mut s_in);
        assert_eq!(st, MtsadStatus::ShapeMismatch);
        mtsad_detector_free(d);
    }
}

#[test]
fn dtw_matches_the_library() {
    let a: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
    let b: Vec<f64> = (0..8).map(|i| (i as f64 * 0.3).cos()).collect();
    let mut out = 0.0;
    let st = unsafe { mtsad_dtw_distance(a.as_ptr(), 6, b.as_ptr(), 4, 2, -1, &mut out) };
    assert_eq!(st, MtsadStatus::Ok);
    let ta = Tensor::new(vec![6, 2], a.clone()).unwrap();
    let tb = Tensor::new(vec![4, 2], b.clone()).unwrap();
    assert_eq!(out, dtw_distance(&ta, &tb, DtwParams::default()).unwrap());

    let st = unsafe { mtsad_dtw_distance(a.as_ptr(), 0, b.as_ptr(), 4, 2, -1, &mut out) };
    assert_eq!(st, MtsadStatus::InvalidArgument);
    assert!(last_error().contains("empty"), "{}", last_error());
}

#[test]
fn errors_are_reported() {
    let fx = fixture();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(mtsad_model_load(ptr::null(), &mut m), MtsadStatus::NullPointer);
        assert!(m.is_null());

        let missing = c_path(Path::new("/nonexistent/model.json"));
        assert_eq!(mtsad_model_load(missing.as_ptr(), &mut m), MtsadStatus::Io);
        assert!(last_error().contains("/nonexistent/model.json"));

        let mut d = ptr::null_mut();
        assert_eq!(
            mtsad_detector_load(c_path(&fx.t2v_path).as_ptr(), &mut d),
            MtsadStatus::Format
        );
        assert!(d.is_null());

        let m = load_model(&fx.t2v_path);
        assert_eq!(last_error(), "");
        let mut out = vec![0.0; 3];
        let w = fx.windows[0].data.data();
        assert_eq!(
            mtsad_model_embed(m, w.as_ptr(), STEPS, FEATURES, out.as_mut_ptr(), 3),
            MtsadStatus::ShapeMismatch
        );
        assert_eq!(
            mtsad_model_embed(m, w.as_ptr(), STEPS + 1, FEATURES, out.as_mut_ptr(), 3),
            MtsadStatus::ShapeMismatch
        );
        assert_eq!(
            mtsad_model_embed(m, ptr::null(), STEPS, FEATURES, out.as_mut_ptr(), 3),
            MtsadStatus::NullPointer
        );
        let mut score = 0.0;
        let st = mtsad_model_anomaly_score(m, w.as_ptr(), STEPS, FEATURES, &mut score, ptr::null_mut());
        assert_eq!(st, MtsadStatus::Io);
        assert!(last_error().contains("calibration"));
        mtsad_model_free(m);

        assert_eq!(
            mtsad_model_shape(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()),
            MtsadStatus::NullPointer
        );
        mtsad_model_free(ptr::null_mut());
        mtsad_detector_free(ptr::null_mut());
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(mtsad_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn generated_header_declares_the_api() {
    let header = std::fs::read_to_string(header_dir().join("mtsad.h")).unwrap();
    for name in [
        "mtsad_version",
        "mtsad_last_error_message",
        "mtsad_model_load",
        "mtsad_model_free",
        "mtsad_model_embed",
        "mtsad_model_reconstruct",
        "mtsad_model_anomaly_score",
        "mtsad_detector_load",
        "mtsad_detector_free",
        "mtsad_detector_score",
        "mtsad_detector_predict",
        "mtsad_dtw_distance",
        "MTSAD_STATUS_OK = 0",
        "MTSAD_STATUS_PANIC = 6",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "mtsad.h"

int main(void) {
    double a[4] = {0.0, 1.0, 2.0, 3.0};
    double b[3] = {0.0, 2.0, 3.0};
    double d = -1.0;
    if (mtsad_dtw_distance(a, 4, b, 3, 1, -1, &d) != MTSAD_STATUS_OK) return 1;
    if (d != 1.0) return 2;
    MtsadModel *m = NULL;
    if (mtsad_model_load("/nonexistent.json", &m) != MTSAD_STATUS_IO) return 3;
    if (m != NULL || strlen(mtsad_last_error_message()) == 0) return 4;
    printf("%s\n", mtsad_version());
    return 0;
}
"#;

/// Compiles and runs a C program against the header and the static library
/// when a C compiler and the archive are available.
#[test]
fn c_program_links_against_the_static_library() {
    let Ok(exe) = std::env::current_exe() else { return };
    let Some(profile_dir) = exe.parent().and_then(Path::parent) else {
        return;
    };
    let archive = profile_dir.join("libmtsad_ffi.a");
    if !archive.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler not available");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header_dir())
        .arg(&src)
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
