//! End-to-end synthetic benchmark: generate → train both autoencoders →
//! fit the five detectors → build the test sets → evaluate.

use std::time::{Duration, Instant};

use crate::autoenc::{build, train, TrainedModel};
use crate::config::RunConfig;
use crate::detect::{fit, DetectorKind, DetectorModel};
use crate::error::Result;
use crate::eval::{embed_windows, run_benchmark, EvalReport};
use crate::inject::{build_testsets, TestSuite};
use crate::pipeline::{synth_generate, Corpus, Window};

pub struct Experiment {
    pub config: RunConfig,
    pub corpus: Corpus,
    pub t2v: TrainedModel,
    pub recon: TrainedModel,
    pub detectors: Vec<DetectorModel>,
    pub suite: TestSuite,
    pub report: EvalReport,
    /// Wall-clock time of each stage, in order.
    pub timings: Vec<(String, Duration)>,
}

pub fn train_t2v(cfg: &RunConfig, train_set: &[Window]) -> Result<TrainedModel> {
    let eff = cfg.effective();
    let (steps, features) = (train_set[0].steps(), train_set[0].features());
    train(build(&eff.t2v, steps, features)?, train_set)
}

pub fn train_recon(cfg: &RunConfig, train_set: &[Window]) -> Result<TrainedModel> {
    let eff = cfg.effective();
    let (steps, features) = (train_set[0].steps(), train_set[0].features());
    let mut m = train(build(&eff.recon, steps, features)?, train_set)?;
    m.calibrate(train_set, cfg.recon_threshold_quantile)?;
    Ok(m)
}

pub fn fit_detectors(cfg: &RunConfig, t2v: &TrainedModel, train_set: &[Window]) -> Result<Vec<DetectorModel>> {
    let eff = cfg.effective();
    let emb = embed_windows(t2v, train_set)?;
    DetectorKind::ALL
        .iter()
        .map(|&k| fit(k, &emb, &eff.detectors))
        .collect()
}

/// Runs the whole benchmark. `progress` receives one line per finished stage.
pub fn run_experiment(cfg: &RunConfig, progress: &mut dyn FnMut(&str)) -> Result<Experiment> {
    cfg.validate()?;
    let eff = cfg.effective();
    let mut timings = Vec::new();
    let mut stage = |name: &str, start: Instant, progress: &mut dyn FnMut(&str)| {
        let d = start.elapsed();
        progress(&format!("{name}: {:.1}s", d.as_secs_f64()));
        timings.push((name.to_string(), d));
    };

    let t = Instant::now();
    let corpus = synth_generate(&cfg.synth, cfg.stage_seed("generate"))?;
    let train_set = corpus.train_windows();
    stage("generate", t, progress);

    let t = Instant::now();
    let t2v = train_t2v(cfg, &train_set)?;
    stage("train t2v", t, progress);

    let t = Instant::now();
    let recon = train_recon(cfg, &train_set)?;
    stage("train recon", t, progress);

    let t = Instant::now();
    let emb = embed_windows(&t2v, &train_set)?;
    stage("embed", t, progress);
    let mut detectors = Vec::new();
    for kind in DetectorKind::ALL {
        let t = Instant::now();
        detectors.push(fit(kind, &emb, &eff.detectors)?);
        stage(&format!("fit {kind}"), t, progress);
    }

    let t = Instant::now();
    let suite = build_testsets(&corpus.test_windows(), &eff.injection)?;
    stage("build testsets", t, progress);

    let t = Instant::now();
    let report = run_benchmark(&suite, &recon, &t2v, &detectors, cfg.run_info())?;
    stage("evaluate", t, progress);

    Ok(Experiment {
        config: eff,
        corpus,
        t2v,
        recon,
        detectors,
        suite,
        report,
        timings,
    })
}
