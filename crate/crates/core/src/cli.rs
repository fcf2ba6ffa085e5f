//! The `mtsad` command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::autoenc::{build, hyper_search, train, Variant};
use crate::config::RunConfig;
use crate::detect::{fit, DetectorKind, DetectorModel};
use crate::error::{Error, Result};
use crate::eval::{embed_windows, run_benchmark, EvalReport};
use crate::experiment::{run_experiment, train_recon, train_t2v};
use crate::inject::build_testsets;
use crate::persist::{self, Embeddings};
use crate::pipeline::{corpus_from_series, load_csv, synth_generate, Corpus, Window};

pub const OUT_DIR_ENV: &str = "MTSAD_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "mtsad",
    version,
    about = "Time2Vec embeddings and one-class detectors for multivariate time-series anomaly detection"
)]
struct Cli {
    /// Run configuration (JSON). Omitted keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed; overrides the configuration's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".", value_name = "DIR")]
    out_dir: PathBuf,

    /// Suppress progress messages on standard error.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    Generate {
        /// Number of windows; overrides `synth.windows`.
        #[arg(long)]
        windows: Option<usize>,
        /// Output corpus file [default: <out-dir>/corpus.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clean, resample, window, and split CSV series into a corpus.
    Preprocess {
        /// CSV files with a `timestamp` column and one column per feature.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Feature columns to keep, in order; overrides `preprocess.features`.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        /// Output corpus file [default: <out-dir>/corpus.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random hyperparameter search scored by validation DTW.
    Search {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long, value_enum)]
        variant: VariantArg,
        /// Number of trials; overrides `search.trials`.
        #[arg(long)]
        trials: Option<usize>,
        /// Output file [default: <out-dir>/search-<variant>.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an autoencoder on the corpus's training windows.
    Train {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long, value_enum)]
        variant: VariantArg,
        /// Use the best configuration from a search file instead of the run configuration.
        #[arg(long, value_name = "FILE")]
        from_search: Option<PathBuf>,
        /// Output model file [default: <out-dir>/t2v.json or recon.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flattened T2V embeddings of corpus windows.
    Embed {
        /// Trained T2V model [default: <out-dir>/t2v.json].
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long, value_enum, default_value_t = Part::Train)]
        part: Part,
        /// Output file [default: <out-dir>/embeddings.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one-class detectors on T2V embeddings of the training windows.
    FitDetector {
        /// Trained T2V model [default: <out-dir>/t2v.json].
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[command(flatten)]
        corpus: CorpusArg,
        /// Detector kinds; all five when omitted.
        #[arg(long = "kind", value_delimiter = ',')]
        kinds: Vec<DetectorKind>,
        /// Output file; only valid with a single kind
        /// [default: <out-dir>/detector-<kind>.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the A-6F, AN-6F, A-4F, and AN-4F test sets from the clean test windows.
    BuildTestsets {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Output file [default: <out-dir>/testsets.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the baseline and every T2V + detector method on the test sets.
    Evaluate {
        /// Test sets [default: <out-dir>/testsets.json].
        #[arg(long, value_name = "FILE")]
        testsets: Option<PathBuf>,
        /// Calibrated reconstruction model [default: <out-dir>/recon.json].
        #[arg(long, value_name = "FILE")]
        recon: Option<PathBuf>,
        /// T2V model [default: <out-dir>/t2v.json].
        #[arg(long, value_name = "FILE")]
        t2v: Option<PathBuf>,
        /// Fitted detectors [default: <out-dir>/detector-<kind>.json for every kind].
        #[arg(long = "detector", value_name = "FILE")]
        detectors: Vec<PathBuf>,
        /// Output report [default: <out-dir>/report.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a saved report.
    Report {
        /// Report file [default: <out-dir>/report.json].
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Run generate, train, fit-detector, build-testsets, and evaluate in one process.
    Run,
}

#[derive(Debug, Args)]
struct CorpusArg {
    /// Corpus file [default: <out-dir>/corpus.json].
    #[arg(long = "corpus", value_name = "FILE")]
    path: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    T2v,
    Reconstruction,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::T2v => Variant::T2v,
            VariantArg::Reconstruction => Variant::Reconstruction,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Part {
    Train,
    Test,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Table,
    Json,
}

struct Ctx {
    cfg: RunConfig,
    out_dir: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn progress(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn out(&self, given: Option<PathBuf>, default: &str) -> PathBuf {
        given.unwrap_or_else(|| self.out_dir.join(default))
    }

    /// Existing input file, or a `Missing` error naming the artifact.
    fn input(&self, given: Option<PathBuf>, default: &str, what: &str) -> Result<PathBuf> {
        let path = self.out(given, default);
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::Missing(format!("{what} not found at {}", path.display())))
        }
    }

    fn corpus(&self, arg: CorpusArg) -> Result<Corpus> {
        persist::load_corpus(&self.input(arg.path, "corpus.json", "corpus")?)
    }
}

fn model_file(v: Variant) -> &'static str {
    match v {
        Variant::T2v => "t2v.json",
        Variant::Reconstruction => "recon.json",
    }
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::T2v => "t2v",
        Variant::Reconstruction => "reconstruction",
    }
}

fn detector_file(kind: DetectorKind) -> String {
    format!("detector-{}.json", kind.as_str())
}

/// Refuses to write over any of the command's inputs.
fn check_outputs(outputs: &[&Path], inputs: &[&Path]) -> Result<()> {
    let canon = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    for o in outputs {
        if inputs.iter().any(|i| canon(i) == canon(o)) {
            return Err(Error::Config(format!(
                "output {} would overwrite an input file",
                o.display()
            )));
        }
    }
    Ok(())
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 1 on a runtime error, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            EXIT_RUNTIME
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        cfg: load_config(cli.config.as_deref(), cli.seed)?,
        out_dir: cli.out_dir,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Generate { windows, out } => generate(&ctx, windows, out),
        Command::Preprocess { inputs, features, out } => preprocess(&ctx, &inputs, features, out),
        Command::Search {
            corpus,
            variant,
            trials,
            out,
        } => search(&ctx, corpus, variant.into(), trials, out),
        Command::Train {
            corpus,
            variant,
            from_search,
            out,
        } => train_cmd(&ctx, corpus, variant.into(), from_search, out),
        Command::Embed {
            model,
            corpus,
            part,
            out,
        } => embed(&ctx, model, corpus, part, out),
        Command::FitDetector {
            model,
            corpus,
            kinds,
            out,
        } => fit_detector(&ctx, model, corpus, kinds, out),
        Command::BuildTestsets { corpus, out } => build_testsets_cmd(&ctx, corpus, out),
        Command::Evaluate {
            testsets,
            recon,
            t2v,
            detectors,
            out,
        } => evaluate(&ctx, testsets, recon, t2v, detectors, out),
        Command::Report { input, format } => report(&ctx, input, format),
        Command::Run => run_all(&ctx),
    }
}

fn generate(ctx: &Ctx, windows: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut params = ctx.cfg.synth.clone();
    if let Some(n) = windows {
        params.windows = n;
    }
    let corpus = synth_generate(&params, ctx.cfg.stage_seed("generate"))?;
    let out = ctx.out(out, "corpus.json");
    persist::save_corpus(&out, &corpus)?;
    ctx.progress(&format!(
        "wrote {} ({} windows: {} train, {} test)",
        out.display(),
        corpus.windows.len(),
        corpus.train.len(),
        corpus.test.len()
    ));
    Ok(())
}

fn preprocess(ctx: &Ctx, inputs: &[PathBuf], features: Vec<String>, out: Option<PathBuf>) -> Result<()> {
    let p = &ctx.cfg.preprocess;
    let features = if features.is_empty() {
        p.features.clone()
    } else {
        features
    };
    let out = ctx.out(out, "corpus.json");
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    check_outputs(&[&out], &input_refs)?;
    let series = inputs
        .iter()
        .map(|i| load_csv(i, &features))
        .collect::<Result<Vec<_>>>()?;
    let corpus = corpus_from_series(
        &series,
        p.quantile_k,
        p.bucket_width,
        p.test_fraction,
        ctx.cfg.stage_seed("generate"),
    )?;
    persist::save_corpus(&out, &corpus)?;
    ctx.progress(&format!(
        "wrote {} ({} windows from {} series)",
        out.display(),
        corpus.windows.len(),
        series.len()
    ));
    Ok(())
}

fn search(ctx: &Ctx, corpus: CorpusArg, variant: Variant, trials: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let corpus = ctx.corpus(corpus)?;
    let trials = trials.unwrap_or(ctx.cfg.search.trials);
    let result = hyper_search(
        &corpus.train_windows(),
        variant,
        trials,
        ctx.cfg.seed,
        &ctx.cfg.search.space,
    )?;
    let out = ctx.out(out, &format!("search-{}.json", variant_name(variant)));
    persist::save_search(&out, &result)?;
    let best = result.best_trial();
    ctx.progress(&format!(
        "wrote {} (best trial {} of {}: validation DTW {:.4})",
        out.display(),
        result.best,
        result.trials.len(),
        best.validation_dtw
    ));
    Ok(())
}

fn train_cmd(
    ctx: &Ctx,
    corpus: CorpusArg,
    variant: Variant,
    from_search: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let corpus = ctx.corpus(corpus)?;
    let train_set = corpus.train_windows();
    let model = match from_search {
        Some(path) => {
            let result = persist::load_search(&path)?;
            let mut cfg = result.best_trial().config.clone();
            if cfg.variant != variant {
                return Err(Error::Config(format!(
                    "{}: search was run for {}, not {}",
                    path.display(),
                    variant_name(cfg.variant),
                    variant_name(variant)
                )));
            }
            let eff = ctx.cfg.effective();
            cfg.seed = match variant {
                Variant::T2v => eff.t2v.seed,
                Variant::Reconstruction => eff.recon.seed,
            };
            let (steps, features) = (train_set[0].steps(), train_set[0].features());
            let mut m = train(build(&cfg, steps, features)?, &train_set)?;
            if variant == Variant::Reconstruction {
                m.calibrate(&train_set, ctx.cfg.recon_threshold_quantile)?;
            }
            m
        }
        None => match variant {
            Variant::T2v => train_t2v(&ctx.cfg, &train_set)?,
            Variant::Reconstruction => train_recon(&ctx.cfg, &train_set)?,
        },
    };
    let out = ctx.out(out, model_file(variant));
    persist::save_model(&out, &model)?;
    ctx.progress(&format!(
        "wrote {} (loss {:.4} -> {:.4})",
        out.display(),
        model.initial_loss.unwrap_or(f64::NAN),
        model.final_loss().unwrap_or(f64::NAN)
    ));
    Ok(())
}

fn load_t2v(ctx: &Ctx, model: Option<PathBuf>) -> Result<crate::autoenc::TrainedModel> {
    let path = ctx.input(model, "t2v.json", "T2V model")?;
    persist::load_model_variant(&path, Variant::T2v)
}

fn embed(ctx: &Ctx, model: Option<PathBuf>, corpus: CorpusArg, part: Part, out: Option<PathBuf>) -> Result<()> {
    let model = load_t2v(ctx, model)?;
    let corpus = ctx.corpus(corpus)?;
    let windows: Vec<Window> = match part {
        Part::Train => corpus.train_windows(),
        Part::Test => corpus.test_windows(),
        Part::All => corpus.windows.clone(),
    };
    let e = Embeddings {
        origins: windows.iter().map(|w| w.origin.clone()).collect(),
        matrix: embed_windows(&model, &windows)?,
    };
    let out = ctx.out(out, "embeddings.json");
    persist::save_embeddings(&out, &e)?;
    ctx.progress(&format!(
        "wrote {} ({} x {})",
        out.display(),
        e.matrix.rows(),
        e.matrix.cols()
    ));
    Ok(())
}

fn fit_detector(
    ctx: &Ctx,
    model: Option<PathBuf>,
    corpus: CorpusArg,
    kinds: Vec<DetectorKind>,
    out: Option<PathBuf>,
) -> Result<()> {
    let kinds = if kinds.is_empty() {
        DetectorKind::ALL.to_vec()
    } else {
        kinds
    };
    if out.is_some() && kinds.len() != 1 {
        return Err(Error::Config("--out requires exactly one --kind".into()));
    }
    let model = load_t2v(ctx, model)?;
    let corpus = ctx.corpus(corpus)?;
    let emb = embed_windows(&model, &corpus.train_windows())?;
    let eff = ctx.cfg.effective();
    let mut fitted = Vec::new();
    for kind in kinds {
        let start = std::time::Instant::now();
        let d = fit(kind, &emb, &eff.detectors)?;
        ctx.progress(&format!(
            "fit {kind}: {:.1}s, threshold {:.6}",
            start.elapsed().as_secs_f64(),
            d.threshold
        ));
        fitted.push(d);
    }
    for d in &fitted {
        let path = match &out {
            Some(p) => p.clone(),
            None => ctx.out(None, &detector_file(d.kind)),
        };
        persist::save_detector(&path, d)?;
        ctx.progress(&format!("wrote {}", path.display()));
    }
    Ok(())
}

fn build_testsets_cmd(ctx: &Ctx, corpus: CorpusArg, out: Option<PathBuf>) -> Result<()> {
    let corpus = ctx.corpus(corpus)?;
    let suite = build_testsets(&corpus.test_windows(), &ctx.cfg.effective().injection)?;
    let out = ctx.out(out, "testsets.json");
    persist::save_suite(&out, &suite)?;
    for (name, (n, a, z)) in suite.composition() {
        ctx.progress(&format!("{name}: {n} windows, {a} anomalous, {z} noisy"));
    }
    ctx.progress(&format!("wrote {}", out.display()));
    Ok(())
}

fn evaluate(
    ctx: &Ctx,
    testsets: Option<PathBuf>,
    recon: Option<PathBuf>,
    t2v: Option<PathBuf>,
    detectors: Vec<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let t2v_path = ctx.input(t2v, "t2v.json", "T2V model")?;
    let recon_path = ctx.input(recon, "recon.json", "reconstruction model")?;
    let suite_path = ctx.input(testsets, "testsets.json", "test sets")?;
    let detector_paths = if detectors.is_empty() {
        DetectorKind::ALL
            .iter()
            .map(|&k| ctx.input(None, &detector_file(k), &format!("{k} detector")))
            .collect::<Result<Vec<_>>>()?
    } else {
        detectors
            .into_iter()
            .map(|p| ctx.input(Some(p), "", "detector"))
            .collect::<Result<Vec<_>>>()?
    };
    let t2v = persist::load_model_variant(&t2v_path, Variant::T2v)?;
    let recon = persist::load_model_variant(&recon_path, Variant::Reconstruction)?;
    let suite = persist::load_suite(&suite_path)?;
    let detectors = detector_paths
        .iter()
        .map(|p| persist::load_detector(p))
        .collect::<Result<Vec<DetectorModel>>>()?;
    let report = run_benchmark(&suite, &recon, &t2v, &detectors, ctx.cfg.run_info())?;
    let out = ctx.out(out, "report.json");
    persist::write_atomic(&out, report.to_json()?.as_bytes())?;
    print!("{}", report.render_table());
    ctx.progress(&format!("wrote {}", out.display()));
    Ok(())
}

fn load_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: EvalReport =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if report.schema_version != crate::eval::REPORT_SCHEMA_VERSION {
        return Err(Error::Version {
            found: report.schema_version,
            expected: crate::eval::REPORT_SCHEMA_VERSION,
        });
    }
    Ok(report)
}

fn report(ctx: &Ctx, input: Option<PathBuf>, format: Format) -> Result<()> {
    let report = load_report(&ctx.input(input, "report.json", "report")?)?;
    match format {
        Format::Table => print!("{}", report.render_table()),
        Format::Json => print!("{}", report.to_json()?),
    }
    Ok(())
}

fn run_all(ctx: &Ctx) -> Result<()> {
    let exp = run_experiment(&ctx.cfg, &mut |msg| ctx.progress(msg))?;
    persist::save_corpus(&ctx.out(None, "corpus.json"), &exp.corpus)?;
    persist::save_model(&ctx.out(None, "t2v.json"), &exp.t2v)?;
    persist::save_model(&ctx.out(None, "recon.json"), &exp.recon)?;
    for d in &exp.detectors {
        persist::save_detector(&ctx.out(None, &detector_file(d.kind)), d)?;
    }
    persist::save_suite(&ctx.out(None, "testsets.json"), &exp.suite)?;
    persist::write_atomic(&ctx.out(None, "report.json"), exp.report.to_json()?.as_bytes())?;
    print!("{}", exp.report.render_table());
    ctx.progress(&format!("wrote artifacts to {}", ctx.out_dir.display()));
    Ok(())
}
