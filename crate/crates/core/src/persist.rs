//! JSON artifact files: a human-readable header, a body whose tensors are
//! base64 little-endian f64, a schema version and a SHA-256 checksum of the
//! body. Writes go through a temporary file in the target directory and are
//! renamed into place, so a failed write never leaves a partial file.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::autoenc::{SearchResult, TrainedModel, Variant};
use crate::config::hex_digest;
use crate::detect::DetectorModel;
use crate::error::{Error, Result};
use crate::inject::TestSuite;
use crate::pipeline::Corpus;
use crate::tensor::Tensor;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

pub const KIND_MODEL: &str = "autoencoder";
pub const KIND_DETECTOR: &str = "detector";
pub const KIND_CORPUS: &str = "corpus";
pub const KIND_TESTSETS: &str = "testsets";
pub const KIND_SEARCH: &str = "search";
pub const KIND_EMBEDDINGS: &str = "embeddings";

#[derive(Serialize, Deserialize)]
struct Envelope {
    schema_version: u32,
    kind: String,
    header: Value,
    checksum: String,
    body: Value,
}

fn body_checksum(body: &Value) -> Result<String> {
    let bytes = serde_json::to_vec(body).map_err(|e| Error::Format(e.to_string()))?;
    Ok(hex_digest(&bytes))
}

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_artifact<T: Serialize>(path: &Path, kind: &str, header: Value, body: &T) -> Result<()> {
    let body = serde_json::to_value(body).map_err(|e| Error::Format(e.to_string()))?;
    let env = Envelope {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        kind: kind.to_string(),
        header,
        checksum: body_checksum(&body)?,
        body,
    };
    let mut text = serde_json::to_vec_pretty(&env).map_err(|e| Error::Format(e.to_string()))?;
    text.push(b'\n');
    write_atomic(path, &text)
}

/// Header of an artifact without decoding or verifying the body.
pub fn read_header(path: &Path) -> Result<(String, Value)> {
    let env = read_envelope(path)?;
    Ok((env.kind, env.header))
}

fn read_envelope(path: &Path) -> Result<Envelope> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope = serde_json::from_slice(&text)
        .map_err(|e| Error::Format(format!("{}: not a valid artifact file: {e}", path.display())))?;
    if env.schema_version != ARTIFACT_SCHEMA_VERSION {
        return Err(Error::Version {
            found: env.schema_version,
            expected: ARTIFACT_SCHEMA_VERSION,
        });
    }
    Ok(env)
}

pub fn load_artifact<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(Value, T)> {
    let env = read_envelope(path)?;
    if env.kind != kind {
        return Err(Error::Format(format!(
            "{}: expected a {kind} file, found {}",
            path.display(),
            env.kind
        )));
    }
    if body_checksum(&env.body)? != env.checksum {
        return Err(Error::Checksum);
    }
    let body = serde_json::from_value(env.body).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok((env.header, body))
}

pub fn save_model(path: &Path, m: &TrainedModel) -> Result<()> {
    let c = &m.config;
    let header = json!({
        "variant": c.variant,
        "steps": m.steps,
        "features": m.features,
        "width": c.width,
        "layers": c.layers,
        "filters": c.filters,
        "kernel": c.kernel,
        "stride": c.stride,
        "epochs": c.epochs,
        "batch_size": c.batch_size,
        "lr": c.lr,
        "seed": c.seed,
        "embedding_len": m.embedding_len(),
        "parameters": m.network.param_count(),
        "initial_loss": m.initial_loss,
        "final_loss": m.final_loss(),
        "calibrated": m.calibration.is_some(),
    });
    save_artifact(path, KIND_MODEL, header, m)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    Ok(load_artifact(path, KIND_MODEL)?.1)
}

/// Loads a model and checks its variant.
pub fn load_model_variant(path: &Path, variant: Variant) -> Result<TrainedModel> {
    let m = load_model(path)?;
    if m.variant() != variant {
        return Err(Error::Config(format!(
            "{}: expected a {variant:?} model, found {:?}",
            path.display(),
            m.variant()
        )));
    }
    Ok(m)
}

pub fn save_detector(path: &Path, d: &DetectorModel) -> Result<()> {
    let header = json!({
        "kind": d.kind,
        "dim": d.dim,
        "threshold": d.threshold,
        "threshold_quantile": d.config.threshold_quantile,
        "standardized": d.config.standardize,
        "pca_dims": d.pca.as_ref().map(|p| p.output_dim()),
        "seed": d.config.seed,
    });
    save_artifact(path, KIND_DETECTOR, header, d)
}

pub fn load_detector(path: &Path) -> Result<DetectorModel> {
    Ok(load_artifact(path, KIND_DETECTOR)?.1)
}

pub fn save_corpus(path: &Path, c: &Corpus) -> Result<()> {
    let first = c.windows.first();
    let header = json!({
        "windows": c.windows.len(),
        "train": c.train.len(),
        "test": c.test.len(),
        "steps": first.map(|w| w.steps()),
        "features": first.map(|w| w.features()),
        "source": c.provenance.source,
        "seed": c.provenance.seed,
    });
    save_artifact(path, KIND_CORPUS, header, c)
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let c: Corpus = load_artifact(path, KIND_CORPUS)?.1;
    c.validate()?;
    Ok(c)
}

pub fn save_suite(path: &Path, s: &TestSuite) -> Result<()> {
    let comp: serde_json::Map<String, Value> = s
        .composition()
        .into_iter()
        .map(|(k, (n, a, z))| (k.to_string(), json!({"windows": n, "anomalous": a, "noisy": z})))
        .collect();
    save_artifact(
        path,
        KIND_TESTSETS,
        json!({ "composition": comp, "seed": s.spec.seed }),
        s,
    )
}

pub fn load_suite(path: &Path) -> Result<TestSuite> {
    Ok(load_artifact(path, KIND_TESTSETS)?.1)
}

pub fn save_search(path: &Path, r: &SearchResult) -> Result<()> {
    let best = r.best_trial();
    let header = json!({
        "trials": r.trials.len(),
        "best": r.best,
        "best_validation_dtw": best.validation_dtw,
        "variant": best.config.variant,
    });
    save_artifact(path, KIND_SEARCH, header, r)
}

pub fn load_search(path: &Path) -> Result<SearchResult> {
    Ok(load_artifact(path, KIND_SEARCH)?.1)
}

/// Embedding matrix with the origin of each row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embeddings {
    pub origins: Vec<String>,
    pub matrix: Tensor,
}

pub fn save_embeddings(path: &Path, e: &Embeddings) -> Result<()> {
    let header = json!({ "rows": e.matrix.rows(), "dim": e.matrix.cols() });
    save_artifact(path, KIND_EMBEDDINGS, header, e)
}

pub fn load_embeddings(path: &Path) -> Result<Embeddings> {
    Ok(load_artifact(path, KIND_EMBEDDINGS)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoenc::{build, train, AeConfig};
    use crate::pipeline::{synth_generate, SynthParams};

    fn tiny_model() -> (TrainedModel, Corpus) {
        let corpus = synth_generate(
            &SynthParams {
                windows: 30,
                steps: 20,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        let cfg = AeConfig {
            epochs: 2,
            filters: 4,
            ..AeConfig::reference_t2v(1)
        };
        let m = train(build(&cfg, 20, 6).unwrap(), &corpus.windows).unwrap();
        (m, corpus)
    }

    #[test]
    fn model_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let (m, corpus) = tiny_model();
        save_model(&path, &m).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        for w in &corpus.windows[..10] {
            let a = m.embed(w).unwrap();
            let b = back.embed(w).unwrap();
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let (kind, header) = read_header(&path).unwrap();
        assert_eq!(kind, KIND_MODEL);
        assert_eq!(header["embedding_len"], 20 * 7);
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let (m, _) = tiny_model();
        save_model(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));

        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["body"]["initial_loss"] = json!(123.0);
        std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Checksum)));

        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["schema_version"] = json!(99);
        std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Version { found: 99, .. })));

        std::fs::write(&path, &text).unwrap();
        assert!(matches!(load_detector(&path), Err(Error::Format(_))));
    }

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let (_, corpus) = tiny_model();
        save_corpus(&path, &corpus).unwrap();
        let first = std::fs::read(&path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), corpus);
        save_corpus(&path, &corpus).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            load_model(Path::new("/nonexistent/m.json")),
            Err(Error::Io { .. })
        ));
    }
}
