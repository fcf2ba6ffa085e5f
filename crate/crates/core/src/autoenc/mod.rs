//! The two autoencoders.
//!
//! * T2V autoencoder: T2V layer → flatten (the embedding) → reshape to `N×K`
//!   → a stack of "same"-padded 1-D convolutions ending at `F` channels.
//! * Reconstruction autoencoder: strided 1-D conv encoder down to a `K`-channel
//!   bottleneck, then nearest-neighbour upsampling + conv decoder back to `N×F`.
//!
//! Both work on per-feature standardized windows; the fitted
//! [`Standardizer`] travels with the model.

mod score;
mod search;
mod train;

pub use score::{recon_components, recon_score, ScoreCalibration, ScoreComponents};
pub use search::{hyper_search, SearchResult, SearchSpace, Trial};
pub use train::train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{Standardizer, Window};
use crate::rng::{derive_seed, rng_from};
use crate::t2v::T2vLayer;
use crate::tensor::{Conv1d, Layer, Network, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    T2v,
    Reconstruction,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t2v" => Ok(Variant::T2v),
            "reconstruction" | "recon" => Ok(Variant::Reconstruction),
            other => Err(Error::Config(format!("unknown autoencoder variant `{other}`"))),
        }
    }
}

/// Architecture and training knobs for either autoencoder.
///
/// `width` is K: the T2V embedding width per step, or the bottleneck channel
/// count of the reconstruction AE. `layers` counts decoder conv layers (and,
/// for the reconstruction AE, encoder layers too).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeConfig {
    pub variant: Variant,
    pub width: usize,
    pub layers: usize,
    pub filters: usize,
    pub kernel: usize,
    /// Encoder stride of the reconstruction AE; ignored by the T2V AE.
    #[serde(default = "default_stride")]
    pub stride: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_stride() -> usize {
    2
}

fn default_true() -> bool {
    true
}

impl AeConfig {
    /// K = 7 with a three-layer conv decoder.
    pub fn reference_t2v(seed: u64) -> Self {
        AeConfig {
            variant: Variant::T2v,
            width: 7,
            layers: 3,
            filters: 16,
            kernel: 5,
            stride: 2,
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            seed,
            standardize: true,
        }
    }

    pub fn reference_recon(seed: u64) -> Self {
        AeConfig {
            variant: Variant::Reconstruction,
            width: 4,
            layers: 2,
            ..Self::reference_t2v(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width < 2 {
            return bad(format!("K must be >= 2, got {}", self.width));
        }
        if self.layers < 1 {
            return bad("at least one decoder layer is required".into());
        }
        if self.kernel % 2 == 0 {
            return bad(format!("kernel size must be odd, got {}", self.kernel));
        }
        if self.filters == 0 || self.batch_size == 0 || self.stride == 0 {
            return bad("filters, batch size and stride must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        Ok(())
    }
}

/// An autoencoder with its parameters, preprocessing, and training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: AeConfig,
    pub steps: usize,
    pub features: usize,
    pub network: Network,
    /// Number of leading layers that form the encoder.
    pub encoder_layers: usize,
    pub scaler: Standardizer,
    /// Mean MSE over the training windows before the first update.
    pub initial_loss: Option<f64>,
    /// Mean minibatch loss per epoch.
    pub loss_curve: Vec<f64>,
    pub validation_dtw: Option<f64>,
    pub calibration: Option<ScoreCalibration>,
    pub threshold: Option<f64>,
}

impl TrainedModel {
    fn untrained(
        config: AeConfig,
        steps: usize,
        features: usize,
        layers: Vec<Layer>,
        encoder_layers: usize,
    ) -> Result<Self> {
        let network = Network::new(layers);
        let out = network.out_shape(&[steps, features])?;
        if out != [steps, features] {
            return Err(Error::Shape(format!("autoencoder maps {steps}x{features} to {out:?}")));
        }
        Ok(TrainedModel {
            config,
            steps,
            features,
            network,
            encoder_layers,
            scaler: Standardizer::identity(features),
            initial_loss: None,
            loss_curve: Vec::new(),
            validation_dtw: None,
            calibration: None,
            threshold: None,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_curve.last().copied()
    }

    /// Length of the vector returned by [`TrainedModel::embed`].
    pub fn embedding_len(&self) -> usize {
        match self.variant() {
            Variant::T2v => self.steps * self.config.width,
            Variant::Reconstruction => 0,
        }
    }

    pub fn t2v_layer(&self) -> Option<&T2vLayer> {
        match self.network.layers.first() {
            Some(Layer::T2v(t)) => Some(t),
            _ => None,
        }
    }

    fn check_window(&self, x: &Tensor) -> Result<()> {
        x.expect_shape(&[self.steps, self.features], "autoencoder input")
    }

    /// Window in the model's standardized units.
    pub fn standardize(&self, x: &Tensor) -> Result<Tensor> {
        self.check_window(x)?;
        self.scaler.apply(x)
    }

    fn destandardize(&self, z: &Tensor) -> Tensor {
        let f = self.features;
        Tensor::from_fn(z.shape(), |i| {
            z.data()[i] * self.scaler.std[i % f] + self.scaler.mean[i % f]
        })
    }

    /// Output of the flatten stage for a T2V model: an `N·K` vector.
    pub fn embed(&self, window: &Window) -> Result<Tensor> {
        if self.variant() != Variant::T2v {
            return Err(Error::Config("embeddings come from the T2V autoencoder only".into()));
        }
        let z = self.standardize(&window.data)?;
        self.network.forward_range(&z, 0..self.encoder_layers)
    }

    /// Decoder output in standardized units.
    pub fn reconstruct_standardized(&self, z: &Tensor) -> Result<Tensor> {
        self.check_window(z)?;
        self.network.forward(z)
    }

    /// Reconstruction in the window's original units.
    pub fn reconstruct(&self, window: &Window) -> Result<Tensor> {
        let z = self.standardize(&window.data)?;
        Ok(self.destandardize(&self.reconstruct_standardized(&z)?))
    }

    /// Composite reconstruction anomaly score using the stored calibration.
    pub fn anomaly_score(&self, window: &Window) -> Result<f64> {
        let calib = self
            .calibration
            .as_ref()
            .ok_or_else(|| Error::Missing("score calibration (model was not calibrated)".into()))?;
        recon_score(self, window, calib)
    }
}

/// T2V → flatten → reshape → conv decoder. Decoder channels run K → filters → … → F.
pub fn build_t2v_ae(cfg: &AeConfig, steps: usize, features: usize) -> Result<TrainedModel> {
    if cfg.variant != Variant::T2v {
        return Err(Error::Config("build_t2v_ae needs variant t2v".into()));
    }
    cfg.validate()?;
    let mut rng = rng_from(derive_seed(cfg.seed, "init"));
    let k = cfg.width;
    let mut layers = vec![
        Layer::T2v(T2vLayer::init(steps, features, k, &mut rng)?),
        Layer::Flatten,
        Layer::Reshape { shape: vec![steps, k] },
    ];
    let mut c_in = k;
    for i in 0..cfg.layers {
        let last = i + 1 == cfg.layers;
        let c_out = if last { features } else { cfg.filters };
        layers.push(Layer::Conv1d(Conv1d::init(c_in, c_out, cfg.kernel, 1, &mut rng)?));
        if !last {
            layers.push(Layer::Relu);
        }
        c_in = c_out;
    }
    TrainedModel::untrained(cfg.clone(), steps, features, layers, 2)
}

/// Strided conv encoder to a K-channel bottleneck, upsample+conv decoder.
pub fn build_recon_ae(cfg: &AeConfig, steps: usize, features: usize) -> Result<TrainedModel> {
    if cfg.variant != Variant::Reconstruction {
        return Err(Error::Config("build_recon_ae needs variant reconstruction".into()));
    }
    cfg.validate()?;
    let total_stride = cfg
        .stride
        .checked_pow(cfg.layers as u32)
        .ok_or_else(|| Error::Config("total stride overflows".into()))?;
    if steps % total_stride != 0 {
        return Err(Error::Config(format!(
            "window length {steps} is not divisible by total stride {total_stride}"
        )));
    }
    let mut rng = rng_from(derive_seed(cfg.seed, "init"));
    let mut layers = Vec::new();
    let mut c_in = features;
    for i in 0..cfg.layers {
        let last = i + 1 == cfg.layers;
        let c_out = if last { cfg.width } else { cfg.filters };
        layers.push(Layer::Conv1d(Conv1d::init(
            c_in, c_out, cfg.kernel, cfg.stride, &mut rng,
        )?));
        if !last {
            layers.push(Layer::Relu);
        }
        c_in = c_out;
    }
    let encoder_layers = layers.len();
    for i in 0..cfg.layers {
        let last = i + 1 == cfg.layers;
        let c_out = if last { features } else { cfg.filters };
        if cfg.stride > 1 {
            layers.push(Layer::Upsample { factor: cfg.stride });
        }
        layers.push(Layer::Conv1d(Conv1d::init(c_in, c_out, cfg.kernel, 1, &mut rng)?));
        if !last {
            layers.push(Layer::Relu);
        }
        c_in = c_out;
    }
    TrainedModel::untrained(cfg.clone(), steps, features, layers, encoder_layers)
}

pub fn build(cfg: &AeConfig, steps: usize, features: usize) -> Result<TrainedModel> {
    match cfg.variant {
        Variant::T2v => build_t2v_ae(cfg, steps, features),
        Variant::Reconstruction => build_recon_ae(cfg, steps, features),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use crate::tensor::{grad_check, ReconstructionObjective};
    use rand::Rng;

    fn window(data: Tensor) -> Window {
        Window::new(data, "w").unwrap()
    }

    #[test]
    fn reference_t2v_shapes() {
        let m = build_t2v_ae(&AeConfig::reference_t2v(0), 100, 6).unwrap();
        assert_eq!(m.network.out_shape(&[100, 6]).unwrap(), vec![100, 6]);
        let e = m.embed(&window(Tensor::zeros(&[100, 6]))).unwrap();
        assert_eq!(e.len(), 700);
        assert_eq!(m.embedding_len(), 700);
    }

    #[test]
    fn minimal_t2v() {
        let cfg = AeConfig {
            width: 2,
            layers: 1,
            ..AeConfig::reference_t2v(1)
        };
        let m = build_t2v_ae(&cfg, 4, 1).unwrap();
        let y = m.reconstruct(&window(Tensor::zeros(&[4, 1]))).unwrap();
        assert_eq!(y.shape(), &[4, 1]);
    }

    #[test]
    fn zero_decoder_gives_zero_output() {
        let mut m = build_t2v_ae(&AeConfig::reference_t2v(2), 10, 3).unwrap();
        for layer in m.network.layers.iter_mut().skip(3) {
            for p in layer.params_mut() {
                p.data_mut().fill(0.0);
            }
        }
        let y = m.reconstruct(&window(Tensor::zeros(&[10, 3]))).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recon_bottleneck_length() {
        let m = build_recon_ae(&AeConfig::reference_recon(0), 100, 6).unwrap();
        let bottleneck = m
            .network
            .forward_range(&Tensor::zeros(&[100, 6]), 0..m.encoder_layers)
            .unwrap();
        assert_eq!(bottleneck.shape(), &[25, 4]);
        let cfg = AeConfig {
            layers: 3,
            ..AeConfig::reference_recon(0)
        };
        assert!(matches!(build_recon_ae(&cfg, 100, 6), Err(Error::Config(_))));
    }

    #[test]
    fn recon_identity_kernel() {
        let cfg = AeConfig {
            width: 3,
            layers: 1,
            kernel: 1,
            stride: 1,
            ..AeConfig::reference_recon(0)
        };
        let mut m = build_recon_ae(&cfg, 8, 3).unwrap();
        for layer in &mut m.network.layers {
            if let Layer::Conv1d(c) = layer {
                let w = c.kernels.data_mut();
                w.fill(0.0);
                for i in 0..3 {
                    w[i * 3 + i] = 1.0;
                }
                c.bias.data_mut().fill(0.0);
            }
        }
        let mut rng = rng_from(0);
        let x = Tensor::from_fn(&[8, 3], |_| rng.random_range(-2.0..2.0));
        assert_eq!(m.reconstruct(&window(x.clone())).unwrap(), x);
    }

    #[test]
    fn wrong_variant_rejected() {
        assert!(build_t2v_ae(&AeConfig::reference_recon(0), 100, 6).is_err());
        let m = build_recon_ae(&AeConfig::reference_recon(0), 100, 6).unwrap();
        assert!(m.embed(&window(Tensor::zeros(&[100, 6]))).is_err());
        assert!(m.anomaly_score(&window(Tensor::zeros(&[100, 6]))).is_err());
    }

    fn toy_grad_check(cfg: AeConfig, steps: usize) -> f64 {
        let mut m = build(&cfg, steps, 2).unwrap();
        let mut rng = rng_from(cfg.seed + 100);
        let input = Tensor::from_fn(&[steps, 2], |_| rng.random_range(-1.0..1.0));
        let target = Tensor::from_fn(&[steps, 2], |_| rng.random_range(-1.0..1.0));
        let mut obj = ReconstructionObjective {
            net: &mut m.network,
            input,
            target,
        };
        grad_check(&mut obj, 1e-5).unwrap()
    }

    #[test]
    fn full_t2v_ae_gradients() {
        let cfg = AeConfig {
            width: 3,
            layers: 3,
            filters: 4,
            kernel: 3,
            ..AeConfig::reference_t2v(3)
        };
        let err = toy_grad_check(cfg, 10);
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn full_recon_ae_gradients() {
        let cfg = AeConfig {
            width: 3,
            layers: 2,
            filters: 4,
            kernel: 3,
            ..AeConfig::reference_recon(4)
        };
        let err = toy_grad_check(cfg, 12);
        assert!(err < 1e-4, "relative error {err}");
    }
}
