use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainedModel;
use crate::dtw::{dtw_distance, DtwParams};
use crate::error::{Error, Result};
use crate::pipeline::{quantile, Window};

/// Raw reconstruction errors of one window, in standardized units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreComponents {
    /// Mean squared error.
    pub l2: f64,
    pub mae: f64,
    pub dtw: f64,
}

impl ScoreComponents {
    fn as_array(self) -> [f64; 3] {
        [self.l2, self.mae, self.dtw]
    }
}

/// Training-set mean and std of each score component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreCalibration {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ScoreCalibration {
    pub fn fit(components: &[ScoreComponents]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("cannot calibrate on zero windows".into()));
        }
        let n = components.len() as f64;
        let mut mean = [0.0; 3];
        for c in components {
            for (m, v) in mean.iter_mut().zip(c.as_array()) {
                *m += v / n;
            }
        }
        let mut std = [0.0; 3];
        for c in components {
            for ((s, v), m) in std.iter_mut().zip(c.as_array()).zip(mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut std {
            *s = if s.sqrt() > 1e-12 { s.sqrt() } else { 1.0 };
        }
        Ok(ScoreCalibration { mean, std })
    }

    /// Sum of the z-normalized components.
    pub fn combine(&self, c: ScoreComponents) -> f64 {
        c.as_array()
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .sum()
    }
}

pub fn recon_components(model: &TrainedModel, window: &Window) -> Result<ScoreComponents> {
    let x = model.standardize(&window.data)?;
    let y = model.reconstruct_standardized(&x)?;
    let n = x.len() as f64;
    let (mut l2, mut mae) = (0.0, 0.0);
    for (a, b) in x.data().iter().zip(y.data()) {
        l2 += (a - b) * (a - b);
        mae += (a - b).abs();
    }
    Ok(ScoreComponents {
        l2: l2 / n,
        mae: mae / n,
        dtw: dtw_distance(&x, &y, DtwParams::default())?,
    })
}

/// Higher is more anomalous; zero for a window at the training means.
pub fn recon_score(model: &TrainedModel, window: &Window, calib: &ScoreCalibration) -> Result<f64> {
    Ok(calib.combine(recon_components(model, window)?))
}

impl TrainedModel {
    /// Fits the score calibration on `windows` (the training set) and sets the
    /// decision threshold to the `quantile` of their scores.
    pub fn calibrate(&mut self, windows: &[Window], q: f64) -> Result<()> {
        let comps = windows
            .par_iter()
            .map(|w| recon_components(self, w))
            .collect::<Result<Vec<_>>>()?;
        let calib = ScoreCalibration::fit(&comps)?;
        let scores: Vec<f64> = comps.iter().map(|c| calib.combine(*c)).collect();
        self.threshold = Some(quantile(&scores, q));
        self.calibration = Some(calib);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comps(l2: f64, mae: f64, dtw: f64) -> ScoreComponents {
        ScoreComponents { l2, mae, dtw }
    }

    #[test]
    fn centre_scores_zero() {
        let data = [comps(1.0, 2.0, 3.0), comps(3.0, 4.0, 9.0)];
        let c = ScoreCalibration::fit(&data).unwrap();
        assert_eq!(c.combine(comps(2.0, 3.0, 6.0)), 0.0);
        let mean: f64 = data.iter().map(|d| c.combine(*d)).sum::<f64>() / 2.0;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn monotone_in_each_component() {
        let c = ScoreCalibration::fit(&[comps(1.0, 1.0, 1.0), comps(2.0, 3.0, 5.0)]).unwrap();
        let base = c.combine(comps(1.0, 1.0, 1.0));
        assert!(c.combine(comps(1.5, 1.0, 1.0)) > base);
        assert!(c.combine(comps(1.0, 1.5, 1.0)) > base);
        assert!(c.combine(comps(1.0, 1.0, 1.5)) > base);
    }

    #[test]
    fn empty_calibration_errors() {
        assert!(ScoreCalibration::fit(&[]).is_err());
    }
}
