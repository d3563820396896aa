use serde::{Deserialize, Serialize};

use super::window::SequenceWindow;
use crate::error::{Error, Result};

/// Below this a feature or target spread is treated as zero.
const MIN_STD: f64 = 1e-12;

/// Feature z-scoring and target transform fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    /// Whether targets pass through `log1p` before standardising.
    pub log_target: bool,
    pub target_mean: f64,
    pub target_std: f64,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.feature_mean.len()
    }

    /// Raw milliseconds to the normalized training scale.
    pub fn normalize_target(&self, y_ms: f64) -> f64 {
        let y = if self.log_target { y_ms.ln_1p() } else { y_ms };
        (y - self.target_mean) / self.target_std
    }

    pub fn denormalize_target(&self, z: f64) -> f64 {
        let y = z * self.target_std + self.target_mean;
        if self.log_target {
            y.exp_m1()
        } else {
            y
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_std.len() != self.feature_mean.len() {
            return Err(Error::load("stats.feature_std", "length differs from feature_mean"));
        }
        if self.feature_std.iter().any(|s| !(*s > 0.0) || !s.is_finite())
            || !(self.target_std > 0.0)
        {
            return Err(Error::load("stats", "standard deviations must be positive"));
        }
        if !self.target_mean.is_finite() || self.feature_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::load("stats", "means must be finite"));
        }
        Ok(())
    }
}

/// Fits per-feature mean/std over the non-padded rows of `train` and the
/// target transform over its raw (millisecond) targets.
pub fn fit_normalize(train: &[SequenceWindow], log_target: bool) -> Result<NormStats> {
    let first = train
        .first()
        .ok_or_else(|| Error::Usage("cannot fit normalization on an empty training set".into()))?;
    let d = first.features.cols();

    let mut sum = vec![0.0; d];
    let mut count = 0usize;
    for w in train {
        if w.features.cols() != d {
            return Err(Error::dim(
                "fit_normalize",
                format!("window width {} differs from {d}", w.features.cols()),
            ));
        }
        for r in 0..w.valid_len {
            sum.iter_mut().zip(w.features.row(r)).for_each(|(s, v)| *s += v);
        }
        count += w.valid_len;
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; d];
    for w in train {
        for r in 0..w.valid_len {
            for (c, v) in w.features.row(r).iter().enumerate() {
                sq[c] += (v - mean[c]) * (v - mean[c]);
            }
        }
    }
    let std: Vec<f64> = sq
        .iter()
        .map(|s| {
            let sd = (s / count as f64).sqrt();
            if sd > MIN_STD {
                sd
            } else {
                1.0
            }
        })
        .collect();

    let ys: Vec<f64> = train
        .iter()
        .map(|w| if log_target { w.target.ln_1p() } else { w.target })
        .collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::data("fit_normalize", "non-finite training target"));
    }
    let t_mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let t_sd = (ys.iter().map(|y| (y - t_mean) * (y - t_mean)).sum::<f64>() / ys.len() as f64).sqrt();

    Ok(NormStats {
        feature_mean: mean,
        feature_std: std,
        log_target,
        target_mean: t_mean,
        target_std: if t_sd > MIN_STD { t_sd } else { 1.0 },
    })
}

/// Z-scores the valid rows (padding stays zero) and normalizes the target.
pub fn apply_normalize(w: &SequenceWindow, stats: &NormStats) -> Result<SequenceWindow> {
    if w.features.cols() != stats.dim() {
        return Err(Error::dim(
            "apply_normalize",
            format!("window width {} vs stats width {}", w.features.cols(), stats.dim()),
        ));
    }
    let mut features = w.features.detached();
    for r in 0..w.valid_len {
        for (c, v) in features.row_mut(r).iter_mut().enumerate() {
            *v = (*v - stats.feature_mean[c]) / stats.feature_std[c];
        }
    }
    Ok(SequenceWindow {
        features,
        target: stats.normalize_target(w.target),
        valid_len: w.valid_len,
        device_type: w.device_type,
    })
}

pub fn apply_normalize_all(ws: &[SequenceWindow], stats: &NormStats) -> Result<Vec<SequenceWindow>> {
    ws.iter().map(|w| apply_normalize(w, stats)).collect()
}
