//! MSE, RMSE, MAPE and RMAE, report assembly and a mean-predictor reference.

mod metrics;
mod report;

pub use metrics::{compute_metrics, MetricsReport, RmaeVariant, Scale, DEFAULT_MAPE_EPS};
pub use report::{format_table, TableRow};

use serde::{Deserialize, Serialize};

use crate::data::{NormStats, SequenceWindow};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::train::predict_all;

/// Which scale each metric group is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Scale for MSE, RMSE and RMAE.
    pub scale: Scale,
    /// Scale for MAPE; `None` omits MAPE.
    pub mape_scale: Option<Scale>,
    pub rmae_variant: RmaeVariant,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            scale: Scale::Normalized,
            mape_scale: Some(Scale::Raw),
            rmae_variant: RmaeVariant::RootMae,
        }
    }
}

/// Scores predictions already computed on the normalized scale.
pub fn score_predictions(
    preds: &[f64],
    targets: &[f64],
    stats: &NormStats,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let on_scale = |scale: Scale| -> (Vec<f64>, Vec<f64>) {
        match scale {
            Scale::Normalized => (preds.to_vec(), targets.to_vec()),
            Scale::Raw => (
                preds.iter().map(|&p| stats.denormalize_target(p)).collect(),
                targets.iter().map(|&t| stats.denormalize_target(t)).collect(),
            ),
        }
    };
    let (p, t) = on_scale(opts.scale);
    let mut report = compute_metrics(&p, &t, opts.rmae_variant, None, opts.scale)?;
    report.mape_scale = opts.mape_scale;
    if let Some(ms) = opts.mape_scale {
        let (p, t) = on_scale(ms);
        report.mape_percent = Some(metrics::mape(&p, &t, DEFAULT_MAPE_EPS)?);
    }
    Ok(report)
}

/// Runs the model on every test window and scores it.
pub fn evaluate(model: &Model, stats: &NormStats, test: &[SequenceWindow], opts: &EvalOptions) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::Usage("evaluation needs at least one test window".into()));
    }
    let preds = predict_all(model, test)?;
    let targets: Vec<f64> = test.iter().map(|w| w.target).collect();
    score_predictions(&preds, &targets, stats, opts)
}

/// Predicts the mean normalized training target for every test window.
pub fn mean_predictor_report(
    train: &[SequenceWindow],
    test: &[SequenceWindow],
    stats: &NormStats,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Usage("mean predictor needs non-empty train and test".into()));
    }
    let mean = train.iter().map(|w| w.target).sum::<f64>() / train.len() as f64;
    let preds = vec![mean; test.len()];
    let targets: Vec<f64> = test.iter().map(|w| w.target).collect();
    score_predictions(&preds, &targets, stats, opts)
}
