use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{NormStats, SequenceWindow};
use crate::error::Result;
use crate::eval::{score_predictions, EvalOptions, MetricsReport};
use crate::model::Model;
use crate::train::predict_all;

/// Partitions smaller than this are flagged.
pub const LOW_CONFIDENCE_N: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceRow {
    /// Device id, or `None` for the pooled "all" row.
    pub device: Option<u32>,
    pub report: MetricsReport,
    pub low_confidence: bool,
}

impl DeviceRow {
    pub fn label(&self) -> String {
        self.device.map_or_else(|| "all".to_string(), |d| d.to_string())
    }
}

/// One report per device type present in `test` (ascending id), then "all".
pub fn device_split_eval(
    model: &Model,
    stats: &NormStats,
    test: &[SequenceWindow],
    opts: &EvalOptions,
) -> Result<Vec<DeviceRow>> {
    let preds = predict_all(model, test)?;
    let mut parts: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (w, &p) in test.iter().zip(&preds) {
        let e = parts.entry(w.device_type).or_default();
        e.0.push(p);
        e.1.push(w.target);
    }
    let mut rows = Vec::with_capacity(parts.len() + 1);
    for (device, (p, t)) in &parts {
        let report = score_predictions(p, t, stats, opts)?;
        rows.push(DeviceRow {
            device: Some(*device),
            low_confidence: report.n < LOW_CONFIDENCE_N,
            report,
        });
    }
    let targets: Vec<f64> = test.iter().map(|w| w.target).collect();
    let report = score_predictions(&preds, &targets, stats, opts)?;
    rows.push(DeviceRow {
        device: None,
        low_confidence: report.n < LOW_CONFIDENCE_N,
        report,
    });
    Ok(rows)
}
