use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One timestamped interaction record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub session_id: String,
    pub dwell_ms: f64,
    pub click_count: u32,
    /// Signed scroll distance in pixels.
    pub scroll_delta: f64,
    pub context_category: u32,
    pub device_type: u32,
    /// Dwell label used when this event is the prediction target of a
    /// window. Absent means the event's own `dwell_ms` is the label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_ms: Option<f64>,
}

impl InteractionEvent {
    pub fn label_ms(&self) -> f64 {
        self.target_ms.unwrap_or(self.dwell_ms)
    }
}

/// A session's events in timestamp order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub events: Vec<InteractionEvent>,
}

/// Categorical cardinalities; fixes the encoded feature width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub categories: usize,
    pub devices: usize,
}

/// Number of numeric features ahead of the one-hot blocks.
pub const NUMERIC_FEATURES: usize = 3;

impl FeatureLayout {
    pub fn new(categories: usize, devices: usize) -> Result<Self> {
        if categories == 0 {
            return Err(Error::config("data.categories", "must be at least 1"));
        }
        if devices == 0 {
            return Err(Error::config("data.devices", "must be at least 1"));
        }
        Ok(FeatureLayout {
            categories,
            devices,
        })
    }

    /// Encoded width `3 + C + D`.
    pub fn dim(&self) -> usize {
        NUMERIC_FEATURES + self.categories + self.devices
    }

    /// Canonical layout descriptor stored in cache and checkpoint headers.
    pub fn describe(&self) -> String {
        format!(
            "log1p_dwell_ms,click_count,scroll_delta,context_onehot[{}],device_onehot[{}]",
            self.categories, self.devices
        )
    }

    pub fn check(&self, e: &InteractionEvent) -> Result<()> {
        if e.context_category as usize >= self.categories {
            return Err(Error::data(
                format!("session {} at t={}", e.session_id, e.timestamp),
                format!(
                    "context_category {} outside [0, {})",
                    e.context_category, self.categories
                ),
            ));
        }
        if e.device_type as usize >= self.devices {
            return Err(Error::data(
                format!("session {} at t={}", e.session_id, e.timestamp),
                format!("device_type {} outside [0, {})", e.device_type, self.devices),
            ));
        }
        if !(e.dwell_ms >= 0.0) || !e.dwell_ms.is_finite() {
            return Err(Error::data(
                format!("session {} at t={}", e.session_id, e.timestamp),
                format!("dwell_ms {} must be finite and nonnegative", e.dwell_ms),
            ));
        }
        if !e.scroll_delta.is_finite() {
            return Err(Error::data(
                format!("session {} at t={}", e.session_id, e.timestamp),
                "scroll_delta must be finite",
            ));
        }
        Ok(())
    }
}

/// Encodes `[log1p(dwell_ms), clicks, scroll, onehot(ctx, C), onehot(dev, D)]`.
pub fn encode_event(e: &InteractionEvent, layout: &FeatureLayout) -> Result<Vec<f64>> {
    layout.check(e)?;
    let mut v = vec![0.0; layout.dim()];
    v[0] = e.dwell_ms.ln_1p();
    v[1] = f64::from(e.click_count);
    v[2] = e.scroll_delta;
    v[NUMERIC_FEATURES + e.context_category as usize] = 1.0;
    v[NUMERIC_FEATURES + layout.categories + e.device_type as usize] = 1.0;
    Ok(v)
}
