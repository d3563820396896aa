//! Versioned JSON checkpoints: config, feature layout, normalization and
//! flat row-major weights keyed by canonical parameter name.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parameter_shapes, Model, ModelConfig};
use crate::data::{FeatureLayout, NormStats};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT: &str = "dwell-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub feature_layout: String,
    pub layout: FeatureLayout,
    pub stats: NormStats,
    pub params: BTreeMap<String, Vec<f64>>,
}

impl Checkpoint {
    pub fn new(model: &Model, layout: FeatureLayout, stats: &NormStats) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: *model.config(),
            feature_layout: layout.describe(),
            layout,
            stats: stats.clone(),
            params: model
                .params()
                .entries()
                .into_iter()
                .map(|(name, t)| (name, t.data().to_vec()))
                .collect(),
        }
    }

    /// Validates the header and every parameter, then rebuilds the model.
    pub fn into_model(self) -> Result<(Model, FeatureLayout, NormStats)> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::load("format", format!("expected `{CHECKPOINT_FORMAT}`, found `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::load(
                "version",
                format!("unsupported version {} (expected {CHECKPOINT_VERSION})", self.version),
            ));
        }
        self.config
            .validate()
            .map_err(|e| Error::load("config", e.to_string()))?;
        if self.feature_layout != self.layout.describe() {
            return Err(Error::load(
                "feature_layout",
                format!("`{}` does not match `{}`", self.feature_layout, self.layout.describe()),
            ));
        }
        if self.layout.dim() != self.config.input_dim {
            return Err(Error::load(
                "config.input_dim",
                format!("{} but layout width is {}", self.config.input_dim, self.layout.dim()),
            ));
        }
        self.stats.validate()?;
        if self.stats.dim() != self.layout.dim() {
            return Err(Error::load("stats", "width differs from feature layout"));
        }

        let mut arrays = self.params;
        let params = parameter_shapes(&self.config).try_map_named(|name, &(r, c)| {
            let data = arrays
                .remove(name)
                .ok_or_else(|| Error::load(name, "missing parameter"))?;
            if data.len() != r * c {
                return Err(Error::load(
                    name,
                    format!("{} values, config implies {r}x{c} = {}", data.len(), r * c),
                ));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::load(name, "non-finite value"));
            }
            Tensor::from_vec(r, c, data)
        })?;
        if let Some(extra) = arrays.keys().next() {
            return Err(Error::load(extra.clone(), "parameter not implied by config"));
        }
        let model = Model::from_params(self.config, params)?;
        Ok((model, self.layout, self.stats))
    }
}

pub fn save_checkpoint(model: &Model, layout: FeatureLayout, stats: &NormStats, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(&Checkpoint::new(model, layout, stats)).expect("checkpoint serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, FeatureLayout, NormStats)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::load("checkpoint", e.to_string()))?;
    ck.into_model()
}
