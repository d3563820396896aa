//! Versioned JSON container for prepared windows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::event::FeatureLayout;
use super::normalize::NormStats;
use super::split::PreparedData;
use super::window::SequenceWindow;
use crate::error::{Error, Result};

pub const WINDOW_CACHE_FORMAT: &str = "dwell-windows";
pub const WINDOW_CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowCache {
    pub format: String,
    pub version: u32,
    pub feature_layout: String,
    pub layout: FeatureLayout,
    pub window: usize,
    pub stride: usize,
    pub split_hash: String,
    pub stats: NormStats,
    pub train: Vec<SequenceWindow>,
    pub val: Vec<SequenceWindow>,
    pub test: Vec<SequenceWindow>,
}

impl From<PreparedData> for WindowCache {
    fn from(p: PreparedData) -> Self {
        WindowCache {
            format: WINDOW_CACHE_FORMAT.into(),
            version: WINDOW_CACHE_VERSION,
            feature_layout: p.layout.describe(),
            layout: p.layout,
            window: p.window,
            stride: p.stride,
            split_hash: format!("{:016x}", p.split_hash),
            stats: p.stats,
            train: p.train,
            val: p.val,
            test: p.test,
        }
    }
}

impl WindowCache {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).expect("window cache serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cache: WindowCache =
            serde_json::from_str(&text).map_err(|e| Error::load("window cache", e.to_string()))?;
        cache.validate()?;
        Ok(cache)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != WINDOW_CACHE_FORMAT {
            return Err(Error::load("format", format!("expected `{WINDOW_CACHE_FORMAT}`, found `{}`", self.format)));
        }
        if self.version != WINDOW_CACHE_VERSION {
            return Err(Error::load(
                "version",
                format!("unsupported version {} (expected {WINDOW_CACHE_VERSION})", self.version),
            ));
        }
        if self.feature_layout != self.layout.describe() {
            return Err(Error::load(
                "feature_layout",
                format!("`{}` does not match `{}`", self.feature_layout, self.layout.describe()),
            ));
        }
        self.stats.validate()?;
        let d = self.layout.dim();
        if self.stats.dim() != d {
            return Err(Error::load("stats", format!("width {} vs layout width {d}", self.stats.dim())));
        }
        for (name, part) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for (i, w) in part.iter().enumerate() {
                if w.features.shape() != (self.window, d)
                    || w.valid_len == 0
                    || w.valid_len > self.window
                    || !w.target.is_finite()
                {
                    return Err(Error::load(
                        format!("{name}[{i}]"),
                        format!(
                            "window shape {:?} / valid_len {} inconsistent with {}x{d}",
                            w.features.shape(),
                            w.valid_len,
                            self.window
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}
