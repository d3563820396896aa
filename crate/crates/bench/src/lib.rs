//! Shared fixtures for the criterion benches.

use dwell_core::data::{prepare_dataset, synth_generate, FeatureLayout, PreparedData, SequenceWindow, SynthConfig};
use dwell_core::model::{Model, ModelConfig};
use dwell_core::Tensor;

pub fn layout() -> FeatureLayout {
    FeatureLayout::new(4, 2).expect("valid layout")
}

/// Normalized synthetic splits with window `t`.
pub fn dataset(sessions: usize, t: usize) -> PreparedData {
    let raw = synth_generate(&SynthConfig {
        n_sessions: sessions,
        ..SynthConfig::default()
    })
    .expect("synthetic data");
    prepare_dataset(&raw, layout(), t, 1, 7).expect("prepared data")
}

pub fn model(hidden: usize, heads: usize, layers: usize, t: usize) -> Model {
    Model::new(ModelConfig {
        hidden_dim: hidden,
        heads,
        layers,
        ..ModelConfig::new(layout().dim(), t)
    })
    .expect("valid config")
}

pub fn window(t: usize) -> SequenceWindow {
    dataset(20, t).train.swap_remove(0)
}

/// Deterministic dense matrix without pulling in an RNG.
pub fn ramp(rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
    Tensor::from_vec(rows, cols, data).expect("shape matches")
}
