//! The Transformer regressor: embedding, positional encoding, post-norm
//! encoder blocks, masked mean pooling and a linear head.

mod checkpoint;
mod config;
pub mod layers;
mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{ModelConfig, PosEncoding};
pub use layers::{sinusoidal_encoding, AttentionTrace, Dropout};
pub use params::{parameter_shapes, HeadWeights, LayerWeights, ModelParams, ModelWeights};

use crate::data::SequenceWindow;
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor};

/// Config, parameters and the cached sinusoidal table.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
    sinusoid: Option<Tensor>,
}

/// Parameters registered on a graph.
pub struct GraphModel {
    pub weights: ModelWeights<NodeId>,
    pub positional: Option<NodeId>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let params = ModelParams::init(&config)?;
        Self::from_params(config, params)
    }

    pub fn from_params(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        let sinusoid = (config.pos_encoding == PosEncoding::Sinusoidal)
            .then(|| sinusoidal_encoding(config.window, config.hidden_dim));
        Ok(Model {
            config,
            params,
            sinusoid,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Replaces the parameters; shapes must still match the config.
    pub fn set_params(&mut self, params: ModelParams) -> Result<()> {
        params.check_shapes(&self.config)?;
        self.params = params;
        Ok(())
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// The positional rows added during embedding, if any.
    pub fn positional_encoding(&self) -> Option<&Tensor> {
        self.sinusoid.as_ref().or(self.params.positional.as_ref())
    }

    /// Registers every parameter on `g`, trainable or constant.
    pub fn register(&self, g: &mut Graph, trainable: bool) -> GraphModel {
        let weights = self.params.map(|t| {
            if trainable {
                g.param(t.detached())
            } else {
                g.constant(t.detached())
            }
        });
        let positional = match (&self.sinusoid, weights.positional) {
            (Some(pe), _) => Some(g.constant(pe.clone())),
            (None, learned) => learned,
        };
        GraphModel { weights, positional }
    }

    fn check_window(&self, w: &SequenceWindow) -> Result<()> {
        let want = (self.config.window, self.config.input_dim);
        if w.features.shape() != want {
            return Err(Error::dim(
                "forward",
                format!("window {:?} but model expects {want:?}", w.features.shape()),
            ));
        }
        if w.valid_len == 0 || w.valid_len > self.config.window {
            return Err(Error::Usage(format!(
                "valid_len {} outside [1, {}]",
                w.valid_len, self.config.window
            )));
        }
        Ok(())
    }

    /// Builds the prediction node for `w` on a graph already holding `gm`.
    pub fn forward_on(
        &self,
        g: &mut Graph,
        gm: &GraphModel,
        w: &SequenceWindow,
        dropout: Option<&mut Dropout>,
        trace: Option<&mut AttentionTrace>,
    ) -> Result<NodeId> {
        self.check_window(w)?;
        let x = g.constant(w.features.detached());
        let h = layers::embed(g, x, gm.weights.embed, gm.positional)?;
        let h = layers::encode(g, h, &gm.weights.layers, &self.config, w.valid_len, dropout, trace)?;
        let z = layers::pool(g, h, w.valid_len)?;
        layers::predict_head(g, z, gm.weights.head, gm.weights.head_bias)
    }

    /// Deterministic inference (no dropout).
    pub fn predict(&self, w: &SequenceWindow) -> Result<f64> {
        let mut g = Graph::new();
        let gm = self.register(&mut g, false);
        let y = self.forward_on(&mut g, &gm, w, None, None)?;
        g.value(y).item()
    }

    /// Attention weights per layer and head (each `T x T`), for inspection.
    pub fn attention_maps(&self, w: &SequenceWindow) -> Result<Vec<Vec<Tensor>>> {
        let mut g = Graph::new();
        let gm = self.register(&mut g, false);
        let mut trace = AttentionTrace::default();
        self.forward_on(&mut g, &gm, w, None, Some(&mut trace))?;
        Ok(trace
            .layers
            .iter()
            .map(|heads| heads.iter().map(|&id| g.value(id).detached()).collect())
            .collect())
    }

    /// Squared error on one window and its gradient for every parameter.
    /// `dropout_seed` enables dropout when the config rate is nonzero.
    pub fn loss_and_grad(&self, w: &SequenceWindow, dropout_seed: Option<u64>) -> Result<(f64, ModelParams)> {
        let mut g = Graph::new();
        let gm = self.register(&mut g, true);
        let mut dropout = match dropout_seed {
            Some(seed) if self.config.dropout > 0.0 => Some(Dropout {
                rate: self.config.dropout,
                rng: ChaCha8Rng::seed_from_u64(seed),
            }),
            _ => None,
        };
        let y = self.forward_on(&mut g, &gm, w, dropout.as_mut(), None)?;
        let loss = g.mse(&[y], &[w.target])?;
        g.backward(loss)?;
        let grads = gm.weights.map(|&id| g.grad_tensor(id));
        Ok((g.value(loss).item()?, grads))
    }
}
