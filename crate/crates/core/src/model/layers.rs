//! Encoder building blocks expressed on the autodiff graph.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::params::LayerWeights;
use crate::error::{Error, Result};
use crate::numerics::{Activation, Graph, NodeId, Tensor};

/// `pe[t, 2j] = sin(t / 10000^(2j/d_h))`, `pe[t, 2j+1] = cos(...)`, `t` from 0.
pub fn sinusoidal_encoding(window: usize, hidden: usize) -> Tensor {
    let mut pe = Tensor::zeros(window, hidden);
    for t in 0..window {
        for c in 0..hidden {
            let pair = (c / 2) * 2;
            let angle = t as f64 / 10_000f64.powf(pair as f64 / hidden as f64);
            pe.set(t, c, if c % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

/// Inverted dropout applied to sublayer outputs during training.
pub struct Dropout {
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

impl Dropout {
    fn apply(&mut self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        if self.rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let mask = (0..g.value(x).len())
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        g.mask(x, mask)
    }
}

/// Collects per-layer, per-head attention weight nodes.
#[derive(Debug, Default)]
pub struct AttentionTrace {
    pub layers: Vec<Vec<NodeId>>,
}

/// `H = X·W_e + PE`; padded rows keep their positional row.
pub fn embed(g: &mut Graph, x: NodeId, we: NodeId, pe: Option<NodeId>) -> Result<NodeId> {
    let h = g.matmul(x, we)?;
    match pe {
        Some(pe) => g.add(h, pe),
        None => Ok(h),
    }
}

/// Scaled dot-product logits `Q·Kᵀ / √d_k`, or unscaled when `scaled` is false.
pub fn attention_logits(g: &mut Graph, q: NodeId, k: NodeId, scaled: bool) -> Result<NodeId> {
    let kt = g.transpose(k);
    let raw = g.matmul(q, kt)?;
    if scaled {
        let dk = g.value(q).cols() as f64;
        Ok(g.scale(raw, 1.0 / dk.sqrt()))
    } else {
        Ok(raw)
    }
}

/// Returns `(output, weights)`; keys at or past `valid_len` get weight 0.
pub fn attention(g: &mut Graph, q: NodeId, k: NodeId, v: NodeId, valid_len: usize) -> Result<(NodeId, NodeId)> {
    let (qs, ks, vs) = (g.value(q).shape(), g.value(k).shape(), g.value(v).shape());
    if qs != ks || ks.0 != vs.0 {
        return Err(Error::dim(
            "attention",
            format!("Q {qs:?}, K {ks:?}, V {vs:?} disagree"),
        ));
    }
    if valid_len == 0 || valid_len > ks.0 {
        return Err(Error::Usage(format!(
            "valid_len {valid_len} outside [1, {}]",
            ks.0
        )));
    }
    let logits = attention_logits(g, q, k, true)?;
    let weights = g.masked_softmax_rows(logits, valid_len)?;
    Ok((g.matmul(weights, v)?, weights))
}

/// `Concat(head_1..head_M)·W_O` with `head_i = attention(H·W_Q^i, H·W_K^i, H·W_V^i)`.
pub fn multi_head(
    g: &mut Graph,
    h: NodeId,
    layer: &LayerWeights<NodeId>,
    valid_len: usize,
    mut trace: Option<&mut Vec<NodeId>>,
) -> Result<NodeId> {
    let mut outs = Vec::with_capacity(layer.heads.len());
    for head in &layer.heads {
        let q = g.matmul(h, head.query)?;
        let k = g.matmul(h, head.key)?;
        let v = g.matmul(h, head.value)?;
        let (o, w) = attention(g, q, k, v, valid_len)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(w);
        }
        outs.push(o);
    }
    let cat = if outs.len() == 1 {
        outs[0]
    } else {
        g.concat_cols(&outs)?
    };
    g.matmul(cat, layer.out_proj)
}

/// Position-wise `σ(Z·W_1 + b_1)·W_2 + b_2`.
pub fn ffn(g: &mut Graph, z: NodeId, layer: &LayerWeights<NodeId>, act: Activation) -> Result<NodeId> {
    let a = g.matmul(z, layer.ffn_in)?;
    let a = g.add_row(a, layer.ffn_in_bias)?;
    let a = g.activation(a, act);
    let b = g.matmul(a, layer.ffn_out)?;
    g.add_row(b, layer.ffn_out_bias)
}

/// One post-norm block: `LN(H + MHA(H))` then `LN(H + FFN(H))`.
pub fn encoder_block(
    g: &mut Graph,
    h: NodeId,
    layer: &LayerWeights<NodeId>,
    cfg: &ModelConfig,
    valid_len: usize,
    dropout: Option<&mut Dropout>,
    trace: Option<&mut Vec<NodeId>>,
) -> Result<NodeId> {
    let mut dropout = dropout;
    let attn = multi_head(g, h, layer, valid_len, trace)?;
    let attn = match dropout.as_deref_mut() {
        Some(d) => d.apply(g, attn)?,
        None => attn,
    };
    let res = g.add(h, attn)?;
    let h = g.layer_norm(res, layer.attn_norm_gain, layer.attn_norm_bias)?;

    let f = ffn(g, h, layer, cfg.activation)?;
    let f = match dropout.as_deref_mut() {
        Some(d) => d.apply(g, f)?,
        None => f,
    };
    let res = g.add(h, f)?;
    g.layer_norm(res, layer.ffn_norm_gain, layer.ffn_norm_bias)
}

pub fn encode(
    g: &mut Graph,
    mut h: NodeId,
    layers: &[LayerWeights<NodeId>],
    cfg: &ModelConfig,
    valid_len: usize,
    mut dropout: Option<&mut Dropout>,
    mut trace: Option<&mut AttentionTrace>,
) -> Result<NodeId> {
    if layers.is_empty() {
        return Err(Error::config("model.layers", "encoder needs at least one layer"));
    }
    for layer in layers {
        let mut heads = Vec::new();
        h = encoder_block(
            g,
            h,
            layer,
            cfg,
            valid_len,
            dropout.as_deref_mut(),
            trace.is_some().then_some(&mut heads),
        )?;
        if let Some(t) = trace.as_deref_mut() {
            t.layers.push(heads);
        }
    }
    Ok(h)
}

/// Mean over the first `valid_len` rows.
pub fn pool(g: &mut Graph, h: NodeId, valid_len: usize) -> Result<NodeId> {
    let rows = g.value(h).rows();
    if valid_len == 0 || valid_len > rows {
        return Err(Error::Usage(format!("valid_len {valid_len} outside [1, {rows}]")));
    }
    g.mean_leading_rows(h, valid_len)
}

/// `ŷ = z·W_p + b_p` as a 1x1 node.
pub fn predict_head(g: &mut Graph, z: NodeId, wp: NodeId, bp: NodeId) -> Result<NodeId> {
    let y = g.matmul(z, wp)?;
    g.add(y, bp)
}
