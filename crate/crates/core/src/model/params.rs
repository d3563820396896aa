//! Named parameter collections.
//!
//! [`ModelWeights`] is generic so that the same structure carries tensors,
//! graph node ids, gradients or optimizer moments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, PosEncoding};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights<T> {
    pub query: T,
    pub key: T,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub heads: Vec<HeadWeights<T>>,
    pub out_proj: T,
    pub ffn_in: T,
    pub ffn_in_bias: T,
    pub ffn_out: T,
    pub ffn_out_bias: T,
    pub attn_norm_gain: T,
    pub attn_norm_bias: T,
    pub ffn_norm_gain: T,
    pub ffn_norm_bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub embed: T,
    /// Learned positional table, present only in learned mode.
    pub positional: Option<T>,
    pub layers: Vec<LayerWeights<T>>,
    pub head: T,
    pub head_bias: T,
}

pub type ModelParams = ModelWeights<Tensor>;

impl<T> ModelWeights<T> {
    /// Structure-preserving map that also sees each canonical name
    /// (`we`, `pe`, `l0.h1.wq`, `l0.ln2.g`, `wp`, ...).
    pub fn try_map_named<U, F>(&self, mut f: F) -> Result<ModelWeights<U>>
    where
        F: FnMut(&str, &T) -> Result<U>,
    {
        let embed = f("we", &self.embed)?;
        let positional = match &self.positional {
            Some(p) => Some(f("pe", p)?),
            None => None,
        };
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, lw) in self.layers.iter().enumerate() {
            let mut heads = Vec::with_capacity(lw.heads.len());
            for (h, hw) in lw.heads.iter().enumerate() {
                heads.push(HeadWeights {
                    query: f(&format!("l{l}.h{h}.wq"), &hw.query)?,
                    key: f(&format!("l{l}.h{h}.wk"), &hw.key)?,
                    value: f(&format!("l{l}.h{h}.wv"), &hw.value)?,
                });
            }
            layers.push(LayerWeights {
                heads,
                out_proj: f(&format!("l{l}.wo"), &lw.out_proj)?,
                ffn_in: f(&format!("l{l}.w1"), &lw.ffn_in)?,
                ffn_in_bias: f(&format!("l{l}.b1"), &lw.ffn_in_bias)?,
                ffn_out: f(&format!("l{l}.w2"), &lw.ffn_out)?,
                ffn_out_bias: f(&format!("l{l}.b2"), &lw.ffn_out_bias)?,
                attn_norm_gain: f(&format!("l{l}.ln1.g"), &lw.attn_norm_gain)?,
                attn_norm_bias: f(&format!("l{l}.ln1.b"), &lw.attn_norm_bias)?,
                ffn_norm_gain: f(&format!("l{l}.ln2.g"), &lw.ffn_norm_gain)?,
                ffn_norm_bias: f(&format!("l{l}.ln2.b"), &lw.ffn_norm_bias)?,
            });
        }
        Ok(ModelWeights {
            embed,
            positional,
            layers,
            head: f("wp", &self.head)?,
            head_bias: f("bp", &self.head_bias)?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelWeights<U> {
        self.try_map_named(|_, t| Ok(f(t))).expect("infallible map")
    }

    /// Every entry in canonical order.
    pub fn entries(&self) -> Vec<(String, &T)> {
        self.names().into_iter().zip(self.values()).collect()
    }

    pub fn values(&self) -> Vec<&T> {
        let mut refs: Vec<&T> = vec![&self.embed];
        refs.extend(self.positional.iter());
        for lw in &self.layers {
            for hw in &lw.heads {
                refs.extend([&hw.query, &hw.key, &hw.value]);
            }
            refs.extend([
                &lw.out_proj,
                &lw.ffn_in,
                &lw.ffn_in_bias,
                &lw.ffn_out,
                &lw.ffn_out_bias,
                &lw.attn_norm_gain,
                &lw.attn_norm_bias,
                &lw.ffn_norm_gain,
                &lw.ffn_norm_bias,
            ]);
        }
        refs.extend([&self.head, &self.head_bias]);
        refs
    }

    /// Mutable references in canonical order.
    pub fn values_mut(&mut self) -> Vec<&mut T> {
        let mut refs: Vec<&mut T> = vec![&mut self.embed];
        refs.extend(self.positional.iter_mut());
        for lw in &mut self.layers {
            for hw in &mut lw.heads {
                refs.extend([&mut hw.query, &mut hw.key, &mut hw.value]);
            }
            refs.extend([
                &mut lw.out_proj,
                &mut lw.ffn_in,
                &mut lw.ffn_in_bias,
                &mut lw.ffn_out,
                &mut lw.ffn_out_bias,
                &mut lw.attn_norm_gain,
                &mut lw.attn_norm_bias,
                &mut lw.ffn_norm_gain,
                &mut lw.ffn_norm_bias,
            ]);
        }
        refs.extend([&mut self.head, &mut self.head_bias]);
        refs
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.try_map_named(|n, _| {
            names.push(n.to_string());
            Ok(())
        })
        .expect("infallible");
        names
    }

    /// Rebuilds a collection with this structure from values in canonical order.
    pub fn from_values<U>(&self, values: Vec<U>) -> ModelWeights<U> {
        let mut it = values.into_iter();
        let out = self.map(|_| it.next().expect("enough values"));
        debug_assert!(it.next().is_none());
        out
    }
}

/// Expected `(rows, cols)` of every parameter for `cfg`.
pub fn parameter_shapes(cfg: &ModelConfig) -> ModelWeights<(usize, usize)> {
    let (d, dh, dk, dff) = (cfg.input_dim, cfg.hidden_dim, cfg.head_dim(), cfg.ffn_dim());
    let layer = LayerWeights {
        heads: vec![
            HeadWeights {
                query: (dh, dk),
                key: (dh, dk),
                value: (dh, dk),
            };
            cfg.heads
        ],
        out_proj: (dh, dh),
        ffn_in: (dh, dff),
        ffn_in_bias: (1, dff),
        ffn_out: (dff, dh),
        ffn_out_bias: (1, dh),
        attn_norm_gain: (1, dh),
        attn_norm_bias: (1, dh),
        ffn_norm_gain: (1, dh),
        ffn_norm_bias: (1, dh),
    };
    ModelWeights {
        embed: (d, dh),
        positional: (cfg.pos_encoding == PosEncoding::Learned).then_some((cfg.window, dh)),
        layers: vec![layer; cfg.layers],
        head: (dh, 1),
        head_bias: (1, 1),
    }
}

enum InitKind {
    Zeros,
    Ones,
    Glorot,
}

fn init_kind(name: &str) -> InitKind {
    if name == "bp" || name.ends_with(".b1") || name.ends_with(".b2") || name.ends_with(".b") {
        InitKind::Zeros
    } else if name.ends_with(".g") {
        InitKind::Ones
    } else {
        InitKind::Glorot
    }
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains; all
    /// randomness from `cfg.seed`.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        parameter_shapes(cfg).try_map_named(|name, &(r, c)| {
            Ok(match init_kind(name) {
                InitKind::Zeros => Tensor::zeros(r, c),
                InitKind::Ones => Tensor::filled(r, c, 1.0),
                InitKind::Glorot => {
                    let limit = (6.0 / (r + c) as f64).sqrt();
                    let data = (0..r * c).map(|_| rng.gen_range(-limit..limit)).collect();
                    Tensor::from_vec(r, c, data)?
                }
            })
        })
    }

    /// Checks every tensor against the shapes implied by `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = parameter_shapes(cfg);
        let want = expected.entries();
        let have = self.entries();
        if want.len() != have.len() {
            return Err(Error::load(
                "params",
                format!("{} tensors, config implies {}", have.len(), want.len()),
            ));
        }
        for ((name, shape), (_, t)) in want.iter().zip(&have) {
            let shape = **shape;
            if t.shape() != shape {
                return Err(Error::load(
                    name.clone(),
                    format!("shape {:?}, config implies {:?}", t.shape(), shape),
                ));
            }
            if !t.is_finite() {
                return Err(Error::load(name.clone(), "non-finite value"));
            }
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.values().iter().map(|t| t.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            hidden_dim: 8,
            heads: 2,
            layers: 2,
            ..ModelConfig::new(5, 4)
        }
    }

    #[test]
    fn canonical_names() {
        let p = ModelParams::init(&cfg()).unwrap();
        let names = p.names();
        assert_eq!(names[0], "we");
        assert_eq!(names[1], "l0.h0.wq");
        assert!(names.contains(&"l1.h1.wv".to_string()));
        assert!(names.contains(&"l1.ln2.b".to_string()));
        assert_eq!(names.last().unwrap(), "bp");
        assert_eq!(names.len(), 1 + 2 * (6 + 9) + 2);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ModelParams::init(&cfg()).unwrap();
        assert_eq!(a, ModelParams::init(&cfg()).unwrap());
        let b = ModelParams::init(&ModelConfig { seed: 1, ..cfg() }).unwrap();
        assert_ne!(a, b);
        let limit = (6.0f64 / 13.0).sqrt();
        assert!(a.embed.data().iter().all(|v| v.abs() <= limit));
        assert!(a.layers[0].ffn_in_bias.data().iter().all(|&v| v == 0.0));
        assert!(a.layers[0].attn_norm_gain.data().iter().all(|&v| v == 1.0));
        a.check_shapes(&cfg()).unwrap();
    }

    #[test]
    fn learned_positional_table_present_only_in_learned_mode() {
        let p = ModelParams::init(&cfg()).unwrap();
        assert!(p.positional.is_none());
        let c = ModelConfig {
            pos_encoding: PosEncoding::Learned,
            ..cfg()
        };
        let p = ModelParams::init(&c).unwrap();
        assert_eq!(p.positional.as_ref().unwrap().shape(), (4, 8));
        assert_eq!(p.names()[1], "pe");
    }

    #[test]
    fn shape_check_names_parameter() {
        let mut p = ModelParams::init(&cfg()).unwrap();
        p.layers[1].out_proj = Tensor::zeros(8, 7);
        let err = p.check_shapes(&cfg()).unwrap_err();
        assert!(err.to_string().contains("l1.wo"), "{err}");
    }

    #[test]
    fn values_round_trip_through_from_values() {
        let p = ModelParams::init(&cfg()).unwrap();
        let flat: Vec<Tensor> = p.values().into_iter().cloned().collect();
        assert_eq!(p.from_values(flat), p);
    }
}
