use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosEncoding {
    Sinusoidal,
    Learned,
    /// No positional signal; the encoder becomes permutation invariant.
    None,
}

impl std::str::FromStr for PosEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinusoidal" => Ok(PosEncoding::Sinusoidal),
            "learned" => Ok(PosEncoding::Learned),
            "none" => Ok(PosEncoding::None),
            other => Err(Error::config(
                "model.pos_encoding",
                format!("unknown mode `{other}` (expected sinusoidal, learned or none)"),
            )),
        }
    }
}

impl std::fmt::Display for PosEncoding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PosEncoding::Sinusoidal => "sinusoidal",
            PosEncoding::Learned => "learned",
            PosEncoding::None => "none",
        })
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Encoded feature width `d`.
    pub input_dim: usize,
    /// Hidden width `d_h`.
    pub hidden_dim: usize,
    pub heads: usize,
    pub layers: usize,
    /// Window length `T`.
    pub window: usize,
    pub activation: Activation,
    pub pos_encoding: PosEncoding,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(input_dim: usize, window: usize) -> Self {
        ModelConfig {
            input_dim,
            hidden_dim: 32,
            heads: 4,
            layers: 2,
            window,
            activation: Activation::Gelu,
            pos_encoding: PosEncoding::Sinusoidal,
            dropout: 0.0,
            seed: 0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.hidden_dim
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.input_dim", self.input_dim),
            ("model.d_h", self.hidden_dim),
            ("model.heads", self.heads),
            ("model.layers", self.layers),
            ("model.window", self.window),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.hidden_dim % self.heads != 0 {
            return Err(Error::config(
                "model.heads",
                format!("{} heads do not divide d_h = {}", self.heads, self.hidden_dim),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("model.dropout", format!("{} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divisibility_checked() {
        let mut c = ModelConfig::new(5, 4);
        c.hidden_dim = 24;
        for h in [1, 2, 4, 8, 12] {
            c.heads = h;
            c.validate().unwrap();
        }
        c.heads = 5;
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("model.heads"));
    }

    #[test]
    fn dropout_range() {
        let mut c = ModelConfig::new(5, 4);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn parse_modes() {
        assert_eq!("learned".parse::<PosEncoding>().unwrap(), PosEncoding::Learned);
        assert!("rotary".parse::<PosEncoding>().is_err());
    }
}
