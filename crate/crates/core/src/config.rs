//! Flat `section.key=value` configuration files and the merged run view.
//!
//! Precedence is command-line override, then file, then built-in default.
//! Every error names the offending key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{FeatureLayout, SessionKey, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{EvalOptions, RmaeVariant, Scale};
use crate::experiments::SweepParam;
use crate::model::{ModelConfig, PosEncoding};
use crate::numerics::Activation;
use crate::train::TrainConfig;

/// Every key `RunConfig` understands.
pub const KNOWN_KEYS: &[&str] = &[
    "data.seed",
    "data.sessions",
    "data.events_per_session",
    "data.categories",
    "data.devices",
    "data.window",
    "data.stride",
    "data.csv",
    "data.session_key",
    "data.gap_cap_s",
    "data.skip_bad_rows",
    "model.d_h",
    "model.heads",
    "model.layers",
    "model.activation",
    "model.pos_encoding",
    "model.dropout",
    "model.seed",
    "train.lr",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.max_epochs",
    "train.batch_size",
    "train.patience",
    "train.grad_clip",
    "eval.scale",
    "eval.mape_scale",
    "eval.rmae",
    "sweep.param",
    "sweep.values",
    "sweep.repeats",
    "sweep.out",
    "sweep.wall_clock",
];

/// Raw key/value pairs; later `set` calls win.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key=value` lines; `#` starts a comment, blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = KvConfig::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", i + 1), format!("expected key=value, found `{line}`"))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::config(format!("line {}", i + 1), "empty key"));
            }
            cfg.entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    /// Applies a `key=value` override string.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(pair, "override must look like key=value"))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::config(key, format!("cannot parse `{v}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Rejects keys outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(Error::config(k, "unknown key")),
            None => Ok(()),
        }
    }
}

fn parse_enum<T: FromStr<Err = Error>>(kv: &KvConfig, key: &str, default: T) -> Result<T> {
    match kv.raw(key) {
        None => Ok(default),
        Some(v) => v.parse::<T>().map_err(|e| match e {
            Error::Config { message, .. } => Error::config(key, message),
            other => other,
        }),
    }
}

/// Model fields that come from configuration rather than from the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSettings {
    pub hidden_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub activation: Activation,
    pub pos_encoding: PosEncoding,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            hidden_dim: 32,
            heads: 4,
            layers: 2,
            activation: Activation::Gelu,
            pos_encoding: PosEncoding::Sinusoidal,
            dropout: 0.0,
            seed: 0,
        }
    }
}

impl ModelSettings {
    pub fn to_config(&self, input_dim: usize, window: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden_dim: self.hidden_dim,
            heads: self.heads,
            layers: self.layers,
            window,
            activation: self.activation,
            pos_encoding: self.pos_encoding,
            dropout: self.dropout,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub param: SweepParam,
    pub values: Vec<usize>,
    pub repeats: usize,
    pub out: PathBuf,
    pub wall_clock: bool,
}

/// Fully validated view of a configuration file plus overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub window: usize,
    pub stride: usize,
    pub csv: Option<PathBuf>,
    pub session_key: SessionKey,
    pub gap_cap_s: f64,
    pub skip_bad_rows: bool,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub sweep: Option<SweepSettings>,
}

impl RunConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        kv.check_known(KNOWN_KEYS)?;
        let sd = SynthConfig::default();
        let synth = SynthConfig {
            n_sessions: kv.get_or("data.sessions", sd.n_sessions)?,
            events_per_session: kv.get_or("data.events_per_session", sd.events_per_session)?,
            categories: kv.get_or("data.categories", sd.categories)?,
            devices: kv.get_or("data.devices", sd.devices)?,
            seed: kv.get_or("data.seed", sd.seed)?,
        };
        FeatureLayout::new(synth.categories, synth.devices)?;
        if synth.events_per_session == 0 {
            return Err(Error::config("data.events_per_session", "must be at least 1"));
        }
        let window: usize = kv.get_or("data.window", 8)?;
        if window < 2 {
            return Err(Error::config("data.window", format!("{window} must be >= 2")));
        }
        let stride: usize = kv.get_or("data.stride", 1)?;
        if stride == 0 {
            return Err(Error::config("data.stride", "must be >= 1"));
        }
        let gap_cap_s: f64 = kv.get_or("data.gap_cap_s", 1800.0)?;
        if !(gap_cap_s > 0.0) {
            return Err(Error::config("data.gap_cap_s", "must be positive"));
        }

        let md = ModelSettings::default();
        let model = ModelSettings {
            hidden_dim: kv.get_or("model.d_h", md.hidden_dim)?,
            heads: kv.get_or("model.heads", md.heads)?,
            layers: kv.get_or("model.layers", md.layers)?,
            activation: parse_enum(kv, "model.activation", md.activation)?,
            pos_encoding: parse_enum(kv, "model.pos_encoding", md.pos_encoding)?,
            dropout: kv.get_or("model.dropout", md.dropout)?,
            seed: kv.get_or("model.seed", md.seed)?,
        };
        model.to_config(1, window).validate()?;

        let td = TrainConfig::default();
        let grad_clip = match kv.raw("train.grad_clip") {
            None => td.grad_clip,
            Some("none") => None,
            Some(_) => Some(kv.get_or("train.grad_clip", 1.0)?),
        };
        let train = TrainConfig {
            learning_rate: kv.get_or("train.lr", td.learning_rate)?,
            beta1: kv.get_or("train.beta1", td.beta1)?,
            beta2: kv.get_or("train.beta2", td.beta2)?,
            eps: kv.get_or("train.eps", td.eps)?,
            max_epochs: kv.get_or("train.max_epochs", td.max_epochs)?,
            batch_size: kv.get_or("train.batch_size", td.batch_size)?,
            patience: kv.get_or("train.patience", td.patience)?,
            shuffle_seed: model.seed,
            grad_clip,
        };
        train.validate()?;

        let ed = EvalOptions::default();
        let mape_scale = match kv.raw("eval.mape_scale") {
            None => ed.mape_scale,
            Some("none") => None,
            Some(_) => Some(parse_enum(kv, "eval.mape_scale", Scale::Raw)?),
        };
        let eval = EvalOptions {
            scale: parse_enum(kv, "eval.scale", ed.scale)?,
            mape_scale,
            rmae_variant: parse_enum(kv, "eval.rmae", RmaeVariant::RootMae)?,
        };

        let sweep = match kv.raw("sweep.param") {
            None => None,
            Some(_) => {
                let param: SweepParam = parse_enum(kv, "sweep.param", SweepParam::Heads)?;
                let values = match kv.raw("sweep.values") {
                    Some(list) => list
                        .split(',')
                        .map(|v| {
                            v.trim()
                                .parse::<usize>()
                                .map_err(|_| Error::config("sweep.values", format!("`{}` is not a count", v.trim())))
                        })
                        .collect::<Result<Vec<_>>>()?,
                    None => param.default_values(),
                };
                let repeats = kv.get_or("sweep.repeats", 3)?;
                if repeats == 0 {
                    return Err(Error::config("sweep.repeats", "must be at least 1"));
                }
                Some(SweepSettings {
                    param,
                    values,
                    repeats,
                    out: kv.get_or("sweep.out", PathBuf::from("sweep-out"))?,
                    wall_clock: kv.get_or("sweep.wall_clock", true)?,
                })
            }
        };

        Ok(RunConfig {
            synth,
            window,
            stride,
            csv: kv.get("data.csv")?,
            session_key: parse_enum(kv, "data.session_key", SessionKey::DeviceId)?,
            gap_cap_s,
            skip_bad_rows: kv.get_or("data.skip_bad_rows", false)?,
            model,
            train,
            eval,
            sweep,
        })
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout {
            categories: self.synth.categories,
            devices: self.synth.devices,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_with_comments_and_overrides() {
        let mut kv = KvConfig::parse("# run\nmodel.d_h = 64\n\ndata.seed=3 # trailing\n").unwrap();
        assert_eq!(kv.raw("model.d_h"), Some("64"));
        kv.set_pair("model.d_h=16").unwrap();
        let rc = RunConfig::from_kv(&kv).unwrap();
        assert_eq!(rc.model.hidden_dim, 16);
        assert_eq!(rc.synth.seed, 3);
    }

    #[test]
    fn defaults_apply() {
        let rc = RunConfig::from_kv(&KvConfig::new()).unwrap();
        assert_eq!(rc.window, 8);
        assert_eq!(rc.train.grad_clip, Some(1.0));
        assert_eq!(rc.eval.mape_scale, Some(Scale::Raw));
        assert!(rc.sweep.is_none());
    }

    #[test]
    fn errors_name_the_key() {
        for (text, key) in [
            ("model.heads=5", "model.heads"),
            ("train.lr=fast", "train.lr"),
            ("model.activation=tanh", "model.activation"),
            ("bogus.key=1", "bogus.key"),
            ("data.window=1", "data.window"),
            ("sweep.param=heads\nsweep.values=1,x", "sweep.values"),
        ] {
            let err = RunConfig::from_kv(&KvConfig::parse(text).unwrap()).unwrap_err();
            assert!(err.to_string().contains(key), "{text}: {err}");
            assert!(err.is_validation());
        }
    }

    #[test]
    fn malformed_line() {
        let err = KvConfig::parse("a=1\nnot a pair\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn sweep_section() {
        let kv = KvConfig::parse("sweep.param=window\nsweep.values=4, 8\nsweep.repeats=2").unwrap();
        let s = RunConfig::from_kv(&kv).unwrap().sweep.unwrap();
        assert_eq!(s.param, SweepParam::Window);
        assert_eq!(s.values, vec![4, 8]);
        assert_eq!(s.repeats, 2);
    }
}
