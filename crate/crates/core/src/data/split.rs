use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::event::{FeatureLayout, Session};
use super::hash::Fnv1a;
use super::normalize::{apply_normalize_all, fit_normalize, NormStats};
use super::window::{build_windows, SequenceWindow};
use crate::error::{Error, Result};

pub const TRAIN_FRACTION: f64 = 0.70;
pub const VAL_FRACTION: f64 = 0.15;

/// Sessions partitioned into train/validation/test before windowing.
#[derive(Debug, Clone)]
pub struct SessionSplit {
    pub train: Vec<Session>,
    pub val: Vec<Session>,
    pub test: Vec<Session>,
}

impl SessionSplit {
    /// Fingerprint of which session went where.
    pub fn hash(&self) -> u64 {
        let mut h = Fnv1a::default();
        for (tag, part) in [(b'T', &self.train), (b'V', &self.val), (b'E', &self.test)] {
            for s in part {
                h.write(&[tag]);
                h.write(s.id.as_bytes());
                h.write(&[0]);
            }
        }
        h.finish()
    }
}

/// Seeded 70/15/15 shuffle split by session.
pub fn split_sessions(sessions: &[Session], seed: u64) -> SessionSplit {
    let mut idx: Vec<usize> = (0..sessions.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = sessions.len() as f64;
    let n_train = (n * TRAIN_FRACTION).round() as usize;
    let n_val = ((n * VAL_FRACTION).round() as usize).min(sessions.len() - n_train);
    let take = |ids: &[usize]| -> Vec<Session> {
        let mut v: Vec<usize> = ids.to_vec();
        v.sort_unstable();
        v.into_iter().map(|i| sessions[i].clone()).collect()
    };
    SessionSplit {
        train: take(&idx[..n_train]),
        val: take(&idx[n_train..n_train + n_val]),
        test: take(&idx[n_train + n_val..]),
    }
}

/// Windowed, normalized splits ready for training.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub layout: FeatureLayout,
    pub window: usize,
    pub stride: usize,
    pub stats: NormStats,
    pub train: Vec<SequenceWindow>,
    pub val: Vec<SequenceWindow>,
    pub test: Vec<SequenceWindow>,
    pub split_hash: u64,
}

/// Split by session, window each split, fit normalization on train only.
pub fn prepare_dataset(
    sessions: &[Session],
    layout: FeatureLayout,
    window: usize,
    stride: usize,
    split_seed: u64,
) -> Result<PreparedData> {
    let split = split_sessions(sessions, split_seed);
    let train_raw = build_windows(&split.train, &layout, window, stride)?;
    let val_raw = build_windows(&split.val, &layout, window, stride)?;
    let test_raw = build_windows(&split.test, &layout, window, stride)?;
    for (name, part) in [("train", &train_raw), ("val", &val_raw), ("test", &test_raw)] {
        if part.is_empty() {
            return Err(Error::Usage(format!(
                "{name} split has no windows ({} sessions total); generate more sessions",
                sessions.len()
            )));
        }
    }
    let stats = fit_normalize(&train_raw, true)?;
    Ok(PreparedData {
        layout,
        window,
        stride,
        train: apply_normalize_all(&train_raw, &stats)?,
        val: apply_normalize_all(&val_raw, &stats)?,
        test: apply_normalize_all(&test_raw, &stats)?,
        stats,
        split_hash: split.hash(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};

    #[test]
    fn split_sizes_and_disjointness() {
        let sessions = synth_generate(&SynthConfig {
            n_sessions: 40,
            events_per_session: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let sp = split_sessions(&sessions, 1);
        assert_eq!((sp.train.len(), sp.val.len(), sp.test.len()), (28, 6, 6));
        let mut ids: Vec<&str> = sp
            .train
            .iter()
            .chain(&sp.val)
            .chain(&sp.test)
            .map(|s| s.id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 40);
        assert_eq!(sp.hash(), split_sessions(&sessions, 1).hash());
        assert_ne!(sp.hash(), split_sessions(&sessions, 2).hash());
    }

    #[test]
    fn prepared_train_targets_are_centered() {
        let sessions = synth_generate(&SynthConfig {
            n_sessions: 30,
            events_per_session: 12,
            ..SynthConfig::default()
        })
        .unwrap();
        let p = prepare_dataset(&sessions, FeatureLayout::new(4, 2).unwrap(), 6, 1, 0).unwrap();
        let m = p.train.iter().map(|w| w.target).sum::<f64>() / p.train.len() as f64;
        assert!(m.abs() < 1e-9);
        assert!(p.train.iter().chain(&p.val).chain(&p.test).all(|w| w.padding_is_zero()));
    }

    #[test]
    fn too_few_sessions_is_usage_error() {
        let sessions = synth_generate(&SynthConfig {
            n_sessions: 2,
            events_per_session: 5,
            ..SynthConfig::default()
        })
        .unwrap();
        let err = prepare_dataset(&sessions, FeatureLayout::new(4, 2).unwrap(), 3, 1, 0).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }
}
