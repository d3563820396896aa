//! Seeded synthetic interaction logs with a known next-step dwell signal.
//!
//! Per step: `dwell_ms ~ LogNormal(6, 1)`, `clicks ~ Poisson(0.8)`,
//! `scroll ~ Normal(0, 100)`, context category uniform. The device is drawn
//! once per session. The label attached to step `t+1` (the target of any
//! window ending at step `t`) is
//!
//! ```text
//! y = 500 + 400 * clicks[t-2] + 0.5 * mean(dwell[1..=t])
//!       + 200 * sin(1e-3 * sum(scroll[1..=t])) + Normal(0, 50)
//! ```
//!
//! clipped at zero, with 1-based step indices and `clicks[t-2] = 0` before
//! the session has that much history.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::event::{InteractionEvent, Session};
use crate::error::{Error, Result};

pub const BASE_TIMESTAMP: i64 = 1_600_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_sessions: usize,
    pub events_per_session: usize,
    pub categories: usize,
    pub devices: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_sessions: 200,
            events_per_session: 20,
            categories: 4,
            devices: 2,
            seed: 7,
        }
    }
}

/// Noise-free label for the step following `history`.
pub fn next_step_signal(history: &[InteractionEvent]) -> f64 {
    let t = history.len();
    let lag_clicks = if t >= 3 {
        f64::from(history[t - 3].click_count)
    } else {
        0.0
    };
    let mean_dwell = if t == 0 {
        0.0
    } else {
        history.iter().map(|e| e.dwell_ms).sum::<f64>() / t as f64
    };
    let scroll: f64 = history.iter().map(|e| e.scroll_delta).sum();
    500.0 + 400.0 * lag_clicks + 0.5 * mean_dwell + 200.0 * (1e-3 * scroll).sin()
}

pub const LABEL_NOISE_SD: f64 = 50.0;

pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<Session>> {
    if cfg.events_per_session == 0 {
        return Err(Error::config("data.events_per_session", "must be at least 1"));
    }
    if cfg.categories == 0 || cfg.devices == 0 {
        return Err(Error::config("data.categories", "cardinalities must be at least 1"));
    }
    let dwell = LogNormal::new(6.0, 1.0).expect("valid lognormal");
    let clicks = Poisson::new(0.8).expect("valid poisson");
    let scroll = Normal::new(0.0, 100.0).expect("valid normal");
    let noise = Normal::new(0.0, LABEL_NOISE_SD).expect("valid normal");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut sessions = Vec::with_capacity(cfg.n_sessions);
    for s in 0..cfg.n_sessions {
        let id = format!("synth-{s:06}");
        let device = rng.gen_range(0..cfg.devices) as u32;
        let mut ts = BASE_TIMESTAMP + s as i64 * 86_400;
        let mut events: Vec<InteractionEvent> = Vec::with_capacity(cfg.events_per_session);
        for step in 0..cfg.events_per_session {
            let target_ms = if step == 0 {
                None
            } else {
                let y = next_step_signal(&events) + noise.sample(&mut rng);
                Some(y.max(0.0))
            };
            let dwell_ms: f64 = dwell.sample(&mut rng);
            let e = InteractionEvent {
                timestamp: ts,
                session_id: id.clone(),
                dwell_ms,
                click_count: clicks.sample(&mut rng) as u32,
                scroll_delta: scroll.sample(&mut rng),
                context_category: rng.gen_range(0..cfg.categories) as u32,
                device_type: device,
                target_ms,
            };
            ts += (dwell_ms / 1000.0).ceil() as i64 + 1;
            events.push(e);
        }
        sessions.push(Session { id, events });
    }
    Ok(sessions)
}
