use serde::{Deserialize, Serialize};

use super::event::{encode_event, FeatureLayout, InteractionEvent, Session};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A fixed-length slice of a session plus the dwell label that follows it.
///
/// Rows at or past `valid_len` are zero padding. `target` is in raw
/// milliseconds straight out of [`build_windows`] and on the normalized
/// scale after [`super::apply_normalize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceWindow {
    pub features: Tensor,
    pub target: f64,
    pub valid_len: usize,
    pub device_type: u32,
}

impl SequenceWindow {
    pub fn window_len(&self) -> usize {
        self.features.rows()
    }

    pub fn padding_is_zero(&self) -> bool {
        (self.valid_len..self.features.rows()).all(|r| self.features.row(r).iter().all(|&v| v == 0.0))
    }
}

/// Slides a `window`-step frame over every session with the given stride.
///
/// Each window is labelled with the dwell of the step right after it. A
/// session too short for a full window (2..=window events) yields a single
/// left-aligned padded window over all but its last event; sessions with
/// fewer than two events yield nothing.
pub fn build_windows(
    sessions: &[Session],
    layout: &FeatureLayout,
    window: usize,
    stride: usize,
) -> Result<Vec<SequenceWindow>> {
    if window < 2 {
        return Err(Error::config("data.window", format!("window {window} must be >= 2")));
    }
    if stride == 0 {
        return Err(Error::config("data.stride", "stride must be >= 1"));
    }
    let d = layout.dim();
    let mut out = Vec::new();
    for s in sessions {
        if let Some(pos) = s
            .events
            .windows(2)
            .position(|p| p[1].timestamp < p[0].timestamp)
        {
            return Err(Error::data(
                format!("session {}", s.id),
                format!("events not sorted by timestamp at index {}", pos + 1),
            ));
        }
        let n = s.events.len();
        if n < 2 {
            continue;
        }
        let encoded = s
            .events
            .iter()
            .map(|e| encode_event(e, layout))
            .collect::<Result<Vec<_>>>()?;

        let mut emit = |start: usize, valid: usize| -> Result<()> {
            let mut features = Tensor::zeros(window, d);
            for r in 0..valid {
                features.row_mut(r).copy_from_slice(&encoded[start + r]);
            }
            let next = &s.events[start + valid];
            let target = next.label_ms();
            if !target.is_finite() {
                return Err(Error::data(
                    format!("session {}", s.id),
                    format!("non-finite dwell label {target}"),
                ));
            }
            out.push(SequenceWindow {
                features,
                target,
                valid_len: valid,
                device_type: s.events[start + valid - 1].device_type,
            });
            Ok(())
        };

        if n <= window {
            emit(0, n - 1)?;
        } else {
            let mut start = 0;
            while start + window < n {
                emit(start, window)?;
                start += stride;
            }
        }
    }
    Ok(out)
}

/// Unlabelled window over the most recent `window` events, for inference.
/// `target` is NaN.
pub fn window_from_events(events: &[InteractionEvent], layout: &FeatureLayout, window: usize) -> Result<SequenceWindow> {
    if events.is_empty() {
        return Err(Error::Usage("a window needs at least one event".into()));
    }
    if events.windows(2).any(|p| p[1].timestamp < p[0].timestamp) {
        return Err(Error::data("events", "not sorted by timestamp"));
    }
    let recent = &events[events.len().saturating_sub(window)..];
    let mut features = Tensor::zeros(window, layout.dim());
    for (r, e) in recent.iter().enumerate() {
        features.row_mut(r).copy_from_slice(&encode_event(e, layout)?);
    }
    Ok(SequenceWindow {
        features,
        target: f64::NAN,
        valid_len: recent.len(),
        device_type: recent[recent.len() - 1].device_type,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionEvent;

    fn session(n: usize) -> Session {
        Session {
            id: "s".into(),
            events: (0..n)
                .map(|i| InteractionEvent {
                    timestamp: i as i64 * 10,
                    session_id: "s".into(),
                    dwell_ms: (i + 1) as f64 * 100.0,
                    click_count: i as u32,
                    scroll_delta: 0.0,
                    context_category: 0,
                    device_type: (i % 2) as u32,
                    target_ms: None,
                })
                .collect(),
        }
    }

    fn layout() -> FeatureLayout {
        FeatureLayout::new(1, 2).unwrap()
    }

    #[test]
    fn five_events_window_three() {
        let w = build_windows(&[session(5)], &layout(), 3, 1).unwrap();
        assert_eq!(w.len(), 2);
        // Steps 1-3 -> label of step 4, steps 2-4 -> label of step 5.
        assert_eq!(w[0].target, 400.0);
        assert_eq!(w[1].target, 500.0);
        assert_eq!(w[0].features.get(0, 1), 0.0);
        assert_eq!(w[1].features.get(0, 1), 1.0);
        assert_eq!(w[1].features.get(2, 1), 3.0);
        assert!(w.iter().all(|x| x.valid_len == 3));
    }

    #[test]
    fn single_event_yields_nothing() {
        assert!(build_windows(&[session(1)], &layout(), 3, 1).unwrap().is_empty());
    }

    #[test]
    fn two_events_pad() {
        let w = build_windows(&[session(2)], &layout(), 4, 1).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].valid_len, 1);
        assert_eq!(w[0].target, 200.0);
        assert!(w[0].features.row(0).iter().any(|&v| v != 0.0));
        for r in 1..4 {
            assert!(w[0].features.row(r).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn padding_invariant_exhaustive() {
        for n in 0..12 {
            for window in 2..7 {
                for stride in 1..4 {
                    for w in build_windows(&[session(n)], &layout(), window, stride).unwrap() {
                        assert!(w.padding_is_zero());
                        assert!((1..=window).contains(&w.valid_len));
                    }
                }
            }
        }
    }

    #[test]
    fn stride_skips_starts() {
        let w = build_windows(&[session(9)], &layout(), 3, 2).unwrap();
        // Starts 0, 2, 4 (start + 3 < 9), 6 would need step 9.
        let targets: Vec<f64> = w.iter().map(|x| x.target).collect();
        assert_eq!(targets, vec![400.0, 600.0, 800.0]);
    }

    #[test]
    fn unsorted_session_rejected() {
        let mut s = session(4);
        s.events[2].timestamp = -5;
        let err = build_windows(&[s], &layout(), 2, 1).unwrap_err();
        assert!(matches!(err, Error::Data { .. }));
    }

    #[test]
    fn explicit_target_overrides_dwell() {
        let mut s = session(3);
        s.events[2].target_ms = Some(42.0);
        let w = build_windows(&[s], &layout(), 2, 1).unwrap();
        assert_eq!(w[0].target, 42.0);
    }
}
