//! Interaction logs to normalized fixed-length sequence windows.

mod avazu;
mod cache;
mod event;
pub(crate) mod hash;
mod normalize;
mod split;
mod synth;
mod window;

pub use avazu::{ingest_avazu_csv, ingest_avazu_reader, parse_hour, AvazuSchema, IngestOptions, IngestOutput, SessionKey};
pub use cache::{WindowCache, WINDOW_CACHE_FORMAT, WINDOW_CACHE_VERSION};
pub use event::{encode_event, FeatureLayout, InteractionEvent, Session, NUMERIC_FEATURES};
pub use normalize::{apply_normalize, apply_normalize_all, fit_normalize, NormStats};
pub use split::{prepare_dataset, split_sessions, PreparedData, SessionSplit, TRAIN_FRACTION, VAL_FRACTION};
pub use synth::{next_step_signal, synth_generate, SynthConfig, LABEL_NOISE_SD};
pub use window::{build_windows, window_from_events, SequenceWindow};
