mod common;

use common::check_golden;
use dwell_core::data::{
    prepare_dataset, synth_generate, window_from_events, FeatureLayout, SynthConfig, WindowCache,
};
use dwell_core::eval::{mean_predictor_report, EvalOptions};
use dwell_core::model::{load_checkpoint, save_checkpoint, Checkpoint, Model, ModelConfig};
use dwell_core::train::{train, TrainConfig};
use dwell_core::Error;

fn seed7() -> dwell_core::data::PreparedData {
    let sessions = synth_generate(&SynthConfig::default()).unwrap();
    prepare_dataset(&sessions, FeatureLayout::new(4, 2).unwrap(), 8, 1, 7).unwrap()
}

#[test]
fn mean_predictor_report_is_golden() {
    let d = seed7();
    let report = mean_predictor_report(&d.train, &d.test, &d.stats, &EvalOptions::default()).unwrap();
    assert!((report.rmse * report.rmse - report.mse).abs() <= 1e-12);
    check_golden("mean_predictor_seed7.json", &format!("{}\n", report.to_json()));
}

#[test]
fn window_cache_round_trips() {
    let d = seed7();
    let hash = d.split_hash;
    let cache = WindowCache::from(d);
    assert_eq!(cache.split_hash, format!("{hash:016x}"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("windows.json");
    cache.save(&path).unwrap();
    assert_eq!(WindowCache::load(&path).unwrap(), cache);

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace("\"version\":1", "\"version\":9")).unwrap();
    match WindowCache::load(&path) {
        Err(Error::Load { field, .. }) => assert_eq!(field, "version"),
        other => panic!("expected load error, got {other:?}"),
    }
}

#[test]
fn checkpoint_errors_name_the_field() {
    let d = seed7();
    let cfg = ModelConfig {
        hidden_dim: 8,
        heads: 2,
        layers: 1,
        ..ModelConfig::new(d.layout.dim(), 8)
    };
    let model = Model::new(cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    save_checkpoint(&model, d.layout, &d.stats, &path).unwrap();
    let (back, layout, stats) = load_checkpoint(&path).unwrap();
    assert_eq!(back.params(), model.params());
    assert_eq!((layout, &stats), (d.layout, &d.stats));

    let mut ck = Checkpoint::new(&model, d.layout, &d.stats);
    ck.params.remove("l0.h1.wk");
    match ck.into_model() {
        Err(Error::Load { field, .. }) => assert_eq!(field, "l0.h1.wk"),
        other => panic!("expected load error, got {other:?}"),
    }
    let mut ck = Checkpoint::new(&model, d.layout, &d.stats);
    ck.params.get_mut("wp").unwrap().pop();
    assert!(matches!(ck.into_model(), Err(Error::Load { field, .. }) if field == "wp"));

    let mut ck = Checkpoint::new(&model, d.layout, &d.stats);
    ck.layout = FeatureLayout::new(5, 2).unwrap();
    assert!(matches!(ck.into_model(), Err(Error::Load { field, .. }) if field == "feature_layout"));

    assert!(matches!(load_checkpoint(dir.path().join("absent.json")), Err(Error::Io { .. })));
}

#[test]
fn short_training_reduces_validation_loss() {
    let d = seed7();
    let cfg = ModelConfig {
        hidden_dim: 16,
        heads: 2,
        layers: 1,
        ..ModelConfig::new(d.layout.dim(), 8)
    };
    let tcfg = TrainConfig {
        max_epochs: 4,
        ..TrainConfig::default()
    };
    let (_, history) = train(&d.train, &d.val, &cfg, &tcfg).unwrap();
    let val = history.val_losses();
    assert!(val[history.best_epoch] < val[0] || history.best_epoch == 0);
    assert!(val.iter().copied().fold(f64::INFINITY, f64::min) < 1.0);
    assert_eq!(history.to_tsv().lines().count(), val.len() + 1);
}

#[test]
fn inference_window_uses_latest_events() {
    let sessions = synth_generate(&SynthConfig::default()).unwrap();
    let layout = FeatureLayout::new(4, 2).unwrap();
    let events = &sessions[0].events;
    let w = window_from_events(events, &layout, 8).unwrap();
    assert_eq!(w.valid_len, 8);
    let last = dwell_core::data::encode_event(&events[events.len() - 1], &layout).unwrap();
    assert_eq!(w.features.row(7), &last[..]);

    let w = window_from_events(&events[..3], &layout, 8).unwrap();
    assert_eq!(w.valid_len, 3);
    assert!(w.padding_is_zero());
    assert!(window_from_events(&[], &layout, 8).is_err());
}
