mod common;

use common::random_window;
use dwell_core::data::{apply_normalize_all, build_windows, fit_normalize, synth_generate, FeatureLayout, SequenceWindow, SynthConfig};
use dwell_core::eval::{compute_metrics, evaluate, EvalOptions, RmaeVariant, Scale};
use dwell_core::model::{GraphModel, Model, ModelConfig};
use dwell_core::numerics::{grad_check, DEFAULT_EPS};
use dwell_core::train::{dataset_mse, train, TrainConfig};
use dwell_core::{Error, Tensor};

fn overfit_windows() -> Vec<SequenceWindow> {
    let sessions = synth_generate(&SynthConfig {
        n_sessions: 4,
        events_per_session: 16,
        seed: 7,
        ..SynthConfig::default()
    })
    .unwrap();
    let layout = FeatureLayout::new(4, 2).unwrap();
    let raw = build_windows(&sessions, &layout, 8, 1).unwrap();
    let stats = fit_normalize(&raw, true).unwrap();
    apply_normalize_all(&raw, &stats).unwrap()
}

fn overfit_config(dim: usize) -> (ModelConfig, TrainConfig) {
    (
        ModelConfig {
            hidden_dim: 16,
            heads: 2,
            layers: 1,
            ..ModelConfig::new(dim, 8)
        },
        TrainConfig {
            learning_rate: 5e-4,
            max_epochs: 2000,
            batch_size: 32,
            patience: 2000,
            grad_clip: None,
            ..TrainConfig::default()
        },
    )
}

#[test]
fn overfit_fixture_converges_with_monotone_tail() {
    let ws = overfit_windows();
    assert_eq!(ws.len(), 32);
    let (mcfg, tcfg) = overfit_config(ws[0].features.cols());
    let (model, history) = train(&ws, &ws, &mcfg, &tcfg).unwrap();
    let stats = fit_normalize(&ws, false).unwrap();
    let report = evaluate(&model, &stats, &ws, &EvalOptions {
        mape_scale: None,
        ..EvalOptions::default()
    })
    .unwrap();
    assert!(report.mse < 1e-3, "train mse {}", report.mse);

    let loss = history.train_losses();
    for e in 100..loss.len().saturating_sub(50) {
        assert!(loss[e + 50] <= loss[e] + 1e-4, "epoch {e}: {} then {}", loss[e], loss[e + 50]);
    }

    let val = history.val_losses();
    let min = val.iter().copied().fold(f64::INFINITY, f64::min);
    let first_min = val.iter().position(|&v| v == min).unwrap();
    assert_eq!(history.best_epoch, first_min);
    assert_eq!(dataset_mse(&model, &ws).unwrap(), min);
}

#[test]
fn early_stopping_restores_best_epoch() {
    let ws = overfit_windows();
    let (train_ws, val_ws) = ws.split_at(24);
    let (mcfg, _) = overfit_config(ws[0].features.cols());
    let tcfg = TrainConfig {
        learning_rate: 1e-2,
        max_epochs: 200,
        batch_size: 8,
        patience: 5,
        ..TrainConfig::default()
    };
    let (model, history) = train(train_ws, val_ws, &mcfg, &tcfg).unwrap();
    let val = history.val_losses();
    assert!(history.epochs.len() < 200, "patience should stop early");
    assert_eq!(history.epochs.len(), history.best_epoch + 1 + 5);
    let min = val.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(val[history.best_epoch], min);
    assert_eq!(dataset_mse(&model, val_ws).unwrap(), min);
}

#[test]
fn same_seeds_give_bit_identical_history() {
    let ws = overfit_windows();
    let (mcfg, mut tcfg) = overfit_config(ws[0].features.cols());
    tcfg.max_epochs = 20;
    tcfg.batch_size = 5;
    let (a, ha) = train(&ws, &ws, &mcfg, &tcfg).unwrap();
    let (b, hb) = train(&ws, &ws, &mcfg, &tcfg).unwrap();
    assert_eq!(a.params(), b.params());
    for (x, y) in ha.epochs.iter().zip(&hb.epochs) {
        assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        assert_eq!(x.val_loss.to_bits(), y.val_loss.to_bits());
    }
}

#[test]
fn zero_learning_rate_keeps_params_and_loss() {
    let ws = overfit_windows();
    let (mcfg, mut tcfg) = overfit_config(ws[0].features.cols());
    tcfg.learning_rate = 0.0;
    tcfg.max_epochs = 3;
    let (model, history) = train(&ws, &ws, &mcfg, &tcfg).unwrap();
    assert_eq!(model.params(), Model::new(mcfg).unwrap().params());
    let val = history.val_losses();
    assert!(val.iter().all(|&v| v == val[0]));
}

#[test]
fn exploding_targets_report_divergence() {
    let mut ws = overfit_windows();
    ws[3].target = f64::MAX;
    let (mcfg, mut tcfg) = overfit_config(ws[0].features.cols());
    tcfg.max_epochs = 2;
    tcfg.batch_size = 8;
    match train(&ws, &ws, &mcfg, &tcfg) {
        Err(Error::Diverged { epoch, .. }) => assert_eq!(epoch, 0),
        other => panic!("expected divergence, got {:?}", other.map(|_| ())),
    }
    assert!(matches!(train(&[], &ws, &mcfg, &tcfg), Err(Error::Usage(_))));
}

#[test]
fn trained_model_beats_constant_predictor_on_relative_mae() {
    let ws = overfit_windows();
    let (mcfg, mut tcfg) = overfit_config(ws[0].features.cols());
    tcfg.max_epochs = 300;
    let (model, _) = train(&ws, &ws, &mcfg, &tcfg).unwrap();

    // W_e = 0 and W_p = 0 leave only b_p, set to the target mean.
    let mut params = model.params().clone();
    params.embed = Tensor::zeros(params.embed.rows(), params.embed.cols());
    params.head = Tensor::zeros(params.head.rows(), 1);
    let mean = ws.iter().map(|w| w.target).sum::<f64>() / ws.len() as f64;
    params.head_bias = Tensor::scalar(mean);
    let constant = Model::from_params(mcfg, params).unwrap();

    let targets: Vec<f64> = ws.iter().map(|w| w.target).collect();
    let score = |m: &Model| {
        let preds: Vec<f64> = ws.iter().map(|w| m.predict(w).unwrap()).collect();
        compute_metrics(&preds, &targets, RmaeVariant::RelativeMae, None, Scale::Normalized).unwrap()
    };
    let (c, t) = (score(&constant), score(&model));
    assert!((c.mse - targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / 32.0).abs() < 1e-12);
    assert!(c.rmae >= t.rmae, "constant {} vs trained {}", c.rmae, t.rmae);
}

#[test]
fn one_and_two_heads_pass_grad_check() {
    for heads in [1, 2] {
        let cfg = ModelConfig {
            hidden_dim: 8,
            heads,
            layers: 1,
            seed: 4,
            ..ModelConfig::new(5, 4)
        };
        let model = Model::new(cfg).unwrap();
        let w = random_window(&cfg, 4, 9);
        assert!(model.predict(&w).unwrap().is_finite());
        let params: Vec<Tensor> = model.params().values().into_iter().cloned().collect();
        let pe = model.positional_encoding().cloned();
        let rel = grad_check(
            |g, ids| {
                let weights = model.params().from_values(ids.to_vec());
                let positional = pe.as_ref().map(|p| g.constant(p.clone()));
                let y = model.forward_on(g, &GraphModel { weights, positional }, &w, None, None)?;
                g.mse(&[y], &[w.target])
            },
            &params,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(rel < 1e-5, "M={heads}: {rel:e}");
    }
}
