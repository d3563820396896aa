//! Plain nested-Vec reference implementations used as test oracles, plus
//! fixture helpers. Nothing here touches the autodiff graph.
#![allow(dead_code)]

use std::path::Path;

use dwell_core::data::SequenceWindow;
use dwell_core::model::{ModelConfig, ModelParams};
use dwell_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type M = Vec<Vec<f64>>;

pub fn to_m(t: &Tensor) -> M {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn to_t(m: &M) -> Tensor {
    Tensor::from_rows(m).unwrap()
}

pub fn matmul(a: &M, b: &M) -> M {
    let (n, k, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i][l] * b[l][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &M) -> M {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn add(a: &M, b: &M) -> M {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn add_row(a: &M, b: &[f64]) -> M {
    a.iter().map(|x| x.iter().zip(b).map(|(p, q)| p + q).collect()).collect()
}

pub fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
}

pub fn layer_norm(a: &M, g: &[f64], b: &[f64]) -> M {
    a.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(c, v)| (v - mu) / (var + 1e-5).sqrt() * g[c] + b[c])
                .collect()
        })
        .collect()
}

/// Scalar-loop scaled dot-product attention with keys `>= valid` ignored.
pub fn attention(q: &M, k: &M, v: &M, valid: usize) -> M {
    let dk = q[0].len() as f64;
    q.iter()
        .map(|qi| {
            let logits: Vec<f64> = (0..valid)
                .map(|j| qi.iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>() / dk.sqrt())
                .collect();
            let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            (0..v[0].len())
                .map(|c| (0..valid).map(|j| e[j] / z * v[j][c]).sum())
                .collect()
        })
        .collect()
}

pub fn encoder_layer(h: &M, p: &ModelParams, l: usize, valid: usize) -> M {
    let layer = &p.layers[l];
    let mut cat: M = vec![Vec::new(); h.len()];
    for head in &layer.heads {
        let o = attention(
            &matmul(h, &to_m(&head.query)),
            &matmul(h, &to_m(&head.key)),
            &matmul(h, &to_m(&head.value)),
            valid,
        );
        for (row, part) in cat.iter_mut().zip(o) {
            row.extend(part);
        }
    }
    let mha = matmul(&cat, &to_m(&layer.out_proj));
    let h1 = layer_norm(&add(h, &mha), layer.attn_norm_gain.data(), layer.attn_norm_bias.data());
    let a = add_row(&matmul(&h1, &to_m(&layer.ffn_in)), layer.ffn_in_bias.data());
    let a: M = a.iter().map(|r| r.iter().map(|&x| gelu(x)).collect()).collect();
    let f = add_row(&matmul(&a, &to_m(&layer.ffn_out)), layer.ffn_out_bias.data());
    layer_norm(&add(&h1, &f), layer.ffn_norm_gain.data(), layer.ffn_norm_bias.data())
}

/// Full forward pass for GELU models, independent of the graph code.
pub fn forward(p: &ModelParams, x: &Tensor, valid: usize, pe: Option<&Tensor>) -> f64 {
    let mut h = matmul(&to_m(x), &to_m(&p.embed));
    if let Some(pe) = pe {
        h = add(&h, &to_m(pe));
    }
    for l in 0..p.layers.len() {
        h = encoder_layer(&h, p, l, valid);
    }
    let dh = h[0].len();
    let z: Vec<f64> = (0..dh).map(|c| (0..valid).map(|r| h[r][c]).sum::<f64>() / valid as f64).collect();
    z.iter().zip(p.head.data()).map(|(a, b)| a * b).sum::<f64>() + p.head_bias.data()[0]
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Random window with zero padding past `valid_len`.
pub fn random_window(cfg: &ModelConfig, valid_len: usize, seed: u64) -> SequenceWindow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = random_tensor(&mut rng, cfg.window, cfg.input_dim, 1.0);
    for r in valid_len..cfg.window {
        features.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
    }
    SequenceWindow {
        features,
        target: rng.gen_range(-1.0..1.0),
        valid_len,
        device_type: 0,
    }
}

/// Compares against `tests/golden/<name>`; set `UPDATE_GOLDEN=1` to rewrite.
pub fn check_golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden {}: {e} (run with UPDATE_GOLDEN=1)", path.display()));
    assert_eq!(actual, expected, "golden {name} differs");
}
