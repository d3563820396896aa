//! Value-level kernels. The autodiff graph calls into these for its forward
//! pass; they are also usable directly on plain tensors.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// Layer-norm variance floor.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Gelu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => {
                let inner = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
                0.5 * x * (1.0 + inner.tanh())
            }
        }
    }

    /// Derivative with respect to the input. ReLU uses 0 at the kink.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                let inner = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
                let t = inner.tanh();
                let dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            other => Err(Error::config(
                "activation",
                format!("unknown activation `{other}` (expected relu or gelu)"),
            )),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
        })
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.rows() {
        return Err(Error::dim(
            "matmul",
            format!(
                "lhs {}x{} incompatible with rhs {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            ),
        ));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Tensor::from_vec(m, n, out)
}

/// `a · bᵀ` without materialising the transpose.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.cols() {
        return Err(Error::dim(
            "matmul_nt",
            format!(
                "lhs {}x{} incompatible with transposed rhs of {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            ),
        ));
    }
    let (m, n) = (a.rows(), b.rows());
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let ar = a.row(i);
        for j in 0..n {
            out.push(ar.iter().zip(b.row(j)).map(|(x, y)| x * y).sum());
        }
    }
    Tensor::from_vec(m, n, out)
}

/// `aᵀ · b` without materialising the transpose.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rows() != b.rows() {
        return Err(Error::dim(
            "matmul_tn",
            format!(
                "transposed lhs of {}x{} incompatible with rhs {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            ),
        ));
    }
    let (k, m, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let ar = a.row(p);
        let br = b.row(p);
        for (i, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_vec(m, n, out)
}

pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    masked_softmax_rows(x, x.cols())
}

/// Row softmax restricted to the first `valid` columns. Columns at or past
/// `valid` receive weight exactly 0, the same as a `-inf` logit.
pub fn masked_softmax_rows(x: &Tensor, valid: usize) -> Result<Tensor> {
    if valid == 0 || valid > x.cols() {
        return Err(Error::Usage(format!(
            "softmax mask keeps {valid} of {} columns",
            x.cols()
        )));
    }
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(Error::NumericDomain("softmax input contains NaN".into()));
    }
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = &x.row(r)[..valid];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let orow = &mut out.row_mut(r)[..valid];
        let mut total = 0.0;
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - max).exp();
            total += *o;
        }
        orow.iter_mut().for_each(|o| *o /= total);
    }
    Ok(out)
}

pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    x.map(|v| kind.apply(v))
}

pub fn mean_rows(x: &Tensor) -> Result<Tensor> {
    mean_leading_rows(x, x.rows())
}

/// Mean over the first `count` rows.
pub fn mean_leading_rows(x: &Tensor, count: usize) -> Result<Tensor> {
    if x.is_empty() || count == 0 {
        return Err(Error::dim("mean_rows", "cannot average an empty tensor"));
    }
    if count > x.rows() {
        return Err(Error::dim(
            "mean_rows",
            format!("asked for {count} rows of a {}-row tensor", x.rows()),
        ));
    }
    let mut out = vec![0.0; x.cols()];
    for r in 0..count {
        out.iter_mut().zip(x.row(r)).for_each(|(o, v)| *o += v);
    }
    let inv = 1.0 / count as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    Tensor::from_vec(1, x.cols(), out)
}

/// Per-row normalisation state retained for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<(Tensor, LayerNormCache)> {
    let n = x.cols();
    if gain.shape() != (1, n) || bias.shape() != (1, n) {
        return Err(Error::dim(
            "layer_norm",
            format!(
                "gain {:?} / bias {:?} do not match width {n}",
                gain.shape(),
                bias.shape()
            ),
        ));
    }
    let mut normalized = Tensor::zeros(x.rows(), n);
    let mut out = Tensor::zeros(x.rows(), n);
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let istd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(istd);
        for c in 0..n {
            let xhat = (row[c] - mean) * istd;
            normalized.set(r, c, xhat);
            out.set(r, c, xhat * gain.data()[c] + bias.data()[c]);
        }
    }
    Ok((out, LayerNormCache { normalized, inv_std }))
}

/// Concatenates tensors with equal row counts along the column axis.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    let rows = parts
        .first()
        .map(|t| t.rows())
        .ok_or_else(|| Error::dim("concat_cols", "nothing to concatenate"))?;
    if let Some(bad) = parts.iter().find(|t| t.rows() != rows) {
        return Err(Error::dim(
            "concat_cols",
            format!("row counts {rows} and {} differ", bad.rows()),
        ));
    }
    let cols: usize = parts.iter().map(|t| t.cols()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for p in parts {
            data.extend_from_slice(p.row(r));
        }
    }
    Tensor::from_vec(rows, cols, data)
}
