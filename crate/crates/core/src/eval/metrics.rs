use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAPE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Normalized,
    Raw,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(Scale::Normalized),
            "raw" => Ok(Scale::Raw),
            other => Err(Error::config("eval.scale", format!("`{other}` is not normalized or raw"))),
        }
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scale::Normalized => "normalized",
            Scale::Raw => "raw",
        })
    }
}

/// Reading of the RMAE column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmaeVariant {
    /// `sqrt(mean |p - t|)`
    RootMae,
    /// `mean |p - t| / mean |t|`
    RelativeMae,
}

impl std::str::FromStr for RmaeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "root_mae" => Ok(RmaeVariant::RootMae),
            "relative_mae" => Ok(RmaeVariant::RelativeMae),
            other => Err(Error::config(
                "eval.rmae",
                format!("`{other}` is not root_mae or relative_mae"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub rmse: f64,
    /// Absent when MAPE was excluded.
    pub mape_percent: Option<f64>,
    /// The selected RMAE reading.
    pub rmae: f64,
    pub rmae_variant: RmaeVariant,
    pub rmae_root: f64,
    /// Absent when every target is zero.
    pub rmae_relative: Option<f64>,
    pub n: usize,
    /// Scale of mse, rmse and rmae.
    pub scale: Scale,
    pub mape_scale: Option<Scale>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub(crate) fn mape(pred: &[f64], target: &[f64], eps: f64) -> Result<f64> {
    if let Some(t) = target.iter().find(|t| t.abs() <= eps) {
        return Err(Error::MetricDomain(format!(
            "MAPE undefined for target {t} (|t| <= {eps}); evaluate MAPE on the raw scale or exclude it"
        )));
    }
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).abs() / t.abs()).sum();
    Ok(100.0 * s / pred.len() as f64)
}

/// All four metrics. `mape_eps = None` excludes MAPE; otherwise any
/// `|target| <= eps` is a metric-domain error.
pub fn compute_metrics(
    pred: &[f64],
    target: &[f64],
    variant: RmaeVariant,
    mape_eps: Option<f64>,
    scale: Scale,
) -> Result<MetricsReport> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Usage(format!(
            "metrics need equal nonzero lengths, got {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mse = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let mae = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let mean_abs_target = target.iter().map(|t| t.abs()).sum::<f64>() / n;
    let mape_percent = match mape_eps {
        Some(eps) => Some(mape(pred, target, eps)?),
        None => None,
    };
    let rmae_root = mae.sqrt();
    let rmae_relative = (mean_abs_target > 0.0).then(|| mae / mean_abs_target);
    let rmae = match variant {
        RmaeVariant::RootMae => rmae_root,
        RmaeVariant::RelativeMae => rmae_relative.ok_or_else(|| {
            Error::MetricDomain("relative MAE undefined when every target is zero".into())
        })?,
    };
    if !mse.is_finite() {
        return Err(Error::NumericDomain(format!("non-finite MSE {mse}")));
    }
    Ok(MetricsReport {
        mse,
        rmse: mse.sqrt(),
        mape_percent,
        rmae,
        rmae_variant: variant,
        rmae_root,
        rmae_relative,
        n: pred.len(),
        scale,
        mape_scale: mape_eps.map(|_| scale),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(p: &[f64], t: &[f64]) -> MetricsReport {
        compute_metrics(p, t, RmaeVariant::RootMae, Some(DEFAULT_MAPE_EPS), Scale::Raw).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let r = metrics(&[1.0, 2.0], &[1.0, 2.0]);
        assert_eq!((r.mse, r.rmse, r.mape_percent, r.rmae), (0.0, 0.0, Some(0.0), 0.0));
    }

    #[test]
    fn hand_worked_case() {
        let p = [2.0, 2.0, 2.0, 2.0];
        let t = [1.0, 2.0, 3.0, 4.0];
        let r = metrics(&p, &t);
        // squared errors 1,0,1,4 -> 6/4; abs errors 1,0,1,2 -> 1
        assert_eq!(r.mse, 1.5);
        assert!((r.rmse - 1.224744871391589).abs() < 1e-12);
        let mape = 100.0 * (1.0 + 0.0 + 1.0 / 3.0 + 0.5) / 4.0;
        assert!((r.mape_percent.unwrap() - mape).abs() < 1e-12);
        assert_eq!(r.rmae_root, 1.0);
        assert_eq!(r.rmae_relative, Some(0.4));
        let rel = compute_metrics(&p, &t, RmaeVariant::RelativeMae, None, Scale::Raw).unwrap();
        assert_eq!(rel.rmae, 0.4);
        assert_eq!(rel.mape_percent, None);
    }

    #[test]
    fn zero_target_blocks_mape() {
        let err = compute_metrics(&[1.0], &[0.0], RmaeVariant::RootMae, Some(DEFAULT_MAPE_EPS), Scale::Normalized)
            .unwrap_err();
        assert!(matches!(err, Error::MetricDomain(_)));
        assert!(err.to_string().contains("raw scale"));
    }

    #[test]
    fn single_element_is_pointwise() {
        let r = metrics(&[5.0], &[2.0]);
        assert_eq!(r.mse, 9.0);
        assert_eq!(r.rmse, 3.0);
        assert_eq!(r.mape_percent, Some(150.0));
        assert_eq!(r.rmae_root, 3f64.sqrt());
        assert_eq!(r.rmae_relative, Some(1.5));
    }

    #[test]
    fn shift_changes_only_relative_metrics() {
        let p = [1.5, 2.0, 4.0];
        let t = [1.0, 3.0, 3.5];
        let a = metrics(&p, &t);
        let c = 10.0;
        let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
        let ts: Vec<f64> = t.iter().map(|v| v + c).collect();
        let b = metrics(&ps, &ts);
        // Binary-exact shift: the differences are unchanged bit for bit.
        assert_eq!(a.mse, b.mse);
        assert_eq!(a.rmse, b.rmse);
        assert_eq!(a.rmae_root, b.rmae_root);
        assert_ne!(a.mape_percent, b.mape_percent);
        assert_ne!(a.rmae_relative, b.rmae_relative);
    }

    #[test]
    fn table_one_row_is_self_consistent() {
        // Published MSE 0.1361 with RMSE 0.3690.
        assert!((0.3690f64.powi(2) - 0.1361).abs() < 1e-4);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            compute_metrics(&[1.0], &[], RmaeVariant::RootMae, None, Scale::Raw),
            Err(Error::Usage(_))
        ));
    }
}
