use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::sweep::{SweepResult, SummaryRow};
use crate::error::{Error, Result};

pub const SWEEP_HEADER: &str = "param_value,seed,mse,rmse,mape_percent,rmae_root,rmae_relative,wall_s";
pub const SUMMARY_HEADER: &str = "param_value,repeats,mse_mean,mse_std,rmse_mean,rmse_std,mape_percent_mean,mape_percent_std,rmae_mean,rmae_std,rmae_root_mean,rmae_root_std,rmae_relative_mean,rmae_relative_std";

// `{}` on f64 is the shortest string that parses back to the same value.
fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in &result.rows {
        let m = &r.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.value,
            r.seed,
            num(m.mse),
            num(m.rmse),
            opt(m.mape_percent),
            num(m.rmae_root),
            opt(m.rmae_relative),
            num(r.wall_s)
        );
    }
    out
}

pub fn summary_csv(result: &SweepResult) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in &result.summary {
        let pair = |m: Option<super::sweep::MeanStd>| match m {
            Some(m) => format!("{},{}", num(m.mean), num(m.std)),
            None => ",".to_string(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.value,
            s.repeats,
            pair(Some(s.mse)),
            pair(Some(s.rmse)),
            pair(s.mape_percent),
            pair(Some(s.rmae)),
            pair(Some(s.rmae_root)),
            pair(s.rmae_relative)
        );
    }
    out
}

/// Single-series line chart of mean RMAE against the swept value.
pub fn render_curve_svg(x_label: &str, summary: &[SummaryRow]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 56.0;

    let xs: Vec<f64> = summary.iter().map(|s| s.value as f64).collect();
    let ys: Vec<f64> = summary.iter().map(|s| s.rmae.mean).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = span(&xs);
    let (y0, y1) = span(&ys);
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let points: Vec<String> = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        svg,
        r#"  <line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(
        svg,
        r#"  <line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD
    );
    for &x in &xs {
        let _ = writeln!(
            svg,
            r#"  <text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            px(x),
            H - PAD + 14.0,
            x
        );
    }
    for y in [y0, y1] {
        let _ = writeln!(
            svg,
            r#"  <text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{:.4}</text>"#,
            PAD - 4.0,
            py(y) + 3.0,
            y
        );
    }
    let _ = writeln!(
        svg,
        r#"  <text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"  <text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">mean RMAE</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(
        svg,
        r#"  <polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
        points.join(" ")
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `sweep.csv`, `summary.csv` and `curve.svg` into `dir`.
pub fn emit_report(result: &SweepResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("sweep.csv", sweep_csv(result)),
        ("summary.csv", summary_csv(result)),
        ("curve.svg", render_curve_svg(result.param.label(), &result.summary)),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
