use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::device::device_split_eval;
use crate::data::{prepare_dataset, FeatureLayout, PreparedData, Session};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, MetricsReport};
use crate::model::ModelConfig;
use crate::train::{train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Heads,
    Window,
    DeviceSplit,
}

impl SweepParam {
    pub fn default_values(self) -> Vec<usize> {
        match self {
            SweepParam::Heads => vec![1, 2, 4, 8, 12],
            SweepParam::Window => vec![4, 8, 16],
            SweepParam::DeviceSplit => vec![0, 1],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SweepParam::Heads => "heads",
            SweepParam::Window => "window",
            SweepParam::DeviceSplit => "device",
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParam::Heads => "heads",
            SweepParam::Window => "window",
            SweepParam::DeviceSplit => "device_split",
        })
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heads" => Ok(SweepParam::Heads),
            "window" => Ok(SweepParam::Window),
            "device_split" => Ok(SweepParam::DeviceSplit),
            other => Err(Error::config(
                "sweep.param",
                format!("`{other}` is not heads, window or device_split"),
            )),
        }
    }
}

/// What to sweep and everything held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<usize>,
    /// Base architecture; the swept field is overwritten per cell.
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Seeds per value; repeat `r` uses `model.seed + r`.
    pub repeats: usize,
    pub output_dir: PathBuf,
    pub eval: EvalOptions,
    pub stride: usize,
    /// When false `wall_s` is written as 0 so reruns are byte-identical.
    pub record_wall_clock: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep.values", "no values to sweep"));
        }
        if self.repeats == 0 {
            return Err(Error::config("sweep.repeats", "must be at least 1"));
        }
        match self.param {
            SweepParam::Heads => {
                for &h in &self.values {
                    if h == 0 || self.model.hidden_dim % h != 0 {
                        return Err(Error::config(
                            "sweep.values",
                            format!("{h} heads do not divide d_h = {}", self.model.hidden_dim),
                        ));
                    }
                }
            }
            SweepParam::Window => {
                if let Some(&t) = self.values.iter().find(|&&t| t < 2) {
                    return Err(Error::config("sweep.values", format!("window {t} must be >= 2")));
                }
            }
            SweepParam::DeviceSplit => {}
        }
        self.model.validate()?;
        self.train.validate()
    }

    fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|r| self.model.seed + r).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: usize,
    pub seed: u64,
    pub report: MetricsReport,
    pub wall_s: f64,
    pub split_hash: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub value: usize,
    pub repeats: usize,
    pub mse: MeanStd,
    pub rmse: MeanStd,
    pub mape_percent: Option<MeanStd>,
    /// Selected RMAE reading.
    pub rmae: MeanStd,
    pub rmae_root: MeanStd,
    pub rmae_relative: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

impl SweepResult {
    fn assemble(param: SweepParam, values: &[usize], rows: Vec<SweepRow>) -> Self {
        let summary = values
            .iter()
            .map(|&v| {
                let cell: Vec<&MetricsReport> = rows.iter().filter(|r| r.value == v).map(|r| &r.report).collect();
                let col = |f: &dyn Fn(&MetricsReport) -> f64| MeanStd::of(&cell.iter().map(|r| f(r)).collect::<Vec<_>>());
                let opt_col = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
                    cell.iter().map(|r| f(r)).collect::<Option<Vec<f64>>>().map(|xs| MeanStd::of(&xs))
                };
                SummaryRow {
                    value: v,
                    repeats: cell.len(),
                    mse: col(&|r| r.mse),
                    rmse: col(&|r| r.rmse),
                    mape_percent: opt_col(&|r| r.mape_percent),
                    rmae: col(&|r| r.rmae),
                    rmae_root: col(&|r| r.rmae_root),
                    rmae_relative: opt_col(&|r| r.rmae_relative),
                }
            })
            .collect();
        SweepResult { param, rows, summary }
    }

    pub fn summary_for(&self, value: usize) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.value == value)
    }
}

fn run_cells<F>(spec: &SweepSpec, cell: F) -> Result<Vec<SweepRow>>
where
    F: Fn(usize, u64) -> Result<(MetricsReport, u64)> + Sync,
{
    let cells: Vec<(usize, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.seeds().into_iter().map(move |s| (v, s)))
        .collect();
    // Collect keeps (value index, seed) order whatever the completion order.
    cells
        .par_iter()
        .map(|&(value, seed)| {
            let started = Instant::now();
            let (report, split_hash) = cell(value, seed)?;
            Ok(SweepRow {
                value,
                seed,
                report,
                wall_s: if spec.record_wall_clock {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
                split_hash,
            })
        })
        .collect()
}

fn seeded(spec: &SweepSpec, mcfg: ModelConfig, seed: u64) -> (ModelConfig, TrainConfig) {
    (
        ModelConfig { seed, ..mcfg },
        TrainConfig {
            shuffle_seed: seed,
            ..spec.train
        },
    )
}

fn check_data(spec: &SweepSpec, data: &PreparedData) -> Result<()> {
    if data.window != spec.model.window || data.layout.dim() != spec.model.input_dim {
        return Err(Error::config(
            "sweep",
            format!(
                "prepared data ({}x{}) does not match model ({}x{})",
                data.window,
                data.layout.dim(),
                spec.model.window,
                spec.model.input_dim
            ),
        ));
    }
    Ok(())
}

/// Retrains per (head count, seed) on identical data.
pub fn sweep_heads(spec: &SweepSpec, data: &PreparedData) -> Result<SweepResult> {
    if spec.param != SweepParam::Heads {
        return Err(Error::Usage("sweep_heads called with a non-heads spec".into()));
    }
    spec.validate()?;
    check_data(spec, data)?;
    let rows = run_cells(spec, |heads, seed| {
        let (mcfg, tcfg) = seeded(spec, ModelConfig { heads, ..spec.model }, seed);
        let (model, _) = train(&data.train, &data.val, &mcfg, &tcfg)?;
        Ok((evaluate(&model, &data.stats, &data.test, &spec.eval)?, data.split_hash))
    })?;
    Ok(SweepResult::assemble(spec.param, &spec.values, rows))
}

/// Rebuilds windows (and refits normalization) per window length.
pub fn sweep_window(spec: &SweepSpec, sessions: &[Session], layout: FeatureLayout, split_seed: u64) -> Result<SweepResult> {
    if spec.param != SweepParam::Window {
        return Err(Error::Usage("sweep_window called with a non-window spec".into()));
    }
    spec.validate()?;
    let prepared: Vec<PreparedData> = spec
        .values
        .iter()
        .map(|&t| prepare_dataset(sessions, layout, t, spec.stride, split_seed))
        .collect::<Result<_>>()?;
    let rows = run_cells(spec, |window, seed| {
        let data = &prepared[spec.values.iter().position(|&v| v == window).expect("value listed")];
        let base = ModelConfig {
            window,
            input_dim: layout.dim(),
            ..spec.model
        };
        let (mcfg, tcfg) = seeded(spec, base, seed);
        let (model, _) = train(&data.train, &data.val, &mcfg, &tcfg)?;
        Ok((evaluate(&model, &data.stats, &data.test, &spec.eval)?, data.split_hash))
    })?;
    Ok(SweepResult::assemble(spec.param, &spec.values, rows))
}

/// One model per seed, reported per device id listed in `spec.values`.
pub fn sweep_device_split(spec: &SweepSpec, data: &PreparedData) -> Result<SweepResult> {
    if spec.param != SweepParam::DeviceSplit {
        return Err(Error::Usage("sweep_device_split called with a non-device spec".into()));
    }
    spec.validate()?;
    check_data(spec, data)?;
    let seeds = spec.seeds();
    let per_seed: Vec<(u64, Vec<super::DeviceRow>, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let started = Instant::now();
            let (mcfg, tcfg) = seeded(spec, spec.model, seed);
            let (model, _) = train(&data.train, &data.val, &mcfg, &tcfg)?;
            let rows = device_split_eval(&model, &data.stats, &data.test, &spec.eval)?;
            let wall = if spec.record_wall_clock {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            };
            Ok((seed, rows, wall))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &device in &spec.values {
        for (seed, table, wall) in &per_seed {
            let hit = table
                .iter()
                .find(|r| r.device == Some(device as u32))
                .ok_or_else(|| Error::Usage(format!("no test windows for device {device}")))?;
            rows.push(SweepRow {
                value: device,
                seed: *seed,
                report: hit.report,
                wall_s: *wall,
                split_hash: data.split_hash,
            });
        }
    }
    Ok(SweepResult::assemble(spec.param, &spec.values, rows))
}

/// Prepares data as the parameter requires and dispatches.
pub fn run_sweep(spec: &SweepSpec, sessions: &[Session], layout: FeatureLayout, split_seed: u64) -> Result<SweepResult> {
    spec.validate()?;
    match spec.param {
        SweepParam::Window => sweep_window(spec, sessions, layout, split_seed),
        SweepParam::Heads | SweepParam::DeviceSplit => {
            let data = prepare_dataset(sessions, layout, spec.model.window, spec.stride, split_seed)?;
            let spec = SweepSpec {
                model: ModelConfig {
                    input_dim: layout.dim(),
                    ..spec.model
                },
                ..spec.clone()
            };
            if spec.param == SweepParam::Heads {
                sweep_heads(&spec, &data)
            } else {
                sweep_device_split(&spec, &data)
            }
        }
    }
}
