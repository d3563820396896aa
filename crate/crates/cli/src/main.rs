use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use dwell_core::config::{KvConfig, RunConfig};
use dwell_core::data::{
    apply_normalize, ingest_avazu_csv, prepare_dataset, synth_generate, window_from_events, FeatureLayout,
    IngestOptions, InteractionEvent, SequenceWindow, Session, WindowCache,
};
use dwell_core::eval::{evaluate, format_table, mean_predictor_report, Scale, TableRow};
use dwell_core::experiments::{emit_report, run_sweep, SweepSpec};
use dwell_core::model::{load_checkpoint, save_checkpoint};
use dwell_core::train::{format_epoch_line, train_with_observer};
use dwell_core::{Error, Result, Tensor};

const WINDOWS_FILE: &str = "windows.json";
const CHECKPOINT_FILE: &str = "checkpoint.json";
const HISTORY_FILE: &str = "history.tsv";

/// Dwell-time regression with a small Transformer encoder.
#[derive(Parser, Debug)]
#[command(name = "dwell", version, arg_required_else_help = true)]
struct Cli {
    /// Key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key (repeatable), e.g. --set model.d_h=64.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and write its window cache.
    Generate(GenerateArgs),
    /// Convert an Avazu-style CSV into a window cache.
    Ingest(IngestArgs),
    /// Train on a window cache; writes checkpoint and history.
    Train(TrainArgs),
    /// Score a checkpoint on the test split of a window cache.
    Eval(EvalArgs),
    /// Predict dwell for one window read as JSON from stdin.
    Predict(PredictArgs),
    /// Run a sensitivity sweep configured by the sweep.* keys.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Data seed (data.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sessions (data.sessions).
    #[arg(long)]
    sessions: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Input CSV (data.csv).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Drop malformed rows instead of failing (data.skip_bad_rows).
    #[arg(long)]
    skip_bad_rows: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory holding windows.json.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint.json and history.tsv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory holding checkpoint.json.
    #[arg(long)]
    model: PathBuf,
    /// Directory holding windows.json.
    #[arg(long)]
    data: PathBuf,
    /// Print the JSON report instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Directory holding checkpoint.json.
    #[arg(long)]
    model: PathBuf,
    /// Scale of the printed prediction: raw (ms) or normalized.
    #[arg(long, default_value = "raw")]
    scale: String,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Output directory (sweep.out).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut kv = match &cli.config {
        Some(path) => KvConfig::load(path)?,
        None => KvConfig::new(),
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("cannot size thread pool: {e}")))?;
    }

    // Flags are applied after --set so that a dedicated flag wins.
    let apply = |kv: &mut KvConfig, flags: &[(&str, Option<String>)]| -> Result<()> {
        for pair in &cli.overrides {
            kv.set_pair(pair)?;
        }
        for (key, value) in flags {
            if let Some(v) = value {
                kv.set(*key, v.clone());
            }
        }
        Ok(())
    };

    match &cli.command {
        Command::Generate(a) => {
            apply(
                &mut kv,
                &[
                    ("data.seed", a.seed.map(|s| s.to_string())),
                    ("data.sessions", a.sessions.map(|s| s.to_string())),
                ],
            )?;
            generate(&RunConfig::from_kv(&kv)?, &a.out)
        }
        Command::Ingest(a) => {
            // Avazu has eight-ish site categories and device types 0..=5.
            for (key, default) in [("data.categories", "8"), ("data.devices", "6")] {
                if kv.raw(key).is_none() && !cli.overrides.iter().any(|o| o.starts_with(key)) {
                    kv.set(key, default);
                }
            }
            apply(
                &mut kv,
                &[
                    ("data.csv", a.csv.as_ref().map(|p| p.display().to_string())),
                    ("data.skip_bad_rows", a.skip_bad_rows.then(|| "true".to_string())),
                ],
            )?;
            ingest(&RunConfig::from_kv(&kv)?, &a.out)
        }
        Command::Train(a) => {
            apply(&mut kv, &[])?;
            train_cmd(&RunConfig::from_kv(&kv)?, &a.data, &a.out)
        }
        Command::Eval(a) => {
            apply(&mut kv, &[])?;
            eval_cmd(&RunConfig::from_kv(&kv)?, &a.model, &a.data, a.json)
        }
        Command::Predict(a) => {
            apply(&mut kv, &[])?;
            RunConfig::from_kv(&kv)?;
            let scale: Scale = a.scale.parse().map_err(|_| Error::Usage(format!("--scale `{}` is not raw or normalized", a.scale)))?;
            predict_cmd(&a.model, scale)
        }
        Command::Sweep(a) => {
            if kv.raw("sweep.param").is_none() && !cli.overrides.iter().any(|o| o.starts_with("sweep.param")) {
                kv.set("sweep.param", "heads");
            }
            apply(&mut kv, &[("sweep.out", a.out.as_ref().map(|p| p.display().to_string()))])?;
            sweep_cmd(&RunConfig::from_kv(&kv)?)
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn load_sessions(cfg: &RunConfig) -> Result<(Vec<Session>, FeatureLayout)> {
    let layout = cfg.layout();
    match &cfg.csv {
        Some(path) => {
            let opts = IngestOptions {
                session_key: cfg.session_key,
                gap_cap_s: cfg.gap_cap_s,
                skip_bad_rows: cfg.skip_bad_rows,
                ..IngestOptions::new(layout)
            };
            let out = ingest_avazu_csv(path, &opts)?;
            eprintln!(
                "read {} rows, skipped {}, {} sessions, {} labeled events",
                out.rows_read,
                out.rows_skipped,
                out.sessions.len(),
                out.labeled_events()
            );
            Ok((out.sessions, layout))
        }
        None => Ok((synth_generate(&cfg.synth)?, layout)),
    }
}

fn write_cache(cfg: &RunConfig, sessions: &[Session], layout: FeatureLayout, out: &Path) -> Result<()> {
    let data = prepare_dataset(sessions, layout, cfg.window, cfg.stride, cfg.synth.seed)?;
    create_dir(out)?;
    let cache = WindowCache::from(data);
    cache.save(out.join(WINDOWS_FILE))?;
    eprintln!(
        "wrote {} ({} train / {} val / {} test windows)",
        out.join(WINDOWS_FILE).display(),
        cache.train.len(),
        cache.val.len(),
        cache.test.len()
    );
    Ok(())
}

fn generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sessions = synth_generate(&cfg.synth)?;
    write_cache(cfg, &sessions, cfg.layout(), out)
}

fn ingest(cfg: &RunConfig, out: &Path) -> Result<()> {
    if cfg.csv.is_none() {
        return Err(Error::Usage("ingest needs --csv or data.csv".into()));
    }
    let (sessions, layout) = load_sessions(cfg)?;
    write_cache(cfg, &sessions, layout, out)
}

fn train_cmd(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let cache = WindowCache::load(data.join(WINDOWS_FILE))?;
    let mcfg = cfg.model.to_config(cache.layout.dim(), cache.window);
    mcfg.validate()?;
    create_dir(out)?;

    let stdout = std::io::stdout();
    let mut log = stdout.lock();
    let _ = writeln!(log, "epoch\ttrain_loss\tval_loss");
    let (model, history) = train_with_observer(&cache.train, &cache.val, &mcfg, &cfg.train, |e| {
        let _ = writeln!(log, "{}", format_epoch_line(e));
    })?;
    save_checkpoint(&model, cache.layout, &cache.stats, out.join(CHECKPOINT_FILE))?;
    write_file(&out.join(HISTORY_FILE), &history.to_tsv())?;
    eprintln!("best epoch {}, wrote {}", history.best_epoch, out.join(CHECKPOINT_FILE).display());
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, model_dir: &Path, data: &Path, json: bool) -> Result<()> {
    let (model, layout, stats) = load_checkpoint(model_dir.join(CHECKPOINT_FILE))?;
    let cache = WindowCache::load(data.join(WINDOWS_FILE))?;
    if layout != cache.layout || model.config().window != cache.window {
        return Err(Error::Usage(format!(
            "checkpoint expects {} with T={}, data has {} with T={}",
            layout.describe(),
            model.config().window,
            cache.layout.describe(),
            cache.window
        )));
    }
    if stats != cache.stats {
        eprintln!("warning: checkpoint normalization differs from the data cache; using the checkpoint's");
    }
    let report = evaluate(&model, &stats, &cache.test, &cfg.eval)?;
    if json {
        println!("{}", report.to_json());
    } else {
        let baseline = mean_predictor_report(&cache.train, &cache.test, &stats, &cfg.eval)?;
        print!(
            "{}",
            format_table(&[
                TableRow {
                    name: "transformer",
                    report: &report,
                },
                TableRow {
                    name: "mean",
                    report: &baseline,
                },
            ])
        );
    }
    Ok(())
}

/// Accepts `{"events": [...]}` or `{"features": [[...], ...]}` (raw,
/// unnormalized rows, oldest first).
fn parse_window(input: &str, layout: &FeatureLayout, window: usize) -> Result<SequenceWindow> {
    let value: Value = serde_json::from_str(input).map_err(|e| Error::data("stdin", e.to_string()))?;
    if let Some(events) = value.get("events") {
        let events: Vec<InteractionEvent> =
            serde_json::from_value(events.clone()).map_err(|e| Error::data("stdin events", e.to_string()))?;
        return window_from_events(&events, layout, window);
    }
    if let Some(rows) = value.get("features") {
        let rows: Vec<Vec<f64>> =
            serde_json::from_value(rows.clone()).map_err(|e| Error::data("stdin features", e.to_string()))?;
        if rows.is_empty() || rows.len() > window {
            return Err(Error::data("stdin features", format!("{} rows, expected 1..={window}", rows.len())));
        }
        let given = Tensor::from_rows(&rows)?;
        if given.cols() != layout.dim() {
            return Err(Error::data(
                "stdin features",
                format!("{} columns, expected {} ({})", given.cols(), layout.dim(), layout.describe()),
            ));
        }
        let mut features = Tensor::zeros(window, layout.dim());
        for r in 0..rows.len() {
            features.row_mut(r).copy_from_slice(given.row(r));
        }
        return Ok(SequenceWindow {
            features,
            target: f64::NAN,
            valid_len: rows.len(),
            device_type: 0,
        });
    }
    Err(Error::data("stdin", "expected an object with `events` or `features`"))
}

fn predict_cmd(model_dir: &Path, scale: Scale) -> Result<()> {
    let (model, layout, stats) = load_checkpoint(model_dir.join(CHECKPOINT_FILE))?;
    let mut input = String::new();
    std::io::stdin()
        .read_to_string(&mut input)
        .map_err(|e| Error::io("<stdin>", e))?;
    let raw = parse_window(&input, &layout, model.config().window)?;
    let z = model.predict(&apply_normalize(&raw, &stats)?)?;
    match scale {
        Scale::Normalized => println!("{z}"),
        Scale::Raw => println!("{}", stats.denormalize_target(z)),
    }
    Ok(())
}

fn sweep_cmd(cfg: &RunConfig) -> Result<()> {
    let settings = cfg.sweep.clone().expect("sweep.param is set before parsing");
    let (sessions, layout) = load_sessions(cfg)?;
    let spec = SweepSpec {
        param: settings.param,
        values: settings.values,
        model: cfg.model.to_config(layout.dim(), cfg.window),
        train: cfg.train,
        repeats: settings.repeats,
        output_dir: settings.out,
        eval: cfg.eval,
        stride: cfg.stride,
        record_wall_clock: settings.wall_clock,
    };
    spec.validate()?;
    let result = run_sweep(&spec, &sessions, layout, cfg.synth.seed)?;
    emit_report(&result, &spec.output_dir)?;
    println!("param_value\trmae_mean\trmae_std\tmse_mean");
    for s in &result.summary {
        println!("{}\t{}\t{}\t{}", s.value, s.rmae.mean, s.rmae.std, s.mse.mean);
    }
    eprintln!("wrote sweep.csv, summary.csv, curve.svg to {}", spec.output_dir.display());
    Ok(())
}
