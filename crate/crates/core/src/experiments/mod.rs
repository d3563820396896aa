//! Sensitivity sweeps over attention heads and window length, and
//! device-stratified evaluation.

mod device;
mod emit;
mod sweep;

pub use device::{device_split_eval, DeviceRow, LOW_CONFIDENCE_N};
pub use emit::{emit_report, render_curve_svg, summary_csv, sweep_csv, SUMMARY_HEADER, SWEEP_HEADER};
pub use sweep::{run_sweep, sweep_device_split, sweep_heads, sweep_window, MeanStd, SummaryRow, SweepParam, SweepResult, SweepRow, SweepSpec};
