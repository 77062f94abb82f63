//! `gearvib evaluate`: compare a diagnoses CSV against ground-truth labels
//! and write the metrics as CSV plus a structured text report.

use std::path::{Path, PathBuf};

use clap::Args;
use gearvib::archive::load_segments;
use gearvib::diagnose::{evaluate_verdicts, Metrics};
use gearvib::error::Result;

use crate::config::RunConfig;
use crate::report;
use crate::shared::{ground_truth_labels, read_verdict_columns, write_text};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Diagnoses CSV with v_ring_gear / v_lss_bearing / v_hss_bearing
    /// columns.
    #[arg(long, value_name = "FILE")]
    pub predictions: PathBuf,
    /// Labeled segment file providing the ground truth.
    #[arg(long, value_name = "FILE")]
    pub truth: PathBuf,
    /// Metrics CSV (default: <report_dir>/metrics.csv).
    #[arg(long, value_name = "FILE")]
    pub out_csv: Option<PathBuf>,
    /// Metrics text report (default: <report_dir>/metrics.txt).
    #[arg(long, value_name = "FILE")]
    pub out_text: Option<PathBuf>,
}

pub fn run(config: &RunConfig, args: EvaluateArgs) -> Result<()> {
    let out_csv = args.out_csv.unwrap_or_else(|| config.report_dir.join("metrics.csv"));
    let out_text = args.out_text.unwrap_or_else(|| config.report_dir.join("metrics.txt"));
    let metrics = execute(&args.predictions, &args.truth, &out_csv, &out_text)?;
    print!("{metrics}");
    println!("metrics CSV: {}", out_csv.display());
    println!("metrics report: {}", out_text.display());
    Ok(())
}

/// Evaluates predictions against truth and persists both artifact forms.
/// The metrics CSV is exactly [`Metrics::to_csv`], so same-seed runs
/// produce byte-identical files.
pub fn execute(
    predictions: &Path,
    truth: &Path,
    out_csv: &Path,
    out_text: &Path,
) -> Result<Metrics> {
    let predicted = read_verdict_columns(predictions)?;
    let truth_segments = load_segments(truth)?;
    let truth_labels = ground_truth_labels(&truth_segments, truth)?;
    let metrics = evaluate_verdicts(&predicted, &truth_labels)?;
    write_text(out_csv, &metrics.to_csv())?;
    write_text(out_text, &report::metrics_report(&metrics, predictions, truth))?;
    Ok(metrics)
}
