//! `gearvib`: command-line front end for the two-stage vibration
//! fault-diagnosis pipeline.
//!
//! Error contract: every failure exits nonzero and prints a single
//! machine-parseable first line to stderr of the form
//! `error[<category>]: <message>`, where the category is one of `usage`,
//! `config`, `data`, or `numeric`. Exit codes: 0 success, 1 usage,
//! 2 configuration, 3 data/artifact, 4 numeric failure.

mod commands;
mod config;
mod render;
mod report;
mod shared;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gearvib::error::Error;

use commands::{
    classify::ClassifyArgs, dataset::BuildDatasetArgs, demo::DemoArgs, detect::DetectArgs,
    evaluate::EvaluateArgs, generate::GenerateArgs, render_cmd::RenderArgs,
    spectrogram::SpectrogramArgs, stage1::TrainStage1Args, stage2::TrainStage2Args,
    sweep::SweepArgs,
};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "gearvib",
    version,
    about = "Two-stage vibration fault diagnosis for a wind-turbine gearbox test rig",
    long_about = "Synthesizes test-rig vibration data, trains an anomaly detector \
                  (isolation forest over convolutional features) and a multi-label fault \
                  classifier, and evaluates both. All randomness derives from one master \
                  seed; runs with equal configuration and seed reproduce their CSV \
                  artifacts byte for byte."
)]
struct Cli {
    /// JSON run-configuration file (falls back to $GEARVIB_CONFIG, then
    /// built-in defaults).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Force single-threaded numeric paths. Every code path already is
    /// single-threaded and fully seeded, so this flag documents the
    /// guarantee rather than changing behavior.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize healthy and damaged recordings for every component.
    #[command(name = "generate")]
    Generate(GenerateArgs),
    /// Transform recordings into magnitude spectrograms.
    #[command(name = "spectrogram")]
    Spectrogram(SpectrogramArgs),
    /// Cut labeled segment datasets for either or both stages.
    #[command(name = "build-dataset")]
    BuildDataset(BuildDatasetArgs),
    /// Fit the anomaly-detection stage on healthy segments.
    #[command(name = "train-stage1")]
    TrainStage1(TrainStage1Args),
    /// Score segments against a trained stage-1 model.
    #[command(name = "detect")]
    Detect(DetectArgs),
    /// Train the multi-label fault classifier.
    #[command(name = "train-stage2")]
    TrainStage2(TrainStage2Args),
    /// Diagnose segments with a trained classifier.
    #[command(name = "classify")]
    Classify(ClassifyArgs),
    /// Compare diagnoses against ground-truth labels.
    #[command(name = "evaluate")]
    Evaluate(EvaluateArgs),
    /// Run the pipeline once per value of a swept dimension.
    #[command(name = "sweep")]
    Sweep(SweepArgs),
    /// Render a segment heatmap or score strips as SVG + CSV.
    #[command(name = "render")]
    Render(RenderArgs),
    /// Run the whole pipeline end to end and write a report.
    #[command(name = "demo")]
    Demo(DemoArgs),
}

/// Maps a library error to its CLI category and exit code.
fn classify_error(err: &Error) -> (&'static str, u8) {
    match err {
        Error::Config(_) => ("config", 2),
        Error::Numeric(_) => ("numeric", 4),
        _ => ("data", 3),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            let mut lines = rendered.lines();
            let first = lines.next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error[usage]: {first}");
            for line in lines {
                eprintln!("{line}");
            }
            return ExitCode::from(1);
        }
    };

    let config = match RunConfig::load(cli.config.as_deref()) {
        Ok(config) => config,
        Err(e) => {
            let (category, code) = classify_error(&e);
            eprintln!("error[{category}]: {e}");
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Generate(args) => commands::generate::run(&config, args),
        Command::Spectrogram(args) => commands::spectrogram::run(&config, args),
        Command::BuildDataset(args) => commands::dataset::run(&config, args),
        Command::TrainStage1(args) => commands::stage1::run(&config, args),
        Command::Detect(args) => commands::detect::run(&config, args),
        Command::TrainStage2(args) => commands::stage2::run(&config, args),
        Command::Classify(args) => commands::classify::run(&config, args),
        Command::Evaluate(args) => commands::evaluate::run(&config, args),
        Command::Sweep(args) => commands::sweep::run(&config, args),
        Command::Render(args) => commands::render_cmd::run(&config, args),
        Command::Demo(args) => commands::demo::run(&config, cli.deterministic, args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (category, code) = classify_error(&e);
            eprintln!("error[{category}]: {e}");
            ExitCode::from(code)
        }
    }
}
