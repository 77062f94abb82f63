//! `gearvib generate`: synthesize one healthy and one damaged recording
//! per monitored component and write them with a manifest that preserves
//! the sample rate and channel order.

use std::path::{Path, PathBuf};

use clap::Args;
use gearvib::error::Result;
use gearvib::seeding::derive_seed;
use gearvib::siggen::{generate_signal, save_timeseries, Health, RigProfile, SignalFormat};

use crate::config::RunConfig;
use crate::shared::{
    ensure_dir, source_stem, write_json, RecordingEntry, RecordingsManifest, MANIFEST_FILE,
};

use super::FormatArg;

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory for the recordings (default: <data_dir>/recordings).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Recording length in seconds (default from the config).
    #[arg(long, value_name = "SECONDS")]
    pub duration_s: Option<f64>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rig description file (default: the configured or built-in rig).
    #[arg(long, value_name = "FILE")]
    pub rig: Option<PathBuf>,
    /// Signal encoding.
    #[arg(long, value_enum, default_value = "raw-f32-le")]
    pub format: FormatArg,
}

pub fn run(config: &RunConfig, args: GenerateArgs) -> Result<()> {
    let rig = match &args.rig {
        Some(path) => RigProfile::load(path)?,
        None => config.effective_rig(),
    };
    let out = args.out.unwrap_or_else(|| config.recordings_dir());
    let duration_s = args.duration_s.unwrap_or(config.dataset.recording_duration_s);
    let seed = args.seed.unwrap_or(config.seed);
    let manifest = execute(&rig, &out, duration_s, seed, args.format.into())?;
    for entry in &manifest.recordings {
        println!(
            "wrote {} ({} {} recording, {duration_s} s at {} Hz)",
            out.join(&entry.file).display(),
            entry.component,
            entry.health,
            rig.sample_rate_hz
        );
    }
    println!(
        "recordings manifest: {} ({} files)",
        out.join(MANIFEST_FILE).display(),
        manifest.recordings.len()
    );
    Ok(())
}

/// Synthesizes and persists all recordings; returns the written manifest.
/// Each recording's seed derives from the master seed and its
/// `<component>/<health>` role, so one master seed pins the full set.
pub fn execute(
    rig: &RigProfile,
    out: &Path,
    duration_s: f64,
    seed: u64,
    format: SignalFormat,
) -> Result<RecordingsManifest> {
    rig.validate()?;
    ensure_dir(out)?;
    let extension = match format {
        SignalFormat::Csv => "csv",
        SignalFormat::RawF32Le => "f32",
    };
    let mut entries = Vec::new();
    for component in &rig.components {
        for health in [Health::Healthy, Health::Damaged] {
            let role = format!("{}/{health}", component.name);
            let sub_seed = derive_seed(seed, &role);
            let ts = generate_signal(component, rig, health, duration_s, sub_seed)?;
            let file = format!("{}.{extension}", source_stem(&component.name, health));
            save_timeseries(&ts, &out.join(&file), format)?;
            entries.push(RecordingEntry {
                file,
                component: component.name.clone(),
                health,
                seed: sub_seed,
            });
        }
    }
    let manifest = RecordingsManifest {
        format,
        duration_s,
        seed,
        rig: rig.clone(),
        recordings: entries,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
