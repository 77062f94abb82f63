//! `gearvib spectrogram`: transform every recording listed in a
//! recordings manifest into a magnitude spectrogram container.

use std::path::{Path, PathBuf};

use clap::Args;
use gearvib::archive::save_spectrogram;
use gearvib::error::Result;
use gearvib::siggen::load_timeseries;
use gearvib::spectro::{stft, StftConfig};

use crate::config::RunConfig;
use crate::shared::{
    ensure_dir, read_recordings_manifest, source_stem, write_json, SpectrogramEntry,
    SpectrogramsManifest, MANIFEST_FILE,
};

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    /// Directory holding the recordings and their manifest
    /// (default: <data_dir>/recordings).
    #[arg(long, value_name = "DIR")]
    pub recordings: Option<PathBuf>,
    /// Output directory (default: <data_dir>/spectrograms).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

pub fn run(config: &RunConfig, args: SpectrogramArgs) -> Result<()> {
    let recordings = args.recordings.unwrap_or_else(|| config.recordings_dir());
    let out = args.out.unwrap_or_else(|| config.spectrograms_dir());
    let manifest = execute(&recordings, &out, &config.stft)?;
    for entry in &manifest.spectrograms {
        println!("wrote {}", out.join(&entry.file).display());
    }
    println!(
        "spectrogram manifest: {} ({} files, {} Hz bin spacing)",
        out.join(MANIFEST_FILE).display(),
        manifest.spectrograms.len(),
        manifest.stft.bin_spacing_hz()
    );
    Ok(())
}

/// Transforms every recording in the manifest at `recordings_dir` and
/// writes one container per channel/health pair plus a manifest that
/// records the preprocessing and the label-column channel order.
pub fn execute(
    recordings_dir: &Path,
    out: &Path,
    stft_config: &StftConfig,
) -> Result<SpectrogramsManifest> {
    let recordings = read_recordings_manifest(recordings_dir)?;
    ensure_dir(out)?;
    let mut entries = Vec::new();
    for entry in &recordings.recordings {
        let mut ts = load_timeseries(
            &recordings_dir.join(&entry.file),
            recordings.format,
            recordings.rig.sample_rate_hz,
        )?;
        ts.channel = entry.component.clone();
        ts.health = Some(entry.health);
        ts.seed = Some(entry.seed);
        let spec = stft(&ts, stft_config)?;
        let file = format!("{}.spec", source_stem(&entry.component, entry.health));
        save_spectrogram(&out.join(&file), &spec)?;
        entries.push(SpectrogramEntry {
            file,
            component: entry.component.clone(),
            health: entry.health,
        });
    }
    let manifest = SpectrogramsManifest {
        sample_rate_hz: recordings.rig.sample_rate_hz,
        stft: *stft_config,
        components: recordings.rig.components.iter().map(|c| c.name.clone()).collect(),
        spectrograms: entries,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
