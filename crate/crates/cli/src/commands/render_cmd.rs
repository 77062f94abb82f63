//! `gearvib render`: turn a segment file or a triple of score files into a
//! standalone SVG figure plus a CSV of the plotted values.

use std::path::{Path, PathBuf};

use clap::Args;
use gearvib::archive::load_segments;
use gearvib::error::{Error, Result};

use crate::config::RunConfig;
use crate::render::{score_strips, segment_heatmap, Figure, ScorePanel};
use crate::shared::{read_signed_column, write_text};

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Segment file to render as a time × frequency heatmap.
    #[arg(long, value_name = "FILE", conflicts_with = "scores")]
    pub segments: Option<PathBuf>,
    /// Index of the segment to render.
    #[arg(long, value_name = "N", default_value_t = 0, requires = "segments")]
    pub index: usize,
    /// Three score CSVs (train-healthy, test-healthy, test-damaged) to
    /// render as signed-score strips.
    #[arg(long, value_name = "FILE", num_args = 3)]
    pub scores: Option<Vec<PathBuf>>,
    /// Output SVG path (default: <report_dir>/figure_segment.svg or
    /// <report_dir>/figure_scores.svg). The CSV lands next to it.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn run(config: &RunConfig, args: RenderArgs) -> Result<()> {
    match (&args.segments, &args.scores) {
        (Some(segments), None) => {
            let out = args
                .out
                .unwrap_or_else(|| config.report_dir.join("figure_segment.svg"));
            render_segment(segments, args.index, &out)?;
            println!("figure: {}", out.display());
            println!("values: {}", data_csv_path(&out).display());
            Ok(())
        }
        (None, Some(scores)) => {
            let out = args
                .out
                .unwrap_or_else(|| config.report_dir.join("figure_scores.svg"));
            let paths: [&Path; 3] = [&scores[0], &scores[1], &scores[2]];
            render_scores(paths, &out)?;
            println!("figure: {}", out.display());
            println!("values: {}", data_csv_path(&out).display());
            Ok(())
        }
        _ => Err(Error::Config(
            "render needs exactly one input: --segments <FILE> or --scores <TRAIN> <HEALTHY> <DAMAGED>"
                .to_string(),
        )),
    }
}

/// CSV path next to an SVG: same stem with a `_data.csv` suffix.
pub fn data_csv_path(svg: &Path) -> PathBuf {
    let stem = svg.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    svg.with_file_name(format!("{stem}_data.csv"))
}

fn write_figure(figure: &Figure, out: &Path) -> Result<()> {
    write_text(out, &figure.svg)?;
    write_text(&data_csv_path(out), &figure.csv)
}

/// Renders one segment of a segment file as a heatmap figure.
pub fn render_segment(segments_path: &Path, index: usize, out: &Path) -> Result<()> {
    let segments = load_segments(segments_path)?;
    let segment = segments.get(index).ok_or_else(|| {
        Error::Data(format!(
            "segment index {index} out of range: {} holds {} segments",
            segments_path.display(),
            segments.len()
        ))
    })?;
    let labels = match segment.labels {
        Some(l) => format!(" labels ({}, {}, {})", l[0], l[1], l[2]),
        None => String::new(),
    };
    let title = format!("segment {index} of {}{labels}", segments_path.display());
    write_figure(&segment_heatmap(segment, &title), out)
}

/// Renders the three score files as side-by-side signed-score strips.
pub fn render_scores(paths: [&Path; 3], out: &Path) -> Result<()> {
    let titles = ["train healthy", "test healthy", "test damaged"];
    let mut panels = Vec::new();
    for (path, title) in paths.iter().zip(titles) {
        let signed = read_signed_column(path)?;
        if signed.is_empty() {
            return Err(Error::Data(format!(
                "score file {} has no data rows; refusing to draw a blank figure",
                path.display()
            )));
        }
        panels.push(ScorePanel { title: title.to_string(), signed });
    }
    write_figure(&score_strips(&panels)?, out)
}
