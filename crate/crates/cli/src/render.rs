//! Static vector figures: spectrogram-segment heatmaps and three-panel
//! score strips. Each figure is plain SVG built from rectangles, circles,
//! lines, and text, and every plotted value is also emitted as CSV so the
//! image is recomputable without an SVG parser.

use std::fmt::Write as _;

use gearvib::error::{Error, Result};
use gearvib::spectro::SpectrogramSegment;

/// A rendered figure: the SVG document and the CSV of its plotted values.
#[derive(Debug)]
pub struct Figure {
    pub svg: String,
    pub csv: String,
}

const FONT: &str = "font-family=\"sans-serif\" font-size=\"12\"";
const AXIS_COLOR: &str = "#333333";

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(out, "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>");
}

fn text(out: &mut String, x: f64, y: f64, anchor: &str, content: &str) {
    let _ = writeln!(
        out,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\" {FONT} fill=\"{AXIS_COLOR}\">{}</text>",
        escape(content)
    );
}

fn vertical_text(out: &mut String, x: f64, y: f64, content: &str) {
    let _ = writeln!(
        out,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"middle\" {FONT} fill=\"{AXIS_COLOR}\" \
         transform=\"rotate(-90 {x:.1} {y:.1})\">{}</text>",
        escape(content)
    );
}

fn line(out: &mut String, x1: f64, y1: f64, x2: f64, y2: f64, dashed: bool) {
    let dash = if dashed { " stroke-dasharray=\"4 3\"" } else { "" };
    let _ = writeln!(
        out,
        "<line x1=\"{x1:.1}\" y1=\"{y1:.1}\" x2=\"{x2:.1}\" y2=\"{y2:.1}\" \
         stroke=\"{AXIS_COLOR}\" stroke-width=\"1\"{dash}/>"
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Evenly spaced tick positions over `[lo, hi]`, endpoints included.
fn ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Formats an axis label with enough precision to distinguish the ticks.
fn tick_label(v: f64, span: f64) -> String {
    if span >= 100.0 {
        format!("{v:.0}")
    } else if span >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders one segment as a per-channel stack of time × frequency
/// heatmaps. The x axis is labeled in seconds, the y axis in Hz up to the
/// highest retained bin; darker cells carry larger magnitudes (each panel
/// normalized over its own range).
pub fn segment_heatmap(segment: &SpectrogramSegment, title: &str) -> Figure {
    let plot_w = 560.0;
    let plot_h = 200.0;
    let left = 80.0;
    let panel_gap = 64.0;
    let top0 = 48.0;
    let width = left + plot_w + 40.0;
    let height = top0 + segment.channels as f64 * (plot_h + panel_gap);

    let bin_spacing = segment.stft.bin_spacing_hz();
    let freq_hi = (segment.bins.saturating_sub(1)) as f64 * bin_spacing;
    let duration = segment.duration_s;

    let mut svg = String::new();
    svg_open(&mut svg, width, height);
    text(&mut svg, width / 2.0, 20.0, "middle", title);

    let mut csv = String::from("channel,frame,bin,time_s,freq_hz,value\n");

    for c in 0..segment.channels {
        let top = top0 + c as f64 * (plot_h + panel_gap);
        let channel_name = segment
            .origins
            .get(c)
            .map(|o| o.channel.clone())
            .unwrap_or_else(|| format!("channel {c}"));

        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for f in 0..segment.frames {
            for b in 0..segment.bins {
                let v = segment.at(f, b, c);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let span = if hi > lo { (hi - lo) as f64 } else { 1.0 };

        let cell_w = plot_w / segment.frames as f64;
        let cell_h = plot_h / segment.bins as f64;
        for f in 0..segment.frames {
            for b in 0..segment.bins {
                let v = segment.at(f, b, c);
                let norm = ((v - lo) as f64 / span).clamp(0.0, 1.0);
                let shade = (255.0 * (1.0 - norm)).round() as u8;
                let x = left + f as f64 * cell_w;
                let y = top + plot_h - (b + 1) as f64 * cell_h;
                let _ = writeln!(
                    svg,
                    "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                     fill=\"#{shade:02x}{shade:02x}{shade:02x}\"/>",
                    cell_w + 0.05,
                    cell_h + 0.05
                );
                let _ = writeln!(
                    csv,
                    "{channel_name},{f},{b},{},{},{}",
                    f as f64 * segment.stft.hop_s,
                    b as f64 * bin_spacing,
                    v
                );
            }
        }

        text(&mut svg, left, top - 10.0, "start", &channel_name);
        line(&mut svg, left, top, left, top + plot_h, false);
        line(&mut svg, left, top + plot_h, left + plot_w, top + plot_h, false);
        for t in ticks(0.0, duration, 5) {
            let x = left + plot_w * if duration > 0.0 { t / duration } else { 0.0 };
            line(&mut svg, x, top + plot_h, x, top + plot_h + 4.0, false);
            text(&mut svg, x, top + plot_h + 18.0, "middle", &tick_label(t, duration));
        }
        for fq in ticks(0.0, freq_hi, 6) {
            let y = top + plot_h - plot_h * if freq_hi > 0.0 { fq / freq_hi } else { 0.0 };
            line(&mut svg, left - 4.0, y, left, y, false);
            text(&mut svg, left - 8.0, y + 4.0, "end", &tick_label(fq, freq_hi));
        }
        text(&mut svg, left + plot_w / 2.0, top + plot_h + 36.0, "middle", "time (s)");
        vertical_text(&mut svg, left - 56.0, top + plot_h / 2.0, "frequency (Hz)");
    }

    svg.push_str("</svg>\n");
    Figure { svg, csv }
}

/// One named score series for the strip plot.
pub struct ScorePanel {
    pub title: String,
    pub signed: Vec<f64>,
}

/// Renders signed anomaly scores as side-by-side per-panel strips sharing
/// one y scale, with a dashed zero line: positive points sit above it
/// (normal), negative below (anomalous).
pub fn score_strips(panels: &[ScorePanel]) -> Result<Figure> {
    if panels.is_empty() {
        return Err(Error::Data("no score panels to plot".to_string()));
    }
    for p in panels {
        if p.signed.is_empty() {
            return Err(Error::Data(format!(
                "score panel {:?} is empty; refusing to draw a blank figure",
                p.title
            )));
        }
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in panels {
        for &v in &p.signed {
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "score panel {:?} contains a non-finite value",
                    p.title
                )));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    lo = lo.min(0.0);
    hi = hi.max(0.0);
    let pad = 0.08 * (hi - lo).max(1e-9);
    lo -= pad;
    hi += pad;

    let plot_w = 260.0;
    let plot_h = 220.0;
    let left0 = 70.0;
    let gap = 40.0;
    let top = 44.0;
    let width = left0 + panels.len() as f64 * plot_w + (panels.len() - 1) as f64 * gap + 20.0;
    let height = top + plot_h + 60.0;

    let mut svg = String::new();
    svg_open(&mut svg, width, height);
    let mut csv = String::from("panel,index,signed\n");

    let y_of = |v: f64| top + plot_h - plot_h * (v - lo) / (hi - lo);

    for (i, panel) in panels.iter().enumerate() {
        let left = left0 + i as f64 * (plot_w + gap);
        text(&mut svg, left + plot_w / 2.0, top - 12.0, "middle", &panel.title);
        line(&mut svg, left, top, left, top + plot_h, false);
        line(&mut svg, left, top + plot_h, left + plot_w, top + plot_h, false);
        let zero_y = y_of(0.0);
        line(&mut svg, left, zero_y, left + plot_w, zero_y, true);

        let n = panel.signed.len();
        let all_negative = panel.signed.iter().all(|&v| v < 0.0);
        let color = if all_negative { "#b03030" } else { "#2b6cb0" };
        for (j, &v) in panel.signed.iter().enumerate() {
            let x = left + plot_w * (j as f64 + 0.5) / n as f64;
            let _ = writeln!(
                svg,
                "<circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{color}\"/>",
                y_of(v)
            );
            let _ = writeln!(csv, "{},{j},{v}", panel.title);
        }

        for t in ticks(lo, hi, 5) {
            let y = y_of(t);
            line(&mut svg, left - 4.0, y, left, y, false);
            if i == 0 {
                text(&mut svg, left - 8.0, y + 4.0, "end", &tick_label(t, hi - lo));
            }
        }
        text(&mut svg, left + plot_w / 2.0, top + plot_h + 24.0, "middle", "segment index");
    }
    vertical_text(&mut svg, 18.0, top + plot_h / 2.0, "signed anomaly score");

    svg.push_str("</svg>\n");
    Ok(Figure { svg, csv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use gearvib::spectro::{SegmentOrigin, StftConfig};

    fn tiny_segment() -> SpectrogramSegment {
        let frames = 4;
        let bins = 5;
        let channels = 2;
        let magnitudes: Vec<f32> =
            (0..frames * bins * channels).map(|i| i as f32 * 0.5).collect();
        SpectrogramSegment {
            magnitudes,
            frames,
            bins,
            channels,
            duration_s: 0.4,
            labels: None,
            origins: vec![
                SegmentOrigin { channel: "a".to_string(), health: None, frame_offset: 0 },
                SegmentOrigin { channel: "b".to_string(), health: None, frame_offset: 0 },
            ],
            stft: StftConfig::default(),
            sample_rate_hz: 1000.0,
        }
    }

    #[test]
    fn heatmap_labels_axes_in_seconds_and_hertz() {
        let fig = segment_heatmap(&tiny_segment(), "segment 0");
        assert!(fig.svg.starts_with("<svg xmlns"));
        assert!(fig.svg.contains("time (s)"));
        assert!(fig.svg.contains("frequency (Hz)"));
        assert!(fig.svg.trim_end().ends_with("</svg>"));
        assert_eq!(fig.csv.lines().count(), 1 + 4 * 5 * 2);
        assert!(fig.csv.starts_with("channel,frame,bin,time_s,freq_hz,value"));
    }

    #[test]
    fn heatmap_emits_one_cell_per_value() {
        let fig = segment_heatmap(&tiny_segment(), "t");
        let cells = fig.svg.matches("<rect").count();
        assert_eq!(cells, 1 + 4 * 5 * 2);
    }

    #[test]
    fn score_strips_share_a_zero_line_and_color_by_sign() {
        let fig = score_strips(&[
            ScorePanel { title: "train healthy".to_string(), signed: vec![0.1, 0.2] },
            ScorePanel { title: "test damaged".to_string(), signed: vec![-0.3, -0.1] },
        ])
        .unwrap();
        assert!(fig.svg.contains("stroke-dasharray"));
        assert!(fig.svg.contains("#b03030"));
        assert!(fig.svg.contains("#2b6cb0"));
        assert_eq!(fig.csv.lines().count(), 1 + 4);
    }

    #[test]
    fn empty_panels_are_refused() {
        let err = score_strips(&[ScorePanel { title: "x".to_string(), signed: vec![] }])
            .unwrap_err();
        assert!(err.to_string().contains("empty"), "{err}");
    }

    #[test]
    fn non_finite_scores_are_refused() {
        let err = score_strips(&[ScorePanel {
            title: "x".to_string(),
            signed: vec![f64::NAN],
        }])
        .unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
    }
}
