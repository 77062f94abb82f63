//! Artifact plumbing shared by the subcommands: directory manifests that
//! carry metadata the raw files cannot (sample rates, channel order), and
//! CSV writers/readers for scores, diagnoses, and training history.

use std::fs;
use std::path::{Path, PathBuf};

use gearvib::archive::write_atomic;
use gearvib::diagnose::{Detection, Diagnosis};
use gearvib::error::{Error, Result};
use gearvib::siggen::{Health, RigProfile, SignalFormat};
use gearvib::spectro::StftConfig;
use serde::{Deserialize, Serialize};

/// Name of the per-directory metadata file written next to recordings and
/// spectrograms.
pub const MANIFEST_FILE: &str = "manifest.json";

/// Sidecar for a directory of raw recordings. The signal files hold bare
/// samples, so the sample rate, channel names, and health states live here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingsManifest {
    /// Encoding of every signal file in the directory.
    pub format: SignalFormat,
    /// Recording length in seconds.
    pub duration_s: f64,
    /// Master seed the recordings derive from.
    pub seed: u64,
    /// The rig that produced them, including the sample rate.
    pub rig: RigProfile,
    /// One entry per signal file, in rig channel order, healthy before
    /// damaged.
    pub recordings: Vec<RecordingEntry>,
}

/// One signal file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingEntry {
    /// File name relative to the manifest.
    pub file: String,
    /// Channel (component) name.
    pub component: String,
    /// Health of the simulated gearbox.
    pub health: Health,
    /// Per-recording generator seed (derived from the master seed).
    pub seed: u64,
}

/// Sidecar for a directory of spectrogram containers: preprocessing echo
/// plus the channel order dataset assembly must use.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrogramsManifest {
    /// Sample rate of the underlying recordings in Hz.
    pub sample_rate_hz: f64,
    /// Preprocessing parameters used for every file.
    pub stft: StftConfig,
    /// Component names in label-column order.
    pub components: Vec<String>,
    /// One entry per spectrogram container.
    pub spectrograms: Vec<SpectrogramEntry>,
}

/// One spectrogram container.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrogramEntry {
    /// File name relative to the manifest.
    pub file: String,
    /// Channel (component) name.
    pub component: String,
    /// Health of the source recording.
    pub health: Health,
}

/// Creates `dir` and its parents, mapping failures to the i/o error
/// category.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })
}

/// Atomically writes a UTF-8 text artifact.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    write_atomic(path, text.as_bytes())
}

/// Serializes `value` as pretty JSON with a trailing newline and writes it
/// atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        location: "serialization".to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_text(path, &text)
}

/// Reads and parses a JSON artifact, reporting the failing position.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

/// Loads the manifest of a recordings directory, with a hint when the
/// directory has not been populated yet.
pub fn read_recordings_manifest(dir: &Path) -> Result<RecordingsManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::Data(format!(
            "no recordings manifest at {}; run `gearvib generate` first",
            path.display()
        )));
    }
    read_json(&path)
}

/// Loads the manifest of a spectrograms directory, with a hint when the
/// directory has not been populated yet.
pub fn read_spectrograms_manifest(dir: &Path) -> Result<SpectrogramsManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::Data(format!(
            "no spectrogram manifest at {}; run `gearvib spectrogram` first",
            path.display()
        )));
    }
    read_json(&path)
}

/// File stem for a channel recording or spectrogram: `<component>_<health>`.
pub fn source_stem(component: &str, health: Health) -> String {
    format!("{component}_{health}")
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    index: usize,
    segment_id: &'a str,
    s: f64,
    signed: f64,
    mean_path_length: f64,
    is_anomalous: bool,
}

/// Renders detections as CSV. Columns hold the aggregate score; under
/// per-channel scope `signed` is the minimum (most anomalous) channel and
/// `s`/`mean_path_length` come from that same channel.
pub fn scores_csv(detections: &[Detection]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for (index, d) in detections.iter().enumerate() {
        let worst = d
            .scores
            .iter()
            .min_by(|a, b| a.signed.total_cmp(&b.signed))
            .expect("a detection carries at least one score");
        writer
            .serialize(ScoreRow {
                index,
                segment_id: &d.segment_id,
                s: worst.s,
                signed: d.signed,
                mean_path_length: worst.mean_path_length,
                is_anomalous: d.is_anomalous,
            })
            .map_err(|e| Error::Data(format!("cannot render score row {index}: {e}")))?;
    }
    finish_csv(writer)
}

/// Reads the `signed` column of a score CSV written by [`scores_csv`].
pub fn read_signed_column(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("cannot open score file {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_parse_error(path, e))?
        .clone();
    let column = headers.iter().position(|h| h == "signed").ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        location: "header".to_string(),
        message: "no `signed` column".to_string(),
    })?;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_parse_error(path, e))?;
        let field = record.get(column).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            location: format!("row {}", i + 1),
            message: "missing `signed` field".to_string(),
        })?;
        let value: f64 = field.parse().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: format!("row {}", i + 1),
            message: format!("{e}: {field:?}"),
        })?;
        values.push(value);
    }
    Ok(values)
}

#[derive(Serialize)]
struct DiagnosisRow<'a> {
    index: usize,
    segment_id: &'a str,
    p_ring_gear: f64,
    p_lss_bearing: f64,
    p_hss_bearing: f64,
    v_ring_gear: u8,
    v_lss_bearing: u8,
    v_hss_bearing: u8,
    stage1_signed: Option<f64>,
}

/// Renders diagnoses as CSV: probabilities, 0/1 verdicts, and the stage-1
/// signed score when both stages ran.
pub fn diagnoses_csv(diagnoses: &[Diagnosis]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for (index, d) in diagnoses.iter().enumerate() {
        writer
            .serialize(DiagnosisRow {
                index,
                segment_id: &d.segment_id,
                p_ring_gear: d.probabilities[0],
                p_lss_bearing: d.probabilities[1],
                p_hss_bearing: d.probabilities[2],
                v_ring_gear: d.verdicts[0],
                v_lss_bearing: d.verdicts[1],
                v_hss_bearing: d.verdicts[2],
                stage1_signed: d.stage1_signed,
            })
            .map_err(|e| Error::Data(format!("cannot render diagnosis row {index}: {e}")))?;
    }
    finish_csv(writer)
}

/// Reads the three verdict columns (`v_ring_gear`, `v_lss_bearing`,
/// `v_hss_bearing`) of a diagnoses CSV; values must be 0 or 1.
pub fn read_verdict_columns(path: &Path) -> Result<Vec<[u8; 3]>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| {
        Error::Data(format!("cannot open predictions file {}: {e}", path.display()))
    })?;
    let headers = reader
        .headers()
        .map_err(|e| csv_parse_error(path, e))?
        .clone();
    let mut columns = [0usize; 3];
    for (slot, name) in columns.iter_mut().zip(["v_ring_gear", "v_lss_bearing", "v_hss_bearing"])
    {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            location: "header".to_string(),
            message: format!("no `{name}` column"),
        })?;
    }
    let mut verdicts = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_parse_error(path, e))?;
        let mut row = [0u8; 3];
        for (slot, &column) in row.iter_mut().zip(&columns) {
            let field = record.get(column).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                location: format!("row {}", i + 1),
                message: "missing verdict field".to_string(),
            })?;
            *slot = match field {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        location: format!("row {}", i + 1),
                        message: format!("verdict must be 0 or 1, got {other:?}"),
                    })
                }
            };
        }
        verdicts.push(row);
    }
    Ok(verdicts)
}

/// Extracts the label rows of a segment set for use as ground truth.
pub fn ground_truth_labels(
    segments: &[gearvib::spectro::SpectrogramSegment],
    path: &Path,
) -> Result<Vec<[u8; 3]>> {
    segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.labels.ok_or_else(|| {
                Error::Data(format!(
                    "segment {i} of {} carries no labels; the file cannot serve as ground truth",
                    path.display()
                ))
            })
        })
        .collect()
}

/// Finalizes an in-memory CSV writer into a string.
pub fn finish_csv(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Data(format!("cannot finish CSV buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("CSV buffer is not UTF-8: {e}")))
}

/// Binary precision/recall for stage-1 anomaly detection, where damaged is
/// the positive class. Zero-denominator cases count as perfect only when
/// the complementary error count is zero, matching the convention of the
/// evaluation metrics.
pub fn binary_rates(
    true_positives: usize,
    false_positives: usize,
    false_negatives: usize,
) -> (f64, f64) {
    let rate = |num: usize, denom: usize, complementary: usize| -> f64 {
        if denom == 0 {
            return if complementary == 0 { 1.0 } else { 0.0 };
        }
        num as f64 / denom as f64
    };
    let precision = rate(true_positives, true_positives + false_positives, false_negatives);
    let recall = rate(true_positives, true_positives + false_negatives, false_positives);
    (precision, recall)
}

/// The default score-file path for a segment file: `scores_<stem>.csv`
/// under the report directory.
pub fn default_scores_path(report_dir: &Path, segments: &Path) -> PathBuf {
    let stem = segments
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "segments".to_string());
    report_dir.join(format!("scores_{stem}.csv"))
}

fn csv_parse_error(path: &Path, e: csv::Error) -> Error {
    let location = match e.position() {
        Some(p) => format!("line {}", p.line()),
        None => "unknown position".to_string(),
    };
    Error::Parse { path: path.to_path_buf(), location, message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gearvib::iforest::AnomalyScore;

    fn detection(signed: f64) -> Detection {
        Detection {
            signed,
            is_anomalous: signed < 0.0,
            scores: vec![AnomalyScore { s: 0.5 - signed, signed, mean_path_length: 7.25 }],
            segment_id: "seg/0".to_string(),
        }
    }

    #[test]
    fn score_csv_has_the_documented_columns() {
        let text = scores_csv(&[detection(0.125), detection(-0.25)]).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "index,segment_id,s,signed,mean_path_length,is_anomalous"
        );
        assert_eq!(lines.next().unwrap(), "0,seg/0,0.375,0.125,7.25,false");
        assert_eq!(lines.next().unwrap(), "1,seg/0,0.75,-0.25,7.25,true");
    }

    #[test]
    fn signed_column_round_trips_through_a_file() {
        let dir = std::env::temp_dir().join("gearvib-shared-test");
        ensure_dir(&dir).unwrap();
        let path = dir.join("scores.csv");
        let text = scores_csv(&[detection(1.5), detection(-2.5)]).unwrap();
        write_text(&path, &text).unwrap();
        assert_eq!(read_signed_column(&path).unwrap(), vec![1.5, -2.5]);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn verdict_reader_rejects_non_binary_values() {
        let dir = std::env::temp_dir().join("gearvib-shared-test-verdicts");
        ensure_dir(&dir).unwrap();
        let path = dir.join("diagnoses.csv");
        write_text(
            &path,
            "v_ring_gear,v_lss_bearing,v_hss_bearing\n1,0,2\n",
        )
        .unwrap();
        let err = read_verdict_columns(&path).unwrap_err();
        assert!(err.to_string().contains("0 or 1"), "{err}");
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn binary_rates_follow_the_zero_denominator_convention() {
        assert_eq!(binary_rates(5, 0, 0), (1.0, 1.0));
        assert_eq!(binary_rates(0, 0, 0), (1.0, 1.0));
        // A false positive with no actual positives: precision is a real
        // 0/1; recall is undefined but the complementary error exists.
        assert_eq!(binary_rates(0, 1, 0), (0.0, 0.0));
        // A false negative with no predicted positives: the mirror case.
        assert_eq!(binary_rates(0, 0, 1), (0.0, 0.0));
        let (p, r) = binary_rates(3, 1, 0);
        assert_eq!(p, 0.75);
        assert_eq!(r, 1.0);
    }
}
