//! Checksummed binary containers for spectrograms and segment sets.
//!
//! One file holds one compact JSON header line, a newline, then a raw
//! little-endian f32 payload. The header records the container kind, a
//! format version, the payload byte length, and the payload's SHA-256, so
//! loads detect truncation and corruption instead of returning garbage.
//! Magnitudes are stored at f32 precision; segment sets therefore
//! round-trip bit for bit, and a full spectrogram round-trips bit for bit
//! after the first save quantizes it.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::siggen::{exact_sample_count, Health};
use crate::spectro::{SegmentOrigin, Spectrogram, SpectrogramSegment, StftConfig, CHANNELS};

/// Current container format version.
pub const FORMAT_VERSION: u32 = 1;

const KIND_SEGMENTS: &str = "gearvib/segments";
const KIND_SPECTROGRAM: &str = "gearvib/spectrogram";

#[derive(Serialize, Deserialize)]
struct Header<M> {
    kind: String,
    version: u32,
    payload_len: u64,
    payload_sha256: String,
    meta: M,
}

/// Writes `bytes` to `path` atomically: a temporary file in the same
/// directory is written, flushed, then renamed over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    let temp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    fs::write(temp.path(), bytes).map_err(|e| Error::io(temp.path(), e))?;
    temp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn encode_f32s(values: impl Iterator<Item = f32>) -> Vec<u8> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn decode_f32s(bytes: &[u8], path: &Path) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Integrity(format!(
            "{}: payload length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Serializes a container to `path`: header line, newline, payload.
pub(crate) fn write_container<M: Serialize>(
    path: &Path,
    kind: &str,
    meta: &M,
    payload: &[u8],
) -> Result<()> {
    let header = Header {
        kind: kind.to_string(),
        version: FORMAT_VERSION,
        payload_len: payload.len() as u64,
        payload_sha256: hex::encode(Sha256::digest(payload)),
        meta,
    };
    let mut bytes = serde_json::to_vec(&header)
        .map_err(|e| Error::Data(format!("container header serialization failed: {e}")))?;
    bytes.push(b'\n');
    bytes.extend_from_slice(payload);
    write_atomic(path, &bytes)
}

/// Reads and verifies a container, returning its metadata and payload.
pub(crate) fn read_container<M: DeserializeOwned>(
    path: &Path,
    expected_kind: &str,
) -> Result<(M, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let newline = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        location: "header".to_string(),
        message: "no header line found".to_string(),
    })?;
    // Decode in two steps so kind and version mismatches are reported as
    // such rather than as metadata shape errors.
    let header: Header<serde_json::Value> =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: "header".to_string(),
            message: e.to_string(),
        })?;
    if header.kind != expected_kind {
        return Err(Error::Data(format!(
            "{}: container holds '{}', expected '{expected_kind}'",
            path.display(),
            header.kind
        )));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Data(format!(
            "{}: container version {} is not the supported version {FORMAT_VERSION}",
            path.display(),
            header.version
        )));
    }
    let meta: M = serde_json::from_value(header.meta).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        location: "header metadata".to_string(),
        message: e.to_string(),
    })?;
    let payload = &bytes[newline + 1..];
    if payload.len() as u64 != header.payload_len {
        return Err(Error::Integrity(format!(
            "{}: payload is {} bytes but the header promises {}",
            path.display(),
            payload.len(),
            header.payload_len
        )));
    }
    let digest = hex::encode(Sha256::digest(payload));
    if digest != header.payload_sha256 {
        return Err(Error::Integrity(format!(
            "{}: payload checksum mismatch (stored {}, computed {digest})",
            path.display(),
            header.payload_sha256
        )));
    }
    Ok((meta, payload.to_vec()))
}

#[derive(Serialize, Deserialize)]
struct SegmentEntry {
    labels: Option<[u8; CHANNELS]>,
    origins: Vec<SegmentOrigin>,
}

#[derive(Serialize, Deserialize)]
struct SegmentsMeta {
    frames: usize,
    bins: usize,
    channels: usize,
    duration_s: f64,
    stft: StftConfig,
    sample_rate_hz: f64,
    entries: Vec<SegmentEntry>,
}

/// Saves a set of same-shape segments to one container file.
pub fn save_segments(path: &Path, segments: &[SpectrogramSegment]) -> Result<()> {
    let first = segments
        .first()
        .ok_or_else(|| Error::Config("cannot archive an empty segment set".to_string()))?;
    for (i, segment) in segments.iter().enumerate() {
        if !segment.shape_matches(first) {
            return Err(Error::Shape(format!(
                "segment {i} shape ({}×{}×{}) disagrees with segment 0 ({}×{}×{})",
                segment.frames, segment.bins, segment.channels,
                first.frames, first.bins, first.channels
            )));
        }
    }
    let meta = SegmentsMeta {
        frames: first.frames,
        bins: first.bins,
        channels: first.channels,
        duration_s: first.duration_s,
        stft: first.stft,
        sample_rate_hz: first.sample_rate_hz,
        entries: segments
            .iter()
            .map(|s| SegmentEntry { labels: s.labels, origins: s.origins.clone() })
            .collect(),
    };
    let payload = encode_f32s(segments.iter().flat_map(|s| s.magnitudes.iter().copied()));
    write_container(path, KIND_SEGMENTS, &meta, &payload)
}

/// Loads a segment set saved by [`save_segments`]. Magnitudes are restored
/// bit for bit.
pub fn load_segments(path: &Path) -> Result<Vec<SpectrogramSegment>> {
    let (meta, payload): (SegmentsMeta, _) = read_container(path, KIND_SEGMENTS)?;
    let values = decode_f32s(&payload, path)?;
    let per_segment = meta.frames * meta.bins * meta.channels;
    if per_segment == 0 || values.len() != per_segment * meta.entries.len() {
        return Err(Error::Integrity(format!(
            "{}: payload holds {} values, expected {} segments × {per_segment}",
            path.display(),
            values.len(),
            meta.entries.len()
        )));
    }
    Ok(meta
        .entries
        .iter()
        .enumerate()
        .map(|(i, entry)| SpectrogramSegment {
            magnitudes: values[i * per_segment..(i + 1) * per_segment].to_vec(),
            frames: meta.frames,
            bins: meta.bins,
            channels: meta.channels,
            duration_s: meta.duration_s,
            labels: entry.labels,
            origins: entry.origins.clone(),
            stft: meta.stft,
            sample_rate_hz: meta.sample_rate_hz,
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct SpectrogramMeta {
    frames: usize,
    bins: usize,
    config: StftConfig,
    sample_rate_hz: f64,
    channel: String,
    health: Option<Health>,
}

/// Saves a full spectrogram, quantizing magnitudes to f32.
pub fn save_spectrogram(path: &Path, spec: &Spectrogram) -> Result<()> {
    let meta = SpectrogramMeta {
        frames: spec.frames(),
        bins: spec.bins(),
        config: spec.config,
        sample_rate_hz: spec.sample_rate_hz,
        channel: spec.channel.clone(),
        health: spec.health,
    };
    let payload = encode_f32s(spec.magnitudes.iter().map(|&m| m as f32));
    write_container(path, KIND_SPECTROGRAM, &meta, &payload)
}

/// Loads a spectrogram saved by [`save_spectrogram`], reconstructing the
/// frame-time and bin-frequency axes from the stored configuration.
pub fn load_spectrogram(path: &Path) -> Result<Spectrogram> {
    let (meta, payload): (SpectrogramMeta, _) = read_container(path, KIND_SPECTROGRAM)?;
    let values = decode_f32s(&payload, path)?;
    if values.len() != meta.frames * meta.bins {
        return Err(Error::Integrity(format!(
            "{}: payload holds {} values, expected {}×{}",
            path.display(),
            values.len(),
            meta.frames,
            meta.bins
        )));
    }
    let fs = meta.sample_rate_hz;
    let window_len = exact_sample_count(meta.config.window_s, fs, "window_s")?;
    let hop_len = exact_sample_count(meta.config.hop_s, fs, "hop_s")?;
    Ok(Spectrogram {
        magnitudes: values.iter().map(|&v| v as f64).collect(),
        frame_times_s: (0..meta.frames).map(|f| (f * hop_len) as f64 / fs).collect(),
        bin_freqs_hz: (0..meta.bins)
            .map(|k| k as f64 * fs / window_len as f64)
            .collect(),
        config: meta.config,
        sample_rate_hz: fs,
        channel: meta.channel,
        health: meta.health,
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siggen::{generate_signal, RigProfile};
    use crate::spectro::{sample_segments, stack_channels, stft};

    fn sample_spectrogram(seed: u64) -> Spectrogram {
        let rig = RigProfile::default();
        let ts = generate_signal(&rig.components[2], &rig, Health::Damaged, 2.0, seed).unwrap();
        stft(&ts, &StftConfig::default()).unwrap()
    }

    fn sample_segment_set(seed: u64) -> Vec<SpectrogramSegment> {
        let spec = sample_spectrogram(seed);
        let singles = sample_segments(&spec, 1.0, 9, seed).unwrap();
        singles
            .chunks_exact(3)
            .map(|chunk| {
                stack_channels(
                    [chunk[0].clone(), chunk[1].clone(), chunk[2].clone()],
                    [1, 0, 1],
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn segments_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.seg");
        let segments = sample_segment_set(7);
        save_segments(&path, &segments).unwrap();
        let loaded = load_segments(&path).unwrap();
        assert_eq!(loaded.len(), segments.len());
        for (a, b) in segments.iter().zip(&loaded) {
            assert_eq!(a.magnitudes, b.magnitudes, "bit-exact magnitudes");
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.origins, b.origins);
            assert!(a.shape_matches(b));
        }
    }

    #[test]
    fn spectrogram_round_trip_stabilizes_after_first_save() {
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("a.spg");
        let path_b = dir.path().join("b.spg");
        let original = sample_spectrogram(11);
        save_spectrogram(&path_a, &original).unwrap();
        let once = load_spectrogram(&path_a).unwrap();
        for (&m, &q) in original.magnitudes.iter().zip(&once.magnitudes) {
            assert_eq!(m as f32, q as f32, "first save quantizes to f32");
        }
        assert_eq!(once.frame_times_s, original.frame_times_s);
        assert_eq!(once.bin_freqs_hz, original.bin_freqs_hz);
        assert_eq!(once.channel, original.channel);
        save_spectrogram(&path_b, &once).unwrap();
        let twice = load_spectrogram(&path_b).unwrap();
        assert_eq!(once, twice, "second round trip is bit-exact");
    }

    #[test]
    fn corrupted_payload_fails_integrity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.seg");
        save_segments(&path, &sample_segment_set(13)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_segments(&path), Err(Error::Integrity(_))));
    }

    #[test]
    fn truncated_payload_fails_integrity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.seg");
        save_segments(&path, &sample_segment_set(17)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_segments(&path), Err(Error::Integrity(_))));
    }

    #[test]
    fn version_and_kind_mismatches_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let seg_path = dir.path().join("set.seg");
        save_segments(&seg_path, &sample_segment_set(19)).unwrap();
        // A segment container is not a spectrogram container.
        assert!(matches!(load_spectrogram(&seg_path), Err(Error::Data(_))));

        // Bump the version field in the header line.
        let bytes = std::fs::read(&seg_path).unwrap();
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header = String::from_utf8(bytes[..newline].to_vec()).unwrap();
        let bumped = header.replace("\"version\":1", "\"version\":999");
        assert_ne!(header, bumped);
        let mut rewritten = bumped.into_bytes();
        rewritten.push(b'\n');
        rewritten.extend_from_slice(&bytes[newline + 1..]);
        let bad_path = dir.path().join("bad.seg");
        std::fs::write(&bad_path, &rewritten).unwrap();
        assert!(matches!(load_segments(&bad_path), Err(Error::Data(_))));
    }

    #[test]
    fn malformed_header_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.seg");
        std::fs::write(&path, b"not json\nrest").unwrap();
        assert!(matches!(load_segments(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, b"no newline at all").unwrap();
        assert!(matches!(load_segments(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_set_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.seg");
        assert!(matches!(save_segments(&path, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn mixed_shapes_are_rejected() {
        let spec = sample_spectrogram(23);
        let a = sample_segments(&spec, 1.0, 1, 1).unwrap().remove(0);
        let b = sample_segments(&spec, 1.25, 1, 2).unwrap().remove(0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mixed.seg");
        assert!(matches!(save_segments(&path, &[a, b]), Err(Error::Shape(_))));
    }
}
