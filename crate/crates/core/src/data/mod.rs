//! Recordings, windowing, normalization, manifests and the synthetic generator.

mod manifest;
mod synth;

pub use manifest::{build_dataset, Manifest, ManifestRow};
pub use synth::{
    default_signatures, synth_dataset, synth_recording, synth_recordings, FaultSignature, SynthSpec, BEARING_CLASSES, MOTOR_CLASSES,
};

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 42_000.0;
pub const DEFAULT_WINDOW_LEN: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Vibration,
    Acoustic,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Vibration => "vibration",
            Modality::Acoustic => "acoustic",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vibration" => Ok(Modality::Vibration),
            "acoustic" => Ok(Modality::Acoustic),
            other => Err(Error::Data(format!(
                "unknown modality {other:?} (expected vibration or acoustic)"
            ))),
        }
    }
}

/// Which channels a dataset carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModalityMode {
    VibrationOnly,
    AcousticOnly,
    Paired,
}

impl ModalityMode {
    pub fn has_vibration(self) -> bool {
        matches!(self, ModalityMode::VibrationOnly | ModalityMode::Paired)
    }

    pub fn has_acoustic(self) -> bool {
        matches!(self, ModalityMode::AcousticOnly | ModalityMode::Paired)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModalityMode::VibrationOnly => "vib_only",
            ModalityMode::AcousticOnly => "ac_only",
            ModalityMode::Paired => "paired",
        }
    }
}

impl FromStr for ModalityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vib_only" | "vibration" => Ok(ModalityMode::VibrationOnly),
            "ac_only" | "acoustic" => Ok(ModalityMode::AcousticOnly),
            "paired" => Ok(ModalityMode::Paired),
            other => Err(Error::Config(format!(
                "unknown modality mode {other:?} (expected vib_only, ac_only or paired)"
            ))),
        }
    }
}

/// One sensor channel of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub label: usize,
    pub modality: Modality,
    pub source_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordingFormat {
    /// One value per line; a non-numeric first line is treated as a header.
    Csv,
    /// Headerless little-endian binary32 stream.
    RawF32Le,
}

impl RecordingFormat {
    /// `.csv` is CSV, everything else raw binary32.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => RecordingFormat::Csv,
            _ => RecordingFormat::RawF32Le,
        }
    }
}

/// Metadata attached to a loaded recording.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordingMeta {
    pub sample_rate_hz: f64,
    pub label: usize,
    pub modality: Modality,
    pub source_id: String,
}

pub fn load_recording(path: impl AsRef<Path>, format: RecordingFormat, meta: RecordingMeta) -> Result<Recording> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let samples = match format {
        RecordingFormat::Csv => parse_csv_samples(&bytes, path)?,
        RecordingFormat::RawF32Le => parse_raw_f32(&bytes, path)?,
    };
    if samples.is_empty() {
        return Err(Error::Data(format!("{}: empty recording", path.display())));
    }
    if !(meta.sample_rate_hz > 0.0) {
        return Err(Error::Data(format!(
            "{}: sample rate must be positive",
            path.display()
        )));
    }
    Ok(Recording {
        samples,
        sample_rate_hz: meta.sample_rate_hz,
        label: meta.label,
        modality: meta.modality,
        source_id: meta.source_id,
    })
}

fn parse_csv_samples(bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Data(format!("{}: not UTF-8 text", path.display())))?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) if v.is_nan() => {
                return Err(Error::Data(format!("{}:{}: NaN sample", path.display(), i + 1)))
            }
            Ok(v) if v.is_infinite() => {
                return Err(Error::Data(format!(
                    "{}:{}: infinite sample",
                    path.display(),
                    i + 1
                )))
            }
            Ok(v) => samples.push(v),
            Err(_) if i == 0 => {} // header
            Err(_) => {
                return Err(Error::Data(format!(
                    "{}:{}: cannot parse {line:?}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(samples)
}

fn parse_raw_f32(bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Data(format!(
            "{}: {} bytes is not a whole number of binary32 samples",
            path.display(),
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Data(format!(
                    "{}: non-finite sample at index {i}",
                    path.display()
                )))
            }
        })
        .collect()
}

/// Writes samples as headerless little-endian binary32.
pub fn write_raw_f32(path: impl AsRef<Path>, samples: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(samples.len() * 4);
    for &v in samples {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Start offsets of `floor((n - window_len) / hop) + 1` consecutive windows.
pub fn window_starts(n: usize, window_len: usize, hop: usize) -> Result<Vec<usize>> {
    if window_len == 0 || hop == 0 {
        return Err(Error::Config("window length and hop must be >= 1".into()));
    }
    if n < window_len {
        return Err(Error::Data(format!(
            "recording of {n} samples is shorter than the window ({window_len})"
        )));
    }
    Ok((0..=(n - window_len) / hop).map(|i| i * hop).collect())
}

/// Cuts a recording into `[window_len, 1]` windows; the remainder is dropped.
pub fn segment(recording: &Recording, window_len: usize, hop: usize) -> Result<Vec<Tensor>> {
    let starts = window_starts(recording.samples.len(), window_len, hop)?;
    starts
        .into_iter()
        .map(|s| Tensor::new(recording.samples[s..s + window_len].to_vec(), &[window_len, 1]))
        .collect()
}

/// Per-window z-score `(w - mean) / max(std, 1e-8)` with the population std.
pub fn normalize_window(w: &Tensor) -> Tensor {
    let n = w.len() as f64;
    let mean = w.data().iter().sum::<f64>() / n;
    let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    let mut out = w.clone();
    for v in out.data_mut() {
        *v = (*v - mean) / std;
    }
    out
}

/// One labeled network input; paired windows cover the same sample range.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub vibration: Option<Tensor>,
    pub acoustic: Option<Tensor>,
    pub label: usize,
    pub source_id: String,
    /// Offset of the first sample within its recording.
    pub start: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub windows: Vec<Window>,
    pub class_names: Vec<String>,
    pub mode: ModalityMode,
    pub window_len: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for w in &self.windows {
            counts[w.label] += 1;
        }
        counts
    }

    /// Copy holding only the listed windows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            windows: indices.iter().map(|&i| self.windows[i].clone()).collect(),
            ..self.without_windows()
        }
    }

    fn without_windows(&self) -> Self {
        Self {
            windows: Vec::new(),
            class_names: self.class_names.clone(),
            mode: self.mode,
            window_len: self.window_len,
        }
    }
}
