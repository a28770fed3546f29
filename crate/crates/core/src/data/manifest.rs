use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    load_recording, normalize_window, window_starts, Modality, ModalityMode, Recording,
    RecordingFormat, RecordingMeta, Window, WindowedDataset, DEFAULT_SAMPLE_RATE_HZ,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST_HEADER: &str = "file_path,modality,label_name,pair_key";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    /// Relative paths resolve against the manifest's directory.
    pub file_path: PathBuf,
    pub modality: Modality,
    pub label_name: String,
    pub pair_key: String,
}

/// Recording index. Class order is the order in which labels first appear.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub class_names: Vec<String>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn from_rows(rows: Vec<ManifestRow>, base_dir: impl Into<PathBuf>) -> Self {
        let mut class_names: Vec<String> = Vec::new();
        for row in &rows {
            if !class_names.contains(&row.label_name) {
                class_names.push(row.label_name.clone());
            }
        }
        Self {
            rows,
            class_names,
            base_dir: base_dir.into(),
        }
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line == MANIFEST_HEADER) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [path, modality, label, pair_key] = fields[..] else {
                return Err(Error::Data(format!(
                    "manifest line {}: expected 4 fields, got {}",
                    i + 1,
                    fields.len()
                )));
            };
            rows.push(ManifestRow {
                file_path: PathBuf::from(path),
                modality: modality
                    .parse()
                    .map_err(|e| Error::Data(format!("manifest line {}: {e}", i + 1)))?,
                label_name: label.to_string(),
                pair_key: pair_key.to_string(),
            });
        }
        if rows.is_empty() {
            return Err(Error::Data("manifest has no rows".into()));
        }
        Ok(Self::from_rows(rows, base_dir))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{MANIFEST_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.file_path.display(),
                r.modality,
                r.label_name,
                r.pair_key
            ));
        }
        out
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        if row.file_path.is_absolute() {
            row.file_path.clone()
        } else {
            self.base_dir.join(&row.file_path)
        }
    }

    pub fn label_index(&self, name: &str) -> Result<usize> {
        self.class_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Data(format!("label {name:?} not in class table")))
    }

    /// Modes this manifest can serve.
    pub fn has_modality(&self, modality: Modality) -> bool {
        self.rows.iter().any(|r| r.modality == modality)
    }

    fn load(&self, row: &ManifestRow) -> Result<Recording> {
        let path = self.resolve(row);
        load_recording(
            &path,
            RecordingFormat::from_path(&path),
            RecordingMeta {
                sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
                label: self.label_index(&row.label_name)?,
                modality: row.modality,
                source_id: row.pair_key.clone(),
            },
        )
    }
}

/// Loads, segments and normalizes every recording the mode needs.
pub fn build_dataset(
    manifest: &Manifest,
    mode: ModalityMode,
    window_len: usize,
    hop: usize,
) -> Result<WindowedDataset> {
    let mut windows = Vec::new();
    match mode {
        ModalityMode::VibrationOnly | ModalityMode::AcousticOnly => {
            let wanted = if mode == ModalityMode::VibrationOnly {
                Modality::Vibration
            } else {
                Modality::Acoustic
            };
            let rows: Vec<&ManifestRow> =
                manifest.rows.iter().filter(|r| r.modality == wanted).collect();
            if rows.is_empty() {
                return Err(Error::Data(format!("manifest has no {wanted} recordings")));
            }
            for row in rows {
                let rec = manifest.load(row)?;
                for start in window_starts(rec.samples.len(), window_len, hop)? {
                    let w = cut(&rec.samples, start, window_len)?;
                    let (vibration, acoustic) = match wanted {
                        Modality::Vibration => (Some(w), None),
                        Modality::Acoustic => (None, Some(w)),
                    };
                    windows.push(Window {
                        vibration,
                        acoustic,
                        label: rec.label,
                        source_id: rec.source_id.clone(),
                        start,
                    });
                }
            }
        }
        ModalityMode::Paired => {
            let mut order: Vec<&str> = Vec::new();
            let mut pairs: HashMap<&str, (Vec<&ManifestRow>, Vec<&ManifestRow>)> = HashMap::new();
            for row in &manifest.rows {
                let entry = pairs.entry(row.pair_key.as_str()).or_insert_with(|| {
                    order.push(row.pair_key.as_str());
                    (Vec::new(), Vec::new())
                });
                match row.modality {
                    Modality::Vibration => entry.0.push(row),
                    Modality::Acoustic => entry.1.push(row),
                }
            }
            for key in order {
                let (vib, ac) = &pairs[key];
                let (vib, ac) = match (vib.as_slice(), ac.as_slice()) {
                    ([v], [a]) => (*v, *a),
                    (v, a) => {
                        return Err(Error::Data(format!(
                            "pair_key {key:?} has {} vibration and {} acoustic files, needs one of each",
                            v.len(),
                            a.len()
                        )))
                    }
                };
                if vib.label_name != ac.label_name {
                    return Err(Error::Data(format!(
                        "pair_key {key:?} mixes labels {:?} and {:?}",
                        vib.label_name, ac.label_name
                    )));
                }
                let rv = manifest.load(vib)?;
                let ra = manifest.load(ac)?;
                if rv.samples.len() != ra.samples.len() {
                    return Err(Error::Data(format!(
                        "pair_key {key:?}: vibration has {} samples, acoustic {}",
                        rv.samples.len(),
                        ra.samples.len()
                    )));
                }
                for start in window_starts(rv.samples.len(), window_len, hop)? {
                    windows.push(Window {
                        vibration: Some(cut(&rv.samples, start, window_len)?),
                        acoustic: Some(cut(&ra.samples, start, window_len)?),
                        label: rv.label,
                        source_id: key.to_string(),
                        start,
                    });
                }
            }
        }
    }
    Ok(WindowedDataset {
        windows,
        class_names: manifest.class_names.clone(),
        mode,
        window_len,
    })
}

fn cut(samples: &[f64], start: usize, len: usize) -> Result<Tensor> {
    Ok(normalize_window(&Tensor::new(
        samples[start..start + len].to_vec(),
        &[len, 1],
    )?))
}
