//! TOML run configuration, merged with command-line overrides.
//!
//! ```toml
//! seed = 7
//! out = "runs/fusion"
//!
//! [model]
//! kind = "fusion"            # vibration_cnn | acoustic_cnn_lstm | fusion
//! preset = "default"         # default | compact
//! lstm_units = [64, 64]
//!
//! [train]
//! epochs = 50
//! batch_size = 64
//!
//! [data]
//! manifest = "data/manifest.csv"   # or a [synth] section, not both
//!
//! [synth]
//! num_classes = 9
//! windows_per_class = 200
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fdiag::data::{SynthSpec, DEFAULT_WINDOW_LEN};
use fdiag::model::{ConvBlock, ModelKind, ModelSpec};
use fdiag::training::{SplitGranularity, TrainConfig};
use fdiag::Error;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub data: DataSection,
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: Option<String>,
    pub preset: Option<String>,
    pub num_classes: Option<usize>,
    pub input_len: Option<usize>,
    pub vibration_convs: Option<Vec<String>>,
    pub acoustic_convs: Option<Vec<String>>,
    pub lstm_units: Option<Vec<usize>>,
    pub dense_units: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub split_ratio: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub split_granularity: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub manifest: Option<PathBuf>,
    pub window_len: Option<usize>,
    pub hop: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub num_classes: Option<usize>,
    pub windows_per_class: Option<usize>,
    pub sample_rate_hz: Option<f64>,
    pub vibration_noise: Option<f64>,
    pub acoustic_noise: Option<f64>,
    pub decay_s: Option<f64>,
    pub jitter: Option<f64>,
}

impl FileConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::read)
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub kind: Option<String>,
    pub manifest: Option<PathBuf>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Manifest(PathBuf),
    Synth(SynthSpec),
}

/// Everything a command needs, fully resolved.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub source: DataSource,
    pub window_len: usize,
    pub hop: usize,
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

impl CliConfig {
    pub fn resolve(file: FileConfig, ov: Overrides) -> Result<Self> {
        let seed = ov.seed.or(file.seed).unwrap_or(0);
        let out = ov.out.or(file.out).unwrap_or_else(|| PathBuf::from("out"));

        let window_len = file.data.window_len.unwrap_or(DEFAULT_WINDOW_LEN);
        let hop = file.data.hop.unwrap_or(window_len);
        let manifest = ov.manifest.or(file.data.manifest);
        let source = match (manifest, file.synth) {
            (Some(_), Some(_)) => {
                return Err(config_err("choose either [data] manifest or a [synth] section, not both"))
            }
            (Some(m), None) => DataSource::Manifest(m),
            (None, synth) => DataSource::Synth(synth_spec(synth.unwrap_or_default(), seed, window_len)?),
        };

        let m = file.model;
        let kind: ModelKind = ov
            .kind
            .or(m.kind)
            .as_deref()
            .unwrap_or("fusion")
            .parse()?;
        let num_classes = match &source {
            DataSource::Synth(s) => s.num_classes,
            // Replaced by the manifest's class count once the data is loaded.
            DataSource::Manifest(_) => m.num_classes.unwrap_or(9),
        };
        if let (Some(n), DataSource::Synth(s)) = (m.num_classes, &source) {
            if n != s.num_classes {
                return Err(config_err(format!(
                    "model.num_classes = {n} but synth.num_classes = {}",
                    s.num_classes
                )));
            }
        }
        let mut model = match m.preset.as_deref().unwrap_or("default") {
            "default" => ModelSpec::new(kind, num_classes),
            "compact" => ModelSpec::compact(kind, num_classes),
            other => return Err(config_err(format!("unknown model preset {other:?}"))),
        };
        model.input_len = m.input_len.unwrap_or(window_len);
        if model.input_len != window_len {
            return Err(config_err(format!(
                "model.input_len = {} differs from data.window_len = {window_len}",
                model.input_len
            )));
        }
        if let Some(v) = m.vibration_convs {
            model.vibration_convs = parse_blocks(&v)?;
        }
        if let Some(v) = m.acoustic_convs {
            model.acoustic_convs = parse_blocks(&v)?;
        }
        if let Some(v) = m.lstm_units {
            model.lstm_units = v;
        }
        if let Some(v) = m.dense_units {
            model.dense_units = v;
        }

        let t = file.train;
        let d = TrainConfig::default();
        let train = TrainConfig {
            seed,
            split_ratio: t.split_ratio.unwrap_or(d.split_ratio),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            epochs: ov.epochs.or(t.epochs).unwrap_or(d.epochs),
            learning_rate: t.learning_rate.unwrap_or(d.learning_rate),
            beta1: t.beta1.unwrap_or(d.beta1),
            beta2: t.beta2.unwrap_or(d.beta2),
            epsilon: t.epsilon.unwrap_or(d.epsilon),
            split_granularity: t
                .split_granularity
                .as_deref()
                .map(str::parse::<SplitGranularity>)
                .transpose()?
                .unwrap_or(d.split_granularity),
            execution: d.execution,
        };
        train.validate()?;
        Ok(Self {
            seed,
            out,
            model,
            train,
            source,
            window_len,
            hop,
        })
    }
}

fn parse_blocks(items: &[String]) -> Result<Vec<ConvBlock>> {
    items
        .iter()
        .map(|s| s.parse::<ConvBlock>().map_err(Into::into))
        .collect()
}

fn synth_spec(s: SynthSection, seed: u64, window_len: usize) -> Result<SynthSpec> {
    let num_classes = s.num_classes.unwrap_or(9);
    if num_classes < 2 {
        return Err(config_err(format!(
            "synth.num_classes must be >= 2, got {num_classes}"
        )));
    }
    let mut spec = SynthSpec::new(num_classes, s.windows_per_class.unwrap_or(200), seed);
    spec.window_len = window_len;
    if let Some(v) = s.sample_rate_hz {
        spec.sample_rate_hz = v;
    }
    if let Some(v) = s.vibration_noise {
        spec.vibration_noise = v;
    }
    if let Some(v) = s.acoustic_noise {
        spec.acoustic_noise = v;
    }
    if let Some(v) = s.decay_s {
        spec.decay_s = v;
    }
    if let Some(v) = s.jitter {
        spec.jitter = v;
    }
    spec.validate().context("invalid [synth] section")?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> FileConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn defaults_use_synthetic_data() {
        let cfg = CliConfig::resolve(FileConfig::default(), Overrides::default()).unwrap();
        assert_eq!(cfg.model.kind, ModelKind::Fusion);
        assert_eq!(cfg.model.num_classes, 9);
        assert!(matches!(cfg.source, DataSource::Synth(ref s) if s.windows_per_class == 200));
        assert_eq!(cfg.train.epochs, 50);
    }

    #[test]
    fn flags_override_file() {
        let file = parse("seed = 3\n[model]\nkind = \"vibration_cnn\"\npreset = \"compact\"\n[train]\nepochs = 4\n");
        let cfg = CliConfig::resolve(
            file,
            Overrides {
                seed: Some(9),
                epochs: Some(2),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.model.kind, ModelKind::VibrationCnn);
        assert_eq!(cfg.model.lstm_units, vec![16, 16]);
    }

    #[test]
    fn rejects_two_sources_and_bad_values() {
        let file = parse("[data]\nmanifest = \"m.csv\"\n[synth]\nnum_classes = 9\n");
        assert!(CliConfig::resolve(file, Overrides::default()).is_err());
        let file = parse("[synth]\nnum_classes = 0\n");
        assert!(CliConfig::resolve(file, Overrides::default()).is_err());
        let file = parse("[train]\nepochs = 0\n");
        assert!(CliConfig::resolve(file, Overrides::default()).is_err());
        assert!(toml::from_str::<FileConfig>("[model]\ncolour = 1\n").is_err());
    }

    #[test]
    fn custom_layers() {
        let file = parse("[model]\nvibration_convs = [\"4:5:2\"]\nlstm_units = [8]\ndense_units = 16\n");
        let cfg = CliConfig::resolve(file, Overrides::default()).unwrap();
        assert_eq!(cfg.model.vibration_convs, vec![ConvBlock::new(4, 5, 2)]);
        assert_eq!(cfg.model.lstm_units, vec![8]);
        assert_eq!(cfg.model.dense_units, 16);
    }
}
