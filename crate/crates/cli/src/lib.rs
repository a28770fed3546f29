//! The `fdiag` command set: `generate`, `train`, `evaluate` and `infer`.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fdiag::data::{
    build_dataset, load_recording, normalize_window, synth_dataset, synth_recordings, write_raw_f32,
    Manifest, ManifestRow, Modality, ModalityMode, RecordingFormat, RecordingMeta, WindowedDataset,
    DEFAULT_SAMPLE_RATE_HZ,
};
use fdiag::metrics::{per_class_metrics, render_csv, render_table};
use fdiag::model::{load_model, save_model};
use fdiag::training::{evaluate, stratified_split, INIT_STREAM};
use fdiag::{fit, Error, Model, ModelKind, Rng, Tensor};

pub use config::{CliConfig, DataSource, FileConfig, Overrides};

pub const MODEL_FILE: &str = "model.fmdl";
pub const REPORT_FILE: &str = "train_report.txt";
pub const METRICS_FILE: &str = "metrics.txt";
pub const METRICS_CSV_FILE: &str = "metrics.csv";
pub const EVAL_FILE: &str = "evaluation.txt";
pub const EVAL_CSV_FILE: &str = "evaluation.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";

/// Misuse of the command line that clap cannot see, such as a wrong file count.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 1 usage or configuration, 2 data or files, 3 numeric failure.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Numeric(_) => 3,
                Error::Config(_) | Error::Shape(_) | Error::DegenerateFan { .. } => 1,
                Error::Data(_) | Error::Format(_) | Error::Io { .. } => 2,
            };
        }
    }
    2
}

/// Modalities a model of this kind reads from a manifest.
pub fn mode_for(kind: ModelKind) -> ModalityMode {
    match kind {
        ModelKind::VibrationCnn => ModalityMode::VibrationOnly,
        ModelKind::AcousticCnnLstm => ModalityMode::AcousticOnly,
        ModelKind::Fusion => ModalityMode::Paired,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(())
}

/// Synthetic data is always paired, so every model kind sees the same windows.
pub fn load_dataset(cfg: &CliConfig, kind: ModelKind) -> Result<WindowedDataset> {
    match &cfg.source {
        DataSource::Synth(spec) => Ok(synth_dataset(spec)?),
        DataSource::Manifest(path) => {
            let manifest = Manifest::read(path)?;
            build_dataset(&manifest, mode_for(kind), cfg.window_len, cfg.hop)
                .with_context(|| format!("loading {}", path.display()))
        }
    }
}

/// Writes one raw binary32 file per (class, modality) plus `manifest.csv`.
pub fn cmd_generate(cfg: &CliConfig) -> Result<Vec<PathBuf>> {
    let DataSource::Synth(spec) = &cfg.source else {
        return Err(UsageError("generate needs a [synth] section, not a manifest".into()).into());
    };
    create_dir(&cfg.out)?;
    let names = spec.class_names();
    let mut rows = Vec::new();
    let mut written = Vec::new();
    for (class_id, (vib, ac)) in synth_recordings(spec)?.into_iter().enumerate() {
        let key = format!("class{class_id:02}");
        for rec in [vib, ac] {
            let file = format!("{key}_{}.f32", rec.modality);
            let path = cfg.out.join(&file);
            write_raw_f32(&path, &rec.samples)?;
            written.push(path);
            rows.push(ManifestRow {
                file_path: PathBuf::from(file),
                modality: rec.modality,
                label_name: names[class_id].clone(),
                pair_key: key.clone(),
            });
        }
    }
    let manifest = Manifest::from_rows(rows, &cfg.out);
    let path = cfg.out.join(MANIFEST_FILE);
    write_file(&path, &manifest.to_csv())?;
    written.push(path);
    Ok(written)
}

/// Trains the configured model and writes weights, epoch report and metrics.
pub fn cmd_train(cfg: &CliConfig) -> Result<String> {
    let kind = cfg.model.kind;
    let dataset = load_dataset(cfg, kind)?;
    let mut spec = cfg.model.clone();
    spec.num_classes = dataset.num_classes();
    let mut model = Model::build(&spec, &mut Rng::derived(cfg.seed, INIT_STREAM))?;
    model.set_class_names(dataset.class_names.clone())?;
    let report = fit(&mut model, &dataset, &cfg.train).with_context(|| format!("training {kind}"))?;

    create_dir(&cfg.out)?;
    save_model(&model, cfg.out.join(MODEL_FILE))?;
    write_file(&cfg.out.join(REPORT_FILE), &report.to_text())?;
    let metrics = per_class_metrics(&report.confusion)?;
    let table = render_table(&metrics, &dataset.class_names)?;
    write_file(&cfg.out.join(METRICS_FILE), &table)?;
    write_file(&cfg.out.join(METRICS_CSV_FILE), &render_csv(&metrics, &dataset.class_names)?)?;
    Ok(format!(
        "{kind}: validation accuracy {:.4} after {} epochs\n{table}",
        report.final_val_accuracy(),
        report.epochs.len()
    ))
}

/// Scores a saved model on the validation split drawn with `split_seed`,
/// or on every window when `all` is set.
pub fn cmd_evaluate(cfg: &CliConfig, model_path: &Path, split_seed: u64, all: bool) -> Result<String> {
    let model = load_model(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    if model.spec().input_len != cfg.window_len {
        return Err(Error::Data(format!(
            "model expects windows of {} samples, data is cut into {}",
            model.spec().input_len,
            cfg.window_len
        ))
        .into());
    }
    let dataset = load_dataset(cfg, model.kind())?;
    if dataset.num_classes() != model.num_classes() {
        return Err(Error::Data(format!(
            "model has {} classes, data has {}",
            model.num_classes(),
            dataset.num_classes()
        ))
        .into());
    }
    let indices = if all {
        (0..dataset.len()).collect()
    } else {
        stratified_split(&dataset, cfg.train.split_ratio, split_seed, cfg.train.split_granularity)?.val
    };
    let (accuracy, confusion) = evaluate(&model, &dataset, &indices)?;
    let metrics = per_class_metrics(&confusion)?;
    let table = render_table(&metrics, &dataset.class_names)?;
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join(EVAL_FILE), &table)?;
    write_file(&cfg.out.join(EVAL_CSV_FILE), &render_csv(&metrics, &dataset.class_names)?)?;
    Ok(format!(
        "{}: accuracy {accuracy:.4} on {} windows\n{table}",
        model.kind(),
        indices.len()
    ))
}

/// First normalized window of a recording file.
pub fn first_window(path: &Path, window_len: usize, modality: Modality) -> Result<Tensor> {
    let rec = load_recording(
        path,
        RecordingFormat::from_path(path),
        RecordingMeta {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            label: 0,
            modality,
            source_id: path.display().to_string(),
        },
    )?;
    if rec.samples.len() < window_len {
        return Err(Error::Data(format!(
            "{} holds {} samples, the model needs {window_len}",
            path.display(),
            rec.samples.len()
        ))
        .into());
    }
    let w = Tensor::new(rec.samples[..window_len].to_vec(), &[window_len, 1])?;
    Ok(normalize_window(&w))
}

/// Classifies the first window of the given files. Fusion models take the
/// vibration file first, then the acoustic one.
pub fn cmd_infer(model_path: &Path, files: &[PathBuf]) -> Result<String> {
    let model = load_model(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let kind = model.kind();
    let needed = if kind == ModelKind::Fusion { 2 } else { 1 };
    if files.len() != needed {
        return Err(UsageError(format!(
            "{kind} model takes {needed} input file(s), got {}",
            files.len()
        ))
        .into());
    }
    let n = model.spec().input_len;
    let (vib, ac) = match kind {
        ModelKind::VibrationCnn => (Some(first_window(&files[0], n, Modality::Vibration)?), None),
        ModelKind::AcousticCnnLstm => (None, Some(first_window(&files[0], n, Modality::Acoustic)?)),
        ModelKind::Fusion => (
            Some(first_window(&files[0], n, Modality::Vibration)?),
            Some(first_window(&files[1], n, Modality::Acoustic)?),
        ),
    };
    let probs = model.predict(vib.as_ref(), ac.as_ref())?;
    if !probs.is_finite() {
        return Err(Error::Numeric("non-finite posterior".into()).into());
    }
    let names = model.class_names();
    let mut out = String::new();
    let _ = writeln!(out, "predicted: {}", names[probs.argmax()]);
    for (name, p) in names.iter().zip(probs.data()) {
        let _ = writeln!(out, "{name}: {p:.4}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let code = |e: Error| exit_code(&anyhow::Error::from(e).context("while testing"));
        assert_eq!(code(Error::Config("x".into())), 1);
        assert_eq!(code(Error::Data("x".into())), 2);
        assert_eq!(code(Error::Format("x".into())), 2);
        assert_eq!(code(Error::Numeric("x".into())), 3);
        assert_eq!(exit_code(&UsageError("x".into()).into()), 1);
    }

    #[test]
    fn modes_match_kinds() {
        for kind in ModelKind::ALL {
            let mode = mode_for(kind);
            assert_eq!(mode.has_vibration(), kind.uses_vibration());
            assert_eq!(mode.has_acoustic(), kind.uses_acoustic());
        }
    }
}
