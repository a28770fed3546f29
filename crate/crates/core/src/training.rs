//! Loss, optimizer, data split and the mini-batch training loop.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::model::{Gradients, Model, ModelKind};
use crate::parallel::{self, Execution};
use crate::tensor::{Rng, Tensor};

/// Stream ids for [`Rng::derived`], so each consumer of a run seed is independent.
pub const SPLIT_STREAM: u64 = 1;
pub const SHUFFLE_STREAM: u64 = 2;
pub const INIT_STREAM: u64 = 3;

/// Samples per gradient work unit. Fixed so that the reduction order, and
/// therefore every bit of the result, does not depend on the thread count.
pub const GRADIENT_CHUNK: usize = 8;

const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitGranularity {
    /// Split individual windows (correlated windows of one recording may land on both sides).
    Window,
    /// Keep all windows of a recording (its `source_id`) on one side.
    File,
}

impl FromStr for SplitGranularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window" => Ok(SplitGranularity::Window),
            "file" => Ok(SplitGranularity::File),
            other => Err(Error::Config(format!(
                "unknown split granularity {other:?} (expected window or file)"
            ))),
        }
    }
}

impl fmt::Display for SplitGranularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitGranularity::Window => "window",
            SplitGranularity::File => "file",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub split_ratio: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub split_granularity: SplitGranularity,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            split_ratio: 0.8,
            batch_size: 64,
            epochs: 50,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            split_granularity: SplitGranularity::Window,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split_ratio must be in (0, 1), got {}",
                self.split_ratio
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config("learning_rate and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Categorical cross-entropy `-ln p[true]` (probabilities floored at 1e-12)
/// and its gradient with respect to the pre-softmax logits, `p - onehot(true)`.
pub fn cross_entropy(probs: &Tensor, true_class: usize) -> Result<(f64, Tensor)> {
    if true_class >= probs.len() {
        return Err(Error::Data(format!(
            "true class {true_class} outside 0..{}",
            probs.len()
        )));
    }
    let loss = -probs.data()[true_class].max(PROB_FLOOR).ln();
    let mut grad = probs.clone();
    grad.data_mut()[true_class] -= 1.0;
    Ok((loss, grad))
}

/// Disjoint, exhaustive window index sets, both sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Per class, shuffles the class's units (windows or recordings) and sends
/// `floor(ratio * n)` of them to training, keeping at least one for validation.
pub fn stratified_split(
    dataset: &WindowedDataset,
    ratio: f64,
    seed: u64,
    granularity: SplitGranularity,
) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut rng = Rng::derived(seed, SPLIT_STREAM);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..dataset.num_classes() {
        // Units in first-appearance order; each unit is a list of window indices.
        let mut units: Vec<Vec<usize>> = Vec::new();
        let mut keys: Vec<&str> = Vec::new();
        for (i, w) in dataset.windows.iter().enumerate() {
            if w.label != class {
                continue;
            }
            match granularity {
                SplitGranularity::Window => units.push(vec![i]),
                SplitGranularity::File => match keys.iter().position(|k| *k == w.source_id) {
                    Some(u) => units[u].push(i),
                    None => {
                        keys.push(&w.source_id);
                        units.push(vec![i]);
                    }
                },
            }
        }
        let n = units.len();
        if n < 2 {
            return Err(Error::Data(format!(
                "class {:?} has {n} {granularity} unit(s); a split needs at least 2",
                dataset.class_names[class]
            )));
        }
        rng.shuffle(&mut units);
        let n_train = ((ratio * n as f64).floor() as usize).clamp(1, n - 1);
        for (j, unit) in units.into_iter().enumerate() {
            if j < n_train {
                train.extend(unit);
            } else {
                val.extend(unit);
            }
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok(Split { train, val })
}

/// Bias-corrected Adam with per-parameter moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(model: &Model, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Tensor> = model.params().into_iter().map(Tensor::zeros_like).collect();
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn from_config(model: &Model, config: &TrainConfig) -> Self {
        Self::new(model, config.learning_rate, config.beta1, config.beta2, config.epsilon)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &Gradients) -> Result<()> {
        if params.len() != grads.tensors.len() || params.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.tensors.len(),
                self.first.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(&grads.tensors).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::Shape(format!(
                    "adam: param {:?} vs grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(&grads.tensors)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((pv, &gv), (mv, vv)) in iter {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// One optimizer update of `model` with `grads`.
pub fn adam_step(model: &mut Model, grads: &Gradients, state: &mut Adam) -> Result<()> {
    state.step(model.params_mut(), grads)
}

/// Mean loss gradient over a mini-batch.
#[derive(Clone, Debug)]
pub struct BatchOutcome {
    pub grads: Gradients,
    pub mean_loss: f64,
    pub correct: usize,
}

fn check_modalities(model: &Model, dataset: &WindowedDataset) -> Result<()> {
    let kind = model.kind();
    let missing = if kind.uses_vibration() && !dataset.mode.has_vibration() {
        Some("vibration")
    } else if kind.uses_acoustic() && !dataset.mode.has_acoustic() {
        Some("acoustic")
    } else {
        None
    };
    if let Some(m) = missing {
        return Err(Error::Data(format!(
            "{kind} model needs {m} windows, dataset is {}",
            dataset.mode.as_str()
        )));
    }
    if dataset.num_classes() != model.num_classes() {
        return Err(Error::Data(format!(
            "model has {} classes, dataset has {}",
            model.num_classes(),
            dataset.num_classes()
        )));
    }
    Ok(())
}

fn inputs<'a>(model: &Model, dataset: &'a WindowedDataset, i: usize) -> (Option<&'a Tensor>, Option<&'a Tensor>) {
    let w = &dataset.windows[i];
    let kind = model.kind();
    (
        w.vibration.as_ref().filter(|_| kind != ModelKind::AcousticCnnLstm),
        w.acoustic.as_ref().filter(|_| kind != ModelKind::VibrationCnn),
    )
}

/// Averaged gradients of the cross-entropy over `indices`.
pub fn batch_gradients(
    model: &Model,
    dataset: &WindowedDataset,
    indices: &[usize],
    exec: Execution,
) -> Result<BatchOutcome> {
    if indices.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let chunks: Vec<&[usize]> = indices.chunks(GRADIENT_CHUNK).collect();
    let partials = parallel::map(exec, &chunks, |chunk| -> Result<(Gradients, f64, usize)> {
        let mut grads = model.zero_gradients();
        let mut loss = 0.0;
        let mut correct = 0;
        for &i in chunk.iter() {
            let (vib, ac) = inputs(model, dataset, i);
            let (probs, cache) = model.forward(vib, ac)?;
            let label = dataset.windows[i].label;
            let (l, g) = cross_entropy(&probs, label)?;
            loss += l;
            correct += usize::from(probs.argmax() == label);
            model.backward_into(&cache, &g, &mut grads)?;
        }
        Ok((grads, loss, correct))
    });
    let mut iter = partials.into_iter();
    let (mut grads, mut loss, mut correct) = iter.next().expect("non-empty batch")?;
    for part in iter {
        let (g, l, c) = part?;
        grads.add_assign(&g)?;
        loss += l;
        correct += c;
    }
    let n = indices.len() as f64;
    grads.scale(1.0 / n);
    Ok(BatchOutcome {
        grads,
        mean_loss: loss / n,
        correct,
    })
}

/// Argmax accuracy and confusion matrix (rows true, columns predicted) over `indices`.
pub fn evaluate(model: &Model, dataset: &WindowedDataset, indices: &[usize]) -> Result<(f64, ConfusionMatrix)> {
    evaluate_with(model, dataset, indices, Execution::default())
}

pub fn evaluate_with(
    model: &Model,
    dataset: &WindowedDataset,
    indices: &[usize],
    exec: Execution,
) -> Result<(f64, ConfusionMatrix)> {
    if indices.is_empty() {
        return Err(Error::Data("cannot evaluate an empty index set".into()));
    }
    check_modalities(model, dataset)?;
    if let Some(&bad) = indices.iter().find(|&&i| i >= dataset.len()) {
        return Err(Error::Data(format!("window index {bad} out of range")));
    }
    let predictions = parallel::map(exec, indices, |&i| {
        let (vib, ac) = inputs(model, dataset, i);
        model.predict(vib, ac).map(|p| p.argmax())
    });
    let mut cm = ConfusionMatrix::new(dataset.class_names.clone());
    for (&i, pred) in indices.iter().zip(predictions) {
        cm.record(dataset.windows[i].label, pred?)?;
    }
    Ok((cm.accuracy(), cm))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch.
    pub train_loss: f64,
    /// Fraction of training windows classified correctly during the epoch.
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub model_kind: ModelKind,
    pub epochs: Vec<EpochStats>,
    /// Validation confusion matrix after the final epoch.
    pub confusion: ConfusionMatrix,
    pub split: Split,
    pub wall_seconds: f64,
}

pub const REPORT_COLUMNS: &str = "epoch,train_loss,train_accuracy,val_accuracy";

impl TrainReport {
    pub fn final_val_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.val_accuracy)
    }

    /// Deterministic sections first; wall time lives alone in `[timing]`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[run]");
        let _ = writeln!(out, "model={}", self.model_kind);
        let _ = writeln!(out, "train_windows={}", self.split.train.len());
        let _ = writeln!(out, "val_windows={}", self.split.val.len());
        let _ = writeln!(out, "\n[epochs]");
        let _ = writeln!(out, "{REPORT_COLUMNS}");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.12},{:.6},{:.6}",
                e.epoch, e.train_loss, e.train_accuracy, e.val_accuracy
            );
        }
        let _ = writeln!(out, "\n[confusion]");
        out.push_str(&self.confusion.to_csv());
        let _ = writeln!(out, "\n[timing]");
        let _ = writeln!(out, "wall_seconds={:.3}", self.wall_seconds);
        out
    }

    /// Reads back the `[epochs]` section of [`TrainReport::to_text`].
    pub fn parse_epochs(text: &str) -> Result<Vec<EpochStats>> {
        let mut lines = text.lines().skip_while(|l| *l != "[epochs]");
        if lines.next().is_none() || lines.next() != Some(REPORT_COLUMNS) {
            return Err(Error::Format("report has no [epochs] table".into()));
        }
        lines
            .take_while(|l| !l.is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                let bad = || Error::Format(format!("bad epoch row {l:?}"));
                if f.len() != 4 {
                    return Err(bad());
                }
                Ok(EpochStats {
                    epoch: f[0].parse().map_err(|_| bad())?,
                    train_loss: f[1].parse().map_err(|_| bad())?,
                    train_accuracy: f[2].parse().map_err(|_| bad())?,
                    val_accuracy: f[3].parse().map_err(|_| bad())?,
                })
            })
            .collect()
    }
}

/// Trains `model` in place on the training part of a stratified split and
/// evaluates on the validation part after every epoch.
pub fn fit(model: &mut Model, dataset: &WindowedDataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    check_modalities(model, dataset)?;
    let started = Instant::now();
    let split = stratified_split(dataset, config.split_ratio, config.seed, config.split_granularity)?;
    let mut shuffle = Rng::derived(config.seed, SHUFFLE_STREAM);
    let mut adam = Adam::from_config(model, config);
    let mut order = split.train.clone();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut confusion = ConfusionMatrix::new(dataset.class_names.clone());

    for epoch in 1..=config.epochs {
        shuffle.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(config.batch_size) {
            let out = batch_gradients(model, dataset, batch, config.execution)?;
            if !out.mean_loss.is_finite() || !out.grads.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}")));
            }
            loss_sum += out.mean_loss * batch.len() as f64;
            correct += out.correct;
            adam_step(model, &out.grads, &mut adam)?;
        }
        let (val_accuracy, cm) = evaluate_with(model, dataset, &split.val, config.execution)?;
        confusion = cm;
        epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_accuracy: correct as f64 / order.len() as f64,
            val_accuracy,
        });
    }
    Ok(TrainReport {
        model_kind: model.kind(),
        epochs,
        confusion,
        split,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ModalityMode, Window};

    fn toy_dataset(per_class: &[usize]) -> WindowedDataset {
        let mut windows = Vec::new();
        for (label, &n) in per_class.iter().enumerate() {
            for k in 0..n {
                windows.push(Window {
                    vibration: Some(Tensor::filled(&[4, 1], k as f64)),
                    acoustic: None,
                    label,
                    source_id: format!("rec{label}-{}", k % 3),
                    start: k * 4,
                });
            }
        }
        WindowedDataset {
            windows,
            class_names: (0..per_class.len()).map(|i| format!("c{i}")).collect(),
            mode: ModalityMode::VibrationOnly,
            window_len: 4,
        }
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let (l, g) = cross_entropy(&Tensor::filled(&[9], 1.0 / 9.0), 4).unwrap();
        assert!((l - 9f64.ln()).abs() < 1e-12);
        assert!(g.data().iter().sum::<f64>().abs() < 1e-12);
        let (l, _) = cross_entropy(&Tensor::from_vec(vec![0.5, 0.5]), 0).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&Tensor::from_vec(vec![0.5, 0.5]), 2).is_err());
    }

    #[test]
    fn cross_entropy_floors_zero_probability() {
        let (l, _) = cross_entropy(&Tensor::from_vec(vec![1.0, 0.0]), 1).unwrap();
        assert!((l - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn split_sizes_and_partition() {
        let ds = toy_dataset(&[420, 10, 3]);
        let split = stratified_split(&ds, 0.8, 7, SplitGranularity::Window).unwrap();
        let count = |idx: &[usize], c: usize| idx.iter().filter(|&&i| ds.windows[i].label == c).count();
        assert_eq!(count(&split.train, 0), 336);
        assert_eq!(count(&split.val, 0), 84);
        assert_eq!(count(&split.train, 1), 8);
        assert_eq!(count(&split.train, 2), 2);
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        assert_eq!(split, stratified_split(&ds, 0.8, 7, SplitGranularity::Window).unwrap());
        assert_ne!(split, stratified_split(&ds, 0.8, 8, SplitGranularity::Window).unwrap());
    }

    #[test]
    fn split_keeps_one_for_validation() {
        let ds = toy_dataset(&[2, 2]);
        let split = stratified_split(&ds, 0.99, 1, SplitGranularity::Window).unwrap();
        assert_eq!(split.train.len(), 2);
        assert_eq!(split.val.len(), 2);
    }

    #[test]
    fn split_rejects_tiny_class() {
        let ds = toy_dataset(&[5, 1]);
        let err = stratified_split(&ds, 0.8, 1, SplitGranularity::Window).unwrap_err();
        assert!(err.to_string().contains("c1"), "{err}");
    }

    #[test]
    fn file_split_keeps_recordings_together() {
        let ds = toy_dataset(&[30, 30]);
        let split = stratified_split(&ds, 0.5, 3, SplitGranularity::File).unwrap();
        for &i in &split.train {
            let src = &ds.windows[i].source_id;
            assert!(split.val.iter().all(|&j| &ds.windows[j].source_id != src));
        }
        let one_file = toy_dataset(&[1, 1]);
        assert!(stratified_split(&one_file, 0.5, 3, SplitGranularity::File).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..ok.clone() },
            TrainConfig { batch_size: 0, ..ok.clone() },
            TrainConfig { split_ratio: 1.0, ..ok.clone() },
            TrainConfig { split_ratio: 0.0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn report_text_round_trips_epochs() {
        let report = TrainReport {
            model_kind: ModelKind::Fusion,
            epochs: vec![
                EpochStats { epoch: 1, train_loss: 2.5, train_accuracy: 0.25, val_accuracy: 0.5 },
                EpochStats { epoch: 2, train_loss: 1.25, train_accuracy: 0.5, val_accuracy: 0.75 },
            ],
            confusion: ConfusionMatrix::with_classes(2),
            split: Split { train: vec![0], val: vec![1] },
            wall_seconds: 1.0,
        };
        let text = report.to_text();
        assert_eq!(TrainReport::parse_epochs(&text).unwrap(), report.epochs);
        assert!(text.contains("[timing]"));
        assert!(TrainReport::parse_epochs("nothing").is_err());
    }
}
