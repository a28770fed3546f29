use std::collections::{BTreeMap, BTreeSet};

use fdiag::data::{synth_dataset, ModalityMode, SynthSpec, Window, WindowedDataset};
use fdiag::training::{batch_gradients, evaluate_with, stratified_split, SplitGranularity};
use fdiag::{fit, Execution, Model, ModelKind, ModelSpec, Rng, Tensor, TrainConfig};
use proptest::prelude::*;

fn labeled(counts: &[usize], files_per_class: usize) -> WindowedDataset {
    let mut windows = Vec::new();
    for (label, &n) in counts.iter().enumerate() {
        for k in 0..n {
            windows.push(Window {
                vibration: Some(Tensor::filled(&[2, 1], 0.0)),
                acoustic: None,
                label,
                source_id: format!("c{label}f{}", k % files_per_class),
                start: k * 2,
            });
        }
    }
    WindowedDataset {
        windows,
        class_names: (0..counts.len()).map(|c| format!("c{c}")).collect(),
        mode: ModalityMode::VibrationOnly,
        window_len: 2,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn window_split_is_stratified_partition(
        counts in prop::collection::vec(2usize..60, 2..6),
        ratio in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let ds = labeled(&counts, 1);
        let split = stratified_split(&ds, ratio, seed, SplitGranularity::Window).unwrap();
        let train: BTreeSet<usize> = split.train.iter().copied().collect();
        let val: BTreeSet<usize> = split.val.iter().copied().collect();
        prop_assert!(train.is_disjoint(&val));
        prop_assert_eq!(train.len() + val.len(), ds.len());
        prop_assert!(split.train.windows(2).all(|w| w[0] < w[1]));
        for (c, &n) in counts.iter().enumerate() {
            let expected = ((ratio * n as f64).floor() as usize).clamp(1, n - 1);
            let got = split.train.iter().filter(|&&i| ds.windows[i].label == c).count();
            prop_assert_eq!(got, expected);
        }
        prop_assert_eq!(&split, &stratified_split(&ds, ratio, seed, SplitGranularity::Window).unwrap());
    }

    #[test]
    fn file_split_never_divides_a_recording(seed in any::<u64>()) {
        let ds = labeled(&[30, 30, 30], 5);
        let split = stratified_split(&ds, 0.8, seed, SplitGranularity::File).unwrap();
        let mut side: BTreeMap<&str, bool> = BTreeMap::new();
        for (idx, is_train) in split.train.iter().map(|&i| (i, true)).chain(split.val.iter().map(|&i| (i, false))) {
            let prev = side.insert(ds.windows[idx].source_id.as_str(), is_train);
            prop_assert!(prev.is_none() || prev == Some(is_train));
        }
    }
}

fn small_data() -> WindowedDataset {
    let mut spec = SynthSpec::new(3, 12, 4);
    spec.window_len = 128;
    synth_dataset(&spec).unwrap()
}

fn small_model(kind: ModelKind) -> Model {
    let mut spec = ModelSpec::compact(kind, 3);
    spec.input_len = 128;
    Model::build(&spec, &mut Rng::new(8)).unwrap()
}

#[test]
fn sequential_and_parallel_gradients_are_bit_identical() {
    let data = small_data();
    let batch: Vec<usize> = (0..data.len()).rev().collect();
    for kind in ModelKind::ALL {
        let model = small_model(kind);
        let a = batch_gradients(&model, &data, &batch, Execution::Sequential).unwrap();
        let b = batch_gradients(&model, &data, &batch, Execution::Parallel).unwrap();
        assert_eq!(a.mean_loss.to_bits(), b.mean_loss.to_bits());
        assert_eq!(a.correct, b.correct);
        assert_eq!(a.grads, b.grads, "{kind}");
        let ea = evaluate_with(&model, &data, &batch, Execution::Sequential).unwrap();
        let eb = evaluate_with(&model, &data, &batch, Execution::Parallel).unwrap();
        assert_eq!(ea, eb);
    }
}

#[test]
fn training_is_identical_under_both_executions() {
    let data = small_data();
    let run = |execution| {
        let mut model = small_model(ModelKind::Fusion);
        let config = TrainConfig {
            epochs: 2,
            batch_size: 8,
            execution,
            ..TrainConfig::default()
        };
        let report = fit(&mut model, &data, &config).unwrap();
        (model.params().into_iter().cloned().collect::<Vec<_>>(), report.epochs, report.confusion)
    };
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}

#[test]
fn fit_rejects_missing_modality_and_class_mismatch() {
    let data = labeled(&[4, 4], 1);
    let mut spec = ModelSpec::compact(ModelKind::AcousticCnnLstm, 2);
    spec.input_len = 2;
    assert!(spec.validate().is_err());
    let mut model = small_model(ModelKind::Fusion);
    let vib_only = WindowedDataset {
        mode: ModalityMode::VibrationOnly,
        ..small_data()
    };
    assert!(fit(&mut model, &vib_only, &TrainConfig::default()).is_err());
    let two_class = data;
    let mut vib_model = small_model(ModelKind::VibrationCnn);
    assert!(fit(&mut vib_model, &two_class, &TrainConfig::default()).is_err());
}
