//! The three diagnosis networks assembled from [`crate::layers`].

mod io;
mod spec;

pub use io::{load_model, read_model, save_model, write_model, MAGIC};
pub use spec::{ConvBlock, ModelKind, ModelSpec, ShapeChain, DEFAULT_INPUT_LEN};

use crate::error::{Error, Result};
use crate::layers::{
    concat, softmax_slice, split_concat, Conv1d, Dense, Layer, LayerCache, Lstm, MaxPool1d,
};
use crate::tensor::{Rng, Tensor};

/// An instantiated network. Single-modality models carry one branch; the fused
/// model carries both, merged by concatenation in `(vibration, acoustic)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    class_names: Vec<String>,
    vibration: Vec<Layer>,
    acoustic: Vec<Layer>,
    head: Vec<Layer>,
}

/// Everything the backward pass needs from one forward call.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    vibration: Vec<LayerCache>,
    acoustic: Vec<LayerCache>,
    head: Vec<LayerCache>,
    vibration_width: usize,
    probs: Vec<f64>,
}

impl ForwardCache {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Parameter gradients, one tensor per entry of [`Model::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Shape("gradient sets differ in length".into()));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        for t in &mut self.tensors {
            t.scale(k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

pub fn build_vibration_model(spec: &ModelSpec, rng: &mut Rng) -> Result<Model> {
    expect_kind(spec, ModelKind::VibrationCnn)?;
    Model::build(spec, rng)
}

pub fn build_acoustic_model(spec: &ModelSpec, rng: &mut Rng) -> Result<Model> {
    expect_kind(spec, ModelKind::AcousticCnnLstm)?;
    Model::build(spec, rng)
}

pub fn build_fusion_model(spec: &ModelSpec, rng: &mut Rng) -> Result<Model> {
    expect_kind(spec, ModelKind::Fusion)?;
    Model::build(spec, rng)
}

fn expect_kind(spec: &ModelSpec, kind: ModelKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Config(format!(
            "expected a {kind} spec, got {}",
            spec.kind
        )));
    }
    Ok(())
}

impl Model {
    /// Builds whichever architecture `spec.kind` names. Parameters are drawn
    /// from `rng` in the order vibration branch, acoustic branch, head.
    pub fn build(spec: &ModelSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let chain = spec.shape_chain()?;
        let vibration = if spec.kind.uses_vibration() {
            conv_stack(&spec.vibration_convs, rng)?
                .into_iter()
                .chain([Layer::Flatten])
                .collect()
        } else {
            Vec::new()
        };
        let acoustic = if spec.kind.uses_acoustic() {
            let mut layers = conv_stack(&spec.acoustic_convs, rng)?;
            let mut channels = spec.acoustic_convs.last().map_or(1, |b| b.filters);
            // Every LSTM returns sequences; the flatten consumes the last one.
            for &units in &spec.lstm_units {
                layers.push(Layer::Lstm(Lstm::new(channels, units, true, rng)?));
                channels = units;
            }
            layers.push(Layer::Flatten);
            layers
        } else {
            Vec::new()
        };
        let head = vec![
            Layer::Dense(Dense::new(chain.head_width(), spec.dense_units, rng)?),
            Layer::Relu,
            Layer::Dense(Dense::new(spec.dense_units, spec.num_classes, rng)?),
        ];
        Ok(Self {
            spec: spec.clone(),
            class_names: (1..=spec.num_classes).map(|i| format!("Class {i}")).collect(),
            vibration,
            acoustic,
            head,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Display names of the output classes (`Class 1`, `Class 2`, ... until set).
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn set_class_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.spec.num_classes {
            return Err(Error::Config(format!(
                "{} class names for a {}-class model",
                names.len(),
                self.spec.num_classes
            )));
        }
        if let Some(bad) = names.iter().find(|n| n.is_empty() || n.contains(['|', '\n'])) {
            return Err(Error::Config(format!("invalid class name {bad:?}")));
        }
        self.class_names = names;
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn vibration_branch(&self) -> &[Layer] {
        &self.vibration
    }

    pub fn acoustic_branch(&self) -> &[Layer] {
        &self.acoustic
    }

    pub fn head(&self) -> &[Layer] {
        &self.head
    }

    /// Mutable access to the acoustic branch, e.g. for ablations.
    pub fn acoustic_branch_mut(&mut self) -> &mut [Layer] {
        &mut self.acoustic
    }

    pub fn vibration_branch_mut(&mut self) -> &mut [Layer] {
        &mut self.vibration
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.vibration.iter().chain(&self.acoustic).chain(&self.head)
    }

    /// All parameter tensors in a fixed order (vibration, acoustic, head).
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.vibration
            .iter_mut()
            .chain(&mut self.acoustic)
            .chain(&mut self.head)
            .flat_map(Layer::params_mut)
            .collect()
    }

    /// Parameter names matching [`Model::params`], e.g. `acoustic.5.lstm.1`.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (section, layers) in [
            ("vibration", &self.vibration),
            ("acoustic", &self.acoustic),
            ("head", &self.head),
        ] {
            for (i, layer) in layers.iter().enumerate() {
                for j in 0..layer.params().len() {
                    names.push(format!("{section}.{i}.{}.{j}", layer.name()));
                }
            }
        }
        names
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            tensors: self.params().into_iter().map(Tensor::zeros_like).collect(),
        }
    }

    /// Class posteriors for one window. A single-modality model ignores the
    /// other input when it is supplied.
    pub fn forward(
        &self,
        vibration: Option<&Tensor>,
        acoustic: Option<&Tensor>,
    ) -> Result<(Tensor, ForwardCache)> {
        let (vib_in, ac_in) = match (self.kind(), vibration, acoustic) {
            (ModelKind::Fusion, Some(v), Some(a)) => (Some(v), Some(a)),
            (ModelKind::Fusion, _, _) => {
                return Err(Error::Data("fusion requires both inputs".into()))
            }
            (ModelKind::VibrationCnn, Some(v), _) => (Some(v), None),
            (ModelKind::VibrationCnn, None, _) => {
                return Err(Error::Data("vibration_cnn requires a vibration input".into()))
            }
            (ModelKind::AcousticCnnLstm, _, Some(a)) => (None, Some(a)),
            (ModelKind::AcousticCnnLstm, _, None) => {
                return Err(Error::Data("acoustic_cnn_lstm requires an acoustic input".into()))
            }
        };
        let mut cache = ForwardCache {
            vibration: Vec::with_capacity(self.vibration.len()),
            acoustic: Vec::with_capacity(self.acoustic.len()),
            head: Vec::with_capacity(self.head.len()),
            vibration_width: 0,
            probs: Vec::new(),
        };
        let vib_out = vib_in
            .map(|x| run_stack(&self.vibration, self.check_input(x)?, &mut cache.vibration))
            .transpose()?;
        let ac_out = ac_in
            .map(|x| run_stack(&self.acoustic, self.check_input(x)?, &mut cache.acoustic))
            .transpose()?;
        let merged = match (vib_out, ac_out) {
            (Some(v), Some(a)) => {
                cache.vibration_width = v.len();
                concat(&v, &a)?
            }
            (Some(v), None) => {
                cache.vibration_width = v.len();
                v
            }
            (None, Some(a)) => a,
            (None, None) => unreachable!("kind always selects a branch"),
        };
        let logits = run_stack(&self.head, &merged, &mut cache.head)?;
        cache.probs = softmax_slice(logits.data());
        let probs = Tensor::from_vec(cache.probs.clone());
        Ok((probs, cache))
    }

    /// Posteriors only, without keeping caches.
    pub fn predict(&self, vibration: Option<&Tensor>, acoustic: Option<&Tensor>) -> Result<Tensor> {
        self.forward(vibration, acoustic).map(|(p, _)| p)
    }

    fn check_input<'a>(&self, x: &'a Tensor) -> Result<&'a Tensor> {
        if x.shape() != [self.spec.input_len, 1] {
            return Err(Error::Shape(format!(
                "model expects input [{}, 1], got {:?}",
                self.spec.input_len,
                x.shape()
            )));
        }
        Ok(x)
    }

    /// Gradients of the loss given its gradient w.r.t. the pre-softmax logits.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Tensor) -> Result<Gradients> {
        let mut grads = self.zero_gradients();
        self.backward_into(cache, grad_logits, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Model::backward`] but adds into an existing accumulator.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        grad_logits: &Tensor,
        grads: &mut Gradients,
    ) -> Result<()> {
        if grad_logits.shape() != [self.num_classes()] {
            return Err(Error::Shape(format!(
                "logit gradient {:?} for {} classes",
                grad_logits.shape(),
                self.num_classes()
            )));
        }
        if cache.head.len() != self.head.len() {
            return Err(Error::Shape("cache does not match this model".into()));
        }
        let n_vib: usize = self.vibration.iter().map(|l| l.params().len()).sum();
        let n_ac: usize = self.acoustic.iter().map(|l| l.params().len()).sum();
        if grads.tensors.len() != self.params().len() {
            return Err(Error::Shape("gradient set does not match this model".into()));
        }
        let (g_vib, rest) = grads.tensors.split_at_mut(n_vib);
        let (g_ac, g_head) = rest.split_at_mut(n_ac);

        let g_merged = back_stack(&self.head, &cache.head, grad_logits.clone(), g_head)?;
        let used_vib = !cache.vibration.is_empty();
        let used_ac = !cache.acoustic.is_empty();
        match (used_vib, used_ac) {
            (true, true) => {
                let (gv, ga) = split_concat(&g_merged, cache.vibration_width)?;
                back_stack(&self.vibration, &cache.vibration, gv, g_vib)?;
                back_stack(&self.acoustic, &cache.acoustic, ga, g_ac)?;
            }
            (true, false) => {
                back_stack(&self.vibration, &cache.vibration, g_merged, g_vib)?;
            }
            (false, true) => {
                back_stack(&self.acoustic, &cache.acoustic, g_merged, g_ac)?;
            }
            (false, false) => return Err(Error::Shape("empty forward cache".into())),
        }
        Ok(())
    }
}

fn conv_stack(blocks: &[ConvBlock], rng: &mut Rng) -> Result<Vec<Layer>> {
    let mut layers = Vec::with_capacity(blocks.len() * 3);
    let mut channels = 1;
    for b in blocks {
        layers.push(Layer::Conv1d(Conv1d::new(b.kernel, channels, b.filters, rng)?));
        layers.push(Layer::Relu);
        layers.push(Layer::MaxPool(MaxPool1d::new(b.pool)?));
        channels = b.filters;
    }
    Ok(layers)
}

fn run_stack(layers: &[Layer], x: &Tensor, caches: &mut Vec<LayerCache>) -> Result<Tensor> {
    let mut iter = layers.iter();
    let Some(first) = iter.next() else {
        return Ok(x.clone());
    };
    let (mut y, c) = first.forward(x)?;
    caches.push(c);
    for layer in iter {
        let (next, c) = layer.forward(&y)?;
        caches.push(c);
        y = next;
    }
    Ok(y)
}

fn back_stack(
    layers: &[Layer],
    caches: &[LayerCache],
    mut grad: Tensor,
    grads: &mut [Tensor],
) -> Result<Tensor> {
    if layers.len() != caches.len() {
        return Err(Error::Shape("stale cache: layer count differs".into()));
    }
    let mut end = grads.len();
    for (layer, cache) in layers.iter().zip(caches).rev() {
        let n = layer.params().len();
        let start = end - n;
        grad = layer.backward_into(cache, &grad, &mut grads[start..end])?;
        end = start;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: ModelKind) -> ModelSpec {
        ModelSpec {
            kind,
            num_classes: 3,
            input_len: 32,
            vibration_convs: vec![ConvBlock::new(2, 3, 2), ConvBlock::new(3, 3, 2)],
            acoustic_convs: vec![ConvBlock::new(2, 3, 2)],
            lstm_units: vec![3, 2],
            dense_units: 4,
        }
    }

    fn window(len: usize, rng: &mut Rng) -> Tensor {
        Tensor::new((0..len).map(|_| rng.normal()).collect(), &[len, 1]).unwrap()
    }

    #[test]
    fn default_vibration_outputs_nine_probs() {
        let spec = ModelSpec::new(ModelKind::VibrationCnn, 9);
        let mut rng = Rng::new(1);
        let model = build_vibration_model(&spec, &mut rng).unwrap();
        let x = window(1000, &mut rng);
        let p = model.predict(Some(&x), None).unwrap();
        assert_eq!(p.shape(), &[9]);
        assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        match &model.head()[0] {
            Layer::Dense(d) => assert_eq!(d.in_dim(), 7808),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn acoustic_lstm_follows_conv_channels() {
        let spec = ModelSpec::new(ModelKind::AcousticCnnLstm, 9);
        let model = build_acoustic_model(&spec, &mut Rng::new(2)).unwrap();
        let lstm = model
            .acoustic_branch()
            .iter()
            .find_map(|l| match l {
                Layer::Lstm(l) => Some(l),
                _ => None,
            })
            .unwrap();
        assert_eq!(lstm.in_channels(), 32);
        assert_eq!(lstm.units(), 64);
    }

    #[test]
    fn builders_check_kind() {
        let spec = tiny(ModelKind::Fusion);
        assert!(build_vibration_model(&spec, &mut Rng::new(0)).is_err());
        assert!(build_fusion_model(&spec, &mut Rng::new(0)).is_ok());
        let mut short = ModelSpec::new(ModelKind::VibrationCnn, 9);
        short.input_len = 6;
        assert!(build_vibration_model(&short, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn fusion_concat_width() {
        let spec = tiny(ModelKind::Fusion);
        let model = build_fusion_model(&spec, &mut Rng::new(3)).unwrap();
        let chain = spec.shape_chain().unwrap();
        let Layer::Dense(d) = &model.head()[0] else { panic!() };
        assert_eq!(
            d.in_dim(),
            chain.vibration_width.unwrap() + chain.acoustic_width.unwrap()
        );
    }

    #[test]
    fn fusion_requires_both_inputs() {
        let model = build_fusion_model(&tiny(ModelKind::Fusion), &mut Rng::new(3)).unwrap();
        let x = window(32, &mut Rng::new(1));
        let err = model.forward(Some(&x), None).unwrap_err();
        assert!(err.to_string().contains("fusion requires both inputs"));
    }

    #[test]
    fn zeroed_acoustic_branch_ignores_acoustic_input() {
        let mut model = build_fusion_model(&tiny(ModelKind::Fusion), &mut Rng::new(4)).unwrap();
        for layer in model.acoustic_branch_mut() {
            for p in layer.params_mut() {
                p.fill(0.0);
            }
        }
        let mut rng = Rng::new(5);
        let v = window(32, &mut rng);
        let a1 = window(32, &mut rng);
        let a2 = window(32, &mut rng);
        let p1 = model.predict(Some(&v), Some(&a1)).unwrap();
        let p2 = model.predict(Some(&v), Some(&a2)).unwrap();
        assert_eq!(p1, p2);
        assert!((p1.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_build_and_forward() {
        let spec = tiny(ModelKind::AcousticCnnLstm);
        let a = Model::build(&spec, &mut Rng::new(9)).unwrap();
        let b = Model::build(&spec, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        let x = window(32, &mut Rng::new(1));
        let pa = a.predict(None, Some(&x)).unwrap();
        assert_eq!(pa, b.predict(None, Some(&x)).unwrap());
        assert!(pa.argmax() < 3);
    }

    #[test]
    fn param_bookkeeping() {
        let model = Model::build(&tiny(ModelKind::Fusion), &mut Rng::new(1)).unwrap();
        assert_eq!(model.params().len(), model.param_names().len());
        assert_eq!(model.zero_gradients().tensors.len(), model.params().len());
        assert!(model.param_names().iter().any(|n| n.starts_with("acoustic.3.lstm")));
    }

    #[test]
    fn zero_logit_gradient_gives_zero_gradients() {
        let model = Model::build(&tiny(ModelKind::Fusion), &mut Rng::new(1)).unwrap();
        let mut rng = Rng::new(2);
        let (v, a) = (window(32, &mut rng), window(32, &mut rng));
        let (_, cache) = model.forward(Some(&v), Some(&a)).unwrap();
        let g = model.backward(&cache, &Tensor::zeros(&[3])).unwrap();
        assert!(g.tensors.iter().all(|t| t.data().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn stale_cache_rejected() {
        let fusion = Model::build(&tiny(ModelKind::Fusion), &mut Rng::new(1)).unwrap();
        let vib = Model::build(&tiny(ModelKind::VibrationCnn), &mut Rng::new(1)).unwrap();
        let x = window(32, &mut Rng::new(2));
        let (_, cache) = vib.forward(Some(&x), None).unwrap();
        assert!(fusion.backward(&cache, &Tensor::zeros(&[3])).is_err());
    }
}
