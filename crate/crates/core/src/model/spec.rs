use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which of the three architectures to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Conv/pool stack over the vibration channel.
    VibrationCnn,
    /// Conv/pool front end followed by stacked LSTMs over the acoustic channel.
    AcousticCnnLstm,
    /// Both branches side by side, concatenated into a shared dense head.
    Fusion,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::VibrationCnn,
        ModelKind::AcousticCnnLstm,
        ModelKind::Fusion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::VibrationCnn => "vibration_cnn",
            ModelKind::AcousticCnnLstm => "acoustic_cnn_lstm",
            ModelKind::Fusion => "fusion",
        }
    }

    pub fn uses_vibration(self) -> bool {
        matches!(self, ModelKind::VibrationCnn | ModelKind::Fusion)
    }

    pub fn uses_acoustic(self) -> bool {
        matches!(self, ModelKind::AcousticCnnLstm | ModelKind::Fusion)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model kind {s:?} (expected vibration_cnn, acoustic_cnn_lstm or fusion)"
                ))
            })
    }
}

/// Conv1D (+ReLU) followed by max pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
}

impl ConvBlock {
    pub const fn new(filters: usize, kernel: usize, pool: usize) -> Self {
        Self {
            filters,
            kernel,
            pool,
        }
    }
}

impl fmt::Display for ConvBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.filters, self.kernel, self.pool)
    }
}

impl FromStr for ConvBlock {
    type Err = Error;

    /// `filters:kernel:pool`, e.g. `16:7:2`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(':')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad conv block {s:?}")))?;
        match parts[..] {
            [filters, kernel, pool] => Ok(ConvBlock::new(filters, kernel, pool)),
            _ => Err(Error::Config(format!(
                "conv block {s:?} must be filters:kernel:pool"
            ))),
        }
    }
}

pub const DEFAULT_INPUT_LEN: usize = 1000;

/// Declarative description of a network; every hyperparameter is overridable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub num_classes: usize,
    pub input_len: usize,
    pub vibration_convs: Vec<ConvBlock>,
    pub acoustic_convs: Vec<ConvBlock>,
    pub lstm_units: Vec<usize>,
    pub dense_units: usize,
}

impl ModelSpec {
    /// Default stacks: vibration 16/7, 32/5, 64/3 with pool 2; acoustic 16/7, 32/5
    /// with pool 2 then LSTM 64, 64; dense 32.
    pub fn new(kind: ModelKind, num_classes: usize) -> Self {
        Self {
            kind,
            num_classes,
            input_len: DEFAULT_INPUT_LEN,
            vibration_convs: vec![
                ConvBlock::new(16, 7, 2),
                ConvBlock::new(32, 5, 2),
                ConvBlock::new(64, 3, 2),
            ],
            acoustic_convs: vec![ConvBlock::new(16, 7, 2), ConvBlock::new(32, 5, 2)],
            lstm_units: vec![64, 64],
            dense_units: 32,
        }
    }

    /// Same topology as [`ModelSpec::new`] with narrower layers and pool 4 in
    /// the first two blocks: vibration 8:7:4, 16:5:4, 16:3:2; acoustic 8:7:4,
    /// 16:5:4 then LSTM 16, 16; dense 32. Meant for single-core runs.
    pub fn compact(kind: ModelKind, num_classes: usize) -> Self {
        Self {
            vibration_convs: vec![
                ConvBlock::new(8, 7, 4),
                ConvBlock::new(16, 5, 4),
                ConvBlock::new(16, 3, 2),
            ],
            acoustic_convs: vec![ConvBlock::new(8, 7, 4), ConvBlock::new(16, 5, 4)],
            lstm_units: vec![16, 16],
            ..Self::new(kind, num_classes)
        }
    }

    pub fn with_kind(&self, kind: ModelKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.dense_units == 0 {
            return Err(Error::Config("dense_units must be >= 1".into()));
        }
        let blocks = self.vibration_convs.iter().chain(&self.acoustic_convs);
        for b in blocks {
            if b.filters == 0 || b.kernel == 0 || b.pool < 2 {
                return Err(Error::Config(format!(
                    "conv block {b} needs filters >= 1, kernel >= 1, pool >= 2"
                )));
            }
        }
        if self.kind.uses_acoustic() && self.lstm_units.is_empty() {
            return Err(Error::Config("acoustic branch needs at least one LSTM layer".into()));
        }
        if self.lstm_units.contains(&0) {
            return Err(Error::Config("lstm units must be >= 1".into()));
        }
        self.shape_chain().map(|_| ())
    }

    /// Sequence lengths through each branch plus the flattened widths.
    pub fn shape_chain(&self) -> Result<ShapeChain> {
        let vibration = if self.kind.uses_vibration() {
            Some(conv_chain("vibration", self.input_len, &self.vibration_convs)?)
        } else {
            None
        };
        let acoustic = if self.kind.uses_acoustic() {
            Some(conv_chain("acoustic", self.input_len, &self.acoustic_convs)?)
        } else {
            None
        };
        let vibration_width = vibration.as_ref().map(|lens| {
            lens.last().copied().unwrap_or(self.input_len)
                * self.vibration_convs.last().map_or(1, |b| b.filters)
        });
        let acoustic_width = acoustic.as_ref().map(|lens| {
            lens.last().copied().unwrap_or(self.input_len) * self.lstm_units.last().copied().unwrap_or(1)
        });
        Ok(ShapeChain {
            vibration,
            acoustic,
            vibration_width,
            acoustic_width,
        })
    }
}

/// Per-branch time lengths after every conv and pool, in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeChain {
    pub vibration: Option<Vec<usize>>,
    pub acoustic: Option<Vec<usize>>,
    pub vibration_width: Option<usize>,
    pub acoustic_width: Option<usize>,
}

impl ShapeChain {
    pub fn head_width(&self) -> usize {
        self.vibration_width.unwrap_or(0) + self.acoustic_width.unwrap_or(0)
    }
}

fn conv_chain(branch: &str, input_len: usize, blocks: &[ConvBlock]) -> Result<Vec<usize>> {
    let mut len = input_len;
    let mut lens = Vec::with_capacity(blocks.len() * 2);
    for (i, b) in blocks.iter().enumerate() {
        if len < b.kernel {
            return Err(Error::Config(format!(
                "{branch} conv1d #{} (kernel {}) needs input length >= {}, got {len}",
                i + 1,
                b.kernel,
                b.kernel
            )));
        }
        len = len - b.kernel + 1;
        lens.push(len);
        if len < b.pool {
            return Err(Error::Config(format!(
                "{branch} maxpool #{} (pool {}) needs input length >= {}, got {len}",
                i + 1,
                b.pool,
                b.pool
            )));
        }
        len /= b.pool;
        lens.push(len);
    }
    Ok(lens)
}
