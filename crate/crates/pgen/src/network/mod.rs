//! Network architectures: recurrent cells (GRU, LSTM), dropout, and dense
//! layers, arranged into the two presets.
//!
//! The `baseline` preset is recurrent -> dropout -> dense. The `deep`
//! preset is recurrent -> dropout -> recurrent -> dropout -> dense ->
//! dense -> dense, with relu on the first two dense layers and a linear
//! output feeding softmax.

mod cells;
mod forward;

pub use cells::{gru_step, lstm_step, GruStepCache, LstmStepCache};
pub use forward::{apply_dropout, forward_window, predict, Phase, Tape};

pub(crate) use cells::{gru_backward_step, lstm_backward_step, StepCache, StepInput};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Baseline,
    Deep,
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Baseline => "baseline",
            Preset::Deep => "deep",
        })
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Preset::Baseline),
            "deep" => Ok(Preset::Deep),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset {other:?} (expected baseline or deep)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Gru,
    Lstm,
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        })
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::InvalidArgument(format!(
                "unknown cell {other:?} (expected gru or lstm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

/// One entry of the architecture listing; see [`NetworkConfig::layers`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Recurrent { input: usize, hidden: usize },
    Dropout { rate: f64 },
    Dense { input: usize, output: usize, activation: Activation },
}

/// Architecture preset, layer sizes, dropout rate, and window length.
///
/// `hidden2`, `dense1`, and `dense2` are only meaningful for the deep
/// preset; the baseline constructor leaves them at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub preset: Preset,
    pub cell: CellKind,
    pub vocab_size: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub dense1: usize,
    pub dense2: usize,
    pub dropout: f64,
    pub window: usize,
}

impl NetworkConfig {
    /// Baseline preset with default sizes: one recurrent layer of 256
    /// units, dropout 0.2, linear output.
    pub fn baseline(vocab_size: usize, window: usize) -> Self {
        NetworkConfig {
            preset: Preset::Baseline,
            cell: CellKind::Lstm,
            vocab_size,
            hidden1: 256,
            hidden2: 0,
            dense1: 0,
            dense2: 0,
            dropout: 0.2,
            window,
        }
    }

    /// Deep preset with default sizes: two recurrent layers of 256 units,
    /// two relu dense layers of 128 units, dropout 0.2.
    pub fn deep(vocab_size: usize, window: usize) -> Self {
        NetworkConfig {
            preset: Preset::Deep,
            cell: CellKind::Gru,
            vocab_size,
            hidden1: 256,
            hidden2: 256,
            dense1: 128,
            dense2: 128,
            dropout: 0.2,
            window,
        }
    }

    pub fn with_cell(mut self, cell: CellKind) -> Self {
        self.cell = cell;
        self
    }

    /// Sets the recurrent width (both layers for the deep preset).
    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden1 = hidden;
        if self.preset == Preset::Deep {
            self.hidden2 = hidden;
        }
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::InvalidArgument("vocab_size must be positive".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidArgument("window length must be positive".into()));
        }
        if self.hidden1 == 0 {
            return Err(Error::InvalidArgument("hidden size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.preset == Preset::Deep && (self.hidden2 == 0 || self.dense1 == 0 || self.dense2 == 0)
        {
            return Err(Error::InvalidArgument(
                "deep preset needs positive hidden2, dense1, dense2".into(),
            ));
        }
        Ok(())
    }

    /// The layer listing in architectural order: three entries for the
    /// baseline preset, seven for the deep preset.
    pub fn layers(&self) -> Vec<LayerKind> {
        let v = self.vocab_size;
        match self.preset {
            Preset::Baseline => vec![
                LayerKind::Recurrent { input: v, hidden: self.hidden1 },
                LayerKind::Dropout { rate: self.dropout },
                LayerKind::Dense { input: self.hidden1, output: v, activation: Activation::Linear },
            ],
            Preset::Deep => vec![
                LayerKind::Recurrent { input: v, hidden: self.hidden1 },
                LayerKind::Dropout { rate: self.dropout },
                LayerKind::Recurrent { input: self.hidden1, hidden: self.hidden2 },
                LayerKind::Dropout { rate: self.dropout },
                LayerKind::Dense { input: self.hidden2, output: self.dense1, activation: Activation::Relu },
                LayerKind::Dense { input: self.dense1, output: self.dense2, activation: Activation::Relu },
                LayerKind::Dense { input: self.dense2, output: v, activation: Activation::Linear },
            ],
        }
    }

    /// Total scalar parameter count implied by the config.
    pub fn param_count(&self) -> usize {
        let gates = match self.cell {
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        };
        self.layers()
            .iter()
            .map(|l| match *l {
                LayerKind::Recurrent { input, hidden } => {
                    gates * (hidden * input + hidden * hidden + hidden)
                }
                LayerKind::Dropout { .. } => 0,
                LayerKind::Dense { input, output, .. } => output * input + output,
            })
            .sum()
    }
}

/// GRU gate parameters: input-to-hidden `w_*` (hidden x input),
/// hidden-to-hidden `u_*` (hidden x hidden), biases `b_*` (hidden x 1).
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams {
    pub w_update: Tensor2,
    pub w_reset: Tensor2,
    pub w_cand: Tensor2,
    pub u_update: Tensor2,
    pub u_reset: Tensor2,
    pub u_cand: Tensor2,
    pub b_update: Tensor2,
    pub b_reset: Tensor2,
    pub b_cand: Tensor2,
}

impl GruLayerParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        GruLayerParams {
            w_update: Tensor2::zeros(hidden, input),
            w_reset: Tensor2::zeros(hidden, input),
            w_cand: Tensor2::zeros(hidden, input),
            u_update: Tensor2::zeros(hidden, hidden),
            u_reset: Tensor2::zeros(hidden, hidden),
            u_cand: Tensor2::zeros(hidden, hidden),
            b_update: Tensor2::zeros(hidden, 1),
            b_reset: Tensor2::zeros(hidden, 1),
            b_cand: Tensor2::zeros(hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_update.rows()
    }

    pub fn input(&self) -> usize {
        self.w_update.cols()
    }
}

/// LSTM gate parameters for the input, forget, output, and candidate
/// gates, in the same w/u/b layout as [`GruLayerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub w_input: Tensor2,
    pub w_forget: Tensor2,
    pub w_output: Tensor2,
    pub w_cand: Tensor2,
    pub u_input: Tensor2,
    pub u_forget: Tensor2,
    pub u_output: Tensor2,
    pub u_cand: Tensor2,
    pub b_input: Tensor2,
    pub b_forget: Tensor2,
    pub b_output: Tensor2,
    pub b_cand: Tensor2,
}

impl LstmLayerParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayerParams {
            w_input: Tensor2::zeros(hidden, input),
            w_forget: Tensor2::zeros(hidden, input),
            w_output: Tensor2::zeros(hidden, input),
            w_cand: Tensor2::zeros(hidden, input),
            u_input: Tensor2::zeros(hidden, hidden),
            u_forget: Tensor2::zeros(hidden, hidden),
            u_output: Tensor2::zeros(hidden, hidden),
            u_cand: Tensor2::zeros(hidden, hidden),
            b_input: Tensor2::zeros(hidden, 1),
            b_forget: Tensor2::zeros(hidden, 1),
            b_output: Tensor2::zeros(hidden, 1),
            b_cand: Tensor2::zeros(hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_input.rows()
    }

    pub fn input(&self) -> usize {
        self.w_input.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecurrentParams {
    Gru(GruLayerParams),
    Lstm(LstmLayerParams),
}

impl RecurrentParams {
    fn zeros(cell: CellKind, input: usize, hidden: usize) -> Self {
        match cell {
            CellKind::Gru => RecurrentParams::Gru(GruLayerParams::zeros(input, hidden)),
            CellKind::Lstm => RecurrentParams::Lstm(LstmLayerParams::zeros(input, hidden)),
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            RecurrentParams::Gru(p) => p.hidden(),
            RecurrentParams::Lstm(p) => p.hidden(),
        }
    }

    pub fn input(&self) -> usize {
        match self {
            RecurrentParams::Gru(p) => p.input(),
            RecurrentParams::Lstm(p) => p.input(),
        }
    }

    fn named_fields(&self) -> Vec<(&'static str, &Tensor2)> {
        match self {
            RecurrentParams::Gru(p) => vec![
                ("w_update", &p.w_update),
                ("w_reset", &p.w_reset),
                ("w_cand", &p.w_cand),
                ("u_update", &p.u_update),
                ("u_reset", &p.u_reset),
                ("u_cand", &p.u_cand),
                ("b_update", &p.b_update),
                ("b_reset", &p.b_reset),
                ("b_cand", &p.b_cand),
            ],
            RecurrentParams::Lstm(p) => vec![
                ("w_input", &p.w_input),
                ("w_forget", &p.w_forget),
                ("w_output", &p.w_output),
                ("w_cand", &p.w_cand),
                ("u_input", &p.u_input),
                ("u_forget", &p.u_forget),
                ("u_output", &p.u_output),
                ("u_cand", &p.u_cand),
                ("b_input", &p.b_input),
                ("b_forget", &p.b_forget),
                ("b_output", &p.b_output),
                ("b_cand", &p.b_cand),
            ],
        }
    }

    fn named_fields_mut(&mut self) -> Vec<(&'static str, &mut Tensor2)> {
        match self {
            RecurrentParams::Gru(p) => vec![
                ("w_update", &mut p.w_update),
                ("w_reset", &mut p.w_reset),
                ("w_cand", &mut p.w_cand),
                ("u_update", &mut p.u_update),
                ("u_reset", &mut p.u_reset),
                ("u_cand", &mut p.u_cand),
                ("b_update", &mut p.b_update),
                ("b_reset", &mut p.b_reset),
                ("b_cand", &mut p.b_cand),
            ],
            RecurrentParams::Lstm(p) => vec![
                ("w_input", &mut p.w_input),
                ("w_forget", &mut p.w_forget),
                ("w_output", &mut p.w_output),
                ("w_cand", &mut p.w_cand),
                ("u_input", &mut p.u_input),
                ("u_forget", &mut p.u_forget),
                ("u_output", &mut p.u_output),
                ("u_cand", &mut p.u_cand),
                ("b_input", &mut p.b_input),
                ("b_forget", &mut p.b_forget),
                ("b_output", &mut p.b_output),
                ("b_cand", &mut p.b_cand),
            ],
        }
    }
}

/// Dense layer: `weight` is output x input, `bias` is output x 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weight: Tensor2,
    pub bias: Tensor2,
    pub activation: Activation,
}

impl DenseParams {
    fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        DenseParams {
            weight: Tensor2::zeros(output, input),
            bias: Tensor2::zeros(output, 1),
            activation,
        }
    }

    pub fn output(&self) -> usize {
        self.weight.rows()
    }

    pub fn input(&self) -> usize {
        self.weight.cols()
    }
}

/// Every weight and bias tensor of a network, in architectural order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub recurrent1: RecurrentParams,
    pub recurrent2: Option<RecurrentParams>,
    pub dense: Vec<DenseParams>,
}

impl NetworkParams {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut recurrent = Vec::new();
        let mut dense = Vec::new();
        for layer in config.layers() {
            match layer {
                LayerKind::Recurrent { input, hidden } => {
                    recurrent.push(RecurrentParams::zeros(config.cell, input, hidden));
                }
                LayerKind::Dense { input, output, activation } => {
                    dense.push(DenseParams::zeros(input, output, activation));
                }
                LayerKind::Dropout { .. } => {}
            }
        }
        let mut it = recurrent.into_iter();
        Ok(NetworkParams {
            recurrent1: it.next().expect("every preset has a recurrent layer"),
            recurrent2: it.next(),
            dense,
        })
    }

    /// Glorot-uniform weights, zero biases. The fill order is fixed
    /// (tensor order as listed by [`NetworkParams::tensors`], row-major
    /// within each tensor), so the result is deterministic given the seed.
    pub fn init(config: &NetworkConfig, rng: &mut Rng) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        for (name, t) in params.tensors_mut() {
            if is_bias(&name) {
                continue;
            }
            // Weight matrices are (fan_out x fan_in) throughout.
            let bound = (6.0 / (t.rows() + t.cols()) as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.uniform() * 2.0 * bound - bound;
            }
        }
        Ok(params)
    }

    /// Shape-congruent all-zero copy; used for gradients and Adam moments.
    pub fn zeros_like(&self) -> Self {
        let mut copy = self.clone();
        for (_, t) in copy.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        copy
    }

    /// Named tensors in architectural order: recurrent layer 1, recurrent
    /// layer 2 (deep), then the dense stack. This order defines the
    /// checkpoint payload layout.
    pub fn tensors(&self) -> Vec<(String, &Tensor2)> {
        let mut out = Vec::new();
        for (name, t) in self.recurrent1.named_fields() {
            out.push((format!("rnn1.{name}"), t));
        }
        if let Some(r2) = &self.recurrent2 {
            for (name, t) in r2.named_fields() {
                out.push((format!("rnn2.{name}"), t));
            }
        }
        for (k, d) in self.dense.iter().enumerate() {
            out.push((format!("dense{}.weight", k + 1), &d.weight));
            out.push((format!("dense{}.bias", k + 1), &d.bias));
        }
        out
    }

    /// Mutable variant of [`NetworkParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor2)> {
        let NetworkParams { recurrent1, recurrent2, dense } = self;
        let mut out = Vec::new();
        for (name, t) in recurrent1.named_fields_mut() {
            out.push((format!("rnn1.{name}"), t));
        }
        if let Some(r2) = recurrent2 {
            for (name, t) in r2.named_fields_mut() {
                out.push((format!("rnn2.{name}"), t));
            }
        }
        for (k, d) in dense.iter_mut().enumerate() {
            out.push((format!("dense{}.weight", k + 1), &mut d.weight));
            out.push((format!("dense{}.bias", k + 1), &mut d.bias));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Verifies that the layer layout and tensor shapes are exactly those
    /// implied by `config`. Cheap enough to run per forward pass.
    pub fn matches_config(&self, config: &NetworkConfig) -> Result<()> {
        config.validate()?;
        let mut expected_rec: Vec<(usize, usize)> = Vec::new();
        let mut expected_dense: Vec<(usize, usize, Activation)> = Vec::new();
        for layer in config.layers() {
            match layer {
                LayerKind::Recurrent { input, hidden } => expected_rec.push((input, hidden)),
                LayerKind::Dense { input, output, activation } => {
                    expected_dense.push((input, output, activation))
                }
                LayerKind::Dropout { .. } => {}
            }
        }
        let actual_rec: Vec<&RecurrentParams> =
            std::iter::once(&self.recurrent1).chain(self.recurrent2.iter()).collect();
        if actual_rec.len() != expected_rec.len() {
            return Err(Error::shape(
                "matches_config",
                format!("{} recurrent layers, config implies {}", actual_rec.len(), expected_rec.len()),
            ));
        }
        for (r, (input, hidden)) in actual_rec.iter().zip(&expected_rec) {
            let cell_ok = matches!(
                (r, config.cell),
                (RecurrentParams::Gru(_), CellKind::Gru) | (RecurrentParams::Lstm(_), CellKind::Lstm)
            );
            if !cell_ok {
                return Err(Error::shape("matches_config", "cell kind mismatch"));
            }
            if r.input() != *input || r.hidden() != *hidden {
                return Err(Error::shape(
                    "matches_config",
                    format!(
                        "recurrent layer is {}x{}, config implies {}x{}",
                        r.hidden(),
                        r.input(),
                        hidden,
                        input
                    ),
                ));
            }
        }
        if self.dense.len() != expected_dense.len() {
            return Err(Error::shape(
                "matches_config",
                format!("{} dense layers, config implies {}", self.dense.len(), expected_dense.len()),
            ));
        }
        for (d, (input, output, activation)) in self.dense.iter().zip(&expected_dense) {
            if d.input() != *input || d.output() != *output || d.activation != *activation {
                return Err(Error::shape(
                    "matches_config",
                    format!(
                        "dense layer is {}x{}, config implies {}x{}",
                        d.output(),
                        d.input(),
                        output,
                        input
                    ),
                ));
            }
        }
        Ok(())
    }
}

fn is_bias(name: &str) -> bool {
    match name.rsplit('.').next() {
        Some(last) => last == "bias" || last.starts_with("b_"),
        None => false,
    }
}
