//! Forward evaluation of one window: one-hot characters through the
//! recurrent stack and dense head to a next-character distribution.
//!
//! Every window starts from the zero state; windows are independent and
//! evaluation is read-only over the parameters.

use crate::error::{Error, Result};
use crate::numerics::{relu, softmax, Rng};

use super::cells::{gru_forward_step, lstm_forward_step, StepCache, StepInput};
use super::{Activation, NetworkConfig, NetworkParams, Preset, RecurrentParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Infer,
}

/// Inverted dropout: in train mode each element is zeroed with
/// probability `p` and survivors are scaled by `1/(1-p)`, so inference is
/// an identity.
pub fn apply_dropout(v: &[f64], p: f64, rng: &mut Rng, phase: Phase) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {p}"
        )));
    }
    if phase == Phase::Infer || p == 0.0 {
        return Ok(v.to_vec());
    }
    let mask = dropout_mask(v.len(), p, rng);
    Ok(v.iter().zip(&mask).map(|(x, m)| x * m).collect())
}

/// Mask entries are 0 (dropped) or `1/(1-p)` (kept, pre-scaled).
pub(crate) fn dropout_mask(len: usize, p: f64, rng: &mut Rng) -> Vec<f64> {
    let scale = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.uniform() < p { 0.0 } else { scale })
        .collect()
}

/// Everything the backward pass needs: per-step states and gate caches
/// for each recurrent layer, the dropout masks actually drawn, the input
/// to every dense layer, and the output distribution.
#[derive(Debug, Clone)]
pub struct Tape {
    pub(crate) window: Vec<u32>,
    pub(crate) states1: Vec<Vec<f64>>,
    pub(crate) caches1: Vec<StepCache>,
    /// Per-step masks between the recurrent layers (deep, train, p > 0).
    pub(crate) drop1: Option<Vec<Vec<f64>>>,
    /// Inputs consumed by the second recurrent layer (deep only).
    pub(crate) layer2_inputs: Vec<Vec<f64>>,
    pub(crate) states2: Vec<Vec<f64>>,
    pub(crate) caches2: Vec<StepCache>,
    /// Mask applied once to the last recurrent output.
    pub(crate) drop_final: Option<Vec<f64>>,
    pub(crate) dense_inputs: Vec<Vec<f64>>,
    pub(crate) probs: Vec<f64>,
}

fn recurrent_step(
    params: &RecurrentParams,
    x: StepInput<'_>,
    h_prev: &[f64],
    c_prev: &mut Vec<f64>,
) -> (Vec<f64>, StepCache) {
    match params {
        RecurrentParams::Gru(p) => {
            let (h, cache) = gru_forward_step(p, x, h_prev);
            (h, StepCache::Gru(cache))
        }
        RecurrentParams::Lstm(p) => {
            let (h, cache) = lstm_forward_step(p, x, h_prev, c_prev);
            *c_prev = cache.cell.clone();
            (h, StepCache::Lstm(cache))
        }
    }
}

fn validate_window(config: &NetworkConfig, window: &[u32]) -> Result<()> {
    if window.len() != config.window {
        return Err(Error::shape(
            "forward_window",
            format!("window has {} characters, config says {}", window.len(), config.window),
        ));
    }
    for &ix in window {
        if ix as usize >= config.vocab_size {
            return Err(Error::IndexOutOfRange {
                index: ix as usize,
                vocab_size: config.vocab_size,
            });
        }
    }
    Ok(())
}

fn dense_forward(layer: &super::DenseParams, input: &[f64]) -> Vec<f64> {
    let out_dim = layer.output();
    let mut out = vec![0.0; out_dim];
    for i in 0..out_dim {
        let mut acc = layer.bias.data()[i];
        for (wk, xk) in layer.weight.row(i).iter().zip(input) {
            acc += wk * xk;
        }
        out[i] = match layer.activation {
            Activation::Relu => relu(acc),
            Activation::Linear => acc,
        };
    }
    out
}

fn forward_impl(
    params: &NetworkParams,
    config: &NetworkConfig,
    window: &[u32],
    phase: Phase,
    rng: Option<&mut Rng>,
    record: bool,
) -> Result<(Vec<f64>, Option<Tape>)> {
    validate_window(config, window)?;
    params.matches_config(config)?;
    let steps = window.len();
    let dropping = phase == Phase::Train && config.dropout > 0.0;
    let mut rng = rng;
    if dropping && rng.is_none() {
        return Err(Error::InvalidArgument(
            "train-mode forward with dropout needs an RNG".into(),
        ));
    }

    // Recurrent layer 1 over one-hot inputs, from the zero state.
    let h1_dim = params.recurrent1.hidden();
    let mut h = vec![0.0; h1_dim];
    let mut c = vec![0.0; h1_dim];
    let mut states1: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut caches1: Vec<StepCache> = Vec::with_capacity(if record { steps } else { 0 });
    for &ix in window {
        let (h_new, cache) = recurrent_step(&params.recurrent1, StepInput::OneHot(ix as usize), &h, &mut c);
        h = h_new;
        states1.push(h.clone());
        if record {
            caches1.push(cache);
        }
    }

    let mut drop1: Option<Vec<Vec<f64>>> = None;
    let mut layer2_inputs: Vec<Vec<f64>> = Vec::new();
    let mut states2: Vec<Vec<f64>> = Vec::new();
    let mut caches2: Vec<StepCache> = Vec::new();

    let last_state = match (config.preset, &params.recurrent2) {
        (Preset::Deep, Some(r2)) => {
            // Per-step dropout on the layer-1 outputs, masks drawn in step
            // order, then the whole sequence feeds layer 2.
            if dropping {
                let rng = rng.as_deref_mut().expect("checked above");
                let masks: Vec<Vec<f64>> =
                    (0..steps).map(|_| dropout_mask(h1_dim, config.dropout, rng)).collect();
                layer2_inputs = states1
                    .iter()
                    .zip(&masks)
                    .map(|(s, m)| s.iter().zip(m).map(|(x, mk)| x * mk).collect())
                    .collect();
                drop1 = Some(masks);
            } else {
                layer2_inputs = states1.clone();
            }
            let h2_dim = r2.hidden();
            let mut h2 = vec![0.0; h2_dim];
            let mut c2 = vec![0.0; h2_dim];
            for input in &layer2_inputs {
                let (h_new, cache) = recurrent_step(r2, StepInput::Dense(input), &h2, &mut c2);
                h2 = h_new;
                states2.push(h2.clone());
                if record {
                    caches2.push(cache);
                }
            }
            states2.last().expect("window is non-empty").clone()
        }
        (Preset::Baseline, None) => states1.last().expect("window is non-empty").clone(),
        _ => {
            return Err(Error::shape(
                "forward_window",
                "parameter layout does not match preset",
            ))
        }
    };

    // One dropout on the final recurrent state, then the dense stack.
    let mut drop_final: Option<Vec<f64>> = None;
    let dropped = if dropping {
        let rng = rng.as_deref_mut().expect("checked above");
        let mask = dropout_mask(last_state.len(), config.dropout, rng);
        let out: Vec<f64> = last_state.iter().zip(&mask).map(|(x, m)| x * m).collect();
        drop_final = Some(mask);
        out
    } else {
        last_state
    };

    let mut dense_inputs: Vec<Vec<f64>> = Vec::with_capacity(params.dense.len());
    let mut activation = dropped;
    for layer in &params.dense {
        dense_inputs.push(activation.clone());
        activation = dense_forward(layer, &activation);
    }
    let probs = softmax(&activation);

    let tape = if record {
        Some(Tape {
            window: window.to_vec(),
            states1,
            caches1,
            drop1,
            layer2_inputs,
            states2,
            caches2,
            drop_final,
            dense_inputs,
            probs: probs.clone(),
        })
    } else {
        None
    };
    Ok((probs, tape))
}

/// Runs one window through the network and records the tape needed for
/// backpropagation. In train mode, dropout masks are drawn from `rng`.
pub fn forward_window(
    params: &NetworkParams,
    config: &NetworkConfig,
    window: &[u32],
    phase: Phase,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Tape)> {
    let (probs, tape) = forward_impl(params, config, window, phase, Some(rng), true)?;
    Ok((probs, tape.expect("tape recorded")))
}

/// Inference-mode forward pass without tape recording; used by
/// generation and evaluation.
pub fn predict(params: &NetworkParams, config: &NetworkConfig, window: &[u32]) -> Result<Vec<f64>> {
    let (probs, _) = forward_impl(params, config, window, Phase::Infer, None, false)?;
    Ok(probs)
}
