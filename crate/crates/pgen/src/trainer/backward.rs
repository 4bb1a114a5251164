//! Backpropagation through time over a recorded forward tape.
//!
//! The loss gradient flows from softmax + cross-entropy through the dense
//! stack, the final dropout mask, then backwards through all window steps
//! of each recurrent layer (and through the per-step dropout masks
//! between the two recurrent layers of the deep preset).

use crate::error::{Error, Result};
use crate::network::{
    gru_backward_step, lstm_backward_step, Activation, NetworkConfig, NetworkParams, Preset,
    RecurrentParams, StepCache, StepInput, Tape,
};

use super::Gradients;

/// Exact analytic gradient of `cross_entropy(forward_window(..), target)`
/// with respect to every parameter.
pub fn backward_window(
    params: &NetworkParams,
    config: &NetworkConfig,
    tape: &Tape,
    target: u32,
) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(params);
    backward_into(params, config, tape, target, &mut grads)?;
    Ok(grads)
}

/// Accumulates (`+=`) the window gradient into `grads`, so a batch sum
/// needs no per-window allocation.
pub(crate) fn backward_into(
    params: &NetworkParams,
    config: &NetworkConfig,
    tape: &Tape,
    target: u32,
    grads: &mut Gradients,
) -> Result<()> {
    params.matches_config(config)?;
    validate_tape(params, config, tape)?;
    if target as usize >= config.vocab_size {
        return Err(Error::IndexOutOfRange {
            index: target as usize,
            vocab_size: config.vocab_size,
        });
    }

    // Softmax + cross-entropy collapse to probs - onehot(target).
    let mut d: Vec<f64> = tape.probs.clone();
    d[target as usize] -= 1.0;

    // Dense stack, output to input.
    for k in (0..params.dense.len()).rev() {
        let layer = &params.dense[k];
        let glayer = &mut grads.0.dense[k];
        if layer.activation == Activation::Relu {
            // The recorded input of the next layer is this layer's output.
            let out = &tape.dense_inputs[k + 1];
            for (dv, o) in d.iter_mut().zip(out) {
                if *o <= 0.0 {
                    *dv = 0.0;
                }
            }
        }
        let input = &tape.dense_inputs[k];
        for i in 0..layer.output() {
            let dp = d[i];
            if dp != 0.0 {
                glayer.bias.data_mut()[i] += dp;
                for (gj, xj) in glayer.weight.row_mut(i).iter_mut().zip(input) {
                    *gj += dp * xj;
                }
            }
        }
        let mut d_in = vec![0.0; layer.input()];
        for i in 0..layer.output() {
            let dp = d[i];
            if dp != 0.0 {
                for (j, wj) in layer.weight.row(i).iter().enumerate() {
                    d_in[j] += wj * dp;
                }
            }
        }
        d = d_in;
    }

    // Dropout gradient is the recorded mask itself.
    if let Some(mask) = &tape.drop_final {
        for (dv, m) in d.iter_mut().zip(mask) {
            *dv *= m;
        }
    }

    let steps = config.window;
    match (config.preset, &params.recurrent2, &mut grads.0.recurrent2) {
        (Preset::Deep, Some(r2), Some(g2)) => {
            let h1 = params.recurrent1.hidden();
            let h2 = r2.hidden();
            let mut dh2_ext = vec![vec![0.0; h2]; steps];
            dh2_ext[steps - 1] = d;
            let mut dx2 = vec![vec![0.0; h1]; steps];
            bptt_layer(
                r2,
                g2,
                SeqInput::Dense(&tape.layer2_inputs),
                &tape.states2,
                &tape.caches2,
                dh2_ext,
                Some(&mut dx2),
            )?;
            // Layer-2 input gradients flow through the per-step masks back
            // into layer-1 outputs.
            if let Some(masks) = &tape.drop1 {
                for (dv, m) in dx2.iter_mut().zip(masks) {
                    for (a, b) in dv.iter_mut().zip(m) {
                        *a *= b;
                    }
                }
            }
            bptt_layer(
                &params.recurrent1,
                &mut grads.0.recurrent1,
                SeqInput::OneHot(&tape.window),
                &tape.states1,
                &tape.caches1,
                dx2,
                None,
            )?;
        }
        (Preset::Baseline, None, None) => {
            let h1 = params.recurrent1.hidden();
            let mut dh1_ext = vec![vec![0.0; h1]; steps];
            dh1_ext[steps - 1] = d;
            bptt_layer(
                &params.recurrent1,
                &mut grads.0.recurrent1,
                SeqInput::OneHot(&tape.window),
                &tape.states1,
                &tape.caches1,
                dh1_ext,
                None,
            )?;
        }
        _ => {
            return Err(Error::shape(
                "backward_window",
                "gradient layout does not match preset",
            ))
        }
    }
    Ok(())
}

enum SeqInput<'a> {
    OneHot(&'a [u32]),
    Dense(&'a [Vec<f64>]),
}

/// Reverse pass over one recurrent layer. `dh_ext[t]` is the external
/// loss gradient arriving at state `t`; the recurrent carry is added
/// internally. Fills `dx_out[t]` with input gradients when requested.
fn bptt_layer(
    p: &RecurrentParams,
    g: &mut RecurrentParams,
    inputs: SeqInput<'_>,
    states: &[Vec<f64>],
    caches: &[StepCache],
    mut dh_ext: Vec<Vec<f64>>,
    mut dx_out: Option<&mut Vec<Vec<f64>>>,
) -> Result<()> {
    let steps = states.len();
    let hidden = p.hidden();
    let zero = vec![0.0; hidden];
    let mut carry_h = vec![0.0; hidden];
    let mut carry_c = vec![0.0; hidden];
    for t in (0..steps).rev() {
        let mut dh = std::mem::take(&mut dh_ext[t]);
        for (a, b) in dh.iter_mut().zip(&carry_h) {
            *a += *b;
        }
        let h_prev: &[f64] = if t == 0 { &zero } else { &states[t - 1] };
        let x = match inputs {
            SeqInput::OneHot(w) => StepInput::OneHot(w[t] as usize),
            SeqInput::Dense(seq) => StepInput::Dense(&seq[t]),
        };
        let dx = dx_out.as_deref_mut().map(|v| v[t].as_mut_slice());
        match (p, &mut *g, &caches[t]) {
            (RecurrentParams::Gru(pp), RecurrentParams::Gru(gg), StepCache::Gru(cache)) => {
                carry_h = gru_backward_step(pp, gg, x, h_prev, cache, &dh, dx);
            }
            (RecurrentParams::Lstm(pp), RecurrentParams::Lstm(gg), StepCache::Lstm(cache)) => {
                let c_prev: &[f64] = if t == 0 {
                    &zero
                } else {
                    match &caches[t - 1] {
                        StepCache::Lstm(prev) => &prev.cell,
                        StepCache::Gru(_) => {
                            return Err(Error::shape("backward_window", "mixed cell caches"))
                        }
                    }
                };
                let (dh_prev, dc_prev) =
                    lstm_backward_step(pp, gg, x, h_prev, c_prev, cache, &dh, &carry_c, dx);
                carry_h = dh_prev;
                carry_c = dc_prev;
            }
            _ => {
                return Err(Error::shape(
                    "backward_window",
                    "cell kind mismatch between tape and parameters",
                ))
            }
        }
    }
    Ok(())
}

fn validate_tape(params: &NetworkParams, config: &NetworkConfig, tape: &Tape) -> Result<()> {
    let steps = config.window;
    let mismatch = |what: &str| Err(Error::shape("backward_window", format!("tape {what}")));
    if tape.window.len() != steps || tape.states1.len() != steps || tape.caches1.len() != steps {
        return mismatch("was recorded for a different window length");
    }
    if tape.probs.len() != config.vocab_size {
        return mismatch("output width does not match the vocabulary");
    }
    if tape.dense_inputs.len() != params.dense.len() {
        return mismatch("dense stack depth does not match the parameters");
    }
    if config.preset == Preset::Deep
        && (tape.states2.len() != steps
            || tape.caches2.len() != steps
            || tape.layer2_inputs.len() != steps)
    {
        return mismatch("is missing the second recurrent layer");
    }
    Ok(())
}
