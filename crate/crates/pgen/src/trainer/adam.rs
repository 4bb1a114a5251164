//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::network::NetworkParams;

use super::Gradients;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, shape-congruent with the
/// parameters, plus the step counter driving bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: NetworkParams,
    v: NetworkParams,
    step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&NetworkParams, &NetworkParams) {
        (&self.m, &self.v)
    }

    pub(crate) fn from_parts(m: NetworkParams, v: NetworkParams, step: u64) -> Self {
        AdamState { m, v, step }
    }
}

/// One Adam update: `m` and `v` decay toward the gradient and its square,
/// bias-corrected estimates drive the parameter step, and the step
/// counter increments.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    state.step += 1;
    let bc1 = 1.0 - hyper.beta1.powi(state.step as i32);
    let bc2 = 1.0 - hyper.beta2.powi(state.step as i32);

    let mut p_tensors = params.tensors_mut();
    let g_tensors = grads.0.tensors();
    let mut m_tensors = state.m.tensors_mut();
    let mut v_tensors = state.v.tensors_mut();
    if p_tensors.len() != g_tensors.len()
        || p_tensors.len() != m_tensors.len()
        || p_tensors.len() != v_tensors.len()
    {
        return Err(Error::shape("adam_step", "tensor count mismatch"));
    }
    for i in 0..p_tensors.len() {
        let (_, p) = &mut p_tensors[i];
        let (_, g) = &g_tensors[i];
        let (_, m) = &mut m_tensors[i];
        let (_, v) = &mut v_tensors[i];
        if p.len() != g.len() || p.len() != m.len() || p.len() != v.len() {
            return Err(Error::shape("adam_step", "tensor shape mismatch"));
        }
        let pd = p.data_mut();
        let gd = g.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for k in 0..pd.len() {
            let grad = gd[k];
            md[k] = hyper.beta1 * md[k] + (1.0 - hyper.beta1) * grad;
            vd[k] = hyper.beta2 * vd[k] + (1.0 - hyper.beta2) * grad * grad;
            let m_hat = md[k] / bc1;
            let v_hat = vd[k] / bc2;
            pd[k] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{CellKind, NetworkConfig};
    use crate::numerics::Rng;

    fn setup() -> (NetworkConfig, NetworkParams) {
        let cfg = NetworkConfig::baseline(4, 3).with_cell(CellKind::Gru).with_hidden(3);
        let params = NetworkParams::init(&cfg, &mut Rng::new(1)).unwrap();
        (cfg, params)
    }

    #[test]
    fn zero_gradient_leaves_parameters_but_decays_moments() {
        let (_, mut params) = setup();
        let mut state = AdamState::new(&params);
        let hyper = AdamHyper::default();

        // Prime the moments with one nonzero gradient.
        let mut grads = Gradients::zeros_like(&params);
        for (_, t) in grads.0.tensors_mut() {
            t.data_mut().fill(0.5);
        }
        adam_step(&mut params, &grads, &mut state, &hyper).unwrap();
        let m_before = state.m.clone();

        let snapshot = params.clone();
        let zero = Gradients::zeros_like(&params);
        adam_step(&mut params, &zero, &mut state, &hyper).unwrap();
        // Parameters move only negligibly (m_hat is damped, v_hat shrinks
        // too); moments decay by beta.
        for ((_, a), (_, b)) in state.m.tensors().iter().zip(m_before.tensors().iter()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y * hyper.beta1).abs() < 1e-15);
            }
        }
        // With a strictly zero gradient the parameters still receive the
        // decayed-momentum step, but it must shrink, not grow.
        for ((_, a), (_, b)) in params.tensors().iter().zip(snapshot.tensors().iter()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= hyper.learning_rate * 1.01);
            }
        }
        assert_eq!(state.step_count(), 2);
    }

    #[test]
    fn pure_zero_history_is_a_no_op() {
        let (_, mut params) = setup();
        let snapshot = params.clone();
        let mut state = AdamState::new(&params);
        let zero = Gradients::zeros_like(&params);
        adam_step(&mut params, &zero, &mut state, &AdamHyper::default()).unwrap();
        assert_eq!(params, snapshot);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let (_, mut params) = setup();
        let snapshot = params.clone();
        let mut state = AdamState::new(&params);
        let hyper = AdamHyper::default();
        let mut grads = Gradients::zeros_like(&params);
        let mut rng = Rng::new(9);
        for (_, t) in grads.0.tensors_mut() {
            for x in t.data_mut() {
                *x = rng.uniform() * 2.0 - 1.0;
            }
        }
        adam_step(&mut params, &grads, &mut state, &hyper).unwrap();
        // At t=1, m_hat = g and v_hat = g^2, so the update is
        // -lr * g / (|g| + eps).
        for (((_, p), (_, p0)), (_, g)) in params
            .tensors()
            .iter()
            .zip(snapshot.tensors().iter())
            .zip(grads.0.tensors().iter())
        {
            for ((x, x0), gk) in p.data().iter().zip(p0.data()).zip(g.data()) {
                let expected = x0 - hyper.learning_rate * gk / (gk.abs() + hyper.epsilon);
                assert!((x - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn updates_are_bit_deterministic() {
        let run = || {
            let (_, mut params) = setup();
            let mut state = AdamState::new(&params);
            let hyper = AdamHyper::default();
            let mut rng = Rng::new(33);
            for _ in 0..5 {
                let mut grads = Gradients::zeros_like(&params);
                for (_, t) in grads.0.tensors_mut() {
                    for x in t.data_mut() {
                        *x = rng.uniform() - 0.5;
                    }
                }
                adam_step(&mut params, &grads, &mut state, &hyper).unwrap();
            }
            (params, state)
        };
        let (pa, sa) = run();
        let (pb, sb) = run();
        assert_eq!(pa, pb);
        assert_eq!(sa, sb);
    }
}
