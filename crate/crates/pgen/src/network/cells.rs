//! Recurrent cell steps and their exact backward passes.
//!
//! The GRU convention is pinned: the update gate mixes the candidate,
//! `h = (1-z) * h_prev + z * cand`, and the reset gate is applied to
//! `h_prev` before the hidden-to-hidden candidate weights. The LSTM is
//! the standard four-gate formulation.
//!
//! All summations run in a fixed order (bias, then input-to-hidden, then
//! hidden-to-hidden, ascending inner index) so results are bit-stable.

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Tensor2};

use super::{GruLayerParams, LstmLayerParams};

/// Input to one recurrent step. The first layer consumes one-hot encoded
/// characters, for which `W * x` reduces to picking a column of `W`.
#[derive(Clone, Copy)]
pub(crate) enum StepInput<'a> {
    OneHot(usize),
    Dense(&'a [f64]),
}

/// `out[i] = b[i] + (W x)[i] + (U h)[i]`.
fn gate_preactivation(
    w: &Tensor2,
    u: &Tensor2,
    b: &Tensor2,
    x: StepInput<'_>,
    h_prev: &[f64],
) -> Vec<f64> {
    let hidden = w.rows();
    let mut out = vec![0.0; hidden];
    for i in 0..hidden {
        let mut acc = b.data()[i];
        match x {
            StepInput::OneHot(j) => acc += w.get(i, j),
            StepInput::Dense(xv) => {
                let row = w.row(i);
                for (wk, xk) in row.iter().zip(xv) {
                    acc += wk * xk;
                }
            }
        }
        let urow = u.row(i);
        for (uk, hk) in urow.iter().zip(h_prev) {
            acc += uk * hk;
        }
        out[i] = acc;
    }
    out
}

/// Gate activations recorded by a GRU step, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct GruStepCache {
    pub update: Vec<f64>,
    pub reset: Vec<f64>,
    pub cand: Vec<f64>,
}

pub(crate) fn gru_forward_step(
    p: &GruLayerParams,
    x: StepInput<'_>,
    h_prev: &[f64],
) -> (Vec<f64>, GruStepCache) {
    let hidden = p.hidden();
    let mut update = gate_preactivation(&p.w_update, &p.u_update, &p.b_update, x, h_prev);
    let mut reset = gate_preactivation(&p.w_reset, &p.u_reset, &p.b_reset, x, h_prev);
    for v in update.iter_mut() {
        *v = sigmoid(*v);
    }
    for v in reset.iter_mut() {
        *v = sigmoid(*v);
    }
    let reset_hidden: Vec<f64> = reset.iter().zip(h_prev).map(|(r, h)| r * h).collect();
    let mut cand = gate_preactivation(&p.w_cand, &p.u_cand, &p.b_cand, x, &reset_hidden);
    for v in cand.iter_mut() {
        *v = v.tanh();
    }
    let mut h = vec![0.0; hidden];
    for i in 0..hidden {
        h[i] = (1.0 - update[i]) * h_prev[i] + update[i] * cand[i];
    }
    (h, GruStepCache { update, reset, cand })
}

/// One GRU step: `z = sigma(..)`, `r = sigma(..)`,
/// `cand = tanh(W x + U (r*h_prev) + b)`, `h = (1-z)*h_prev + z*cand`.
pub fn gru_step(p: &GruLayerParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.input() || h_prev.len() != p.hidden() {
        return Err(Error::shape(
            "gru_step",
            format!(
                "input {} and state {} vs cell {}x{}",
                x.len(),
                h_prev.len(),
                p.hidden(),
                p.input()
            ),
        ));
    }
    Ok(gru_forward_step(p, StepInput::Dense(x), h_prev).0)
}

/// Backward through one GRU step. `dh` is the loss gradient with respect
/// to this step's output; returns the gradient with respect to `h_prev`
/// and accumulates parameter gradients into `g` (and optionally the input
/// gradient into `dx`).
pub(crate) fn gru_backward_step(
    p: &GruLayerParams,
    g: &mut GruLayerParams,
    x: StepInput<'_>,
    h_prev: &[f64],
    cache: &GruStepCache,
    dh: &[f64],
    mut dx: Option<&mut [f64]>,
) -> Vec<f64> {
    let hidden = p.hidden();
    let z = &cache.update;
    let r = &cache.reset;
    let cand = &cache.cand;

    let mut dz_pre = vec![0.0; hidden];
    let mut dcand_pre = vec![0.0; hidden];
    for i in 0..hidden {
        let dz = dh[i] * (cand[i] - h_prev[i]);
        dz_pre[i] = dz * z[i] * (1.0 - z[i]);
        let dcand = dh[i] * z[i];
        dcand_pre[i] = dcand * (1.0 - cand[i] * cand[i]);
    }

    // d(r * h_prev) = U_cand^T dcand_pre
    let mut dreset_hidden = vec![0.0; hidden];
    for i in 0..hidden {
        let d = dcand_pre[i];
        if d != 0.0 {
            for (j, uk) in p.u_cand.row(i).iter().enumerate() {
                dreset_hidden[j] += uk * d;
            }
        }
    }
    let mut dr_pre = vec![0.0; hidden];
    for i in 0..hidden {
        let dr = dreset_hidden[i] * h_prev[i];
        dr_pre[i] = dr * r[i] * (1.0 - r[i]);
    }

    let mut dh_prev = vec![0.0; hidden];
    for i in 0..hidden {
        dh_prev[i] = dh[i] * (1.0 - z[i]) + dreset_hidden[i] * r[i];
    }
    for i in 0..hidden {
        let dz = dz_pre[i];
        if dz != 0.0 {
            for (j, uk) in p.u_update.row(i).iter().enumerate() {
                dh_prev[j] += uk * dz;
            }
        }
        let dr = dr_pre[i];
        if dr != 0.0 {
            for (j, uk) in p.u_reset.row(i).iter().enumerate() {
                dh_prev[j] += uk * dr;
            }
        }
    }

    let reset_hidden: Vec<f64> = r.iter().zip(h_prev).map(|(ri, hi)| ri * hi).collect();
    accumulate_gate(
        &mut g.w_update, &mut g.u_update, &mut g.b_update, &dz_pre, x, h_prev,
    );
    accumulate_gate(&mut g.w_reset, &mut g.u_reset, &mut g.b_reset, &dr_pre, x, h_prev);
    accumulate_gate(
        &mut g.w_cand, &mut g.u_cand, &mut g.b_cand, &dcand_pre, x, &reset_hidden,
    );

    if let Some(dx) = dx.as_deref_mut() {
        input_gradient(&p.w_update, &dz_pre, dx);
        input_gradient(&p.w_reset, &dr_pre, dx);
        input_gradient(&p.w_cand, &dcand_pre, dx);
    }

    dh_prev
}

/// Gate activations and cell state recorded by an LSTM step.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub input: Vec<f64>,
    pub forget: Vec<f64>,
    pub output: Vec<f64>,
    pub cand: Vec<f64>,
    pub cell: Vec<f64>,
    pub cell_tanh: Vec<f64>,
}

pub(crate) fn lstm_forward_step(
    p: &LstmLayerParams,
    x: StepInput<'_>,
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, LstmStepCache) {
    let hidden = p.hidden();
    let mut input = gate_preactivation(&p.w_input, &p.u_input, &p.b_input, x, h_prev);
    let mut forget = gate_preactivation(&p.w_forget, &p.u_forget, &p.b_forget, x, h_prev);
    let mut output = gate_preactivation(&p.w_output, &p.u_output, &p.b_output, x, h_prev);
    let mut cand = gate_preactivation(&p.w_cand, &p.u_cand, &p.b_cand, x, h_prev);
    for v in input.iter_mut() {
        *v = sigmoid(*v);
    }
    for v in forget.iter_mut() {
        *v = sigmoid(*v);
    }
    for v in output.iter_mut() {
        *v = sigmoid(*v);
    }
    for v in cand.iter_mut() {
        *v = v.tanh();
    }
    let mut cell = vec![0.0; hidden];
    let mut cell_tanh = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for i in 0..hidden {
        cell[i] = forget[i] * c_prev[i] + input[i] * cand[i];
        cell_tanh[i] = cell[i].tanh();
        h[i] = output[i] * cell_tanh[i];
    }
    (
        h,
        LstmStepCache { input, forget, output, cand, cell, cell_tanh },
    )
}

/// One LSTM step: `i, f, o = sigma(..)`, `g = tanh(..)`,
/// `c = f*c_prev + i*g`, `h = o*tanh(c)`.
pub fn lstm_step(
    p: &LstmLayerParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != p.input() || h_prev.len() != p.hidden() || c_prev.len() != p.hidden() {
        return Err(Error::shape(
            "lstm_step",
            format!(
                "input {} and states {}/{} vs cell {}x{}",
                x.len(),
                h_prev.len(),
                c_prev.len(),
                p.hidden(),
                p.input()
            ),
        ));
    }
    let (h, cache) = lstm_forward_step(p, StepInput::Dense(x), h_prev, c_prev);
    Ok((h, cache.cell))
}

/// Backward through one LSTM step; returns `(dh_prev, dc_prev)`.
pub(crate) fn lstm_backward_step(
    p: &LstmLayerParams,
    g: &mut LstmLayerParams,
    x: StepInput<'_>,
    h_prev: &[f64],
    c_prev: &[f64],
    cache: &LstmStepCache,
    dh: &[f64],
    dc: &[f64],
    mut dx: Option<&mut [f64]>,
) -> (Vec<f64>, Vec<f64>) {
    let hidden = p.hidden();
    let (i_g, f_g, o_g, cand) = (&cache.input, &cache.forget, &cache.output, &cache.cand);

    let mut di_pre = vec![0.0; hidden];
    let mut df_pre = vec![0.0; hidden];
    let mut do_pre = vec![0.0; hidden];
    let mut dcand_pre = vec![0.0; hidden];
    let mut dc_prev = vec![0.0; hidden];
    for k in 0..hidden {
        let d_out = dh[k] * cache.cell_tanh[k];
        do_pre[k] = d_out * o_g[k] * (1.0 - o_g[k]);
        let dcell = dc[k] + dh[k] * o_g[k] * (1.0 - cache.cell_tanh[k] * cache.cell_tanh[k]);
        df_pre[k] = dcell * c_prev[k] * f_g[k] * (1.0 - f_g[k]);
        di_pre[k] = dcell * cand[k] * i_g[k] * (1.0 - i_g[k]);
        dcand_pre[k] = dcell * i_g[k] * (1.0 - cand[k] * cand[k]);
        dc_prev[k] = dcell * f_g[k];
    }

    let mut dh_prev = vec![0.0; hidden];
    for (u, d_pre) in [
        (&p.u_input, &di_pre),
        (&p.u_forget, &df_pre),
        (&p.u_output, &do_pre),
        (&p.u_cand, &dcand_pre),
    ] {
        for k in 0..hidden {
            let d = d_pre[k];
            if d != 0.0 {
                for (j, uk) in u.row(k).iter().enumerate() {
                    dh_prev[j] += uk * d;
                }
            }
        }
    }

    accumulate_gate(&mut g.w_input, &mut g.u_input, &mut g.b_input, &di_pre, x, h_prev);
    accumulate_gate(&mut g.w_forget, &mut g.u_forget, &mut g.b_forget, &df_pre, x, h_prev);
    accumulate_gate(&mut g.w_output, &mut g.u_output, &mut g.b_output, &do_pre, x, h_prev);
    accumulate_gate(&mut g.w_cand, &mut g.u_cand, &mut g.b_cand, &dcand_pre, x, h_prev);

    if let Some(dx) = dx.as_deref_mut() {
        input_gradient(&p.w_input, &di_pre, dx);
        input_gradient(&p.w_forget, &df_pre, dx);
        input_gradient(&p.w_output, &do_pre, dx);
        input_gradient(&p.w_cand, &dcand_pre, dx);
    }

    (dh_prev, dc_prev)
}

/// Accumulates `d_pre (x) x` into `gw`, `d_pre (x) h_state` into `gu`, and
/// `d_pre` into `gb`. `h_state` is whatever vector multiplied `u` in the
/// forward pass (plain `h_prev`, or `r*h_prev` for the GRU candidate).
fn accumulate_gate(
    gw: &mut Tensor2,
    gu: &mut Tensor2,
    gb: &mut Tensor2,
    d_pre: &[f64],
    x: StepInput<'_>,
    h_state: &[f64],
) {
    for (k, &d) in d_pre.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        gb.data_mut()[k] += d;
        match x {
            StepInput::OneHot(j) => {
                let row = gw.row_mut(k);
                row[j] += d;
            }
            StepInput::Dense(xv) => {
                let row = gw.row_mut(k);
                for (rj, xj) in row.iter_mut().zip(xv) {
                    *rj += d * xj;
                }
            }
        }
        let urow = gu.row_mut(k);
        for (rj, hj) in urow.iter_mut().zip(h_state) {
            *rj += d * hj;
        }
    }
}

/// Accumulates `W^T d_pre` into `dx`.
fn input_gradient(w: &Tensor2, d_pre: &[f64], dx: &mut [f64]) {
    for (k, &d) in d_pre.iter().enumerate() {
        if d != 0.0 {
            for (j, wk) in w.row(k).iter().enumerate() {
                dx[j] += wk * d;
            }
        }
    }
}

/// Per-step cache for either cell kind.
#[derive(Debug, Clone)]
pub(crate) enum StepCache {
    Gru(GruStepCache),
    Lstm(LstmStepCache),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{CellKind, NetworkConfig, NetworkParams, RecurrentParams};
    use crate::numerics::Rng;

    fn random_gru(input: usize, hidden: usize, seed: u64) -> GruLayerParams {
        let cfg = NetworkConfig::baseline(input, 3).with_cell(CellKind::Gru).with_hidden(hidden);
        match NetworkParams::init(&cfg, &mut Rng::new(seed)).unwrap().recurrent1 {
            RecurrentParams::Gru(p) => p,
            _ => unreachable!(),
        }
    }

    fn random_lstm(input: usize, hidden: usize, seed: u64) -> LstmLayerParams {
        let cfg = NetworkConfig::baseline(input, 3).with_cell(CellKind::Lstm).with_hidden(hidden);
        match NetworkParams::init(&cfg, &mut Rng::new(seed)).unwrap().recurrent1 {
            RecurrentParams::Lstm(p) => p,
            _ => unreachable!(),
        }
    }

    #[test]
    fn gru_zero_params_halve_previous_state() {
        let p = GruLayerParams::zeros(3, 4);
        let h_prev = [0.8, -0.4, 0.2, 1.0];
        let h = gru_step(&p, &[1.0, 0.0, 0.0], &h_prev).unwrap();
        for (hi, hp) in h.iter().zip(&h_prev) {
            assert_eq!(*hi, 0.5 * hp);
        }
        let h0 = gru_step(&p, &[0.3, 0.3, 0.3], &[0.0; 4]).unwrap();
        assert_eq!(h0, vec![0.0; 4]);
    }

    #[test]
    fn lstm_zero_params_analytic_case() {
        let p = LstmLayerParams::zeros(3, 4);
        let c_prev = [0.8, -0.4, 0.2, 1.0];
        let (h, c) = lstm_step(&p, &[1.0, 0.0, 0.0], &[0.0; 4], &c_prev).unwrap();
        for k in 0..4 {
            assert_eq!(c[k], 0.5 * c_prev[k]);
            assert!((h[k] - 0.5 * (0.5 * c_prev[k]).tanh()).abs() < 1e-15);
        }
        let (h0, c0) = lstm_step(&p, &[0.0; 3], &[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(h0, vec![0.0; 4]);
        assert_eq!(c0, vec![0.0; 4]);
    }

    #[test]
    fn step_dimension_mismatch_is_an_error() {
        let p = GruLayerParams::zeros(3, 4);
        assert!(gru_step(&p, &[0.0; 5], &[0.0; 4]).is_err());
        assert!(gru_step(&p, &[0.0; 3], &[0.0; 2]).is_err());
        let q = LstmLayerParams::zeros(3, 4);
        assert!(lstm_step(&q, &[0.0; 3], &[0.0; 4], &[0.0; 3]).is_err());
    }

    #[test]
    fn gru_state_stays_in_unit_box() {
        let mut rng = Rng::new(17);
        for seed in 0..20u64 {
            let p = random_gru(5, 6, seed);
            let x: Vec<f64> = (0..5).map(|_| rng.uniform() * 2.0 - 1.0).collect();
            let h_prev: Vec<f64> = (0..6).map(|_| rng.uniform() * 2.0 - 1.0).collect();
            let h = gru_step(&p, &x, &h_prev).unwrap();
            // Convex combination of h_prev and tanh output.
            assert!(h.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn lstm_cell_growth_is_bounded() {
        let mut rng = Rng::new(18);
        for seed in 0..20u64 {
            let p = random_lstm(5, 6, seed);
            let x: Vec<f64> = (0..5).map(|_| rng.uniform() * 4.0 - 2.0).collect();
            let h_prev: Vec<f64> = (0..6).map(|_| rng.uniform() * 2.0 - 1.0).collect();
            let c_prev: Vec<f64> = (0..6).map(|_| rng.uniform() * 6.0 - 3.0).collect();
            let (_, c) = lstm_step(&p, &x, &h_prev, &c_prev).unwrap();
            for k in 0..6 {
                assert!(c[k].abs() <= c_prev[k].abs() + 1.0 + 1e-12);
            }
        }
    }

    // Scalar-by-scalar reference evaluation of the posted equations on a
    // small cell; must agree exactly (same summation order).
    #[test]
    fn gru_matches_scalar_reference() {
        let p = random_gru(4, 3, 9);
        let mut rng = Rng::new(21);
        let x: Vec<f64> = (0..4).map(|_| rng.uniform() - 0.5).collect();
        let h_prev: Vec<f64> = (0..3).map(|_| rng.uniform() - 0.5).collect();
        let h = gru_step(&p, &x, &h_prev).unwrap();
        for i in 0..3 {
            let pre = |w: &Tensor2, u: &Tensor2, b: &Tensor2, hv: &[f64]| {
                let mut s = b.data()[i];
                for k in 0..4 {
                    s += w.get(i, k) * x[k];
                }
                for k in 0..3 {
                    s += u.get(i, k) * hv[k];
                }
                s
            };
            let z = sigmoid(pre(&p.w_update, &p.u_update, &p.b_update, &h_prev));
            let r: Vec<f64> = (0..3)
                .map(|j| {
                    let mut s = p.b_reset.data()[j];
                    for k in 0..4 {
                        s += p.w_reset.get(j, k) * x[k];
                    }
                    for k in 0..3 {
                        s += p.u_reset.get(j, k) * h_prev[k];
                    }
                    sigmoid(s)
                })
                .collect();
            let rh: Vec<f64> = (0..3).map(|j| r[j] * h_prev[j]).collect();
            let cand = pre(&p.w_cand, &p.u_cand, &p.b_cand, &rh).tanh();
            let expect = (1.0 - z) * h_prev[i] + z * cand;
            assert_eq!(h[i], expect, "component {i}");
        }
    }

    #[test]
    fn lstm_matches_scalar_reference() {
        let p = random_lstm(4, 3, 10);
        let mut rng = Rng::new(22);
        let x: Vec<f64> = (0..4).map(|_| rng.uniform() - 0.5).collect();
        let h_prev: Vec<f64> = (0..3).map(|_| rng.uniform() - 0.5).collect();
        let c_prev: Vec<f64> = (0..3).map(|_| rng.uniform() - 0.5).collect();
        let (h, c) = lstm_step(&p, &x, &h_prev, &c_prev).unwrap();
        let pre = |w: &Tensor2, u: &Tensor2, b: &Tensor2, i: usize| {
            let mut s = b.data()[i];
            for k in 0..4 {
                s += w.get(i, k) * x[k];
            }
            for k in 0..3 {
                s += u.get(i, k) * h_prev[k];
            }
            s
        };
        for i in 0..3 {
            let ig = sigmoid(pre(&p.w_input, &p.u_input, &p.b_input, i));
            let fg = sigmoid(pre(&p.w_forget, &p.u_forget, &p.b_forget, i));
            let og = sigmoid(pre(&p.w_output, &p.u_output, &p.b_output, i));
            let gg = pre(&p.w_cand, &p.u_cand, &p.b_cand, i).tanh();
            let ci = fg * c_prev[i] + ig * gg;
            assert_eq!(c[i], ci, "cell {i}");
            assert_eq!(h[i], og * ci.tanh(), "hidden {i}");
        }
    }

    #[test]
    fn one_hot_input_equals_dense_one_hot_vector() {
        let p = random_gru(5, 4, 33);
        let h_prev = [0.1, -0.2, 0.3, 0.0];
        let mut x = vec![0.0; 5];
        x[2] = 1.0;
        let dense = gru_step(&p, &x, &h_prev).unwrap();
        let (onehot, _) = gru_forward_step(&p, StepInput::OneHot(2), &h_prev);
        assert_eq!(dense, onehot);
    }
}
