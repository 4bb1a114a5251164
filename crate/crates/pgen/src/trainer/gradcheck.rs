//! Central finite-difference verification of the analytic gradients.
//!
//! The check perturbs every parameter coordinate by +/- delta, evaluates
//! the loss along the same inference path the analytic gradient
//! differentiates, and compares. Dropout must be disabled: a stochastic
//! mask would make the two loss evaluations incomparable.

use crate::error::{Error, Result};
use crate::network::{forward_window, predict, NetworkConfig, NetworkParams, Phase};
use crate::numerics::Rng;

use super::{backward_window, cross_entropy};

/// Worst relative error observed in one tensor.
#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub coordinates: usize,
}

/// Central differences `(loss(p+d) - loss(p-d)) / 2d` for every parameter
/// coordinate, as a shape-congruent mirror of the parameters.
pub fn finite_difference_gradients(
    params: &NetworkParams,
    config: &NetworkConfig,
    window: &[u32],
    target: u32,
    delta: f64,
) -> Result<NetworkParams> {
    if delta <= 0.0 {
        return Err(Error::InvalidArgument("finite-difference delta must be positive".into()));
    }
    let mut work = params.clone();
    let mut fd = params.zeros_like();
    let tensor_count = params.tensors().len();
    for ti in 0..tensor_count {
        let len = params.tensors()[ti].1.len();
        for k in 0..len {
            let original = work.tensors()[ti].1.data()[k];
            work.tensors_mut()[ti].1.data_mut()[k] = original + delta;
            let plus = cross_entropy(&predict(&work, config, window)?, target as usize)?;
            work.tensors_mut()[ti].1.data_mut()[k] = original - delta;
            let minus = cross_entropy(&predict(&work, config, window)?, target as usize)?;
            work.tensors_mut()[ti].1.data_mut()[k] = original;
            fd.tensors_mut()[ti].1.data_mut()[k] = (plus - minus) / (2.0 * delta);
        }
    }
    Ok(fd)
}

/// Runs the analytic backward pass and the finite-difference oracle on
/// one window and reports the worst relative error per tensor.
///
/// A coordinate passes outright when the absolute difference is below
/// 1e-8; otherwise the error is `|a - n| / max(|a|, |n|)`.
pub fn gradient_check(
    params: &NetworkParams,
    config: &NetworkConfig,
    window: &[u32],
    target: u32,
    delta: f64,
) -> Result<GradCheckReport> {
    if config.dropout != 0.0 {
        return Err(Error::InvalidArgument(
            "gradient check requires dropout 0 (stochastic masks break finite differences)".into(),
        ));
    }
    // Train mode with dropout 0 consumes no randomness and equals the
    // inference path the oracle evaluates.
    let mut rng = Rng::new(0);
    let (_, tape) = forward_window(params, config, window, Phase::Train, &mut rng)?;
    let analytic = backward_window(params, config, &tape, target)?;
    let numeric = finite_difference_gradients(params, config, window, target, delta)?;

    let mut tensors = Vec::new();
    let mut overall: f64 = 0.0;
    let mut coordinates = 0usize;
    for ((name, a), (_, n)) in analytic.0.tensors().iter().zip(numeric.tensors().iter()) {
        let mut worst: f64 = 0.0;
        for (&av, &nv) in a.data().iter().zip(n.data()) {
            coordinates += 1;
            let diff = (av - nv).abs();
            if diff <= 1e-8 {
                continue;
            }
            worst = worst.max(diff / av.abs().max(nv.abs()));
        }
        overall = overall.max(worst);
        tensors.push(TensorCheck { name: name.clone(), max_rel_error: worst });
    }
    Ok(GradCheckReport { tensors, max_rel_error: overall, coordinates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{CellKind, Preset};

    /// The spec-sized tiny model: V=5, L=3, H=4, dropout 0.
    fn tiny_config(preset: Preset, cell: CellKind) -> NetworkConfig {
        let mut cfg = match preset {
            Preset::Baseline => NetworkConfig::baseline(5, 3),
            Preset::Deep => NetworkConfig::deep(5, 3),
        };
        cfg = cfg.with_cell(cell).with_hidden(4).with_dropout(0.0);
        if preset == Preset::Deep {
            cfg.dense1 = 6;
            cfg.dense2 = 4;
        }
        cfg
    }

    #[test]
    fn analytic_matches_finite_differences_everywhere() {
        for preset in [Preset::Baseline, Preset::Deep] {
            for cell in [CellKind::Gru, CellKind::Lstm] {
                let cfg = tiny_config(preset, cell);
                // Three random parameter points each.
                for seed in [1u64, 22, 333] {
                    let params = NetworkParams::init(&cfg, &mut Rng::new(seed)).unwrap();
                    let report =
                        gradient_check(&params, &cfg, &[0, 2, 4], 1, 1e-5).unwrap();
                    assert!(
                        report.max_rel_error < 1e-4,
                        "{preset:?}/{cell:?} seed {seed}: max rel error {}",
                        report.max_rel_error
                    );
                }
            }
        }
    }

    #[test]
    fn dropout_blocks_the_check() {
        let cfg = tiny_config(Preset::Deep, CellKind::Gru).with_dropout(0.2);
        let params = NetworkParams::init(&cfg, &mut Rng::new(1)).unwrap();
        assert!(gradient_check(&params, &cfg, &[0, 1, 2], 0, 1e-5).is_err());
    }

    #[test]
    fn zero_delta_is_rejected() {
        let cfg = tiny_config(Preset::Baseline, CellKind::Gru);
        let params = NetworkParams::init(&cfg, &mut Rng::new(1)).unwrap();
        assert!(finite_difference_gradients(&params, &cfg, &[0, 1, 2], 0, 0.0).is_err());
    }
}
