//! Central finite-difference check of analytic gradients.
//!
//! Only forward evaluations enter the numeric estimate, so the check is
//! independent of the backward pass it validates.

use rand::seq::index::sample;
use rand::Rng;

use super::tensor::ParamSet;

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub step: f64,
    /// Scalars probed per parameter tensor (all when the tensor is smaller).
    pub probes_per_param: usize,
    /// Denominator floor for the relative error.
    pub floor: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            probes_per_param: 12,
            floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(set, param, index, analytic, numeric)` of the worst probe.
    pub worst: Option<(usize, usize, usize, f64, f64)>,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare gradients accumulated by `backward` against central differences
/// of `loss` for a random subset of scalars in every parameter set.
pub fn check_gradients<M, R: Rng + ?Sized>(
    model: &mut M,
    n_sets: usize,
    set: fn(&mut M, usize) -> &mut ParamSet,
    loss: impl Fn(&M) -> f64,
    backward: impl Fn(&M),
    opts: CheckOptions,
    rng: &mut R,
) -> GradReport {
    for s in 0..n_sets {
        set(model, s).zero_grad();
    }
    backward(model);
    let analytic: Vec<Vec<Vec<f64>>> = (0..n_sets)
        .map(|s| set(model, s).iter().map(|p| p.grad().clone()).collect())
        .collect();

    let mut report = GradReport::default();
    for (s, grads) in analytic.iter().enumerate() {
        for (pi, grad) in grads.iter().enumerate() {
            let n = grad.len();
            let probes: Vec<usize> = if n <= opts.probes_per_param {
                (0..n).collect()
            } else {
                sample(rng, n, opts.probes_per_param).into_vec()
            };
            for idx in probes {
                let original = set(model, s).get(pi).value().data()[idx];
                set(model, s).get_mut(pi).value_mut().data_mut()[idx] = original + opts.step;
                let up = loss(model);
                set(model, s).get_mut(pi).value_mut().data_mut()[idx] = original - opts.step;
                let down = loss(model);
                set(model, s).get_mut(pi).value_mut().data_mut()[idx] = original;
                let numeric = (up - down) / (2.0 * opts.step);
                let err = relative_error(grad[idx], numeric, opts.floor);
                report.checked += 1;
                if err > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = report.max_rel_error.max(err);
                    report.worst = Some((s, pi, idx, grad[idx], numeric));
                }
            }
        }
    }
    report
}
