use serde::{Deserialize, Serialize};

use super::tensor::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step over every parameter in `set`, using the
/// accumulated gradients. Moments and the step counter persist in `set`.
pub fn adam_update(set: &mut ParamSet, lr: f64, cfg: &AdamConfig) {
    set.step += 1;
    let t = set.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for p in set.iter_mut() {
        let grad = p.grad().clone();
        let (m, v) = (&mut p.m, &mut p.v);
        let mut updates = Vec::with_capacity(grad.len());
        for ((g, m), v) in grad.iter().zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            updates.push(lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps));
        }
        for (x, u) in p.value_mut().data_mut().iter_mut().zip(updates) {
            *x -= u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn scalar_set(x: f64) -> ParamSet {
        let mut s = ParamSet::new();
        s.push("x", Tensor::new(vec![1], vec![x]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_set(1.5);
        adam_update(&mut s, 0.1, &AdamConfig::default());
        assert_eq!(s.get(0).value().data(), &[1.5]);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        for g in [3.0, -0.02] {
            let mut s = scalar_set(0.0);
            s.get(0).accumulate(&[g]);
            adam_update(&mut s, 0.01, &AdamConfig::default());
            let dx = s.get(0).value().data()[0];
            assert!((dx + 0.01 * f64::signum(g)).abs() < 1e-6, "g={g} dx={dx}");
        }
    }

    #[test]
    fn descends_quadratic() {
        // f(x) = x², grad 2x. Scripted oracle: |x| must shrink every step
        // while the step size lr=0.1 is well below |x|.
        let mut s = scalar_set(1.0);
        let mut prev = 1.0f64;
        for _ in 0..10 {
            s.zero_grad();
            let x = s.get(0).value().data()[0];
            s.get(0).accumulate(&[2.0 * x]);
            adam_update(&mut s, 0.1, &AdamConfig::default());
            let x = s.get(0).value().data()[0];
            assert!(x.abs() < prev.abs());
            prev = x;
        }
        assert!(prev.abs() < 0.2);
    }
}
