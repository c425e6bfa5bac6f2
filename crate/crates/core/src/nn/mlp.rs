use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::graph::{dot, Graph, NodeId};
use super::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

/// Fully connected network: tanh hidden layers, linear output.
#[derive(Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: ParamSet,
}

impl Mlp {
    /// Gaussian init with variance `1/fan_in`, scaled by `output_gain` on the
    /// last layer. Biases start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut params = ParamSet::new();
        let layers = sizes.len() - 1;
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let gain = if l + 1 == layers { output_gain } else { 1.0 };
            let std = gain / (fan_in as f64).sqrt();
            let w: Vec<f64> = if std > 0.0 {
                let normal = Normal::new(0.0, std).expect("valid std");
                (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect()
            } else {
                vec![0.0; fan_in * fan_out]
            };
            params.push(
                format!("w{l}"),
                Tensor::new(vec![fan_out, fan_in], w).expect("sized"),
            );
            params.push(format!("b{l}"), Tensor::zeros(vec![fan_out]));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn from_params(sizes: Vec<usize>, params: ParamSet) -> Result<Self> {
        if sizes.len() < 2 || params.len() != 2 * (sizes.len() - 1) {
            return Err(Error::Checkpoint(
                "MLP layer count does not match its parameters".into(),
            ));
        }
        for (l, pair) in sizes.windows(2).enumerate() {
            let w = params.get(2 * l).value().shape();
            let b = params.get(2 * l + 1).value().shape();
            if w != [pair[1], pair[0]] || b != [pair[1]] {
                return Err(Error::Checkpoint(format!("MLP layer {l} has wrong shape")));
            }
        }
        Ok(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("nonempty")
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Record the forward pass on `g`.
    pub fn forward<'p>(&'p self, g: &mut Graph<'p>, x: NodeId) -> NodeId {
        let layers = self.sizes.len() - 1;
        let mut h = x;
        for l in 0..layers {
            h = g.affine(self.params.get(2 * l), Some(self.params.get(2 * l + 1)), h);
            if l + 1 < layers {
                h = g.tanh(h);
            }
        }
        h
    }

    /// Gradient-free forward pass.
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let layers = self.sizes.len() - 1;
        let mut h = x.to_vec();
        for l in 0..layers {
            let w = self.params.get(2 * l).value().data();
            let b = self.params.get(2 * l + 1).value().data();
            let cols = h.len();
            let mut y: Vec<f64> = b.to_vec();
            for (r, yr) in y.iter_mut().enumerate() {
                *yr += dot(&w[r * cols..(r + 1) * cols], &h);
            }
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            h = y;
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mlp forward".into()));
        }
        Ok(h)
    }

    /// Copy with identical values and fresh optimizer state.
    pub fn clone_params(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            params: self.params.clone_params(),
        }
    }
}
