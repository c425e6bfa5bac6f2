use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::graph::{Graph, NodeId};
use super::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

/// Single-layer LSTM with gate order input, forget, cell, output.
#[derive(Debug)]
pub struct Lstm {
    input: usize,
    hidden: usize,
    params: ParamSet,
}

const W_IH: usize = 0;
const W_HH: usize = 1;
const BIAS: usize = 2;

impl Lstm {
    /// Uniform `±1/√hidden` weights; forget-gate bias starts at 1.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let mut sample = |n: usize| (0..n).map(|_| dist.sample(rng)).collect::<Vec<_>>();
        let mut params = ParamSet::new();
        params.push(
            "w_ih",
            Tensor::new(vec![4 * hidden, input], sample(4 * hidden * input)).expect("sized"),
        );
        params.push(
            "w_hh",
            Tensor::new(vec![4 * hidden, hidden], sample(4 * hidden * hidden)).expect("sized"),
        );
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        params.push("bias", Tensor::new(vec![4 * hidden], bias).expect("sized"));
        Self {
            input,
            hidden,
            params,
        }
    }

    pub fn from_params(input: usize, hidden: usize, params: ParamSet) -> Result<Self> {
        let ok = params.len() == 3
            && params.get(W_IH).value().shape() == [4 * hidden, input]
            && params.get(W_HH).value().shape() == [4 * hidden, hidden]
            && params.get(BIAS).value().shape() == [4 * hidden];
        if !ok {
            return Err(Error::Checkpoint(
                "LSTM parameter shapes do not match".into(),
            ));
        }
        Ok(Self {
            input,
            hidden,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Run over `xs` from zero state; returns the final hidden state.
    pub fn forward_seq<'p>(&'p self, g: &mut Graph<'p>, xs: &[NodeId]) -> NodeId {
        let hd = self.hidden;
        let mut h = g.input(vec![0.0; hd]);
        let mut c = g.input(vec![0.0; hd]);
        for (t, &x) in xs.iter().enumerate() {
            let mut gates = g.affine(self.params.get(W_IH), Some(self.params.get(BIAS)), x);
            if t > 0 {
                let rec = g.affine(self.params.get(W_HH), None, h);
                gates = g.add(gates, rec);
            }
            let i = g.slice(gates, 0, hd);
            let i = g.sigmoid(i);
            let f = g.slice(gates, hd, hd);
            let f = g.sigmoid(f);
            let cand = g.slice(gates, 2 * hd, hd);
            let cand = g.tanh(cand);
            let o = g.slice(gates, 3 * hd, hd);
            let o = g.sigmoid(o);
            let keep = g.mul(f, c);
            let write = g.mul(i, cand);
            c = g.add(keep, write);
            let squashed = g.tanh(c);
            h = g.mul(o, squashed);
        }
        h
    }
}
