//! Reverse-mode differentiation over small dense vectors.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters enter
//! by shared reference; [`Graph::backward`] accumulates their gradients in
//! place. Matrices only ever appear as parameters of [`Graph::affine`], so
//! every node value is a flat vector.

use super::tensor::Param;
use crate::error::{Error, Result};

pub type NodeId = usize;

enum Val<'p> {
    Own(Vec<f64>),
    Ref(&'p [f64]),
}

impl Val<'_> {
    fn get(&self) -> &[f64] {
        match self {
            Val::Own(v) => v,
            Val::Ref(v) => v,
        }
    }
}

enum Op<'p> {
    Input,
    Param(&'p Param),
    Affine {
        w: &'p Param,
        b: Option<&'p Param>,
        x: NodeId,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Concat(Vec<NodeId>),
    Slice {
        x: NodeId,
        start: usize,
    },
    LogSoftmax(NodeId),
    Sum(NodeId),
    Clamp {
        x: NodeId,
        lo: f64,
        hi: f64,
    },
    Min(NodeId, NodeId),
    Max(NodeId, NodeId),
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::Affine { .. } => "affine",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Exp(_) => "exp",
            Op::Square(_) => "square",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
            Op::LogSoftmax(_) => "log_softmax",
            Op::Sum(_) => "sum",
            Op::Clamp { .. } => "clamp",
            Op::Min(..) => "min",
            Op::Max(..) => "max",
        }
    }
}

struct Node<'p> {
    value: Val<'p>,
    op: Op<'p>,
}

#[derive(Default)]
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    non_finite: Option<String>,
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            non_finite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        self.nodes[id].value.get()
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id)[0]
    }

    /// Fails if any recorded operation produced NaN or infinity.
    pub fn check(&self) -> Result<()> {
        match &self.non_finite {
            Some(what) => Err(Error::NonFinite(what.clone())),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Val<'p>, op: Op<'p>) -> NodeId {
        let id = self.nodes.len();
        if self.non_finite.is_none() && value.get().iter().any(|x| !x.is_finite()) {
            self.non_finite = Some(format!("{} (node {id})", op.name()));
        }
        self.nodes.push(Node { value, op });
        id
    }

    fn own(&mut self, value: Vec<f64>, op: Op<'p>) -> NodeId {
        self.push(Val::Own(value), op)
    }

    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.own(value, Op::Input)
    }

    pub fn param(&mut self, p: &'p Param) -> NodeId {
        self.push(Val::Ref(p.value().data()), Op::Param(p))
    }

    /// `W x + b` with `W` shaped `[out, in]`.
    pub fn affine(&mut self, w: &'p Param, b: Option<&'p Param>, x: NodeId) -> NodeId {
        let shape = w.value().shape();
        let (rows, cols) = (shape[0], shape[1]);
        let xv = self.value(x);
        assert_eq!(xv.len(), cols, "affine input length");
        let wd = w.value().data();
        let mut y = match b {
            Some(b) => b.value().data().to_vec(),
            None => vec![0.0; rows],
        };
        for (r, yr) in y.iter_mut().enumerate() {
            *yr += dot(&wd[r * cols..(r + 1) * cols], xv);
        }
        self.own(y, Op::Affine { w, b, x })
    }

    fn zip2(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64, op: Op<'p>) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "elementwise operand lengths");
        let v = va.iter().zip(vb).map(|(x, y)| f(*x, *y)).collect();
        self.own(v, op)
    }

    fn map(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op<'p>) -> NodeId {
        let v = self.value(a).iter().map(|x| f(*x)).collect();
        self.own(v, op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip2(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip2(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip2(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn min(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip2(a, b, f64::min, Op::Min(a, b))
    }

    pub fn max(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip2(a, b, f64::max, Op::Max(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.map(a, |x| c * x, Op::Scale(a, c))
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: NodeId, c: f64) -> NodeId {
        self.map(a, |x| x + c, Op::Offset(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.map(a, |x| x * x, Op::Square(a))
    }

    /// Elementwise clamp; the gradient passes only where `lo ≤ x ≤ hi`.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        self.map(x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = Vec::with_capacity(parts.iter().map(|&p| self.value(p).len()).sum());
        for &p in parts {
            v.extend_from_slice(self.value(p));
        }
        self.own(v, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(x)[start..start + len].to_vec();
        self.own(v, Op::Slice { x, start })
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let v = log_softmax(self.value(x));
        self.own(v, Op::LogSoftmax(x))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).iter().sum();
        self.own(vec![s], Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Sum of scalar nodes.
    pub fn add_all(&mut self, xs: &[NodeId]) -> NodeId {
        let cat = self.concat(xs);
        self.sum(cat)
    }

    /// Accumulate `d loss / d param` into every parameter reached from `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<()> {
        self.check()?;
        let n = self.value(loss).len();
        if n != 1 {
            return Err(Error::NonScalarLoss(n));
        }
        let mut grads: Vec<Vec<f64>> = (0..=loss).map(|_| Vec::new()).collect();
        grads[loss] = vec![1.0];
        for id in (0..=loss).rev() {
            if grads[id].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[id]);
            let y = self.value(id);
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Param(p) => p.accumulate(&g),
                Op::Affine { w, b, x } => {
                    let xv = self.value(*x);
                    let cols = xv.len();
                    let wd = w.value().data();
                    {
                        let mut gw = w.grad_mut();
                        for (r, gr) in g.iter().enumerate() {
                            if *gr != 0.0 {
                                axpy(*gr, xv, &mut gw[r * cols..(r + 1) * cols]);
                            }
                        }
                    }
                    if let Some(b) = b {
                        b.accumulate(&g);
                    }
                    let mut dx = vec![0.0; cols];
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            axpy(*gr, &wd[r * cols..(r + 1) * cols], &mut dx);
                        }
                    }
                    acc(&mut grads[*x], &dx);
                }
                Op::Add(a, b) => {
                    acc(&mut grads[*a], &g);
                    acc(&mut grads[*b], &g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads[*a], &g);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    acc(&mut grads[*b], &neg);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let da: Vec<f64> = g.iter().zip(vb).map(|(g, v)| g * v).collect();
                    let db: Vec<f64> = g.iter().zip(va).map(|(g, v)| g * v).collect();
                    acc(&mut grads[*a], &da);
                    acc(&mut grads[*b], &db);
                }
                Op::Scale(a, c) => {
                    let d: Vec<f64> = g.iter().map(|x| c * x).collect();
                    acc(&mut grads[*a], &d);
                }
                Op::Offset(a) => acc(&mut grads[*a], &g),
                Op::Tanh(a) => {
                    let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    acc(&mut grads[*a], &d);
                }
                Op::Sigmoid(a) => {
                    let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    acc(&mut grads[*a], &d);
                }
                Op::Exp(a) => {
                    let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y).collect();
                    acc(&mut grads[*a], &d);
                }
                Op::Square(a) => {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(self.value(*a))
                        .map(|(g, x)| 2.0 * g * x)
                        .collect();
                    acc(&mut grads[*a], &d);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        acc(&mut grads[p], &g[off..off + len]);
                        off += len;
                    }
                }
                Op::Slice { x, start } => {
                    let len = self.value(*x).len();
                    let slot = &mut grads[*x];
                    if slot.is_empty() {
                        *slot = vec![0.0; len];
                    }
                    for (i, gi) in g.iter().enumerate() {
                        slot[start + i] += gi;
                    }
                }
                Op::LogSoftmax(x) => {
                    let total: f64 = g.iter().sum();
                    let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| g - y.exp() * total).collect();
                    acc(&mut grads[*x], &d);
                }
                Op::Sum(x) => {
                    let len = self.value(*x).len();
                    acc(&mut grads[*x], &vec![g[0]; len]);
                }
                Op::Clamp { x, lo, hi } => {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(self.value(*x))
                        .map(|(g, v)| if *v >= *lo && *v <= *hi { *g } else { 0.0 })
                        .collect();
                    acc(&mut grads[*x], &d);
                }
                Op::Min(a, b) | Op::Max(a, b) => {
                    let is_min = matches!(self.nodes[id].op, Op::Min(..));
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let mut da = vec![0.0; g.len()];
                    let mut db = vec![0.0; g.len()];
                    for i in 0..g.len() {
                        let pick_a = if is_min {
                            va[i] <= vb[i]
                        } else {
                            va[i] >= vb[i]
                        };
                        if pick_a {
                            da[i] = g[i];
                        } else {
                            db[i] = g[i];
                        }
                    }
                    acc(&mut grads[*a], &da);
                    acc(&mut grads[*b], &db);
                }
            }
        }
        Ok(())
    }
}

fn acc(slot: &mut Vec<f64>, g: &[f64]) {
    if slot.is_empty() {
        slot.extend_from_slice(g);
    } else {
        for (s, x) in slot.iter_mut().zip(g) {
            *s += x;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}
