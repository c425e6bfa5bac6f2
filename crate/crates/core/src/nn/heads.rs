use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::{log_softmax, Graph, NodeId};
use super::mlp::Mlp;
use super::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

/// Layer widths shared by every trunk and head of one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub state_dim: usize,
    pub trunk_hidden: usize,
    pub embed_dim: usize,
    pub id_dim: usize,
    pub head_hidden: usize,
    /// Largest outflow per direction; each direction has `m_dir + 1` choices.
    pub m_dir: u32,
}

impl NetDims {
    pub fn new(state_dim: usize, m_dir: u32) -> Self {
        Self {
            state_dim,
            trunk_hidden: 128,
            embed_dim: 64,
            id_dim: 8,
            head_hidden: 128,
            m_dir,
        }
    }

    pub fn choices(&self) -> usize {
        self.m_dir as usize + 1
    }

    pub fn logits(&self) -> usize {
        4 * self.choices()
    }
}

/// Feature trunk mapping the global state to an embedding.
#[derive(Debug)]
pub struct TrunkNet {
    pub mlp: Mlp,
}

impl TrunkNet {
    pub fn new<R: Rng + ?Sized>(dims: &NetDims, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(
                &[dims.state_dim, dims.trunk_hidden, dims.embed_dim],
                1.0,
                rng,
            ),
        }
    }

    pub fn embed(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.mlp.infer(state)
    }

    pub fn clone_params(&self) -> Self {
        Self {
            mlp: self.mlp.clone_params(),
        }
    }
}

/// Actor–critic head over `concat(trunk embedding, agent ID embedding)`.
/// Policy and value have separate hidden layers so that they can be stepped
/// at different learning rates.
#[derive(Debug)]
pub struct HeadNet {
    pub policy: Mlp,
    pub value: Mlp,
    pub m_dir: u32,
}

impl HeadNet {
    pub fn new<R: Rng + ?Sized>(dims: &NetDims, rng: &mut R) -> Self {
        let input = dims.embed_dim + dims.id_dim;
        Self {
            policy: Mlp::new(&[input, dims.head_hidden, dims.logits()], 0.01, rng),
            value: Mlp::new(&[input, dims.head_hidden, 1], 1.0, rng),
            m_dir: dims.m_dir,
        }
    }

    /// Categorical logits per direction and the state-value estimate.
    pub fn policy_head(
        &self,
        h: &[f64],
        id: &[f64],
        open: [bool; 4],
    ) -> Result<(ActionDistribution, f64)> {
        let mut x = Vec::with_capacity(h.len() + id.len());
        x.extend_from_slice(h);
        x.extend_from_slice(id);
        let logits = self.policy.infer(&x)?;
        let value = self.value.infer(&x)?[0];
        Ok((ActionDistribution::new(logits, self.m_dir, open)?, value))
    }

    /// Record the head on `g`; returns `(logits, value)` nodes.
    pub fn forward_graph<'p>(&'p self, g: &mut Graph<'p>, input: NodeId) -> (NodeId, NodeId) {
        let logits = self.policy.forward(g, input);
        let value = self.value.forward(g, input);
        (logits, value)
    }

    pub fn param_count(&self) -> usize {
        self.policy.params().num_scalars() + self.value.params().num_scalars()
    }

    pub fn clone_params(&self) -> Self {
        Self {
            policy: self.policy.clone_params(),
            value: self.value.clone_params(),
            m_dir: self.m_dir,
        }
    }

    pub fn same_values(&self, other: &HeadNet) -> bool {
        self.policy.params().same_values(other.policy.params())
            && self.value.params().same_values(other.value.params())
    }
}

/// Learnable per-agent identity vectors. When disabled every agent reads a
/// frozen zero vector.
#[derive(Debug)]
pub struct IdEmbeddings {
    params: ParamSet,
    dim: usize,
    enabled: bool,
}

impl IdEmbeddings {
    pub fn new<R: Rng + ?Sized>(agents: usize, dim: usize, enabled: bool, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut params = ParamSet::new();
        for i in 0..agents {
            let v = if enabled {
                (0..dim).map(|_| normal.sample(rng)).collect()
            } else {
                vec![0.0; dim]
            };
            params.push(format!("id{i}"), Tensor::new(vec![dim], v).expect("sized"));
        }
        Self {
            params,
            dim,
            enabled,
        }
    }

    pub fn from_params(params: ParamSet, dim: usize, enabled: bool) -> Result<Self> {
        if params.iter().any(|p| p.value().shape() != [dim]) {
            return Err(Error::Checkpoint("ID embedding has wrong width".into()));
        }
        Ok(Self {
            params,
            dim,
            enabled,
        })
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agents(&self) -> usize {
        self.params.len()
    }

    pub fn get(&self, agent: usize) -> &[f64] {
        self.params.get(agent).value().data()
    }

    /// Graph node for agent `i`'s vector: a trainable leaf, or a constant
    /// zero input when disabled.
    pub fn node<'p>(&'p self, g: &mut Graph<'p>, agent: usize) -> NodeId {
        if self.enabled {
            g.param(self.params.get(agent))
        } else {
            g.input(vec![0.0; self.dim])
        }
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

/// Four independent categoricals over outflow magnitudes `0..=m_dir`, one
/// per direction. Directions without a neighbor are pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    log_probs: Vec<Vec<f64>>,
    open: [bool; 4],
    m_dir: u32,
}

impl ActionDistribution {
    pub fn new(logits: Vec<f64>, m_dir: u32, open: [bool; 4]) -> Result<Self> {
        let c = m_dir as usize + 1;
        if logits.len() != 4 * c {
            return Err(Error::ShapeMismatch {
                expected: 4 * c,
                got: logits.len(),
            });
        }
        let log_probs = logits.chunks(c).map(log_softmax).collect();
        Ok(Self {
            log_probs,
            open,
            m_dir,
        })
    }

    pub fn log_probs(&self, dir: usize) -> &[f64] {
        &self.log_probs[dir]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [u32; 4] {
        let mut a = [0u32; 4];
        for (d, slot) in a.iter_mut().enumerate() {
            if !self.open[d] {
                continue;
            }
            let u: f64 = rng.gen();
            let mut cum = 0.0;
            *slot = self.m_dir;
            for (k, lp) in self.log_probs[d].iter().enumerate() {
                cum += lp.exp();
                if u < cum {
                    *slot = k as u32;
                    break;
                }
            }
        }
        a
    }

    /// Most likely magnitude per direction (lowest on ties).
    pub fn mode(&self) -> [u32; 4] {
        let mut a = [0u32; 4];
        for (d, slot) in a.iter_mut().enumerate() {
            if self.open[d] {
                let lp = &self.log_probs[d];
                let best = (0..lp.len()).fold(0, |b, k| if lp[k] > lp[b] { k } else { b });
                *slot = best as u32;
            }
        }
        a
    }

    pub fn log_prob(&self, action: [u32; 4]) -> f64 {
        (0..4)
            .filter(|&d| self.open[d])
            .map(|d| self.log_probs[d][action[d] as usize])
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        (0..4)
            .filter(|&d| self.open[d])
            .map(|d| {
                -self.log_probs[d]
                    .iter()
                    .map(|lp| lp.exp() * lp)
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Joint log-probability and entropy of `action` under `logits`, on the graph.
pub fn policy_terms(
    g: &mut Graph<'_>,
    logits: NodeId,
    m_dir: u32,
    open: [bool; 4],
    action: [u32; 4],
) -> (NodeId, NodeId) {
    let c = m_dir as usize + 1;
    let mut logps = Vec::new();
    let mut ents = Vec::new();
    for d in (0..4).filter(|&d| open[d]) {
        let part = g.slice(logits, d * c, c);
        let lsm = g.log_softmax(part);
        logps.push(g.slice(lsm, action[d] as usize, 1));
        let p = g.exp(lsm);
        let plogp = g.mul(p, lsm);
        let s = g.sum(plogp);
        ents.push(g.scale(s, -1.0));
    }
    if logps.is_empty() {
        let z = g.input(vec![0.0]);
        return (z, z);
    }
    (g.add_all(&logps), g.add_all(&ents))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_are_equiprobable() {
        let d = ActionDistribution::new(vec![0.7; 12], 2, [true; 4]).unwrap();
        for dir in 0..4 {
            for lp in d.log_probs(dir) {
                assert!((lp.exp() - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        assert!((d.entropy() - 4.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn joint_log_prob_matches_enumeration() {
        // Oracle: enumerate all joint actions on m_dir = 1, build each joint
        // probability as a product of per-direction softmax terms.
        let logits = vec![0.3, -0.2, 1.1, 0.4, -0.7, 0.0, 0.25, 0.9];
        let d = ActionDistribution::new(logits.clone(), 1, [true; 4]).unwrap();
        let softmax = |a: f64, b: f64| {
            let (ea, eb) = (a.exp(), b.exp());
            [ea / (ea + eb), eb / (ea + eb)]
        };
        let mut total = 0.0;
        for code in 0..16u32 {
            let act = [code & 1, (code >> 1) & 1, (code >> 2) & 1, (code >> 3) & 1];
            let mut p = 1.0;
            for dir in 0..4 {
                p *= softmax(logits[2 * dir], logits[2 * dir + 1])[act[dir] as usize];
            }
            total += p;
            assert!((d.log_prob(act) - p.ln()).abs() < 1e-12);
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_directions_are_pinned() {
        let mut logits = vec![0.0; 12];
        logits[2] = 50.0;
        let d = ActionDistribution::new(logits, 2, [false, true, true, true]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(d.sample(&mut rng)[0], 0);
        }
        assert_eq!(d.mode()[0], 0);
        assert!((d.log_prob([2, 0, 0, 0]) - d.log_prob([0, 0, 0, 0])).abs() < 1e-15);
    }

    #[test]
    fn sampling_frequencies_follow_probabilities() {
        let d = ActionDistribution::new(
            vec![0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            2,
            [true; 4],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        let n = 20_000;
        for _ in 0..n {
            counts[d.sample(&mut rng)[0] as usize] += 1;
        }
        for (k, &count) in counts.iter().enumerate() {
            let p = d.log_probs(0)[k].exp();
            assert!((count as f64 / n as f64 - p).abs() < 0.015);
        }
        assert_eq!(d.mode()[0], 2);
    }

    #[test]
    fn graph_terms_match_direct_evaluation() {
        let logits = vec![
            0.3, -0.2, 1.1, 0.4, -0.7, 0.0, 0.25, 0.9, 0.5, -0.5, 0.1, 0.2,
        ];
        let open = [true, false, true, true];
        let d = ActionDistribution::new(logits.clone(), 2, open).unwrap();
        let mut g = Graph::new();
        let l = g.input(logits);
        let (lp, ent) = policy_terms(&mut g, l, 2, open, [2, 1, 0, 1]);
        assert!((g.scalar(lp) - d.log_prob([2, 1, 0, 1])).abs() < 1e-12);
        assert!((g.scalar(ent) - d.entropy()).abs() < 1e-12);
    }

    #[test]
    fn disabled_ids_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ids = IdEmbeddings::new(3, 8, false, &mut rng);
        assert!(ids.get(2).iter().all(|&x| x == 0.0));
        let dims = NetDims::new(5, 2);
        let head = HeadNet::new(&dims, &mut rng);
        let h = vec![0.1; dims.embed_dim];
        let (a, va) = head.policy_head(&h, ids.get(0), [true; 4]).unwrap();
        let (b, vb) = head.policy_head(&h, ids.get(2), [true; 4]).unwrap();
        assert_eq!((a, va), (b, vb));
    }
}
