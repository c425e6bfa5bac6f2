use rand::Rng;

use super::config::RewardMode;
use super::gae::compute_gae;
use crate::env::{avail_metric, Environment, StepOutcome};
use crate::error::{Error, Result};
use crate::group::GroupTree;
use crate::ingest::{HistoryMode, RegionGrid};
use crate::nn::ActionDistribution;

/// Produces every agent's action distribution and value from the global state.
pub trait Actor {
    fn evaluate(&self, state: &[f64], open: &[[bool; 4]])
        -> Result<Vec<(ActionDistribution, f64)>>;
}

impl Actor for GroupTree {
    fn evaluate(
        &self,
        state: &[f64],
        open: &[[bool; 4]],
    ) -> Result<Vec<(ActionDistribution, f64)>> {
        if open.len() != self.agents() {
            return Err(Error::ShapeMismatch {
                expected: self.agents(),
                got: open.len(),
            });
        }
        let embeds: Vec<Vec<f64>> = self
            .globals()
            .iter()
            .map(|g| g.trunk.embed(state))
            .collect::<Result<_>>()?;
        (0..self.agents())
            .map(|i| {
                self.head_for(i).policy_head(
                    &embeds[self.global_index(i)],
                    self.ids().get(i),
                    open[i],
                )
            })
            .collect()
    }
}

/// Always ships nothing; the zero-action reference policy.
#[derive(Debug, Clone, Copy)]
pub struct IdleActor {
    pub m_dir: u32,
}

impl Actor for IdleActor {
    fn evaluate(
        &self,
        _state: &[f64],
        open: &[[bool; 4]],
    ) -> Result<Vec<(ActionDistribution, f64)>> {
        let c = self.m_dir as usize + 1;
        let mut logits = vec![-1e30; 4 * c];
        (0..4).for_each(|d| logits[d * c] = 0.0);
        open.iter()
            .map(|&o| Ok((ActionDistribution::new(logits.clone(), self.m_dir, o)?, 0.0)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSelect {
    Sample,
    /// Mode of every categorical.
    Greedy,
}

/// Per-step, per-agent transitions of one episode. Flat vectors are indexed
/// `t * agents + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub agents: usize,
    pub steps: usize,
    pub states: Vec<Vec<f64>>,
    pub open: Vec<[bool; 4]>,
    pub actions: Vec<[u32; 4]>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Per agent, one `(state slice, action, reward)` tuple per step.
    pub tuples: Vec<Vec<Vec<f64>>>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(agents: usize, open: Vec<[bool; 4]>) -> Self {
        Self {
            agents,
            steps: 0,
            states: Vec::new(),
            open,
            actions: Vec::new(),
            log_probs: Vec::new(),
            values: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            tuples: vec![Vec::new(); agents],
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps * self.agents
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    pub fn index(&self, t: usize, agent: usize) -> usize {
        t * self.agents + agent
    }

    /// Rewards each agent learns from, per `mode`, flat like `rewards`.
    pub fn training_rewards(&self, mode: RewardMode, grid: &RegionGrid) -> Vec<f64> {
        let n = self.agents;
        let mut out = Vec::with_capacity(self.rewards.len());
        for row in self.rewards.chunks(n) {
            match mode {
                RewardMode::Own => out.extend_from_slice(row),
                RewardMode::Team => {
                    let mean = row.iter().sum::<f64>() / n as f64;
                    out.extend(std::iter::repeat_n(mean, n));
                }
                RewardMode::Neighborhood => {
                    for i in 0..n {
                        let mut total = row[i];
                        let mut count = 1.0;
                        for j in grid.neighbors(i).iter().flatten() {
                            total += row[*j];
                            count += 1.0;
                        }
                        out.push(total / count);
                    }
                }
            }
        }
        out
    }

    /// Fill `advantages` and `returns` per agent from `train_rewards`.
    pub fn finish(&mut self, train_rewards: &[f64], gamma: f64, lambda: f64) -> Result<()> {
        if train_rewards.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                got: train_rewards.len(),
            });
        }
        self.advantages = vec![0.0; self.len()];
        self.returns = vec![0.0; self.len()];
        for i in 0..self.agents {
            let idx: Vec<usize> = (0..self.steps).map(|t| self.index(t, i)).collect();
            let r: Vec<f64> = idx.iter().map(|&k| train_rewards[k]).collect();
            let v: Vec<f64> = idx.iter().map(|&k| self.values[k]).collect();
            let (adv, ret) = compute_gae(&r, &v, &self.dones, 0.0, gamma, lambda);
            for (j, &k) in idx.iter().enumerate() {
                self.advantages[k] = adv[j];
                self.returns[k] = ret[j];
            }
        }
        Ok(())
    }
}

/// Summary of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub service_ratio: f64,
    pub rebalanced: u64,
    pub mean_reward: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub buffer: RolloutBuffer,
    pub stats: EpisodeStats,
    pub outcomes: Vec<StepOutcome>,
}

/// Width of one trajectory tuple for the encoder.
pub fn tuple_dim(mode: HistoryMode) -> usize {
    crate::ingest::features::region_slice_dim(mode) + 5
}

/// Reset `env` and play up to `max_steps` intervals with `actor`.
pub fn collect_rollout<A: Actor + ?Sized, R: Rng + ?Sized>(
    env: &mut Environment,
    actor: &A,
    max_steps: usize,
    select: ActionSelect,
    rng: &mut R,
) -> Result<Episode> {
    env.reset();
    let n = env.agents();
    let open: Vec<[bool; 4]> = (0..n).map(|i| env.open_directions(i)).collect();
    let m_dir = f64::from(env.config().max_per_direction().max(1));
    let cfg = env.config();
    let reward_span = cfg.lambda_coef + cfg.alpha + cfg.beta;
    let mut buf = RolloutBuffer::new(n, open.clone());
    let mut outcomes = Vec::new();
    while !env.done() && buf.steps < max_steps {
        let obs = env.observe();
        let state = obs.to_input(env.scales());
        let evals = actor.evaluate(&state, &open)?;
        let mut joint = Vec::with_capacity(n);
        for (dist, value) in &evals {
            let a = match select {
                ActionSelect::Sample => dist.sample(rng),
                ActionSelect::Greedy => dist.mode(),
            };
            let lp = dist.log_prob(a);
            if !lp.is_finite() || !value.is_finite() {
                return Err(Error::NonFinite("policy evaluation".into()));
            }
            buf.actions.push(a);
            buf.log_probs.push(lp);
            buf.values.push(*value);
            joint.push(a);
        }
        let outcome = env.step(&joint)?;
        for (i, action) in joint.iter().enumerate() {
            let mut tuple = obs.region_slice(i, env.scales());
            tuple.extend(action.iter().map(|&x| f64::from(x) / m_dir));
            tuple.push(outcome.rewards[i] / reward_span);
            buf.tuples[i].push(tuple);
        }
        buf.rewards.extend_from_slice(&outcome.rewards);
        buf.states.push(state);
        buf.steps += 1;
        buf.dones.push(false);
        outcomes.push(outcome);
    }
    if let Some(last) = buf.dones.last_mut() {
        *last = true;
    }
    let stats = EpisodeStats {
        service_ratio: avail_metric(&outcomes),
        rebalanced: crate::env::total_rebalanced(&outcomes),
        mean_reward: if buf.rewards.is_empty() {
            0.0
        } else {
            buf.rewards.iter().sum::<f64>() / buf.rewards.len() as f64
        },
        steps: buf.steps,
    };
    Ok(Episode {
        buffer: buf,
        stats,
        outcomes,
    })
}
