use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::config::TrainConfig;
use super::gae::normalize;
use super::rollout::RolloutBuffer;
use crate::error::{Error, Result};
use crate::group::{GroupTree, ParamRole};
use crate::nn::{adam_update, policy_terms, AdamConfig, Graph, NodeId, ParamSet};

/// Mean losses over all minibatches of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Scale all gradients so their joint norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(sets: &[&ParamSet], max_norm: f64) -> f64 {
    let norm = sets.iter().map(|s| s.grad_sq_norm()).sum::<f64>().sqrt();
    if norm > max_norm {
        let f = max_norm / (norm + 1e-12);
        sets.iter().for_each(|s| s.scale_grads(f));
    }
    norm
}

/// Clipped-surrogate PPO over the finished `buffer`.
pub fn ppo_update<R: Rng + ?Sized>(
    buffer: &RolloutBuffer,
    tree: &mut GroupTree,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    if buffer.advantages.len() != buffer.len() {
        return Err(Error::Validation(
            "buffer has no advantages; call finish first".into(),
        ));
    }
    let n = buffer.len();
    if n == 0 {
        return Ok(UpdateStats::default());
    }
    let adam = AdamConfig::default();
    let mut totals = UpdateStats::default();
    let mut batches = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        let size = n.div_ceil(cfg.minibatches.min(n));
        for chunk in order.chunks(size) {
            tree.zero_grad();
            let stats = minibatch_backward(buffer, tree, cfg, chunk)?;
            {
                let mut sets: Vec<&ParamSet> = Vec::new();
                for g in tree.globals() {
                    sets.push(g.trunk.mlp.params());
                }
                for l in tree.locals() {
                    sets.push(l.head.policy.params());
                    sets.push(l.head.value.params());
                }
                if tree.ids().enabled() {
                    sets.push(tree.ids().params());
                }
                clip_grad_norm(&sets, cfg.max_grad_norm);
            }
            for (set, role) in tree.param_sets_mut() {
                let lr = match role {
                    ParamRole::Policy => cfg.lr_policy,
                    ParamRole::Value => cfg.lr_value,
                };
                adam_update(set, lr, &adam);
            }
            totals.policy_loss += stats.policy_loss;
            totals.value_loss += stats.value_loss;
            totals.entropy += stats.entropy;
            totals.approx_kl += stats.approx_kl;
            totals.clip_fraction += stats.clip_fraction;
            batches += 1;
        }
    }
    let b = batches as f64;
    Ok(UpdateStats {
        policy_loss: totals.policy_loss / b,
        value_loss: totals.value_loss / b,
        entropy: totals.entropy / b,
        approx_kl: totals.approx_kl / b,
        clip_fraction: totals.clip_fraction / b,
    })
}

/// Record the loss of one minibatch and accumulate its gradients.
pub fn minibatch_backward(
    buffer: &RolloutBuffer,
    tree: &GroupTree,
    cfg: &TrainConfig,
    samples: &[usize],
) -> Result<UpdateStats> {
    let mut adv: Vec<f64> = samples.iter().map(|&k| buffer.advantages[k]).collect();
    normalize(&mut adv);
    let m_dir = tree.dims().m_dir;
    let eps = cfg.clip_ratio;
    let mut g = Graph::new();
    let mut trunks: HashMap<(usize, usize), NodeId> = HashMap::new();
    let mut terms = Vec::with_capacity(samples.len());
    let mut stats = UpdateStats::default();
    let mut parts = Vec::with_capacity(samples.len());
    for (j, &k) in samples.iter().enumerate() {
        let (t, i) = (k / buffer.agents, k % buffer.agents);
        let gi = tree.global_index(i);
        let h = match trunks.get(&(gi, t)) {
            Some(&h) => h,
            None => {
                let x = g.input(buffer.states[t].clone());
                let h = tree.globals()[gi].trunk.mlp.forward(&mut g, x);
                trunks.insert((gi, t), h);
                h
            }
        };
        let id = tree.ids().node(&mut g, i);
        let input = g.concat(&[h, id]);
        let (logits, value) = tree.head_for(i).forward_graph(&mut g, input);
        let (logp, ent) = policy_terms(&mut g, logits, m_dir, buffer.open[i], buffer.actions[k]);

        let old_lp = buffer.log_probs[k];
        let diff = g.offset(logp, -old_lp);
        let ratio = g.exp(diff);
        let s1 = g.scale(ratio, adv[j]);
        let clipped = g.clamp(ratio, 1.0 - eps, 1.0 + eps);
        let s2 = g.scale(clipped, adv[j]);
        let surr = g.min(s1, s2);

        let (old_v, ret) = (buffer.values[k], buffer.returns[k]);
        let dv = g.offset(value, -old_v);
        let dv = g.clamp(dv, -cfg.value_clip, cfg.value_clip);
        let v_clip = g.offset(dv, old_v);
        let e1 = g.offset(value, -ret);
        let l1 = g.square(e1);
        let e2 = g.offset(v_clip, -ret);
        let l2 = g.square(e2);
        let vloss = g.max(l1, l2);

        let p = g.scale(surr, -1.0);
        let v = g.scale(vloss, 0.5 * cfg.vf_coef);
        let e = g.scale(ent, -cfg.entropy_coef);
        terms.push(g.add_all(&[p, v, e]));
        parts.push((surr, vloss, ent, diff));
    }
    let total = g.add_all(&terms);
    let loss = g.scale(total, 1.0 / samples.len() as f64);
    g.check()?;
    g.backward(loss)?;

    let n = samples.len() as f64;
    for (surr, vloss, ent, diff) in parts {
        let d = g.scalar(diff);
        stats.policy_loss -= g.scalar(surr) / n;
        stats.value_loss += 0.5 * g.scalar(vloss) / n;
        stats.entropy += g.scalar(ent) / n;
        stats.approx_kl += (d.exp() - 1.0 - d) / n;
        if (d.exp() - 1.0).abs() > eps {
            stats.clip_fraction += 1.0 / n;
        }
    }
    Ok(stats)
}
