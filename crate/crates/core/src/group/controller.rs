use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kl::{centroid, intra_divergence, symmetric_kl, GaussianEmbedding};
use super::kmeans::{dist2, kmeans};
use super::tree::GroupTree;
use crate::error::{Error, Result};

/// Split/merge thresholds and the adaptive-period schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub delta0: u32,
    pub delta_min: u32,
    pub delta_max: u32,
    pub eta: f64,
    pub zeta: f64,
    pub delta_target: f64,
    pub d_split: f64,
    pub tau_merge: f64,
    /// Re-cluster a split group into up to `s_max` children.
    pub refine_split: bool,
    pub split_merge: bool,
    pub adaptive_period: bool,
    pub kmeans_max_iter: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            delta0: 8,
            delta_min: 1,
            delta_max: 64,
            eta: 0.9,
            zeta: 3.0,
            delta_target: 0.02,
            d_split: 0.5,
            tau_merge: 0.05,
            refine_split: false,
            split_merge: true,
            adaptive_period: true,
            kmeans_max_iter: 100,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config("eta must lie in (0, 1)".into()));
        }
        if self.delta_min == 0 || self.delta_min > self.delta_max {
            return Err(Error::Config("need 1 <= delta_min <= delta_max".into()));
        }
        if !(self.delta_min..=self.delta_max).contains(&self.delta0) {
            return Err(Error::Config(
                "delta0 outside [delta_min, delta_max]".into(),
            ));
        }
        if !(self.d_split > 0.0
            && self.tau_merge > 0.0
            && self.delta_target > 0.0
            && self.zeta > 0.0)
        {
            return Err(Error::Config(
                "controller thresholds must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub d_bar: f64,
    pub delta: u32,
    pub episodes_since_regroup: u32,
    pub ticks: u64,
}

/// `η·D̄ + (1 − η)·mean`.
pub fn update_running_divergence(d_bar: f64, mean: f64, eta: f64) -> f64 {
    eta * d_bar + (1.0 - eta) * mean
}

/// Regroup period for running divergence `d_bar`.
pub fn update_period(cfg: &ControllerConfig, d_bar: f64) -> u32 {
    if !cfg.adaptive_period {
        return cfg.delta0;
    }
    let raw = (f64::from(cfg.delta0) * (-cfg.zeta * (d_bar - cfg.delta_target)).exp()).ceil();
    let raw = if raw.is_nan() {
        f64::from(cfg.delta0)
    } else {
        raw.max(1.0)
    };
    raw.clamp(f64::from(cfg.delta_min), f64::from(cfg.delta_max)) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Split,
    Merge,
    Reassign,
    Period,
}

/// One record of the group-event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEvent {
    pub episode: usize,
    pub op: EventKind,
    pub groups_in: Vec<u32>,
    pub groups_out: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub agents: Vec<usize>,
    pub delta_before: u32,
    pub delta_after: u32,
    pub d_bar: f64,
}

pub fn write_events(path: &Path, events: &[GroupEvent]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Members' embeddings of local group `index`.
fn members<'a>(
    tree: &GroupTree,
    index: usize,
    embeddings: &'a [GaussianEmbedding],
) -> Vec<&'a GaussianEmbedding> {
    tree.locals()[index]
        .agents
        .iter()
        .map(|&a| &embeddings[a])
        .collect()
}

/// Per-local-group divergences, in `tree.locals()` order.
pub fn group_divergences(tree: &GroupTree, embeddings: &[GaussianEmbedding]) -> Result<Vec<f64>> {
    check_embeddings(tree, embeddings)?;
    (0..tree.locals().len())
        .map(|i| intra_divergence(&members(tree, i, embeddings)))
        .collect()
}

fn check_embeddings(tree: &GroupTree, embeddings: &[GaussianEmbedding]) -> Result<()> {
    if embeddings.len() != tree.agents() {
        return Err(Error::ShapeMismatch {
            expected: tree.agents(),
            got: embeddings.len(),
        });
    }
    Ok(())
}

/// Bisect local group `index` when it is diverse, large and the cap allows.
/// Returns the children's ids.
pub fn try_split(
    tree: &mut GroupTree,
    index: usize,
    divergence: f64,
    embeddings: &[GaussianEmbedding],
    cfg: &ControllerConfig,
    seed: u64,
) -> Result<Option<Vec<u32>>> {
    let caps = *tree.caps();
    let agents = tree.locals()[index].agents.clone();
    if divergence <= cfg.d_split || agents.len() <= caps.s_min || tree.locals().len() >= caps.l_max
    {
        return Ok(None);
    }
    let points: Vec<Vec<f64>> = agents.iter().map(|&a| embeddings[a].mean.clone()).collect();
    let mut k = 2;
    if cfg.refine_split {
        let room = caps.l_max - tree.locals().len() + 1;
        k = caps.s_max.min(room).min(agents.len()).max(2);
    }
    let labels = kmeans(&points, k, seed, cfg.kmeans_max_iter)?;
    let mut parts = vec![Vec::new(); k];
    for (&a, &l) in agents.iter().zip(&labels) {
        parts[l].push(a);
    }
    Ok(Some(tree.split_local(index, parts)?))
}

/// Outcome of a merge: the surviving id, the removed id, and agents moved
/// to other groups by the follow-up reassignment.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub kept: u32,
    pub absorbed: u32,
    pub divergence: f64,
    pub moved: Vec<(usize, u32)>,
}

/// Fuse local groups `a` and `b` when their centroids are close.
///
/// The larger group's head survives (ties go to the lower id). Members of
/// the merged group then move to the nearest surviving centroid of their
/// global group, never emptying the merged group.
pub fn try_merge(
    tree: &mut GroupTree,
    a: usize,
    b: usize,
    embeddings: &[GaussianEmbedding],
    cfg: &ControllerConfig,
) -> Result<Option<MergeOutcome>> {
    let (la, lb) = (&tree.locals()[a], &tree.locals()[b]);
    if a == b || la.global != lb.global {
        return Err(Error::Validation(
            "merge candidates must share a global group".into(),
        ));
    }
    let ca = centroid(&members(tree, a, embeddings))?;
    let cb = centroid(&members(tree, b, embeddings))?;
    let divergence = symmetric_kl(&ca, &cb)?;
    if divergence.is_nan() || divergence >= cfg.tau_merge {
        return Ok(None);
    }
    let a_wins = match la.agents.len().cmp(&lb.agents.len()) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => la.id < lb.id,
    };
    let (keep, absorb) = if a_wins { (a, b) } else { (b, a) };
    let kept = tree.locals()[keep].id;
    let absorbed = tree.locals()[absorb].id;
    let global = tree.locals()[keep].global;
    tree.merge_locals(keep, absorb)?;
    let keep = tree.local_position(kept).expect("kept group survives");

    let siblings = tree.locals_in(global);
    let centroids: Vec<(usize, GaussianEmbedding)> = siblings
        .iter()
        .map(|&i| Ok((i, centroid(&members(tree, i, embeddings))?)))
        .collect::<Result<_>>()?;
    let merged = tree.locals()[keep].agents.clone();
    let mut targets: Vec<(usize, usize)> = Vec::new();
    for &agent in &merged {
        let z = &embeddings[agent].mean;
        let own = dist2(
            z,
            &centroids
                .iter()
                .find(|c| c.0 == keep)
                .expect("merged centroid")
                .1
                .mean,
        );
        let mut best = (keep, own);
        for (i, c) in &centroids {
            let d = dist2(z, &c.mean);
            if d < best.1 {
                best = (*i, d);
            }
        }
        targets.push((agent, best.0));
    }
    if targets.iter().all(|t| t.1 != keep) {
        // Keep the member closest to the merged centroid.
        let mc = &centroids
            .iter()
            .find(|c| c.0 == keep)
            .expect("merged centroid")
            .1
            .mean;
        let stay = (0..merged.len())
            .min_by(|&i, &j| {
                dist2(&embeddings[merged[i]].mean, mc)
                    .total_cmp(&dist2(&embeddings[merged[j]].mean, mc))
            })
            .expect("nonempty");
        targets[stay].1 = keep;
    }
    let mut moved = Vec::new();
    for (agent, to) in targets {
        if to != keep {
            moved.push((agent, tree.locals()[to].id));
            tree.move_agent(agent, to)?;
        }
    }
    Ok(Some(MergeOutcome {
        kept,
        absorbed,
        divergence,
        moved,
    }))
}

/// Episode-boundary regrouping with an adaptive period.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    state: ControllerState,
    seed: u64,
}

impl Controller {
    pub fn new(cfg: ControllerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let state = ControllerState {
            d_bar: cfg.delta_target,
            delta: cfg.delta0,
            episodes_since_regroup: 0,
            ticks: 0,
        };
        Ok(Self { cfg, state, seed })
    }

    pub fn from_state(cfg: ControllerConfig, state: ControllerState, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, state, seed })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Count a finished episode. When the period has elapsed, pull fresh
    /// embeddings, split then merge, and update `D̄` and `Δ`. Returns
    /// whether a sweep ran.
    pub fn regroup_tick<F>(
        &mut self,
        tree: &mut GroupTree,
        embed: F,
        episode: usize,
        events: &mut Vec<GroupEvent>,
    ) -> Result<bool>
    where
        F: FnOnce(&GroupTree) -> Result<Vec<GaussianEmbedding>>,
    {
        self.state.episodes_since_regroup += 1;
        if self.state.episodes_since_regroup < self.state.delta {
            return Ok(false);
        }
        self.state.episodes_since_regroup = 0;
        self.state.ticks += 1;
        let embeddings = embed(tree)?;
        let divergences = group_divergences(tree, &embeddings)?;
        let delta_before = self.state.delta;
        let mut log = Vec::new();

        if self.cfg.split_merge {
            let mut order: Vec<(u32, f64)> = tree
                .locals()
                .iter()
                .map(|l| l.id)
                .zip(divergences.iter().copied())
                .collect();
            order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            for (n, (id, d)) in order.into_iter().enumerate() {
                let Some(index) = tree.local_position(id) else {
                    continue;
                };
                let seed = crate::seed::SeedTree::new(self.seed).derive(self.state.ticks, n as u64);
                if let Some(children) = try_split(tree, index, d, &embeddings, &self.cfg, seed)? {
                    log.push((EventKind::Split, vec![id], children, Some(d), Vec::new()));
                }
            }
            self.merge_pass(tree, &embeddings, &mut log)?;
        }
        tree.validate()?;

        let mean = divergences.iter().sum::<f64>() / divergences.len() as f64;
        self.state.d_bar = update_running_divergence(self.state.d_bar, mean, self.cfg.eta);
        self.state.delta = update_period(&self.cfg, self.state.d_bar);
        for (op, groups_in, groups_out, divergence, agents) in log {
            events.push(GroupEvent {
                episode,
                op,
                groups_in,
                groups_out,
                divergence,
                agents,
                delta_before,
                delta_after: self.state.delta,
                d_bar: self.state.d_bar,
            });
        }
        events.push(GroupEvent {
            episode,
            op: EventKind::Period,
            groups_in: Vec::new(),
            groups_out: Vec::new(),
            divergence: Some(mean),
            agents: Vec::new(),
            delta_before,
            delta_after: self.state.delta,
            d_bar: self.state.d_bar,
        });
        Ok(true)
    }

    #[allow(clippy::type_complexity)]
    fn merge_pass(
        &self,
        tree: &mut GroupTree,
        embeddings: &[GaussianEmbedding],
        log: &mut Vec<(EventKind, Vec<u32>, Vec<u32>, Option<f64>, Vec<usize>)>,
    ) -> Result<()> {
        let globals: Vec<u32> = tree.globals().iter().map(|g| g.id).collect();
        for global in globals {
            let locals = tree.locals_in(global);
            let cents: Vec<(u32, GaussianEmbedding)> = locals
                .iter()
                .map(|&i| {
                    Ok((
                        tree.locals()[i].id,
                        centroid(&members(tree, i, embeddings))?,
                    ))
                })
                .collect::<Result<_>>()?;
            let mut pairs = Vec::new();
            for i in 0..cents.len() {
                for j in i + 1..cents.len() {
                    pairs.push((
                        symmetric_kl(&cents[i].1, &cents[j].1)?,
                        cents[i].0,
                        cents[j].0,
                    ));
                }
            }
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
            let mut touched: Vec<u32> = Vec::new();
            for (_, ia, ib) in pairs {
                if touched.contains(&ia) || touched.contains(&ib) {
                    continue;
                }
                let (Some(a), Some(b)) = (tree.local_position(ia), tree.local_position(ib)) else {
                    continue;
                };
                if let Some(out) = try_merge(tree, a, b, embeddings, &self.cfg)? {
                    touched.extend([ia, ib]);
                    log.push((
                        EventKind::Merge,
                        vec![ia, ib],
                        vec![out.kept],
                        Some(out.divergence),
                        Vec::new(),
                    ));
                    for (agent, to) in out.moved {
                        touched.push(to);
                        log.push((
                            EventKind::Reassign,
                            vec![out.kept],
                            vec![to],
                            None,
                            vec![agent],
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
