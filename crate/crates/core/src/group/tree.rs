use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use crate::error::{Error, Result};
use crate::ingest::RegionGrid;
use crate::nn::{HeadNet, IdEmbeddings, NetDims, ParamSet, TrunkNet};

/// Budget limits on the group hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupCaps {
    pub g_max: usize,
    pub l_max: usize,
    pub s_min: usize,
    pub s_max: usize,
}

impl Default for GroupCaps {
    fn default() -> Self {
        Self {
            g_max: 4,
            l_max: 16,
            s_min: 2,
            s_max: 4,
        }
    }
}

impl GroupCaps {
    pub fn validate(&self) -> Result<()> {
        if self.g_max == 0 || self.l_max == 0 || self.s_max == 0 {
            return Err(Error::Config("group caps must be positive".into()));
        }
        Ok(())
    }
}

/// Owns one trunk shared by every agent of its local groups.
#[derive(Debug)]
pub struct GlobalGroup {
    pub id: u32,
    pub trunk: TrunkNet,
}

/// Owns one actor–critic head and a sorted member list.
#[derive(Debug)]
pub struct LocalGroup {
    pub id: u32,
    pub global: u32,
    pub head: HeadNet,
    pub agents: Vec<usize>,
}

/// Which learning rate a parameter set is stepped at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Policy,
    Value,
}

/// Two-level partition of agents: trunks per global group, heads per local
/// group, plus the per-agent ID embeddings.
#[derive(Debug)]
pub struct GroupTree {
    dims: NetDims,
    caps: GroupCaps,
    globals: Vec<GlobalGroup>,
    locals: Vec<LocalGroup>,
    ids: IdEmbeddings,
    next_local_id: u32,
    agent_local: Vec<usize>,
}

impl GroupTree {
    /// Build fresh networks for a partition given as `(global, local)` labels
    /// per agent. Labels are arbitrary; groups are numbered in sorted label
    /// order.
    pub fn new<R: Rng + ?Sized>(
        dims: NetDims,
        caps: GroupCaps,
        labels: &[(usize, usize)],
        ids: IdEmbeddings,
        rng: &mut R,
    ) -> Result<Self> {
        if labels.len() != ids.agents() {
            return Err(Error::ShapeMismatch {
                expected: ids.agents(),
                got: labels.len(),
            });
        }
        let mut global_labels: Vec<usize> = labels.iter().map(|l| l.0).collect();
        global_labels.sort_unstable();
        global_labels.dedup();
        let mut pairs: Vec<(usize, usize)> = labels.to_vec();
        pairs.sort_unstable();
        pairs.dedup();

        let globals: Vec<GlobalGroup> = (0..global_labels.len())
            .map(|g| GlobalGroup {
                id: g as u32,
                trunk: TrunkNet::new(&dims, rng),
            })
            .collect();
        let locals: Vec<LocalGroup> = pairs
            .iter()
            .enumerate()
            .map(|(l, pair)| {
                let global = global_labels.binary_search(&pair.0).expect("label present") as u32;
                let agents = (0..labels.len()).filter(|&a| labels[a] == *pair).collect();
                LocalGroup {
                    id: l as u32,
                    global,
                    head: HeadNet::new(&dims, rng),
                    agents,
                }
            })
            .collect();
        Self::from_parts(dims, caps, globals, locals, ids)
    }

    /// Assemble from existing networks and check every invariant.
    pub fn from_parts(
        dims: NetDims,
        caps: GroupCaps,
        globals: Vec<GlobalGroup>,
        locals: Vec<LocalGroup>,
        ids: IdEmbeddings,
    ) -> Result<Self> {
        let next_local_id = locals.iter().map(|l| l.id + 1).max().unwrap_or(0);
        let mut tree = Self {
            dims,
            caps,
            globals,
            locals,
            ids,
            next_local_id,
            agent_local: Vec::new(),
        };
        tree.reindex();
        tree.validate()?;
        Ok(tree)
    }

    pub fn dims(&self) -> &NetDims {
        &self.dims
    }

    pub fn caps(&self) -> &GroupCaps {
        &self.caps
    }

    pub fn agents(&self) -> usize {
        self.ids.agents()
    }

    pub fn globals(&self) -> &[GlobalGroup] {
        &self.globals
    }

    pub fn locals(&self) -> &[LocalGroup] {
        &self.locals
    }

    pub fn ids(&self) -> &IdEmbeddings {
        &self.ids
    }

    pub fn next_local_id(&self) -> u32 {
        self.next_local_id
    }

    /// Resume id allocation at `id` (never below the current maximum + 1).
    pub fn set_next_local_id(&mut self, id: u32) {
        self.next_local_id = self.next_local_id.max(id);
    }

    /// Position in `locals()` of the group holding `agent`.
    pub fn local_index(&self, agent: usize) -> usize {
        self.agent_local[agent]
    }

    pub fn local_position(&self, id: u32) -> Option<usize> {
        self.locals.iter().position(|l| l.id == id)
    }

    pub fn global_position(&self, id: u32) -> Option<usize> {
        self.globals.iter().position(|g| g.id == id)
    }

    /// Position in `globals()` of the trunk serving `agent`.
    pub fn global_index(&self, agent: usize) -> usize {
        let global = self.locals[self.agent_local[agent]].global;
        self.global_position(global).expect("validated tree")
    }

    pub fn trunk_for(&self, agent: usize) -> &TrunkNet {
        &self.globals[self.global_index(agent)].trunk
    }

    pub fn head_for(&self, agent: usize) -> &HeadNet {
        &self.locals[self.agent_local[agent]].head
    }

    /// Positions of the local groups under global group `id`.
    pub fn locals_in(&self, global: u32) -> Vec<usize> {
        (0..self.locals.len())
            .filter(|&i| self.locals[i].global == global)
            .collect()
    }

    /// Total scalars across all heads.
    pub fn head_params_total(&self) -> usize {
        self.locals.iter().map(|l| l.head.param_count()).sum()
    }

    /// `(global, local)` ids per agent.
    pub fn assignment(&self) -> Vec<(u32, u32)> {
        self.agent_local
            .iter()
            .map(|&l| (self.locals[l].global, self.locals[l].id))
            .collect()
    }

    /// Every trainable parameter set, tagged with its learning-rate role.
    /// Disabled ID embeddings are left out so they stay frozen.
    pub fn param_sets_mut(&mut self) -> Vec<(&mut ParamSet, ParamRole)> {
        let mut out = Vec::new();
        for g in &mut self.globals {
            out.push((g.trunk.mlp.params_mut(), ParamRole::Policy));
        }
        for l in &mut self.locals {
            out.push((l.head.policy.params_mut(), ParamRole::Policy));
            out.push((l.head.value.params_mut(), ParamRole::Value));
        }
        if self.ids.enabled() {
            out.push((self.ids.params_mut(), ParamRole::Policy));
        }
        out
    }

    pub fn zero_grad(&self) {
        for g in &self.globals {
            g.trunk.mlp.params().zero_grad();
        }
        for l in &self.locals {
            l.head.policy.params().zero_grad();
            l.head.value.params().zero_grad();
        }
        self.ids.params().zero_grad();
    }

    /// Check the partition and budget invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.agents();
        if self.globals.is_empty() || self.globals.len() > self.caps.g_max {
            return Err(Error::Validation(format!(
                "{} global groups outside [1, {}]",
                self.globals.len(),
                self.caps.g_max
            )));
        }
        if self.locals.is_empty() || self.locals.len() > self.caps.l_max {
            return Err(Error::Validation(format!(
                "{} local groups outside [1, {}]",
                self.locals.len(),
                self.caps.l_max
            )));
        }
        let mut seen = vec![false; n];
        for l in &self.locals {
            if l.agents.is_empty() {
                return Err(Error::EmptyGroup);
            }
            if self.global_position(l.global).is_none() {
                return Err(Error::Validation(format!(
                    "local group {} has unknown global {}",
                    l.id, l.global
                )));
            }
            for &a in &l.agents {
                if a >= n || seen[a] {
                    return Err(Error::Validation(format!(
                        "agent {a} assigned twice or out of range"
                    )));
                }
                seen[a] = true;
            }
        }
        if let Some(a) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!("agent {a} has no group")));
        }
        for g in &self.globals {
            if !self.locals.iter().any(|l| l.global == g.id) {
                return Err(Error::EmptyGroup);
            }
        }
        let mut lids: Vec<u32> = self.locals.iter().map(|l| l.id).collect();
        lids.sort_unstable();
        lids.dedup();
        if lids.len() != self.locals.len() {
            return Err(Error::Validation("duplicate local group id".into()));
        }
        Ok(())
    }

    /// Replace local group at `index` by one child per part, each inheriting
    /// a copy of the parent head. Returns the new ids.
    pub fn split_local(&mut self, index: usize, parts: Vec<Vec<usize>>) -> Result<Vec<u32>> {
        let parent = &self.locals[index];
        let mut union: Vec<usize> = parts.iter().flatten().copied().collect();
        union.sort_unstable();
        if parts.iter().any(|p| p.is_empty()) || union != parent.agents {
            return Err(Error::Validation(
                "split parts must partition the parent".into(),
            ));
        }
        if self.locals.len() - 1 + parts.len() > self.caps.l_max {
            return Err(Error::Validation(
                "split would exceed the local-group cap".into(),
            ));
        }
        let parent = self.locals.remove(index);
        let mut ids = Vec::with_capacity(parts.len());
        for (i, mut agents) in parts.into_iter().enumerate() {
            agents.sort_unstable();
            let id = self.next_local_id;
            self.next_local_id += 1;
            ids.push(id);
            self.locals.insert(
                index + i,
                LocalGroup {
                    id,
                    global: parent.global,
                    head: parent.head.clone_params(),
                    agents,
                },
            );
        }
        self.reindex();
        Ok(ids)
    }

    /// Move every member of `absorb` into `keep` and drop `absorb`'s head.
    pub fn merge_locals(&mut self, keep: usize, absorb: usize) -> Result<()> {
        if keep == absorb || self.locals[keep].global != self.locals[absorb].global {
            return Err(Error::Validation(
                "merge needs two local groups of one global group".into(),
            ));
        }
        let moved = std::mem::take(&mut self.locals[absorb].agents);
        let target = &mut self.locals[keep].agents;
        target.extend(moved);
        target.sort_unstable();
        self.locals.remove(absorb);
        self.reindex();
        Ok(())
    }

    /// Move one agent between local groups of the same global group.
    pub fn move_agent(&mut self, agent: usize, to: usize) -> Result<()> {
        let from = self.agent_local[agent];
        if from == to {
            return Ok(());
        }
        if self.locals[from].global != self.locals[to].global {
            return Err(Error::Validation(
                "agents cannot change global group".into(),
            ));
        }
        if self.locals[from].agents.len() == 1 {
            return Err(Error::EmptyGroup);
        }
        self.locals[from].agents.retain(|&a| a != agent);
        let target = &mut self.locals[to].agents;
        target.push(agent);
        target.sort_unstable();
        self.agent_local[agent] = to;
        Ok(())
    }

    fn reindex(&mut self) {
        self.agent_local = vec![usize::MAX; self.ids.agents()];
        for (i, l) in self.locals.iter().enumerate() {
            for &a in &l.agents {
                if a < self.agent_local.len() {
                    self.agent_local[a] = i;
                }
            }
        }
    }
}

/// Cluster regions into at most `groups` districts from standardized static
/// features and normalized grid coordinates.
pub fn spatial_partition(grid: &RegionGrid, groups: usize, seed: u64) -> Result<Vec<usize>> {
    let k = grid.len();
    let groups = groups.clamp(1, k.max(1));
    if groups == 1 {
        return Ok(vec![0; k]);
    }
    let feats = grid.static_features();
    let mut points: Vec<Vec<f64>> = vec![Vec::with_capacity(5); k];
    for c in 0..3 {
        let col: Vec<f64> = feats.iter().map(|f| f64::from(f[c])).collect();
        let mean = col.iter().sum::<f64>() / k as f64;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
        for (p, x) in points.iter_mut().zip(&col) {
            p.push(if sd > 0.0 { (x - mean) / sd } else { 0.0 });
        }
    }
    let norm = |i: usize, n: usize| {
        if n > 1 {
            i as f64 / (n - 1) as f64
        } else {
            0.0
        }
    };
    for (region, p) in points.iter_mut().enumerate() {
        let (r, c) = grid.row_col(region);
        p.push(norm(r, grid.rows));
        p.push(norm(c, grid.cols));
    }
    kmeans(&points, groups, seed, 100)
}
