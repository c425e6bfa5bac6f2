use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DemandSeries, Direction, RegionGrid};

/// Reward weights and physical limits of the rebalancing game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Weight on the served fraction.
    pub lambda_coef: f64,
    /// Penalty on the unserved fraction.
    pub alpha: f64,
    /// Penalty on relocated volume relative to `max_relocation`.
    pub beta: f64,
    /// Maximum bikes one agent may move per interval.
    pub max_relocation: u32,
    pub epsilon: f64,
    pub fleet_size: u64,
    /// Episode length; `None` uses the whole demand series.
    pub horizon: Option<usize>,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            lambda_coef: 3.0,
            alpha: 5.0,
            beta: 15.0,
            max_relocation: 20,
            epsilon: 1e-6,
            fleet_size: 0,
            horizon: None,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_coef", self.lambda_coef),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_relocation == 0 {
            return Err(Error::Config("max_relocation must be positive".into()));
        }
        Ok(())
    }

    /// Per-direction cap of the discrete action space, `⌊m/4⌋`.
    pub fn max_per_direction(&self) -> u32 {
        self.max_relocation / 4
    }
}

/// Available bikes per region at the start of interval `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub t: usize,
    pub inventory: Vec<u32>,
}

/// Bikes an agent ships out of its region, indexed North, South, East, West.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentAction {
    pub outflow: [u32; 4],
}

impl AgentAction {
    pub const IDLE: AgentAction = AgentAction { outflow: [0; 4] };

    pub fn new(outflow: [u32; 4]) -> Self {
        Self { outflow }
    }

    pub fn l1(&self) -> u32 {
        self.outflow.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub inventory_next: Vec<u32>,
    pub served: Vec<u32>,
    pub unmet: Vec<u32>,
    pub rewards: Vec<f64>,
    /// Inventory after relocation, before demand is served.
    pub pre_demand_inventory: Vec<u32>,
    /// Sanitized actions that were applied.
    pub actions: Vec<AgentAction>,
}

impl StepOutcome {
    pub fn relocated(&self) -> u64 {
        self.actions.iter().map(|a| a.l1() as u64).sum()
    }
}

/// Split `fleet_size` bikes across regions in proportion to mean demand,
/// integerized by largest remainder (ties to the lower region index).
/// Regions share uniformly when there is no demand at all.
pub fn initial_inventory(series: &DemandSeries, fleet_size: u64) -> Vec<u32> {
    let mut weights = series.mean_pickups();
    if weights.iter().sum::<f64>() <= 0.0 {
        weights.iter_mut().for_each(|w| *w = 1.0);
    }
    largest_remainder(&weights, fleet_size)
}

pub(crate) fn largest_remainder(weights: &[f64], total: u64) -> Vec<u32> {
    if weights.is_empty() {
        return Vec::new();
    }
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<u32> = quotas.iter().map(|q| q.floor() as u32).collect();
    let assigned: u64 = out.iter().map(|&x| x as u64).sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order
        .iter()
        .cycle()
        .take(total.saturating_sub(assigned) as usize)
    {
        out[i] += 1;
    }
    out
}

/// Project a raw outflow request onto the feasible set of `region`.
///
/// Directions without a neighbor are zeroed. If the total exceeds
/// `min(m, inventory)` the entries are scaled proportionally, floored, and the
/// shortfall handed back by largest fractional part (ties in N, S, E, W
/// order), so the result uses the full allowance without exceeding any raw entry.
pub fn sanitize_action(
    raw: [u32; 4],
    region: usize,
    inventory: u32,
    cfg: &EnvConfig,
    grid: &RegionGrid,
) -> AgentAction {
    let open = grid.open_directions(region);
    let mut out = raw;
    for (x, ok) in out.iter_mut().zip(open) {
        if !ok {
            *x = 0;
        }
    }
    let total: u64 = out.iter().map(|&x| x as u64).sum();
    let cap = cfg.max_relocation.min(inventory) as u64;
    if total <= cap {
        return AgentAction::new(out);
    }
    let exact: Vec<f64> = out
        .iter()
        .map(|&x| x as f64 * cap as f64 / total as f64)
        .collect();
    let mut scaled: [u32; 4] = [0; 4];
    for (s, e) in scaled.iter_mut().zip(&exact) {
        *s = e.floor() as u32;
    }
    let mut short = cap - scaled.iter().map(|&x| x as u64).sum::<u64>();
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if short == 0 {
            break;
        }
        if scaled[i] < out[i] {
            scaled[i] += 1;
            short -= 1;
        }
    }
    AgentAction::new(scaled)
}

/// Bikes arriving at `region` from its neighbors minus bikes it ships out.
pub fn net_inflow(actions: &[AgentAction], region: usize, grid: &RegionGrid) -> i64 {
    let mut inflow = 0i64;
    for dir in Direction::ALL {
        if let Some(j) = grid.neighbor(region, dir) {
            // j ships toward `region` in the opposite direction.
            inflow += actions[j].outflow[dir.opposite().index()] as i64;
        }
    }
    inflow - actions[region].l1() as i64
}

/// Per-agent reward: `λ(1 − U/(d+ε)) − α·U/(d+ε) − β·‖a‖₁/m`.
pub fn reward(unmet: u32, demand: u32, relocated: u32, cfg: &EnvConfig) -> f64 {
    let miss = unmet as f64 / (demand as f64 + cfg.epsilon);
    cfg.lambda_coef * (1.0 - miss)
        - cfg.alpha * miss
        - cfg.beta * relocated as f64 / cfg.max_relocation as f64
}

/// One interval of the game. `actions` must already be sanitized against
/// `state`, with agent `i` controlling region `i`.
///
/// Relocation happens first, then demand is served from the post-relocation
/// stock, then drop-offs arrive: `b' = (b̃ − S) + o`.
pub fn step(
    state: &EnvState,
    actions: &[AgentAction],
    pickups: &[u32],
    dropoffs: &[u32],
    cfg: &EnvConfig,
    grid: &RegionGrid,
) -> StepOutcome {
    let k = grid.len();
    debug_assert_eq!(actions.len(), k);
    let mut pre = Vec::with_capacity(k);
    let mut served = Vec::with_capacity(k);
    let mut unmet = Vec::with_capacity(k);
    let mut next = Vec::with_capacity(k);
    let mut rewards = Vec::with_capacity(k);
    for region in 0..k {
        let tilde = state.inventory[region] as i64 + net_inflow(actions, region, grid);
        debug_assert!(tilde >= 0, "sanitized actions never overdraw a region");
        let tilde = tilde.max(0) as u32;
        let s = pickups[region].min(tilde);
        let u = pickups[region] - s;
        pre.push(tilde);
        served.push(s);
        unmet.push(u);
        next.push(tilde - s + dropoffs[region]);
        rewards.push(reward(u, pickups[region], actions[region].l1(), cfg));
    }
    StepOutcome {
        inventory_next: next,
        served,
        unmet,
        rewards,
        pre_demand_inventory: pre,
        actions: actions.to_vec(),
    }
}
