//! Shared checks for the integration and acceptance tests. Each check
//! returns a [`Verdict`] so the acceptance runner can print one line per
//! criterion while the focused test files assert on the same functions.
#![allow(dead_code)]

use std::time::{Duration, Instant};

use hagps::env::{step, AgentAction, EnvConfig, EnvState, Environment, ObservationConfig};
use hagps::group::{
    gaussian_kl, intra_divergence, try_merge, try_split, update_period, Controller,
    ControllerConfig, GaussianEmbedding, GroupCaps, GroupTree,
};
use hagps::ingest::{DemandSeries, FeatureScales, RegionGrid};
use hagps::nn::gradcheck::{check_gradients, CheckOptions};
use hagps::nn::{Graph, IdEmbeddings, Lstm, Mlp, NetDims, TrajectoryEncoder};
use hagps::ppo::{compute_gae, minibatch_backward, RolloutBuffer, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Verdict {
    pub fn line(&self, number: usize, name: &str) -> String {
        format!(
            "[{}] criterion {number}: {name} ({:.1}s) {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

pub fn timed(budget: Duration, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let start = Instant::now();
    let (ok, detail) = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let detail = if in_time {
        detail
    } else {
        format!("{detail}; over the {:.0}s budget", budget.as_secs_f64())
    };
    Verdict {
        pass: ok && in_time,
        detail,
        elapsed,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Formula oracles

/// Reward written out term by term.
pub fn reward_oracle(unmet: u32, demand: u32, moved: u32, cfg: &EnvConfig) -> f64 {
    let denom = f64::from(demand) + cfg.epsilon;
    let served_part = cfg.lambda_coef * (1.0 - f64::from(unmet) / denom);
    let unmet_part = cfg.alpha * f64::from(unmet) / denom;
    let move_part = cfg.beta * f64::from(moved) / f64::from(cfg.max_relocation);
    served_part - unmet_part - move_part
}

/// Step dynamics recomputed from row/column arithmetic, independent of the
/// grid's neighbor tables.
pub fn step_oracle(
    rows: usize,
    cols: usize,
    inventory: &[u32],
    actions: &[[u32; 4]],
    d: &[u32],
    o: &[u32],
) -> (Vec<u32>, Vec<u32>, Vec<u32>) {
    let k = rows * cols;
    let mut tilde: Vec<i64> = inventory.iter().map(|&b| i64::from(b)).collect();
    for src in 0..k {
        let (r, c) = (src / cols, src % cols);
        // North raises the row index, East raises the column index.
        let targets = [
            (r + 1 < rows).then(|| src + cols),
            (r > 0).then(|| src - cols),
            (c + 1 < cols).then(|| src + 1),
            (c > 0).then(|| src - 1),
        ];
        for (dir, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                tilde[src] -= i64::from(actions[src][dir]);
                tilde[t] += i64::from(actions[src][dir]);
            }
        }
    }
    let mut served = vec![0; k];
    let mut unmet = vec![0; k];
    let mut next = vec![0; k];
    for i in 0..k {
        assert!(tilde[i] >= 0);
        let t = tilde[i] as u32;
        served[i] = d[i].min(t);
        unmet[i] = d[i] - served[i];
        next[i] = t - served[i] + o[i];
    }
    (served, unmet, next)
}

/// `A_t = Σ_l (γλ)^l δ_{t+l}` summed explicitly up to the episode end.
pub fn gae_oracle(
    r: &[f64],
    v: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = r.len();
    let value_after = |t: usize| -> f64 {
        if dones[t] {
            0.0
        } else if t + 1 < n {
            v[t + 1]
        } else {
            bootstrap
        }
    };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut weight = 1.0;
            let mut s = t;
            loop {
                let delta = r[s] + gamma * value_after(s) - v[s];
                total += weight * delta;
                if dones[s] || s + 1 == n {
                    break;
                }
                weight *= gamma * lambda;
                s += 1;
            }
            total
        })
        .collect()
}

/// Diagonal Gaussian KL from variances rather than log-variances.
pub fn kl_oracle(p: &GaussianEmbedding, q: &GaussianEmbedding) -> f64 {
    let mut sum = 0.0;
    for i in 0..p.mean.len() {
        let (vp, vq) = (p.logvar[i].exp(), q.logvar[i].exp());
        let dm = p.mean[i] - q.mean[i];
        sum += (vq / vp).ln() + (vp + dm * dm) / vq - 1.0;
    }
    sum / 2.0
}

pub fn period_oracle(d_bar: f64) -> u32 {
    let raw = 8.0 * (-3.0 * (d_bar - 0.02)).exp();
    let stepped = raw.ceil().max(1.0);
    stepped.clamp(1.0, 64.0) as u32
}

fn random_embedding(dim: usize, rng: &mut ChaCha8Rng) -> GaussianEmbedding {
    let mean = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let logvar = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    GaussianEmbedding::new(mean, logvar).unwrap()
}

/// Worst absolute deviation per formula over `instances` random cases.
pub fn formula_oracles(instances: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let cfg = EnvConfig::default();
    let mut worst_reward = 0.0f64;
    let mut worst_step = 0.0f64;
    let mut worst_gae = 0.0f64;
    let mut worst_kl = 0.0f64;
    let mut worst_period = 0.0f64;
    for _ in 0..instances {
        let demand = r.gen_range(0..60);
        let unmet = r.gen_range(0..=demand);
        let moved = r.gen_range(0..=cfg.max_relocation);
        let got = hagps::env::reward(unmet, demand, moved, &cfg);
        worst_reward = worst_reward.max((got - reward_oracle(unmet, demand, moved, &cfg)).abs());

        let (rows, cols) = (r.gen_range(1..5), r.gen_range(1..5));
        let grid = RegionGrid::rectangular(rows, cols).unwrap();
        let k = rows * cols;
        let inventory: Vec<u32> = (0..k).map(|_| r.gen_range(0..30)).collect();
        let raw: Vec<[u32; 4]> = (0..k).map(|_| [0; 4].map(|_| r.gen_range(0..8))).collect();
        let actions: Vec<AgentAction> = raw
            .iter()
            .enumerate()
            .map(|(i, a)| hagps::env::sanitize_action(*a, i, inventory[i], &cfg, &grid))
            .collect();
        let d: Vec<u32> = (0..k).map(|_| r.gen_range(0..25)).collect();
        let o: Vec<u32> = (0..k).map(|_| r.gen_range(0..25)).collect();
        let out = step(
            &EnvState {
                t: 0,
                inventory: inventory.clone(),
            },
            &actions,
            &d,
            &o,
            &cfg,
            &grid,
        );
        let applied: Vec<[u32; 4]> = actions.iter().map(|a| a.outflow).collect();
        let (served, unmet_o, next) = step_oracle(rows, cols, &inventory, &applied, &d, &o);
        if out.served != served || out.unmet != unmet_o || out.inventory_next != next {
            worst_step = f64::INFINITY;
        }
        for i in 0..k {
            let want = reward_oracle(unmet_o[i], d[i], applied[i].iter().sum(), &cfg);
            worst_step = worst_step.max((out.rewards[i] - want).abs());
        }

        let n = r.gen_range(1..40);
        let rewards: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| r.gen_bool(0.1)).collect();
        let bootstrap = r.gen_range(-5.0..5.0);
        let (gamma, lambda) = (r.gen_range(0.5..1.0), r.gen_range(0.0..1.0));
        let (adv, ret) = compute_gae(&rewards, &values, &dones, bootstrap, gamma, lambda);
        let want = gae_oracle(&rewards, &values, &dones, bootstrap, gamma, lambda);
        for t in 0..n {
            worst_gae = worst_gae
                .max((adv[t] - want[t]).abs())
                .max((ret[t] - want[t] - values[t]).abs());
        }

        let dim = r.gen_range(1..17);
        let (p, q) = (random_embedding(dim, &mut r), random_embedding(dim, &mut r));
        worst_kl = worst_kl.max((gaussian_kl(&p, &q).unwrap() - kl_oracle(&p, &q)).abs());

        let d_bar = r.gen_range(-1.0..3.0);
        let got = update_period(&ControllerConfig::default(), d_bar);
        worst_period = worst_period.max((f64::from(got) - f64::from(period_oracle(d_bar))).abs());
    }
    vec![
        ("reward", worst_reward),
        ("step", worst_step),
        ("gae", worst_gae),
        ("kl", worst_kl),
        ("period", worst_period),
    ]
}

// ---------------------------------------------------------------------------
// Gradient checks

pub const GRAD_TOL: f64 = 1e-4;

fn opts() -> CheckOptions {
    CheckOptions {
        step: 1e-5,
        probes_per_param: 10,
        floor: 1e-6,
    }
}

fn rand_vec(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// `Σ c ⊙ y` for a fixed random projection `c`.
fn project(g: &mut Graph<'_>, y: hagps::nn::NodeId, c: &[f64]) -> hagps::nn::NodeId {
    let c = g.input(c.to_vec());
    let prod = g.mul(y, c);
    g.sum(prod)
}

pub fn grad_mlp(seed: u64) -> f64 {
    let mut r = rng(seed);
    let sizes = [
        r.gen_range(2..6),
        r.gen_range(2..7),
        r.gen_range(2..6),
        r.gen_range(1..4),
    ];
    let mut net = Mlp::new(&sizes, 1.0, &mut r);
    let x = rand_vec(sizes[0], &mut r);
    let c = rand_vec(sizes[3], &mut r);
    let run = |m: &Mlp, backward: bool| -> f64 {
        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let y = m.forward(&mut g, xi);
        let l = project(&mut g, y, &c);
        if backward {
            g.backward(l).unwrap();
        }
        g.scalar(l)
    };
    check_gradients(
        &mut net,
        1,
        |m, _| m.params_mut(),
        |m| run(m, false),
        |m| {
            run(m, true);
        },
        opts(),
        &mut r,
    )
    .max_rel_error
}

pub fn grad_lstm(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (input, hidden, len) = (r.gen_range(1..5), r.gen_range(2..6), r.gen_range(1..6));
    let mut lstm = Lstm::new(input, hidden, &mut r);
    let xs: Vec<Vec<f64>> = (0..len).map(|_| rand_vec(input, &mut r)).collect();
    let c = rand_vec(hidden, &mut r);
    let run = |m: &Lstm, backward: bool| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<_> = xs.iter().map(|x| g.input(x.clone())).collect();
        let h = m.forward_seq(&mut g, &ids);
        let l = project(&mut g, h, &c);
        if backward {
            g.backward(l).unwrap();
        }
        g.scalar(l)
    };
    check_gradients(
        &mut lstm,
        1,
        |m, _| m.params_mut(),
        |m| run(m, false),
        |m| {
            run(m, true);
        },
        opts(),
        &mut r,
    )
    .max_rel_error
}

/// Sequence-autoencoding loss through the LSTM, both Gaussian maps, the
/// reparameterized sample and the decoder.
pub fn grad_encoder(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (input, hidden, latent) = (r.gen_range(2..5), r.gen_range(2..6), r.gen_range(1..4));
    let mut enc = TrajectoryEncoder::new(input, hidden, latent, 0.3, &mut r);
    let window: Vec<Vec<f64>> = (0..r.gen_range(2..6))
        .map(|_| rand_vec(input, &mut r))
        .collect();
    let noise = rand_vec(latent, &mut r);
    let run = |e: &TrajectoryEncoder, backward: bool| -> f64 {
        let mut g = Graph::new();
        let l = e.loss_graph(&mut g, &window, &noise).unwrap().unwrap();
        if backward {
            g.backward(l).unwrap();
        }
        g.scalar(l)
    };
    check_gradients(
        &mut enc,
        4,
        |e, s| e.param_sets_mut().into_iter().nth(s).unwrap(),
        |e| run(e, false),
        |e| {
            run(e, true);
        },
        opts(),
        &mut r,
    )
    .max_rel_error
}

/// Derivatives of the reparameterized sample with respect to its mean and
/// log-variance inputs: `1` and `noise · exp(logvar/2) / 2`.
pub fn grad_reparameterization(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dim = r.gen_range(1..5);
    let mean = rand_vec(dim, &mut r);
    let logvar = rand_vec(dim, &mut r);
    let noise = rand_vec(dim, &mut r);
    let mut worst = 0.0f64;
    for i in 0..dim {
        let sample_i = |m: &[f64], lv: &[f64]| m[i] + (lv[i] / 2.0).exp() * noise[i];
        let h = 1e-6;
        let mut up = mean.clone();
        up[i] += h;
        let mut dn = mean.clone();
        dn[i] -= h;
        let dm = (sample_i(&up, &logvar) - sample_i(&dn, &logvar)) / (2.0 * h);
        let mut up = logvar.clone();
        up[i] += h;
        let mut dn = logvar.clone();
        dn[i] -= h;
        let dlv = (sample_i(&mean, &up) - sample_i(&mean, &dn)) / (2.0 * h);

        let mut g = Graph::new();
        let m = g.input(mean.clone());
        let lv = g.input(logvar.clone());
        let z = TrajectoryEncoder::sample_graph(&mut g, m, lv, &noise);
        let zi = g.slice(z, i, 1);
        let zi = g.sum(zi);
        assert_eq!(g.value(zi)[0], sample_i(&mean, &logvar));
        let closed_m = 1.0;
        let closed_lv = noise[i] * (logvar[i] / 2.0).exp() / 2.0;
        worst = worst
            .max(hagps::nn::gradcheck::relative_error(closed_m, dm, 1e-6))
            .max(hagps::nn::gradcheck::relative_error(closed_lv, dlv, 1e-6));
    }
    worst
}

fn small_dims() -> NetDims {
    NetDims {
        state_dim: 5,
        trunk_hidden: 6,
        embed_dim: 4,
        id_dim: 3,
        head_hidden: 5,
        m_dir: 2,
    }
}

/// A two-global tree with random rollout data whose old log-probabilities
/// and values are jittered so no clip boundary is hit exactly.
pub fn ppo_fixture(seed: u64) -> (GroupTree, RolloutBuffer, TrainConfig) {
    let mut r = rng(seed);
    let agents = 4;
    let ids = IdEmbeddings::new(agents, 3, true, &mut r);
    let labels = [(0, 0), (0, 0), (1, 0), (1, 0)];
    let mut tree =
        GroupTree::new(small_dims(), GroupCaps::default(), &labels, ids, &mut r).unwrap();
    tree.split_local(0, vec![vec![0], vec![1]]).unwrap();
    let open = vec![
        [true, false, true, false],
        [true, true, false, true],
        [false, true, true, true],
        [true; 4],
    ];
    let mut buf = RolloutBuffer::new(agents, open.clone());
    let steps = 3;
    for _ in 0..steps {
        let state = rand_vec(5, &mut r);
        let evals = hagps::ppo::Actor::evaluate(&tree, &state, &open).unwrap();
        for (dist, v) in &evals {
            let a = dist.sample(&mut r);
            buf.actions.push(a);
            buf.log_probs
                .push(dist.log_prob(a) + r.gen_range(-0.1..0.1));
            buf.values.push(v + r.gen_range(-0.1..0.1));
        }
        buf.states.push(state);
        buf.steps += 1;
        buf.dones.push(false);
    }
    *buf.dones.last_mut().unwrap() = true;
    let rewards: Vec<f64> = (0..steps * agents)
        .map(|_| r.gen_range(-1.0..1.0))
        .collect();
    buf.rewards = rewards.clone();
    let cfg = TrainConfig {
        value_clip: 10.0,
        ..TrainConfig::default()
    };
    buf.finish(&rewards, cfg.gamma, cfg.gae_lambda).unwrap();
    (tree, buf, cfg)
}

/// Clipped surrogate, clipped value loss and entropy through heads, trunks
/// and ID embeddings.
pub fn grad_ppo_loss(seed: u64) -> f64 {
    let (mut tree, buf, cfg) = ppo_fixture(seed);
    let samples: Vec<usize> = (0..buf.len()).collect();
    let total = |t: &GroupTree| {
        let s = minibatch_backward(&buf, t, &cfg, &samples).unwrap();
        s.policy_loss + cfg.vf_coef * s.value_loss - cfg.entropy_coef * s.entropy
    };
    let sets = tree.param_sets_mut().len();
    let mut r = rng(seed ^ 0x55);
    check_gradients(
        &mut tree,
        sets,
        |t, s| t.param_sets_mut().into_iter().nth(s).unwrap().0,
        |t| total(t),
        |t| {
            minibatch_backward(&buf, t, &cfg, &samples).unwrap();
        },
        opts(),
        &mut r,
    )
    .max_rel_error
}

pub fn gradient_suite(seeds: u64) -> Vec<(&'static str, f64)> {
    type Check = fn(u64) -> f64;
    let checks: [(&str, Check); 5] = [
        ("mlp", grad_mlp),
        ("lstm", grad_lstm),
        ("encoder", grad_encoder),
        ("reparameterization", grad_reparameterization),
        ("ppo-loss", grad_ppo_loss),
    ];
    checks
        .iter()
        .map(|(name, f)| (*name, (0..seeds).map(*f).fold(0.0, f64::max)))
        .collect()
}

// ---------------------------------------------------------------------------
// Conservation

pub struct ConservationReport {
    pub steps: usize,
    pub inflow_violations: usize,
    pub fleet_violations: usize,
}

pub fn random_env(r: &mut ChaCha8Rng) -> Environment {
    let (rows, cols) = (r.gen_range(1..5), r.gen_range(1..5));
    let grid = RegionGrid::rectangular(rows, cols).unwrap();
    let k = rows * cols;
    let days = r.gen_range(1..12);
    let d: Vec<Vec<u32>> = (0..days)
        .map(|_| (0..k).map(|_| r.gen_range(0..15)).collect())
        .collect();
    let o: Vec<Vec<u32>> = (0..days)
        .map(|_| (0..k).map(|_| r.gen_range(0..15)).collect())
        .collect();
    let series = DemandSeries::from_rows(d, o).unwrap();
    let fleet = r.gen_range(0..200);
    let cfg = EnvConfig {
        fleet_size: fleet,
        max_relocation: r.gen_range(1..30),
        ..Default::default()
    };
    let scales = FeatureScales::from_data(&series, &grid, fleet);
    Environment::new(grid, series, cfg, ObservationConfig::default(), scales).unwrap()
}

pub fn conservation_suite(total_steps: usize, seed: u64) -> ConservationReport {
    let mut r = rng(seed);
    let mut report = ConservationReport {
        steps: 0,
        inflow_violations: 0,
        fleet_violations: 0,
    };
    while report.steps < total_steps {
        let mut env = random_env(&mut r);
        env.reset();
        while !env.done() && report.steps < total_steps {
            let k = env.agents();
            let before: u64 = env.state().inventory.iter().map(|&b| u64::from(b)).sum();
            let t = env.state().t;
            let raw: Vec<[u32; 4]> = (0..k).map(|_| [0; 4].map(|_| r.gen_range(0..40))).collect();
            let out = env.step(&raw).unwrap();
            let net: i64 = (0..k)
                .map(|i| hagps::env::net_inflow(&out.actions, i, env.grid()))
                .sum();
            let pre: u64 = out.pre_demand_inventory.iter().map(|&b| u64::from(b)).sum();
            if net != 0 || pre != before {
                report.inflow_violations += 1;
            }
            let served: u64 = out.served.iter().map(|&s| u64::from(s)).sum();
            let returned: u64 = env.series().dropoffs(t).iter().map(|&o| u64::from(o)).sum();
            let after: u64 = out.inventory_next.iter().map(|&b| u64::from(b)).sum();
            if after != before - served + returned {
                report.fleet_violations += 1;
            }
            report.steps += 1;
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Controller

pub fn tiny_dims() -> NetDims {
    NetDims {
        state_dim: 3,
        trunk_hidden: 4,
        embed_dim: 3,
        id_dim: 2,
        head_hidden: 4,
        m_dir: 1,
    }
}

pub fn tree_with(agents: usize, globals: usize, caps: GroupCaps, seed: u64) -> GroupTree {
    let mut r = rng(seed);
    let ids = IdEmbeddings::new(agents, 2, true, &mut r);
    let labels: Vec<(usize, usize)> = (0..agents).map(|a| (a * globals / agents, 0)).collect();
    GroupTree::new(tiny_dims(), caps, &labels, ids, &mut r).unwrap()
}

/// Embeddings drawn around a random number of cluster centers, so that
/// both splits and merges are exercised.
pub fn clustered_embeddings(agents: usize, r: &mut ChaCha8Rng) -> Vec<GaussianEmbedding> {
    let clusters = r.gen_range(1..5);
    let spread = if r.gen_bool(0.3) {
        0.0
    } else {
        r.gen_range(0.0..0.3)
    };
    let centers: Vec<[f64; 2]> = (0..clusters)
        .map(|_| [r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)])
        .collect();
    (0..agents)
        .map(|_| {
            let c = centers[r.gen_range(0..clusters)];
            let mean = vec![
                c[0] + spread * r.gen_range(-1.0..1.0),
                c[1] + spread * r.gen_range(-1.0..1.0),
            ];
            let lv = r.gen_range(-0.5..0.5);
            GaussianEmbedding::new(mean, vec![lv, lv]).unwrap()
        })
        .collect()
}

pub struct ControllerReport {
    pub ticks: usize,
    pub regroups: usize,
    pub splits: usize,
    pub merges: usize,
    pub failures: Vec<String>,
}

pub fn controller_suite(ticks: usize, seed: u64) -> ControllerReport {
    let mut r = rng(seed);
    let caps = GroupCaps {
        g_max: 3,
        l_max: 8,
        s_min: 2,
        s_max: 4,
    };
    let agents = 14;
    let mut tree = tree_with(agents, 2, caps, seed);
    let cfg = ControllerConfig {
        delta0: 2,
        ..ControllerConfig::default()
    };
    let mut ctrl = Controller::new(cfg.clone(), seed).unwrap();
    let mut events = Vec::new();
    let mut report = ControllerReport {
        ticks,
        regroups: 0,
        splits: 0,
        merges: 0,
        failures: Vec::new(),
    };
    for episode in 0..ticks {
        let emb = clustered_embeddings(agents, &mut r);
        let before_globals: Vec<usize> = (0..agents).map(|a| tree.global_index(a)).collect();
        let acted = ctrl
            .regroup_tick(&mut tree, |_| Ok(emb.clone()), episode, &mut events)
            .unwrap();
        report.regroups += usize::from(acted);
        if let Err(e) = tree.validate() {
            report.failures.push(format!("tick {episode}: {e}"));
        }
        if tree.locals().len() > caps.l_max || tree.globals().len() > caps.g_max {
            report
                .failures
                .push(format!("tick {episode}: caps exceeded"));
        }
        let after_globals: Vec<usize> = (0..agents).map(|a| tree.global_index(a)).collect();
        if before_globals != after_globals {
            report
                .failures
                .push(format!("tick {episode}: agent changed global group"));
        }
        let delta = ctrl.state().delta;
        if !(1..=64).contains(&delta) {
            report
                .failures
                .push(format!("tick {episode}: delta {delta} out of range"));
        }
    }
    for e in &events {
        match e.op {
            hagps::group::EventKind::Split => report.splits += 1,
            hagps::group::EventKind::Merge => report.merges += 1,
            _ => {}
        }
    }

    let mut prev = u32::MAX;
    for i in 0..2000 {
        let d_bar = -2.0 + i as f64 * 0.004;
        let p = update_period(&cfg, d_bar);
        if p > prev {
            report
                .failures
                .push(format!("period rose from {prev} to {p} at D = {d_bar}"));
        }
        prev = p;
    }

    for _ in 0..100 {
        let z = random_embedding(r.gen_range(1..17), &mut r);
        let d = intra_divergence(&[&z]).unwrap();
        if d != 0.0 {
            report.failures.push(format!("singleton divergence {d}"));
        }
    }

    for trial in 0..50 {
        if let Err(msg) = split_merge_round_trip(seed.wrapping_add(trial)) {
            report.failures.push(msg);
        }
    }
    report
}

/// Split a diverse group, then merge its children with an unbounded merge
/// threshold: the survivor's head must equal the parent's bit for bit.
pub fn split_merge_round_trip(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.gen_range(3..10);
    let mut tree = tree_with(n, 1, GroupCaps::default(), seed);
    let parent = tree.locals()[0].head.clone_params();
    let mut emb: Vec<GaussianEmbedding> = (0..n)
        .map(|a| {
            let c = if a % 2 == 0 { -4.0 } else { 4.0 };
            GaussianEmbedding::new(vec![c + r.gen_range(-0.1..0.1)], vec![0.0]).unwrap()
        })
        .collect();
    let cfg = ControllerConfig {
        tau_merge: f64::INFINITY,
        ..ControllerConfig::default()
    };
    let kids = try_split(&mut tree, 0, f64::MAX, &emb, &cfg, seed)
        .map_err(|e| e.to_string())?
        .ok_or("split refused")?;
    if kids.len() != 2 {
        return Err(format!("expected 2 children, got {}", kids.len()));
    }
    // Identical embeddings afterwards keep the merged group whole.
    emb.iter_mut()
        .for_each(|z| *z = GaussianEmbedding::new(vec![0.0], vec![0.0]).unwrap());
    try_merge(&mut tree, 0, 1, &emb, &cfg)
        .map_err(|e| e.to_string())?
        .ok_or("merge refused")?;
    if tree.locals().len() != 1 || tree.locals()[0].agents.len() != n {
        return Err("merge did not restore the parent group".into());
    }
    if !tree.locals()[0].head.same_values(&parent) {
        return Err("merged head differs from the parent".into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Ingestion fixture

/// Twenty trips on a 2x2 grid of 1 km cells (rows south to north, columns
/// west to east) across three days. Cell centers:
/// r0c0 (40.7045, -73.9941), r0c1 (40.7045, -73.9822),
/// r1c0 (40.7135, -73.9941), r1c1 (40.7135, -73.9822).
pub const FIXTURE_TRIPS: &str = "\
ride_id,started_at,ended_at,start_lat,start_lng,end_lat,end_lng
1,2024-01-01 08:00:00,2024-01-01 08:10:00,40.7045,-73.9941,40.7045,-73.9822
2,2024-01-01 09:00:00,2024-01-01 09:20:00,40.7045,-73.9941,40.7135,-73.9941
3,2024-01-01 10:00:00,2024-01-01 10:05:00,40.7045,-73.9822,40.7045,-73.9941
4,2024-01-01 11:00:00,2024-01-01 11:30:00,40.7135,-73.9941,40.7135,-73.9822
5,2024-01-01 12:00:00,2024-01-01 12:15:00,40.7135,-73.9822,40.7045,-73.9941
6,2024-01-01 23:50:00,2024-01-02 00:10:00,40.7045,-73.9941,40.7135,-73.9822
7,2024-01-02 07:00:00,2024-01-02 07:10:00,40.7135,-73.9822,40.7135,-73.9941
8,2024-01-02 08:00:00,2024-01-02 08:12:00,40.7135,-73.9822,40.7045,-73.9822
9,2024-01-02 09:00:00,2024-01-02 09:09:00,40.7045,-73.9822,40.7045,-73.9822
10,2024-01-02 10:00:00,2024-01-02 10:40:00,40.7045,-73.9941,40.7045,-73.9822
11,2024-01-02 11:00:00,2024-01-02 11:05:00,40.7135,-73.9941,40.7045,-73.9941
12,2024-01-02 12:00:00,2024-01-02 12:30:00,40.7135,-73.9941,40.7135,-73.9941
13,2024-01-02 13:00:00,2024-01-02 13:10:00,40.8000,-73.9941,40.7045,-73.9941
14,2024-01-03 06:00:00,2024-01-03 06:25:00,40.7045,-73.9822,40.7135,-73.9822
15,2024-01-03 07:00:00,2024-01-03 07:05:00,40.7045,-73.9822,40.7135,-73.9941
16,2024-01-03 08:00:00,2024-01-03 08:45:00,40.7135,-73.9941,40.7045,-73.9941
17,2024-01-03 09:00:00,2024-01-03 09:10:00,40.7135,-73.9822,40.7135,-73.9822
18,2024-01-03 10:00:00,2024-01-03 10:20:00,40.7045,-73.9941,40.7045,-73.9822
19,2024-01-03 22:00:00,2024-01-04 01:00:00,40.7135,-73.9941,40.7045,-73.9822
20,2024-01-03 12:00:00,2024-01-03 12:10:00,40.7045,-73.9941,40.6000,-73.9822
";

/// Hand aggregation of [`FIXTURE_TRIPS`]. Region index is `row * 2 + col`.
/// Trips 13 and 20 leave the box and are dropped; trip 19 returns after
/// the last day and is counted on day 3.
pub const FIXTURE_PICKUPS: [[u32; 4]; 3] = [[3, 1, 1, 1], [1, 1, 2, 2], [1, 2, 2, 1]];
pub const FIXTURE_DROPOFFS: [[u32; 4]; 3] = [[2, 1, 1, 1], [1, 3, 2, 1], [1, 2, 1, 2]];

pub fn fixture_grid() -> RegionGrid {
    RegionGrid::build(
        hagps::ingest::BoundingBox::from_corner_km(40.7, -74.0, 2.0, 2.0),
        1.0,
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// Training checks

pub use hagps::experiment::{
    build_trainer, evaluate_greedy, load_environment, Mode, RunConfig, Scenario,
};

pub fn toy_config(seed: u64, episodes: usize) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        g_init: Some(1),
        ..Default::default()
    };
    cfg.data.synthetic = Some(Scenario::Toy { days: 31, rate: 6 });
    cfg.train.episodes_per_epoch = 10;
    cfg.train.epochs = episodes.div_ceil(10);
    cfg.train.val_episodes = Some(1);
    cfg
}

pub struct ToyOutcome {
    pub trained_ratio: f64,
    pub idle_ratio: f64,
    /// Net bikes moved from the oversupplied region into the deficit one.
    pub net_flow_to_deficit: i64,
    pub episodes: usize,
}

/// Train on the two-region world, then play one greedy episode.
pub fn toy_learning(seed: u64, episodes: usize) -> ToyOutcome {
    let cfg = toy_config(seed, episodes);
    let env = load_environment(&cfg).unwrap();
    let mut trainer = build_trainer(&cfg, &env).unwrap();
    trainer.train(&env).unwrap();
    let mut play = env.clone();
    let ep = hagps::ppo::collect_rollout(
        &mut play,
        trainer.tree(),
        usize::MAX,
        hagps::ppo::ActionSelect::Greedy,
        &mut rng(0),
    )
    .unwrap();
    let mut idle_env = env.clone();
    let idle = hagps::ppo::collect_rollout(
        &mut idle_env,
        &hagps::ppo::IdleActor {
            m_dir: env.config().max_per_direction(),
        },
        usize::MAX,
        hagps::ppo::ActionSelect::Greedy,
        &mut rng(0),
    )
    .unwrap();
    // Region 0 has the pick-ups, region 1 receives the drop-offs.
    ToyOutcome {
        trained_ratio: ep.stats.service_ratio,
        idle_ratio: idle.stats.service_ratio,
        net_flow_to_deficit: hagps::env::net_flow(&ep.outcomes, 1, 0, env.grid()),
        episodes: trainer.episodes_done(),
    }
}

/// Configuration of one cell of the desk-scale comparison.
pub fn grid_config(mode: Mode, no_hier: bool, seed: u64, episodes: usize) -> RunConfig {
    let mut cfg = RunConfig {
        mode,
        seed,
        ..Default::default()
    };
    cfg.ablations.no_hier = no_hier;
    cfg.data.synthetic = Some(Scenario::Archetypes {
        rows: 6,
        cols: 6,
        days: 31,
    });
    cfg.train.episodes_per_epoch = 20;
    cfg.train.epochs = episodes.div_ceil(20);
    cfg.train.val_episodes = Some(1);
    cfg
}

/// Greedy service ratio on the reference month after training.
pub fn grid_run(mode: Mode, no_hier: bool, seed: u64, episodes: usize) -> f64 {
    let cfg = grid_config(mode, no_hier, seed, episodes);
    let env = load_environment(&cfg).unwrap();
    let mut trainer = build_trainer(&cfg, &env).unwrap();
    trainer.train(&env).unwrap();
    evaluate_greedy(trainer.tree(), &env).unwrap().service_ratio
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Metric history and final checkpoint bytes of a short run.
pub fn smoke_run(seed: u64) -> (String, Vec<u8>, usize) {
    let mut cfg = RunConfig {
        seed,
        ..Default::default()
    };
    cfg.data.synthetic = Some(Scenario::Archetypes {
        rows: 3,
        cols: 4,
        days: 6,
    });
    cfg.train.episodes_per_epoch = 5;
    cfg.train.epochs = 1;
    cfg.train.val_episodes = Some(1);
    cfg.controller.delta0 = 1;
    let env = load_environment(&cfg).unwrap();
    let mut trainer = build_trainer(&cfg, &env).unwrap();
    trainer.train(&env).unwrap();
    let history = format!("{:?}{:?}", trainer.metrics(), trainer.events());
    let bytes = hagps::checkpoint::to_bytes(
        trainer.tree(),
        trainer.grouping(),
        trainer.encoder(),
        serde_json::Value::Null,
    )
    .unwrap();
    (history, bytes, trainer.episodes_done())
}
