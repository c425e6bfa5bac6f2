use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::encoding::{embed_agents, train_encoder};
use super::gae::RunningStat;
use super::rollout::{collect_rollout, ActionSelect, EpisodeStats};
use super::update::{ppo_update, UpdateStats};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::group::{kmeans, Controller, EventKind, GroupEvent, GroupTree};
use crate::nn::TrajectoryEncoder;
use crate::seed::{stream, SeedTree};

/// How the group tree may change during training.
#[derive(Debug, Clone)]
pub enum Grouping {
    /// Topology never changes.
    Fixed,
    /// Split/merge controller with an adaptive period.
    Adaptive(Controller),
    /// Cluster every local group once, after `after` episodes, into at most
    /// `groups` children; never regroup again.
    OneShot {
        after: usize,
        groups: usize,
        seed: u64,
        done: bool,
    },
}

/// One row of the metric history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub episodes: usize,
    pub train_service_ratio: f64,
    pub train_rebalanced: f64,
    pub train_mean_reward: f64,
    pub val_service_ratio: f64,
    pub val_rebalanced: f64,
    pub global_groups: usize,
    pub local_groups: usize,
    pub delta: u32,
    pub d_bar: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub encoder_loss: f64,
}

/// Result of one training episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeReport {
    pub stats: EpisodeStats,
    pub update: UpdateStats,
    pub encoder_loss: Option<f64>,
    pub regrouped: bool,
}

/// Owns the model and drives rollout → update → regroup.
#[derive(Debug)]
pub struct Trainer {
    cfg: TrainConfig,
    tree: GroupTree,
    grouping: Grouping,
    encoder: Option<TrajectoryEncoder>,
    history: usize,
    seeds: SeedTree,
    episode: usize,
    reward_stat: RunningStat,
    events: Vec<GroupEvent>,
    metrics: Vec<EpochMetrics>,
}

impl Trainer {
    /// `history` is the trajectory window length fed to the encoder.
    pub fn new(
        cfg: TrainConfig,
        tree: GroupTree,
        grouping: Grouping,
        encoder: Option<TrajectoryEncoder>,
        history: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        if !matches!(grouping, Grouping::Fixed) && encoder.is_none() {
            return Err(Error::Config(
                "regrouping needs a trajectory encoder".into(),
            ));
        }
        let seeds = SeedTree::new(cfg.seed);
        Ok(Self {
            cfg,
            tree,
            grouping,
            encoder,
            history: history.max(1),
            seeds,
            episode: 0,
            reward_stat: RunningStat::default(),
            events: Vec::new(),
            metrics: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn tree(&self) -> &GroupTree {
        &self.tree
    }

    pub fn encoder(&self) -> Option<&TrajectoryEncoder> {
        self.encoder.as_ref()
    }

    pub fn grouping(&self) -> &Grouping {
        &self.grouping
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn events(&self) -> &[GroupEvent] {
        &self.events
    }

    pub fn metrics(&self) -> &[EpochMetrics] {
        &self.metrics
    }

    pub fn into_parts(self) -> (GroupTree, Grouping, Option<TrajectoryEncoder>) {
        (self.tree, self.grouping, self.encoder)
    }

    fn episode_env(&self, reference: &Environment, family: u64, index: u64) -> Result<Environment> {
        if self.cfg.resample {
            let mut rng = self.seeds.rng_indexed(family, index);
            reference.with_series(reference.series().resample(&mut rng))
        } else {
            Ok(reference.clone())
        }
    }

    /// Play one sampled episode, update the networks, then let the grouping
    /// policy act.
    pub fn run_episode(&mut self, reference: &Environment) -> Result<EpisodeReport> {
        let index = self.episode as u64;
        let mut env = self.episode_env(reference, stream::RESAMPLE_TRAIN, index)?;
        let mut rng = self.seeds.rng_indexed(stream::ROLLOUT, index);
        let mut episode = collect_rollout(
            &mut env,
            &self.tree,
            self.cfg.max_steps,
            ActionSelect::Sample,
            &mut rng,
        )?;
        let buf = &mut episode.buffer;

        let mut train = buf.training_rewards(self.cfg.reward_mode, env.grid());
        if self.cfg.normalize_rewards {
            for i in 0..buf.agents {
                let mut ret = 0.0;
                for t in 0..buf.steps {
                    ret = ret * self.cfg.gamma + train[buf.index(t, i)];
                    self.reward_stat.push(ret);
                }
            }
            let sd = self.reward_stat.std().max(1e-8);
            train.iter_mut().for_each(|r| *r /= sd);
        }
        buf.finish(&train, self.cfg.gamma, self.cfg.gae_lambda)?;

        let mut mb_rng = self.seeds.rng_indexed(stream::MINIBATCH, index);
        let update = ppo_update(buf, &mut self.tree, &self.cfg, &mut mb_rng)?;

        let mut encoder_loss = None;
        if let Some(enc) = self.encoder.as_mut() {
            let mut enc_rng = self.seeds.rng_indexed(stream::ENCODER, index);
            encoder_loss = train_encoder(
                enc,
                &buf.tuples,
                self.history,
                self.cfg.encoder_batch,
                self.cfg.lr_policy,
                self.cfg.max_grad_norm,
                &mut enc_rng,
            )?;
        }
        let regrouped = self.regroup(&buf.tuples)?;
        self.episode += 1;
        Ok(EpisodeReport {
            stats: episode.stats,
            update,
            encoder_loss,
            regrouped,
        })
    }

    fn regroup(&mut self, tuples: &[Vec<Vec<f64>>]) -> Result<bool> {
        let episode = self.episode;
        let history = self.history;
        match &mut self.grouping {
            Grouping::Fixed => Ok(false),
            Grouping::Adaptive(ctrl) => {
                let enc = self.encoder.as_ref().expect("checked at construction");
                ctrl.regroup_tick(
                    &mut self.tree,
                    |_| embed_agents(enc, tuples, history),
                    episode,
                    &mut self.events,
                )
            }
            Grouping::OneShot {
                after,
                groups,
                seed,
                done,
            } => {
                if *done || episode + 1 < *after {
                    return Ok(false);
                }
                *done = true;
                let enc = self.encoder.as_ref().expect("checked at construction");
                let emb = embed_agents(enc, tuples, history)?;
                let ids: Vec<u32> = self.tree.locals().iter().map(|l| l.id).collect();
                for id in ids {
                    let idx = self.tree.local_position(id).expect("present");
                    let agents = self.tree.locals()[idx].agents.clone();
                    let room = self.tree.caps().l_max - self.tree.locals().len() + 1;
                    let k = (*groups).min(agents.len()).min(room);
                    if k < 2 {
                        continue;
                    }
                    let points: Vec<Vec<f64>> =
                        agents.iter().map(|&a| emb[a].mean.clone()).collect();
                    let labels = kmeans(&points, k, *seed ^ u64::from(id), 100)?;
                    let mut parts = vec![Vec::new(); k];
                    for (&a, &l) in agents.iter().zip(&labels) {
                        parts[l].push(a);
                    }
                    let out = self.tree.split_local(idx, parts)?;
                    self.events.push(GroupEvent {
                        episode,
                        op: EventKind::Split,
                        groups_in: vec![id],
                        groups_out: out,
                        divergence: None,
                        agents: Vec::new(),
                        delta_before: 0,
                        delta_after: 0,
                        d_bar: 0.0,
                    });
                }
                Ok(true)
            }
        }
    }

    /// Mean greedy service ratio and rebalanced bikes over the held-out
    /// episodes.
    pub fn validate(&self, reference: &Environment) -> Result<(f64, f64)> {
        let n = if self.cfg.resample {
            self.cfg.val_episodes().max(1)
        } else {
            1
        };
        let (mut ratio, mut moved) = (0.0, 0.0);
        for j in 0..n {
            let mut env = self.episode_env(reference, stream::RESAMPLE_VAL, j as u64)?;
            let mut rng = self
                .seeds
                .rng_indexed(stream::RESAMPLE_VAL, u64::MAX - j as u64);
            let ep = collect_rollout(
                &mut env,
                &self.tree,
                self.cfg.max_steps,
                ActionSelect::Greedy,
                &mut rng,
            )?;
            ratio += ep.stats.service_ratio;
            moved += ep.stats.rebalanced as f64;
        }
        Ok((ratio / n as f64, moved / n as f64))
    }

    /// One epoch of training episodes followed by validation.
    pub fn run_epoch(&mut self, reference: &Environment) -> Result<EpochMetrics> {
        let n = self.cfg.episodes_per_epoch;
        let mut acc = EpochMetrics {
            epoch: self.metrics.len(),
            episodes: 0,
            train_service_ratio: 0.0,
            train_rebalanced: 0.0,
            train_mean_reward: 0.0,
            val_service_ratio: 0.0,
            val_rebalanced: 0.0,
            global_groups: 0,
            local_groups: 0,
            delta: 0,
            d_bar: 0.0,
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            encoder_loss: 0.0,
        };
        let mut enc_count = 0usize;
        for _ in 0..n {
            let r = self.run_episode(reference)?;
            acc.train_service_ratio += r.stats.service_ratio / n as f64;
            acc.train_rebalanced += r.stats.rebalanced as f64 / n as f64;
            acc.train_mean_reward += r.stats.mean_reward / n as f64;
            acc.policy_loss += r.update.policy_loss / n as f64;
            acc.value_loss += r.update.value_loss / n as f64;
            acc.entropy += r.update.entropy / n as f64;
            if let Some(l) = r.encoder_loss {
                acc.encoder_loss += l;
                enc_count += 1;
            }
        }
        if enc_count > 0 {
            acc.encoder_loss /= enc_count as f64;
        }
        acc.episodes = self.episode;
        (acc.val_service_ratio, acc.val_rebalanced) = self.validate(reference)?;
        acc.global_groups = self.tree.globals().len();
        acc.local_groups = self.tree.locals().len();
        if let Grouping::Adaptive(c) = &self.grouping {
            acc.delta = c.state().delta;
            acc.d_bar = c.state().d_bar;
        }
        log::info!(
            "epoch {} train {:.4} val {:.4} groups {}/{}",
            acc.epoch,
            acc.train_service_ratio,
            acc.val_service_ratio,
            acc.global_groups,
            acc.local_groups
        );
        self.metrics.push(acc.clone());
        Ok(acc)
    }

    /// Run `cfg.epochs` epochs.
    pub fn train(&mut self, reference: &Environment) -> Result<&[EpochMetrics]> {
        for _ in 0..self.cfg.epochs {
            self.run_epoch(reference)?;
        }
        Ok(&self.metrics)
    }
}
