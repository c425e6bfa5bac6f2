use super::config::{Mode, RunConfig};
use crate::env::Environment;
use crate::error::Result;
use crate::group::{spatial_partition, Controller, ControllerConfig, GroupCaps, GroupTree};
use crate::ingest::features::state_dim;
use crate::nn::{IdEmbeddings, NetDims, TrajectoryEncoder};
use crate::ppo::{tuple_dim, Grouping, Trainer};
use crate::seed::{stream, SeedTree};

/// Freshly initialized networks and grouping policy for `cfg.mode`.
pub fn build_model(
    cfg: &RunConfig,
    env: &Environment,
) -> Result<(GroupTree, Grouping, Option<TrajectoryEncoder>)> {
    cfg.validate()?;
    let seeds = SeedTree::new(cfg.seed);
    let mut rng = seeds.rng(stream::INIT);
    let n = env.agents();
    let obs = env.observation_config();
    let dims = NetDims::new(
        state_dim(n, obs.history_mode),
        env.config().max_per_direction(),
    );
    let caps = cfg.caps;
    let (labels, caps, ids_on): (Vec<(usize, usize)>, GroupCaps, bool) = match cfg.mode {
        Mode::ShareAll => (
            vec![(0, 0); n],
            GroupCaps {
                g_max: 1,
                l_max: 1,
                ..caps
            },
            false,
        ),
        Mode::NoShare => (
            (0..n).map(|i| (i, 0)).collect(),
            GroupCaps {
                g_max: n,
                l_max: n,
                ..caps
            },
            false,
        ),
        Mode::StaticGroups => (
            vec![(0, 0); n],
            GroupCaps {
                g_max: 1,
                l_max: caps.s_max.max(1),
                ..caps
            },
            false,
        ),
        Mode::Hagps => {
            let g = if cfg.ablations.no_hier {
                1
            } else {
                cfg.g_init()
            };
            let globals = spatial_partition(env.grid(), g, seeds.derive(stream::INIT, 0))?;
            (
                globals.into_iter().map(|g| (g, 0)).collect(),
                caps,
                !cfg.ablations.no_id,
            )
        }
    };
    let ids = IdEmbeddings::new(n, dims.id_dim, ids_on, &mut rng);
    let tree = GroupTree::new(dims, caps, &labels, ids, &mut rng)?;
    let encoder = || {
        TrajectoryEncoder::new(
            tuple_dim(obs.history_mode),
            cfg.train.encoder_hidden,
            cfg.train.latent_dim,
            cfg.train.kl_weight,
            &mut seeds.rng(stream::ENCODER),
        )
    };
    let (grouping, encoder) = match cfg.mode {
        Mode::ShareAll | Mode::NoShare => (Grouping::Fixed, None),
        Mode::StaticGroups => (
            Grouping::OneShot {
                after: cfg.controller.delta0 as usize,
                groups: caps.s_max,
                seed: seeds.derive(stream::CONTROLLER, 0),
                done: false,
            },
            Some(encoder()),
        ),
        Mode::Hagps => {
            let ctrl_cfg = ControllerConfig {
                split_merge: cfg.controller.split_merge && !cfg.ablations.no_splitmerge,
                adaptive_period: cfg.controller.adaptive_period && !cfg.ablations.no_arp,
                ..cfg.controller.clone()
            };
            let ctrl = Controller::new(ctrl_cfg, seeds.derive(stream::CONTROLLER, 0))?;
            (Grouping::Adaptive(ctrl), Some(encoder()))
        }
    };
    Ok((tree, grouping, encoder))
}

/// A trainer ready to run `cfg` against `env`.
pub fn build_trainer(cfg: &RunConfig, env: &Environment) -> Result<Trainer> {
    let (tree, grouping, encoder) = build_model(cfg, env)?;
    let train = crate::ppo::TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    Trainer::new(
        train,
        tree,
        grouping,
        encoder,
        env.observation_config().history,
    )
}
