//! Hierarchical agent grouping and the split/merge controller.

pub mod controller;
pub mod kl;
pub mod kmeans;
pub mod tree;

pub use controller::{
    group_divergences, try_merge, try_split, update_period, update_running_divergence,
    write_events, Controller, ControllerConfig, ControllerState, EventKind, GroupEvent,
    MergeOutcome,
};
pub use kl::{
    centroid, gaussian_kl, intra_divergence, symmetric_kl, GaussianEmbedding, LOGVAR_CLAMP,
};
pub use kmeans::kmeans;
pub use tree::{spatial_partition, GlobalGroup, GroupCaps, GroupTree, LocalGroup, ParamRole};
