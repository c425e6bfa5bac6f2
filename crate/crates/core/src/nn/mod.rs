//! Minimal differentiable-computation kernel.

pub mod adam;
pub mod encoder;
pub mod gradcheck;
pub mod graph;
pub mod heads;
pub mod lstm;
pub mod mlp;
pub mod tensor;

pub use adam::{adam_update, AdamConfig};
pub use encoder::TrajectoryEncoder;
pub use graph::{Graph, NodeId};
pub use heads::{policy_terms, ActionDistribution, HeadNet, IdEmbeddings, NetDims, TrunkNet};
pub use lstm::Lstm;
pub use mlp::Mlp;
pub use tensor::{Param, ParamSet, Tensor};
