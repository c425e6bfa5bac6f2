//! Demand-replay rebalancing game.

pub mod dynamics;
pub mod metrics;
pub mod sim;
pub mod trace;

pub use dynamics::{
    initial_inventory, net_inflow, reward, sanitize_action, step, AgentAction, EnvConfig, EnvState,
    StepOutcome,
};
pub use metrics::{avail_metric, net_flow, total_rebalanced};
pub use sim::{Environment, ObservationConfig};
pub use trace::{read_trace, write_trace, TraceRecord};
