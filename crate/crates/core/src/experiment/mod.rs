//! Run configuration, baselines and ablations, and the command layer.

pub mod commands;
pub mod config;
pub mod model;
pub mod synth;

pub use commands::{
    cmd_eval, cmd_ingest, cmd_report, cmd_train, evaluate_greedy, load_environment, EvalRecord,
    ReportRow, RunManifest,
};
pub use config::{Ablations, DataConfig, GridSpec, Mode, RunConfig};
pub use model::{build_model, build_trainer};
pub use synth::{Archetype, Scenario, World};
