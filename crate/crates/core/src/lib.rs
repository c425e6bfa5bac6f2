//! Multi-agent bike rebalancing with hierarchical, adaptively grouped
//! parameter sharing.
//!
//! The crate is organized bottom-up:
//!
//! * [`ingest`] turns trip records into a region grid and daily demand.
//! * [`env`] replays that demand as a multi-agent Markov game.
//! * [`nn`] is a small reverse-mode differentiation kernel with the layers
//!   the agents need (MLP trunks and heads, an LSTM trajectory encoder).
//! * [`group`] maintains the two-level group tree and the split/merge
//!   controller driven by trajectory-embedding divergences.
//! * [`ppo`] collects rollouts and trains everything with clipped PPO.
//! * [`checkpoint`] stores and restores trained models bit for bit.
//! * [`experiment`] wires configuration, runs and reports.

pub mod checkpoint;
pub mod env;
pub mod error;
pub mod experiment;
pub mod group;
pub mod ingest;
pub mod nn;
pub mod ppo;
pub mod seed;
pub mod util;

pub use error::{Error, Result};
