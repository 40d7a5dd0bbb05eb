//! Decentralized multi-agent reinforcement learning for UAV-assisted mobile
//! edge computing.
//!
//! A fleet of UAVs patrols a bounded service area, collects computation tasks
//! from ground users, and learns where to fly and whom to serve. Each UAV
//! trains its own PPO learner on locally observed state, enriched by a graph
//! attention encoder over the communication neighborhood, and periodically
//! exchanges experience and parameters with nearby UAVs.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`]: dense/conv primitives on a reverse-mode computation tape, Xavier
//!   initialization, Adam, parameter stores, and binary checkpoints.
//! - [`env`]: the service-area world model (user mobility, coverage, radio
//!   link rates, energy accounting, slot execution).
//! - [`comm`]: communication graph construction, grid-map merging, experience
//!   union, and neighborhood parameter averaging.
//! - [`encoder`]: local observations and the graph attention encoder that
//!   turns them into policy state vectors.
//! - [`ppo`]: hybrid-action policy heads, GAE, clipped-surrogate updates, and
//!   the per-round learner that ties updates to parameter exchange.
//! - [`run`]: configuration, training/evaluation loops, metrics, traces, and
//!   coverage reports backing the `uavmec` binary.

pub mod comm;
pub mod encoder;
pub mod env;
pub mod error;
pub mod nn;
pub mod ppo;
pub mod run;

pub use error::{Error, Result};
