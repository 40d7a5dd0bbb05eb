//! Minimal neural-network engine: n-dimensional real arrays, a reverse-mode
//! computation tape, Xavier initialization, Adam, named parameter stores, and
//! a binary checkpoint format.
//!
//! Everything is 64-bit. The tape records each forward operation together
//! with its inputs so that [`Tape::backward`] can replay the graph in reverse
//! and accumulate exact gradients, and [`Tape::replay`] can re-execute the
//! forward pass bit-for-bit. [`gradcheck`] verifies recorded gradients against
//! central finite differences and is used heavily by the test suite.

mod adam;
mod array;
mod checkpoint;
pub mod gradcheck;
mod init;
mod store;
mod tape;

pub use adam::{clip_global_norm, AdamParams, AdamState};
pub use array::RealArray;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use init::{init_parameters, ParamInit, ParamSpec};
pub use store::ParameterStore;
pub use tape::{softmax_stable, NodeId, Tape};

use std::collections::BTreeMap;

/// Negative-side slope shared by every leaky rectifier in the networks.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Tape nodes for a store's parameters, keyed by parameter name.
pub type NodeMap = BTreeMap<String, NodeId>;

/// Puts every parameter of `store` onto the tape. With `trainable` set the
/// nodes are named parameters that receive gradients from
/// [`Tape::backward`]; otherwise they are anonymous constants, which is the
/// right choice for rollouts that never differentiate.
pub fn register_store(tape: &mut Tape, store: &ParameterStore, trainable: bool) -> NodeMap {
    store
        .iter()
        .map(|(name, value)| {
            let id = if trainable {
                tape.param(name, value.clone())
            } else {
                tape.leaf(value.clone())
            };
            (name.clone(), id)
        })
        .collect()
}

/// Looks a parameter node up by name, failing with a contract error on a
/// missing entry so callers surface typos instead of panicking.
pub fn node(map: &NodeMap, name: &str) -> crate::error::Result<NodeId> {
    map.get(name)
        .copied()
        .ok_or_else(|| crate::error::Error::contract(format!("no parameter node named {name}")))
}
