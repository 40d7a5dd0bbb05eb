//! Service-area world model.
//!
//! A square area of side `area_size` holds `num_users` ground users, each
//! carrying a queue of computation tasks, and `num_uavs` UAVs flying at a
//! fixed altitude. Time advances in discrete slots: UAVs move, coverage and
//! collisions are evaluated at the new positions, offloading choices are
//! resolved into an assignment, energy is charged, rewards are computed, and
//! users take their mobility step.

mod energy;
mod grid;
mod radio;
mod slot;
mod world;

pub use energy::{slot_energy, EnergyBreakdown};
pub use grid::{cell_of, GridMap};
pub use radio::{channel_gain, data_rate};
pub use slot::{execute_slot, objective_psi, Assignment, SlotOutcome, UavCommand};
pub use world::{
    horizontal_distance, move_uav, reset, step_users, EnvConfig, Task, UavState, UserState,
    WorldState,
};

#[cfg(test)]
pub(crate) use world::tests::test_config;
