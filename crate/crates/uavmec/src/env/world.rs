//! World state: configuration, placement, user mobility, UAV movement, and
//! coverage tests.

use rand::Rng;

use super::grid::{cell_of, GridMap};
use crate::error::{Error, Result};

/// Environment-facing slice of the run configuration. All lengths are meters,
/// powers watts, energies joules, times seconds, rates bits per second.
#[derive(Debug, Clone, Copy)]
pub struct EnvConfig {
    pub num_uavs: usize,
    pub num_users: usize,
    pub num_slots: usize,
    pub area_size: f64,
    pub uav_altitude: f64,
    pub slot_duration: f64,
    pub max_uav_speed: f64,
    pub user_max_speed: f64,
    pub min_uav_distance: f64,
    pub coverage_radius: f64,
    pub communication_radius: f64,
    /// When set, coverage uses the full 3-D distance to the UAV instead of
    /// the default horizontal ground distance.
    pub coverage_uses_altitude: bool,
    pub bandwidth: f64,
    /// Linear channel power gain at 1 m reference distance.
    pub channel_gain_ref: f64,
    /// Linear noise power in watts.
    pub noise_power: f64,
    pub user_transmit_power: f64,
    pub uav_receive_power: f64,
    pub hovering_power: f64,
    pub flying_power: f64,
    pub cpu_energy_per_cycle: f64,
    pub initial_battery: f64,
    pub task_size_bits: [f64; 2],
    pub task_cycles_per_bit: [f64; 2],
    pub tasks_per_user: usize,
    pub w1: f64,
    pub w2: f64,
    pub penalty_factor: f64,
    /// Broadcast the violation penalty to every UAV instead of only the
    /// violators.
    pub cooperative_penalty: bool,
    /// Divide the energy term of the reward objective by the fleet's maximum
    /// sustained per-slot draw, so energy and throughput live on comparable
    /// scales. Logged objective values stay in raw joules either way.
    pub normalize_energy_reward: bool,
    /// Re-sample initial UAV positions until all pairs respect
    /// `min_uav_distance`.
    pub rejection_placement: bool,
    pub grid_cell: f64,
}

impl EnvConfig {
    pub fn grid_dim(&self) -> usize {
        (self.area_size / self.grid_cell).ceil() as usize
    }

    /// Reference per-slot energy for reward normalization: every UAV hovering
    /// and flying at full speed for the whole slot.
    pub fn reference_slot_energy(&self) -> f64 {
        self.num_uavs as f64 * (self.hovering_power + self.flying_power) * self.slot_duration
    }

    pub fn max_step(&self) -> f64 {
        self.max_uav_speed * self.slot_duration
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_uavs", self.num_uavs as f64),
            ("num_users", self.num_users as f64),
            ("num_slots", self.num_slots as f64),
            ("area_size", self.area_size),
            ("uav_altitude", self.uav_altitude),
            ("slot_duration", self.slot_duration),
            ("max_uav_speed", self.max_uav_speed),
            ("coverage_radius", self.coverage_radius),
            ("communication_radius", self.communication_radius),
            ("bandwidth", self.bandwidth),
            ("grid_cell", self.grid_cell),
            ("initial_battery", self.initial_battery),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.task_size_bits[0] > self.task_size_bits[1]
            || self.task_cycles_per_bit[0] > self.task_cycles_per_bit[1]
        {
            return Err(Error::config("task size/cycle ranges must be lo <= hi"));
        }
        if self.grid_cell > self.area_size {
            return Err(Error::config("grid_cell larger than the area"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub size_bits: f64,
    pub cycles_per_bit: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct UserState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub tasks: Vec<Task>,
}

impl UserState {
    pub fn remaining_tasks(&self) -> usize {
        self.tasks.iter().filter(|t| !t.done).count()
    }

    /// First unfinished task, if any.
    pub fn head_task(&self) -> Option<&Task> {
        self.tasks.iter().find(|t| !t.done)
    }

    pub fn finish_head_task(&mut self) -> Option<&Task> {
        let idx = self.tasks.iter().position(|t| !t.done)?;
        self.tasks[idx].done = true;
        Some(&self.tasks[idx])
    }
}

#[derive(Debug, Clone)]
pub struct UavState {
    pub pos: [f64; 2],
    pub battery: f64,
    pub battery_empty: bool,
    pub visited: GridMap,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub cfg: EnvConfig,
    pub uavs: Vec<UavState>,
    pub users: Vec<UserState>,
    pub t: usize,
    pub done: bool,
}

impl WorldState {
    pub fn total_tasks(&self) -> usize {
        self.users.iter().map(|u| u.tasks.len()).sum()
    }

    pub fn remaining_tasks(&self) -> usize {
        self.users.iter().map(|u| u.remaining_tasks()).sum()
    }

    pub fn uav_positions(&self) -> Vec<[f64; 2]> {
        self.uavs.iter().map(|u| u.pos).collect()
    }

    /// Distance used for the coverage test between a UAV and a user.
    pub fn coverage_distance(&self, uav: usize, user: usize) -> f64 {
        let d = horizontal_distance(self.uavs[uav].pos, self.users[user].pos);
        if self.cfg.coverage_uses_altitude {
            (d * d + self.cfg.uav_altitude * self.cfg.uav_altitude).sqrt()
        } else {
            d
        }
    }

    pub fn covers(&self, uav: usize, user: usize) -> bool {
        self.coverage_distance(uav, user) <= self.cfg.coverage_radius
    }

    /// Line-of-sight distance used by the radio link (always 3-D).
    pub fn link_distance(&self, uav: usize, user: usize) -> f64 {
        let d = horizontal_distance(self.uavs[uav].pos, self.users[user].pos);
        (d * d + self.cfg.uav_altitude * self.cfg.uav_altitude).sqrt()
    }
}

pub fn horizontal_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Builds a fresh episode: users placed uniformly with full task queues, UAVs
/// placed uniformly (optionally re-sampled until pairwise separated), full
/// batteries, blank visit grids.
///
/// Draw order is fixed: user positions, then task parameters per user in
/// order, then UAV positions.
pub fn reset<R: Rng>(cfg: &EnvConfig, placement: &mut R, tasks: &mut R) -> Result<WorldState> {
    cfg.validate()?;
    let l = cfg.area_size;

    let mut users = Vec::with_capacity(cfg.num_users);
    for _ in 0..cfg.num_users {
        let pos = [placement.gen_range(0.0..=l), placement.gen_range(0.0..=l)];
        users.push(UserState {
            pos,
            vel: [0.0, 0.0],
            tasks: Vec::new(),
        });
    }
    for user in users.iter_mut() {
        for _ in 0..cfg.tasks_per_user {
            let size = sample_range(tasks, cfg.task_size_bits);
            let cycles = sample_range(tasks, cfg.task_cycles_per_bit);
            user.tasks.push(Task {
                size_bits: size,
                cycles_per_bit: cycles,
                done: false,
            });
        }
    }

    let mut positions: Vec<[f64; 2]> = Vec::with_capacity(cfg.num_uavs);
    const MAX_ATTEMPTS: usize = 10_000;
    for i in 0..cfg.num_uavs {
        let mut attempts = 0;
        loop {
            let cand = [placement.gen_range(0.0..=l), placement.gen_range(0.0..=l)];
            let clear = !cfg.rejection_placement
                || positions
                    .iter()
                    .all(|p| horizontal_distance(*p, cand) >= cfg.min_uav_distance);
            if clear {
                positions.push(cand);
                break;
            }
            attempts += 1;
            if attempts >= MAX_ATTEMPTS {
                return Err(Error::config(format!(
                    "could not place UAV {i} at least {} m from the others; \
                     the area cannot fit {} separated UAVs",
                    cfg.min_uav_distance, cfg.num_uavs
                )));
            }
        }
    }

    let dim = cfg.grid_dim();
    let uavs = positions
        .into_iter()
        .map(|pos| UavState {
            pos,
            battery: cfg.initial_battery,
            battery_empty: false,
            visited: GridMap::new(dim),
        })
        .collect();

    Ok(WorldState {
        cfg: *cfg,
        uavs,
        users,
        t: 0,
        done: false,
    })
}

fn sample_range<R: Rng>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..=range[1])
    }
}

/// Advances every user one slot: re-sample the velocity uniformly from
/// `[-v_max, v_max]^2`, step, and reflect off the area borders (flipping the
/// corresponding velocity component).
pub fn step_users<R: Rng>(world: &mut WorldState, mobility: &mut R) {
    let l = world.cfg.area_size;
    let dt = world.cfg.slot_duration;
    let v = world.cfg.user_max_speed;
    for user in world.users.iter_mut() {
        user.vel = [mobility.gen_range(-v..=v), mobility.gen_range(-v..=v)];
        for axis in 0..2 {
            let mut x = user.pos[axis] + user.vel[axis] * dt;
            while x < 0.0 || x > l {
                if x < 0.0 {
                    x = -x;
                } else {
                    x = 2.0 * l - x;
                }
                user.vel[axis] = -user.vel[axis];
            }
            user.pos[axis] = x;
        }
    }
}

/// Applies one movement command to a UAV.
///
/// The requested displacement is clipped to the reachable ball of radius
/// `max_uav_speed * slot_duration`, keeping its direction. If the clipped
/// target would leave the area the UAV stays where it is and the border hit
/// is reported. Returns the executed displacement and the border flag.
pub fn move_uav(world: &mut WorldState, uav: usize, requested: [f64; 2]) -> ([f64; 2], bool) {
    let max = world.cfg.max_step();
    let norm = (requested[0] * requested[0] + requested[1] * requested[1]).sqrt();
    let clipped = if norm > max {
        let s = max / norm;
        [requested[0] * s, requested[1] * s]
    } else {
        requested
    };
    let pos = world.uavs[uav].pos;
    let target = [pos[0] + clipped[0], pos[1] + clipped[1]];
    let l = world.cfg.area_size;
    if target[0] < 0.0 || target[0] > l || target[1] < 0.0 || target[1] > l {
        return ([0.0, 0.0], true);
    }
    world.uavs[uav].pos = target;
    (clipped, false)
}

/// Marks the cell under each UAV's current position in its own visit grid.
pub fn mark_visits(world: &mut WorldState) {
    let dim = world.cfg.grid_dim();
    let cell = world.cfg.grid_cell;
    for uav in world.uavs.iter_mut() {
        let (r, c) = cell_of(uav.pos, cell, dim);
        uav.visited.mark(r, c);
    }
}
