//! One simulation slot: joint UAV movement, violation checks, offloading
//! assignment, energy accounting, rewards, and world advancement.

use rand::Rng;

use super::energy::{slot_energy, EnergyBreakdown};
use super::radio::{channel_gain, data_rate};
use super::world::{horizontal_distance, mark_visits, move_uav, step_users, WorldState};
use crate::error::{Error, Result};

/// One UAV's joint action for a slot: a requested horizontal displacement
/// and, optionally, the id of the user whose head task it wants to process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavCommand {
    pub movement: [f64; 2],
    pub serve: Option<usize>,
}

impl UavCommand {
    pub fn hover() -> Self {
        UavCommand {
            movement: [0.0, 0.0],
            serve: None,
        }
    }
}

/// The user-to-UAV assignment actually executed in a slot. Each UAV serves
/// at most one user and each user is served by at most one UAV.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    served_user: Vec<Option<usize>>,
}

impl Assignment {
    pub fn served_by(&self, uav: usize) -> Option<usize> {
        self.served_user[uav]
    }

    /// Executed (user, uav) pairs.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.served_user
            .iter()
            .enumerate()
            .filter_map(|(m, n)| n.map(|n| (n, m)))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.served_user.iter().filter(|n| n.is_some()).count()
    }
}

/// Everything observable about one executed slot.
#[derive(Debug, Clone)]
pub struct SlotOutcome {
    /// Per-UAV reward.
    pub rewards: Vec<f64>,
    /// Per-UAV energy split.
    pub energy: Vec<EnergyBreakdown>,
    /// Fleet energy this slot, joules.
    pub energy_total: f64,
    /// Tasks processed this slot.
    pub processed: usize,
    /// Slot objective in raw joules.
    pub psi: f64,
    /// Objective value the rewards were built from. Equal to `psi` unless
    /// energy normalization is enabled.
    pub reward_psi: f64,
    pub assignment: Assignment,
    /// UAV pairs closer than the minimum separation after moving.
    pub collisions: Vec<(usize, usize)>,
    /// UAVs whose movement was cancelled by the area border.
    pub boundary: Vec<usize>,
    /// Executed per-UAV displacements.
    pub moved: Vec<[f64; 2]>,
    /// UAVs whose battery is exhausted after this slot.
    pub battery_empty: Vec<usize>,
}

/// Weighted slot objective: energy cost minus processed-task credit.
pub fn objective_psi(w1: f64, w2: f64, energy_total: f64, processed: usize) -> f64 {
    w1 * energy_total - w2 * processed as f64
}

/// Executes one slot given one command per UAV.
///
/// The slot proceeds in a fixed order: UAVs move (clipped, border-checked),
/// collisions and boundary hits are evaluated at the new positions, coverage
/// is recomputed, serve requests are resolved into a conflict-free
/// assignment (lowest UAV id wins a contested user), energies and the
/// objective are computed, rewards are assigned, users move, batteries
/// drain, visit grids are marked, and time advances. The episode ends when
/// the slot budget runs out or every task is processed, whichever comes
/// first.
pub fn execute_slot<R: Rng>(
    world: &mut WorldState,
    commands: &[UavCommand],
    mobility: &mut R,
) -> Result<SlotOutcome> {
    if world.done {
        return Err(Error::contract("execute_slot called on a finished episode"));
    }
    let m_count = world.uavs.len();
    if commands.len() != m_count {
        return Err(Error::contract(format!(
            "expected {m_count} commands, got {}",
            commands.len()
        )));
    }

    let mut moved = vec![[0.0, 0.0]; m_count];
    let mut boundary = Vec::new();
    for (m, cmd) in commands.iter().enumerate() {
        if !cmd.movement[0].is_finite() || !cmd.movement[1].is_finite() {
            return Err(Error::contract(format!(
                "non-finite movement for UAV {m}"
            )));
        }
        let (exec, hit) = move_uav(world, m, cmd.movement);
        moved[m] = exec;
        if hit {
            boundary.push(m);
        }
    }

    let mut collisions = Vec::new();
    for i in 0..m_count {
        for j in (i + 1)..m_count {
            if horizontal_distance(world.uavs[i].pos, world.uavs[j].pos)
                < world.cfg.min_uav_distance
            {
                collisions.push((i, j));
            }
        }
    }

    let mut served_user = vec![None; m_count];
    let mut claimed = vec![false; world.users.len()];
    let mut serve_info = vec![None; m_count];
    for (m, cmd) in commands.iter().enumerate() {
        let Some(n) = cmd.serve else { continue };
        if n >= world.users.len() || claimed[n] {
            continue;
        }
        if !world.covers(m, n) || world.users[n].remaining_tasks() == 0 {
            continue;
        }
        let dist = world.link_distance(m, n);
        let gain = channel_gain(world.cfg.channel_gain_ref, dist)?;
        let rate = data_rate(
            world.cfg.bandwidth,
            world.cfg.user_transmit_power,
            gain,
            world.cfg.noise_power,
        )?;
        if !(rate > 0.0) {
            return Err(Error::contract(format!(
                "UAV {m} would serve user {n} over a dead link"
            )));
        }
        let task = world.users[n]
            .finish_head_task()
            .expect("user with remaining tasks has a head task");
        served_user[m] = Some(n);
        claimed[n] = true;
        serve_info[m] = Some((task.size_bits, task.cycles_per_bit, rate));
    }
    let assignment = Assignment { served_user };
    let processed = assignment.count();

    let energy: Vec<EnergyBreakdown> = (0..m_count)
        .map(|m| slot_energy(&world.cfg, moved[m], serve_info[m]))
        .collect();
    let energy_total: f64 = energy.iter().map(|e| e.total()).sum();

    let psi = objective_psi(world.cfg.w1, world.cfg.w2, energy_total, processed);
    let reward_psi = if world.cfg.normalize_energy_reward {
        objective_psi(
            world.cfg.w1,
            world.cfg.w2,
            energy_total / world.cfg.reference_slot_energy(),
            processed,
        )
    } else {
        psi
    };

    let mut violator = vec![false; m_count];
    for &m in &boundary {
        violator[m] = true;
    }
    for &(i, j) in &collisions {
        violator[i] = true;
        violator[j] = true;
    }
    if world.cfg.cooperative_penalty && violator.iter().any(|&v| v) {
        violator.iter_mut().for_each(|v| *v = true);
    }
    let rewards: Vec<f64> = violator
        .iter()
        .map(|&v| -reward_psi - if v { world.cfg.penalty_factor } else { 0.0 })
        .collect();

    step_users(world, mobility);

    let mut battery_empty = Vec::new();
    for (m, e) in energy.iter().enumerate() {
        let uav = &mut world.uavs[m];
        uav.battery = (uav.battery - e.total()).max(0.0);
        if uav.battery <= 0.0 {
            uav.battery_empty = true;
        }
        if uav.battery_empty {
            battery_empty.push(m);
        }
    }

    mark_visits(world);

    world.t += 1;
    if world.t >= world.cfg.num_slots || world.remaining_tasks() == 0 {
        world.done = true;
    }

    Ok(SlotOutcome {
        rewards,
        energy,
        energy_total,
        processed,
        psi,
        reward_psi,
        assignment,
        collisions,
        boundary,
        moved,
        battery_empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::world::{reset, tests::test_config, EnvConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_world(cfg: &EnvConfig) -> WorldState {
        let mut p = ChaCha8Rng::seed_from_u64(21);
        let mut t = ChaCha8Rng::seed_from_u64(22);
        reset(cfg, &mut p, &mut t).unwrap()
    }

    #[test]
    fn hovering_fleet_of_two_earns_minus_one_each() {
        let mut cfg = test_config();
        cfg.num_uavs = 2;
        let mut w = small_world(&cfg);
        w.uavs[0].pos = [50.0, 50.0];
        w.uavs[1].pos = [200.0, 200.0];
        let mut mob = ChaCha8Rng::seed_from_u64(0);
        let out = execute_slot(&mut w, &[UavCommand::hover(); 2], &mut mob).unwrap();
        assert_eq!(out.processed, 0);
        assert!((out.energy_total - 2.0).abs() < 1e-12);
        assert!((out.psi - 1.0).abs() < 1e-12);
        for r in &out.rewards {
            assert!((r - (-1.0)).abs() < 1e-12);
        }
        assert!(out.collisions.is_empty());
        assert!(out.boundary.is_empty());
    }

    #[test]
    fn close_pair_pays_the_separation_penalty() {
        let mut cfg = test_config();
        cfg.num_uavs = 3;
        let mut w = small_world(&cfg);
        w.uavs[0].pos = [50.0, 50.0];
        w.uavs[1].pos = [55.0, 50.0];
        w.uavs[2].pos = [200.0, 200.0];
        let mut mob = ChaCha8Rng::seed_from_u64(0);
        let out = execute_slot(&mut w, &[UavCommand::hover(); 3], &mut mob).unwrap();
        assert_eq!(out.collisions, vec![(0, 1)]);
        // Fleet hover energy 3 J, psi = 1.5; the close pair additionally
        // pays the full penalty factor.
        assert!((out.rewards[0] - (-501.5)).abs() < 1e-9);
        assert!((out.rewards[1] - (-501.5)).abs() < 1e-9);
        assert!((out.rewards[2] - (-1.5)).abs() < 1e-9);
    }

    #[test]
    fn cooperative_mode_broadcasts_the_penalty() {
        let mut cfg = test_config();
        cfg.num_uavs = 3;
        cfg.cooperative_penalty = true;
        let mut w = small_world(&cfg);
        w.uavs[0].pos = [50.0, 50.0];
        w.uavs[1].pos = [55.0, 50.0];
        w.uavs[2].pos = [200.0, 200.0];
        let mut mob = ChaCha8Rng::seed_from_u64(0);
        let out = execute_slot(&mut w, &[UavCommand::hover(); 3], &mut mob).unwrap();
        for r in &out.rewards {
            assert!((r - (-501.5)).abs() < 1e-9);
        }
    }

    #[test]
    fn border_hit_cancels_the_move_and_costs_the_penalty() {
        let mut cfg = test_config();
        cfg.num_uavs = 2;
        let mut w = small_world(&cfg);
        w.uavs[0].pos = [1.0, 1.0];
        w.uavs[1].pos = [200.0, 200.0];
        let cmds = [
            UavCommand {
                movement: [-2.0, 0.0],
                serve: None,
            },
            UavCommand::hover(),
        ];
        let mut mob = ChaCha8Rng::seed_from_u64(0);
        let out = execute_slot(&mut w, &cmds, &mut mob).unwrap();
        assert_eq!(out.boundary, vec![0]);
        assert_eq!(out.moved[0], [0.0, 0.0]);
        assert_eq!(w.uavs[0].pos, [1.0, 1.0]);
        assert!((out.rewards[0] - (-501.0)).abs() < 1e-9);
        assert!((out.rewards[1] - (-1.0)).abs() < 1e-9);
        // No flying energy for the cancelled move.
        assert_eq!(out.energy[0].fly, 0.0);
    }

    #[test]
    fn contested_user_goes_to_the_lower_id() {
        let mut cfg = test_config();
        cfg.num_uavs = 2;
        let mut w = small_world(&cfg);
        w.uavs[0].pos = [100.0, 100.0];
        w.uavs[1].pos = [110.0, 100.0];
        w.users[0].pos = [105.0, 100.0];
        let before = w.users[0].remaining_tasks();
        let cmds = [
            UavCommand {
                movement: [0.0, 0.0],
                serve: Some(0),
            },
            UavCommand {
                movement: [0.0, 0.0],
                serve: Some(0),
            },
        ];
        let mut mob = ChaCha8Rng::seed_from_u64(0);
        let out = execute_slot(&mut w, &cmds, &mut mob).unwrap();
        assert_eq!(out.processed, 1);
        assert_eq!(out.assignment.served_by(0), Some(0));
        assert_eq!(out.assignment.served_by(1), None);
        assert_eq!(out.assignment.pairs(), vec![(0, 0)]);
        assert_eq!(w.users[0].remaining_tasks(), before - 1);
        // The loser hovered without serving, so its slot energy is hover
        // only.
        assert_eq!(out.energy[1].receive, 0.0);
        assert_eq!(out.energy[1].compute, 0.0);
    }

    #[test]
    fn serving_earns_the_task_credit_and_drains_the_battery() {
        let mut cfg = test_config();
        cfg.num_uavs = 1;
        let mut w = small_world(&cfg);
        w.uavs[0].pos = [100.0, 100.0];
        w.users[0].pos = [100.0, 100.0];
        // Park every other user away from coverage so the assignment is
        // unambiguous.
        for n in 1..w.users.len() {
            w.users[n].pos = [240.0, 240.0];
        }
        let task = w.users[0].head_task().unwrap().clone();
        let cmds = [UavCommand {
            movement: [0.0, 0.0],
            serve: Some(0),
        }];
        let mut mob = ChaCha8Rng::seed_from_u64(0);
        let out = execute_slot(&mut w, &cmds, &mut mob).unwrap();
        assert_eq!(out.processed, 1);

        // Link runs straight down: 100 m, gain 1e-9, SNR 100.
        let rate = 1e7 * 101f64.log2();
        let expect_recv = 0.1 * task.size_bits / rate;
        let expect_comp = 1e-27 * task.size_bits * task.cycles_per_bit;
        assert!((out.energy[0].receive - expect_recv).abs() < 1e-12);
        assert!((out.energy[0].compute - expect_comp).abs() < 1e-30);

        let e_total = 1.0 + expect_recv + expect_comp;
        assert!((out.energy_total - e_total).abs() < 1e-12);
        assert!((out.psi - (0.5 * e_total - 0.5)).abs() < 1e-12);
        assert!((out.rewards[0] + out.psi).abs() < 1e-12);
        assert!((w.uavs[0].battery - (1e5 - e_total)).abs() < 1e-9);
    }

    #[test]
    fn stale_serve_requests_are_dropped() {
        let mut cfg = test_config();
        cfg.num_uavs = 1;
        let mut w = small_world(&cfg);
        w.uavs[0].pos = [100.0, 100.0];
        // The requested user is out of coverage.
        w.users[0].pos = [200.0, 200.0];
        let cmds = [UavCommand {
            movement: [0.0, 0.0],
            serve: Some(0),
        }];
        let mut mob = ChaCha8Rng::seed_from_u64(0);
        let out = execute_slot(&mut w, &cmds, &mut mob).unwrap();
        assert_eq!(out.processed, 0);
        assert_eq!(out.assignment.served_by(0), None);

        // Same for a user with an empty queue.
        w.users[1].pos = w.uavs[0].pos;
        for task in w.users[1].tasks.iter_mut() {
            task.done = true;
        }
        let cmds = [UavCommand {
            movement: [0.0, 0.0],
            serve: Some(1),
        }];
        let out = execute_slot(&mut w, &cmds, &mut mob).unwrap();
        assert_eq!(out.processed, 0);
    }

    #[test]
    fn episode_ends_when_every_task_is_processed() {
        let mut cfg = test_config();
        cfg.num_uavs = 1;
        cfg.num_users = 1;
        cfg.tasks_per_user = 2;
        let mut w = small_world(&cfg);
        w.uavs[0].pos = [100.0, 100.0];
        let mut mob = ChaCha8Rng::seed_from_u64(0);
        let mut slots = 0;
        while !w.done {
            w.users[0].pos = [100.0, 100.0];
            w.users[0].vel = [0.0, 0.0];
            let cmds = [UavCommand {
                movement: [0.0, 0.0],
                serve: Some(0),
            }];
            execute_slot(&mut w, &cmds, &mut mob).unwrap();
            slots += 1;
        }
        assert_eq!(slots, 2);
        assert_eq!(w.remaining_tasks(), 0);
        assert!(w.t < cfg.num_slots);
        assert!(matches!(
            execute_slot(&mut w, &[UavCommand::hover()], &mut mob),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn normalization_rescales_rewards_but_not_the_logged_objective() {
        let mut cfg = test_config();
        cfg.num_uavs = 2;
        cfg.normalize_energy_reward = true;
        let mut w = small_world(&cfg);
        w.uavs[0].pos = [50.0, 50.0];
        w.uavs[1].pos = [200.0, 200.0];
        let mut mob = ChaCha8Rng::seed_from_u64(0);
        let out = execute_slot(&mut w, &[UavCommand::hover(); 2], &mut mob).unwrap();
        // Raw objective unchanged.
        assert!((out.psi - 1.0).abs() < 1e-12);
        // Reference draw is 2 * (1 + 10) * 1 = 22 J, so the normalized
        // energy term is 2/22.
        let expect = 0.5 * (2.0 / 22.0);
        assert!((out.reward_psi - expect).abs() < 1e-12);
        assert!((out.rewards[0] + expect).abs() < 1e-12);
    }

    #[test]
    fn visit_grids_accumulate_one_cell_per_slot() {
        let mut cfg = test_config();
        cfg.num_uavs = 1;
        let mut w = small_world(&cfg);
        w.uavs[0].pos = [5.0, 5.0];
        let mut mob = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(w.uavs[0].visited.count_marked(), 0);
        let cmds = [UavCommand {
            movement: [2.0, 0.0],
            serve: None,
        }];
        execute_slot(&mut w, &cmds, &mut mob).unwrap();
        assert_eq!(w.uavs[0].visited.count_marked(), 1);
        assert!(w.uavs[0].visited.get(0, 0));
        // Walk right far enough to enter the next column of cells.
        for _ in 0..2 {
            execute_slot(&mut w, &cmds, &mut mob).unwrap();
        }
        assert!(w.uavs[0].visited.get(0, 1));
        assert_eq!(w.uavs[0].visited.count_marked(), 2);
    }
}
