//! Per-UAV observation assembly.

use super::EncoderConfig;
use crate::comm::NeighborSet;
use crate::env::{cell_of, horizontal_distance, GridMap, WorldState};
use crate::nn::RealArray;

/// One UAV's view of the world for a slot: a flat status vector, a
/// two-channel grid image (merged visit map and own position), and the
/// bookkeeping that maps user slots back to world user ids.
///
/// Status layout: own state `[x/L, y/L, battery, R_cov/L, R_com/L]`, then
/// `max_neighbors` neighbor slots `[battery, distance/R_com, valid]`, then
/// `max_obs_users` user slots `[rel_x, rel_y, tasks, valid]` with relative
/// positions scaled by the coverage radius. Unused slots stay all-zero.
#[derive(Debug, Clone)]
pub struct LocalObservation {
    pub status: Vec<f64>,
    pub map: RealArray,
    /// World user id behind each user slot, nearest first.
    pub user_ids: Vec<Option<usize>>,
    /// Valid serve choices: one flag per user slot plus the always-valid
    /// final "serve nobody" entry.
    pub serve_mask: Vec<bool>,
}

impl LocalObservation {
    /// World user id for a serve head choice, if the choice targets a user.
    pub fn serve_target(&self, choice: usize) -> Option<usize> {
        self.user_ids.get(choice).copied().flatten()
    }
}

/// Builds UAV `m`'s observation from the world, its neighborhood, and its
/// neighborhood-merged visit map.
pub fn observe(
    world: &WorldState,
    m: usize,
    neighbors: &NeighborSet,
    merged_map: &GridMap,
    enc: &EncoderConfig,
) -> LocalObservation {
    let cfg = &world.cfg;
    let l = cfg.area_size;
    let uav = &world.uavs[m];
    let battery = |b: f64| (b.max(0.0) / cfg.initial_battery).min(1.0);

    let mut status = Vec::with_capacity(enc.status_len());
    status.extend([
        uav.pos[0] / l,
        uav.pos[1] / l,
        battery(uav.battery),
        cfg.coverage_radius / l,
        cfg.communication_radius / l,
    ]);

    let peers = neighbors.peers(m);
    for slot in 0..enc.max_neighbors {
        match peers.get(slot) {
            Some(&j) => {
                let d = horizontal_distance(uav.pos, world.uavs[j].pos);
                status.extend([
                    battery(world.uavs[j].battery),
                    (d / cfg.communication_radius).min(1.0),
                    1.0,
                ]);
            }
            None => status.extend([0.0, 0.0, 0.0]),
        }
    }

    let mut visible: Vec<(f64, usize)> = world
        .users
        .iter()
        .enumerate()
        .filter(|(n, user)| world.covers(m, *n) && user.remaining_tasks() > 0)
        .map(|(n, _)| (world.coverage_distance(m, n), n))
        .collect();
    visible.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));

    let mut user_ids = vec![None; enc.max_obs_users];
    let mut serve_mask = vec![false; enc.serve_actions()];
    for slot in 0..enc.max_obs_users {
        match visible.get(slot) {
            Some(&(_, n)) => {
                let user = &world.users[n];
                status.extend([
                    (user.pos[0] - uav.pos[0]) / cfg.coverage_radius,
                    (user.pos[1] - uav.pos[1]) / cfg.coverage_radius,
                    user.remaining_tasks() as f64 / cfg.tasks_per_user as f64,
                    1.0,
                ]);
                user_ids[slot] = Some(n);
                serve_mask[slot] = true;
            }
            None => status.extend([0.0, 0.0, 0.0, 0.0]),
        }
    }
    *serve_mask.last_mut().expect("serve mask is never empty") = true;

    let g = enc.grid_dim;
    let mut map = vec![0.0; 2 * g * g];
    for (i, &cell) in merged_map.cells().iter().enumerate() {
        if cell {
            map[i] = 1.0;
        }
    }
    let (row, col) = cell_of(uav.pos, cfg.grid_cell, g);
    map[g * g + row * g + col] = 1.0;
    let map = RealArray::new(vec![2, g, g], map).expect("map shape is consistent");

    LocalObservation {
        status,
        map,
        user_ids,
        serve_mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::build_neighbors;
    use crate::env::{reset, EnvConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk_env() -> EnvConfig {
        let mut cfg = crate::env::test_config();
        cfg.num_uavs = 3;
        cfg.num_users = 6;
        cfg.area_size = 150.0;
        cfg
    }

    fn desk_enc() -> EncoderConfig {
        EncoderConfig {
            grid_dim: 15,
            max_obs_users: 4,
            ..EncoderConfig::default()
        }
    }

    fn world_with_layout() -> WorldState {
        let cfg = desk_env();
        let mut p = ChaCha8Rng::seed_from_u64(40);
        let mut t = ChaCha8Rng::seed_from_u64(41);
        let mut w = reset(&cfg, &mut p, &mut t).unwrap();
        w.uavs[0].pos = [70.0, 70.0];
        w.uavs[1].pos = [100.0, 70.0];
        w.uavs[2].pos = [10.0, 140.0];
        for (n, user) in w.users.iter_mut().enumerate() {
            user.pos = [140.0, 10.0 + n as f64];
        }
        w
    }

    #[test]
    fn status_layout_and_ranges() {
        let w = world_with_layout();
        let enc = desk_enc();
        let set = build_neighbors(&w.uav_positions(), w.cfg.communication_radius, 4);
        let maps: Vec<GridMap> = w.uavs.iter().map(|u| u.visited.clone()).collect();
        let obs = observe(&w, 0, &set, &maps[0], &enc);

        assert_eq!(obs.status.len(), enc.status_len());
        assert!((obs.status[0] - 70.0 / 150.0).abs() < 1e-12);
        assert!((obs.status[2] - 1.0).abs() < 1e-12);
        // One neighbor 30 m away, slot 0 valid, slot 1 empty.
        assert!((obs.status[5 + 1] - 30.0 / 60.0).abs() < 1e-12);
        assert_eq!(obs.status[5 + 2], 1.0);
        assert_eq!(&obs.status[5 + 3..5 + 6], &[0.0, 0.0, 0.0]);
        for v in &obs.status {
            assert!(v.is_finite() && *v >= -1.0 && *v <= 1.0);
        }
    }

    #[test]
    fn covered_users_fill_slots_nearest_first() {
        let mut w = world_with_layout();
        let enc = desk_enc();
        // Put three users in range of UAV 0 at distinct distances.
        w.users[3].pos = [75.0, 70.0];
        w.users[1].pos = [70.0, 80.0];
        w.users[4].pos = [90.0, 70.0];
        let set = build_neighbors(&w.uav_positions(), w.cfg.communication_radius, 4);
        let obs = observe(&w, 0, &set, &w.uavs[0].visited, &enc);

        assert_eq!(obs.user_ids[0], Some(3));
        assert_eq!(obs.user_ids[1], Some(1));
        assert_eq!(obs.user_ids[2], Some(4));
        assert_eq!(obs.user_ids[3], None);
        assert_eq!(obs.serve_mask, vec![true, true, true, false, true]);
        assert_eq!(obs.serve_target(0), Some(3));
        assert_eq!(obs.serve_target(3), None);
        assert_eq!(obs.serve_target(4), None);

        // Slot 0 holds user 3: 5 m east, full queue.
        let base = 5 + 3 * enc.max_neighbors;
        assert!((obs.status[base] - 5.0 / 25.0).abs() < 1e-12);
        assert!((obs.status[base + 1]).abs() < 1e-12);
        assert!((obs.status[base + 2] - 1.0).abs() < 1e-12);
        assert_eq!(obs.status[base + 3], 1.0);
    }

    #[test]
    fn exhausted_users_are_invisible() {
        let mut w = world_with_layout();
        let enc = desk_enc();
        w.users[2].pos = [72.0, 70.0];
        for task in w.users[2].tasks.iter_mut() {
            task.done = true;
        }
        let set = build_neighbors(&w.uav_positions(), w.cfg.communication_radius, 4);
        let obs = observe(&w, 0, &set, &w.uavs[0].visited, &enc);
        assert!(obs.user_ids.iter().all(|id| *id != Some(2)));
    }

    #[test]
    fn map_channels_hold_merged_visits_and_own_position() {
        let mut w = world_with_layout();
        let enc = desk_enc();
        w.uavs[0].visited.mark(3, 4);
        let mut merged = w.uavs[0].visited.clone();
        merged.mark(9, 9);
        let set = build_neighbors(&w.uav_positions(), w.cfg.communication_radius, 4);
        let obs = observe(&w, 0, &set, &merged, &enc);

        let g = enc.grid_dim;
        assert_eq!(obs.map.shape(), &[2, g, g]);
        assert_eq!(obs.map.data()[3 * g + 4], 1.0);
        assert_eq!(obs.map.data()[9 * g + 9], 1.0);
        // UAV 0 sits at (70, 70): cell row 7, col 7 in the position channel.
        assert_eq!(obs.map.data()[g * g + 7 * g + 7], 1.0);
        let own_channel_sum: f64 = obs.map.data()[g * g..].iter().sum();
        assert_eq!(own_channel_sum, 1.0);
    }
}
