//! The training loop: plan, act, store, update, average, log.

use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::metrics::{stats_row, CsvFile, EpisodeMetrics, STATS_HEADER};
use super::rng::{split_streams, Streams};
use crate::comm::{build_neighbors, consensus_mean, merge_maps, NeighborSet};
use crate::encoder::{encode_all, encoder_param_spec, observe, EncoderConfig};
use crate::env::{execute_slot, reset, GridMap, SlotOutcome, UavCommand, WorldState};
use crate::error::{Error, Result};
use crate::nn::{
    register_store, save_checkpoint, AdamParams, AdamState, CheckpointMeta, NodeMap, ParamSpec,
    ParameterStore, Tape, CHECKPOINT_VERSION,
};
use crate::ppo::{
    greedy_action, learner_round, move_scale, policy_forward, policy_param_spec, sample_action,
    value_forward, HybridAction, ReplayBuffer, Transition,
};

/// Full parameter layout of one UAV: feature extractor, attention layers,
/// and both heads.
pub fn param_spec(cfg: &RunConfig) -> ParamSpec {
    let enc = cfg.encoder_config();
    let mut spec = encoder_param_spec(&enc);
    spec.extend(policy_param_spec(
        enc.z_dim(),
        cfg.policy_hidden,
        enc.serve_actions(),
    ));
    spec
}

/// One store per UAV, all starting from the same draw so the fleet begins
/// in agreement.
pub fn init_stores(cfg: &RunConfig) -> Result<Vec<ParameterStore>> {
    let store = crate::nn::init_parameters(&param_spec(cfg), cfg.seed)?;
    Ok(vec![store; cfg.num_uavs])
}

fn head_nodes(tape: &mut Tape, store: &ParameterStore) -> NodeMap {
    store
        .iter()
        .filter(|(name, _)| name.starts_with("actor.") || name.starts_with("critic."))
        .map(|(name, value)| (name.clone(), tape.leaf(value.clone())))
        .collect()
}

/// One UAV's decision for one slot, with everything needed to store the
/// transition afterwards.
pub(crate) struct PlannedAction {
    pub z: Vec<f64>,
    pub action: HybridAction,
    pub serve_mask: Vec<bool>,
    pub log_prob: f64,
    pub value: f64,
    pub command: UavCommand,
}

/// Runs the shared perception pass and each UAV's own heads for the current
/// slot. With a policy stream the actions are sampled (UAV order fixes the
/// draw order); without one they are greedy.
pub(crate) fn plan_slot(
    world: &WorldState,
    stores: &[ParameterStore],
    enc: &EncoderConfig,
    scale: f64,
    neighbors: &NeighborSet,
    merged: &[GridMap],
    mut policy: Option<&mut ChaCha8Rng>,
) -> Result<Vec<PlannedAction>> {
    let m_count = stores.len();
    let observations: Vec<_> = (0..m_count)
        .map(|m| observe(world, m, neighbors, &merged[m], enc))
        .collect::<Result<_>>()?;

    let mut tape = Tape::new();
    let shared = register_store(&mut tape, &stores[0], false);
    let encoded = encode_all(&mut tape, &shared, &observations, neighbors, enc)?;

    let mut planned = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let obs = &observations[m];
        let heads_map = if m == 0 {
            shared.clone()
        } else {
            head_nodes(&mut tape, &stores[m])
        };
        let heads = policy_forward(&mut tape, &heads_map, encoded[m], &obs.serve_mask, scale)?;
        let (action, log_prob) = match policy.as_deref_mut() {
            Some(rng) => sample_action(&tape, &heads, rng),
            None => (greedy_action(&tape, &heads), 0.0),
        };
        let value_node = value_forward(&mut tape, &heads_map, encoded[m])?;
        let command = UavCommand {
            movement: action.movement,
            serve: obs.serve_target(action.serve),
        };
        planned.push(PlannedAction {
            z: tape.value(encoded[m]).data().to_vec(),
            action,
            serve_mask: obs.serve_mask.clone(),
            log_prob,
            value: tape.value(value_node).data()[0],
            command,
        });
    }
    Ok(planned)
}

/// Per-episode counters filled slot by slot.
pub(crate) struct Accum {
    pub returns: Vec<f64>,
    pub collisions: usize,
    pub boundary: usize,
    pub energy: f64,
    pub psi: Vec<f64>,
}

impl Accum {
    pub fn new(num_uavs: usize) -> Self {
        Accum {
            returns: vec![0.0; num_uavs],
            collisions: 0,
            boundary: 0,
            energy: 0.0,
            psi: Vec::new(),
        }
    }

    pub fn absorb(&mut self, t: usize, gamma: f64, outcome: &SlotOutcome) {
        let discount = gamma.powi(t as i32);
        for (acc, r) in self.returns.iter_mut().zip(&outcome.rewards) {
            *acc += discount * r;
        }
        self.collisions += outcome.collisions.len();
        self.boundary += outcome.boundary.len();
        self.energy += outcome.energy_total;
        self.psi.push(outcome.psi);
    }

    pub fn finish(self, episode: usize, processed: usize, total: usize) -> EpisodeMetrics {
        let m = self.returns.len() as f64;
        let mean_return = self.returns.iter().sum::<f64>() / m;
        let psi_mean = if self.psi.is_empty() {
            0.0
        } else {
            self.psi.iter().sum::<f64>() / self.psi.len() as f64
        };
        EpisodeMetrics {
            episode,
            mean_return,
            task_completion_pct: if total == 0 {
                100.0
            } else {
                100.0 * processed as f64 / total as f64
            },
            processed_tasks: processed,
            total_tasks: total,
            collisions: self.collisions,
            boundary_violations: self.boundary,
            total_energy: self.energy,
            energy_per_task: if processed == 0 {
                0.0
            } else {
                self.energy / processed as f64
            },
            psi_series: self.psi,
            psi_mean,
            returns: self.returns,
        }
    }
}

pub struct TrainOutputs {
    pub metrics_path: PathBuf,
    pub stats_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub episodes: Vec<EpisodeMetrics>,
}

pub fn train(cfg: &RunConfig, out_dir: &Path) -> Result<TrainOutputs> {
    let (outputs, _) = train_with_state(cfg, out_dir)?;
    Ok(outputs)
}

/// Like [`train`] but also hands back the final per-UAV stores, which the
/// test suite inspects.
pub(crate) fn train_with_state(
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<(TrainOutputs, Vec<ParameterStore>)> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let env = cfg.env_config();
    let enc = cfg.encoder_config();
    let ppo = cfg.ppo_config();
    let scale = move_scale(env.max_uav_speed, env.slot_duration);
    let m_count = cfg.num_uavs;

    let mut streams: Streams = split_streams(cfg.seed, m_count);
    let mut stores = init_stores(cfg)?;
    let mut opts = vec![AdamState::new(AdamParams::default()); m_count];
    let mut buffers = vec![ReplayBuffer::new(ppo.buffer_capacity); m_count];

    let mut metrics_csv = CsvFile::create(
        out_dir.join("metrics.csv"),
        &EpisodeMetrics::csv_header(m_count),
    )?;
    let mut stats_csv = CsvFile::create(out_dir.join("training_stats.csv"), STATS_HEADER)?;
    let mut episodes = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let mut world = reset(&env, &mut streams.placement, &mut streams.tasks)?;
        let total_tasks = world.total_tasks();
        let mut accum = Accum::new(m_count);
        let mut last_neighbors = NeighborSet::isolated(m_count);

        while !world.done {
            let t = world.t;
            let positions = world.uav_positions();
            let neighbors = build_neighbors(&positions, env.communication_radius, enc.max_neighbors);
            let visited: Vec<GridMap> = world.uavs.iter().map(|u| u.visited.clone()).collect();
            let merged = merge_maps(&visited, &neighbors)?;
            let planned = plan_slot(
                &world,
                &stores,
                &enc,
                scale,
                &neighbors,
                &merged,
                Some(&mut streams.policy),
            )?;
            let commands: Vec<UavCommand> = planned.iter().map(|p| p.command).collect();
            let outcome = execute_slot(&mut world, &commands, &mut streams.mobility)?;
            for (m, p) in planned.into_iter().enumerate() {
                buffers[m].push(Transition {
                    z: p.z,
                    action: p.action,
                    serve_mask: p.serve_mask,
                    log_prob: p.log_prob,
                    reward: outcome.rewards[m],
                    value: p.value,
                    done: world.done,
                    source: m,
                });
            }
            accum.absorb(t, cfg.gamma, &outcome);
            last_neighbors = neighbors;

            if cfg.update_cadence_slots > 0 && world.t % cfg.update_cadence_slots == 0 {
                let stats = learner_round(
                    &mut stores,
                    &mut opts,
                    &mut buffers,
                    &last_neighbors,
                    &ppo,
                    scale,
                    &mut streams.shuffle,
                )?;
                for (m, s) in stats.iter().enumerate() {
                    stats_csv.row(&stats_row(episode, m, s))?;
                }
            }
        }

        if cfg.update_cadence_slots == 0 {
            let stats = learner_round(
                &mut stores,
                &mut opts,
                &mut buffers,
                &last_neighbors,
                &ppo,
                scale,
                &mut streams.shuffle,
            )?;
            for (m, s) in stats.iter().enumerate() {
                stats_csv.row(&stats_row(episode, m, s))?;
            }
        }

        let processed = total_tasks - world.remaining_tasks();
        let row = accum.finish(episode, processed, total_tasks);
        metrics_csv.row(&row.csv_row())?;
        episodes.push(row);

        if (episode + 1) % cfg.checkpoint_interval == 0 && episode + 1 < cfg.episodes {
            let meta = CheckpointMeta {
                format_version: CHECKPOINT_VERSION,
                seed: cfg.seed,
                episode: (episode + 1) as u64,
            };
            let snapshot = consensus_mean(&stores)?;
            save_checkpoint(
                &out_dir.join(format!("checkpoint_ep{:04}.umc", episode + 1)),
                &snapshot,
                &meta,
            )?;
        }
    }

    let final_meta = CheckpointMeta {
        format_version: CHECKPOINT_VERSION,
        seed: cfg.seed,
        episode: cfg.episodes as u64,
    };
    let consensus = consensus_mean(&stores)?;
    let checkpoint_path = out_dir.join("checkpoint.umc");
    save_checkpoint(&checkpoint_path, &consensus, &final_meta)?;

    Ok((
        TrainOutputs {
            metrics_path: metrics_csv.path().to_path_buf(),
            stats_path: stats_csv.path().to_path_buf(),
            checkpoint_path,
            episodes,
        },
        stores,
    ))
}

#[cfg(test)]
pub(crate) fn tiny_config() -> RunConfig {
    RunConfig {
        num_uavs: 1,
        num_users: 1,
        num_slots: 2,
        area_size: 100.0,
        tasks_per_user: 1,
        max_obs_users: 3,
        max_neighbors: 2,
        mlp_hidden: 8,
        mlp_out: 4,
        cnn_channels1: 2,
        cnn_channels2: 2,
        cnn_out: 4,
        gat_dim: 8,
        gat_heads: 2,
        policy_hidden: 8,
        minibatch: 8,
        ppo_epochs: 2,
        episodes: 1,
        ..RunConfig::default()
    }
}
