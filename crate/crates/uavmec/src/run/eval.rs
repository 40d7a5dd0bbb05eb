//! Greedy evaluation of a saved checkpoint, at any fleet size.

use std::path::Path;

use super::config::RunConfig;
use super::metrics::{mean_std, EpisodeMetrics};
use super::rng::split_streams;
use super::train::{param_spec, plan_slot, Accum};
use crate::comm::{build_neighbors, merge_maps};
use crate::env::{execute_slot, reset, GridMap, UavCommand};
use crate::error::{Error, Result};
use crate::nn::{init_parameters, load_checkpoint, ParameterStore};
use crate::ppo::move_scale;

fn layout_diagnostic(expected: &ParameterStore, got: &ParameterStore) -> String {
    for (name, want) in expected.iter() {
        match got.get(name) {
            Err(_) => return format!("checkpoint lacks parameter {name}"),
            Ok(have) if have.shape() != want.shape() => {
                return format!(
                    "parameter {name} has shape {:?}, config wants {:?}",
                    have.shape(),
                    want.shape()
                )
            }
            Ok(_) => {}
        }
    }
    for (name, _) in got.iter() {
        if expected.get(name).is_err() {
            return format!("checkpoint carries unexpected parameter {name}");
        }
    }
    "layouts match".to_string()
}

/// Loads a checkpoint and hands every UAV the same copy, after checking the
/// parameter layout against what the configuration's dimensions demand.
/// Fleet size is free to differ from the training run; nothing in the layout
/// depends on it.
pub(crate) fn load_fleet(cfg: &RunConfig, checkpoint: &Path) -> Result<Vec<ParameterStore>> {
    let (store, _) = load_checkpoint(checkpoint)?;
    let expected = init_parameters(&param_spec(cfg), 0)?;
    if !expected.same_layout(&store) {
        return Err(Error::checkpoint(format!(
            "{}: {}",
            checkpoint.display(),
            layout_diagnostic(&expected, &store)
        )));
    }
    Ok(vec![store; cfg.num_uavs])
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub episodes: Vec<EpisodeMetrics>,
    pub mean_task_pct: f64,
    pub std_task_pct: f64,
    pub mean_return: f64,
    pub mean_collisions: f64,
    /// Pooled over all episodes: total joules over total processed tasks.
    pub energy_per_task: f64,
}

pub fn evaluate(cfg: &RunConfig, checkpoint: &Path, episodes: usize) -> Result<EvalSummary> {
    cfg.validate()?;
    if episodes == 0 {
        return Err(Error::config("evaluation needs at least one episode"));
    }
    let stores = load_fleet(cfg, checkpoint)?;
    let env = cfg.env_config();
    let enc = cfg.encoder_config();
    let scale = move_scale(env.max_uav_speed, env.slot_duration);
    let mut streams = split_streams(cfg.seed, cfg.num_uavs);

    let mut rows = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut world = reset(&env, &mut streams.placement, &mut streams.tasks)?;
        let total_tasks = world.total_tasks();
        let mut accum = Accum::new(cfg.num_uavs);
        while !world.done {
            let t = world.t;
            let positions = world.uav_positions();
            let neighbors = build_neighbors(&positions, env.communication_radius, enc.max_neighbors);
            let visited: Vec<GridMap> = world.uavs.iter().map(|u| u.visited.clone()).collect();
            let merged = merge_maps(&visited, &neighbors)?;
            let planned = plan_slot(&world, &stores, &enc, scale, &neighbors, &merged, None)?;
            let commands: Vec<UavCommand> = planned.iter().map(|p| p.command).collect();
            let outcome = execute_slot(&mut world, &commands, &mut streams.mobility)?;
            accum.absorb(t, cfg.gamma, &outcome);
        }
        let processed = total_tasks - world.remaining_tasks();
        rows.push(accum.finish(episode, processed, total_tasks));
    }

    let pct: Vec<f64> = rows.iter().map(|r| r.task_completion_pct).collect();
    let (mean_task_pct, std_task_pct) = mean_std(&pct);
    let mean_return = rows.iter().map(|r| r.mean_return).sum::<f64>() / rows.len() as f64;
    let mean_collisions =
        rows.iter().map(|r| r.collisions as f64).sum::<f64>() / rows.len() as f64;
    let total_energy: f64 = rows.iter().map(|r| r.total_energy).sum();
    let total_processed: usize = rows.iter().map(|r| r.processed_tasks).sum();
    let energy_per_task = if total_processed == 0 {
        0.0
    } else {
        total_energy / total_processed as f64
    };

    Ok(EvalSummary {
        episodes: rows,
        mean_task_pct,
        std_task_pct,
        mean_return,
        mean_collisions,
        energy_per_task,
    })
}
