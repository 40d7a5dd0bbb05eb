//! Run configuration: one flat, fully-defaulted JSON document that feeds the
//! environment, the encoder, and the learner.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::ppo::PpoConfig;

/// Every knob of a run. All lengths are meters, powers watts, energies
/// joules, times seconds, rates bits per second. Missing JSON keys take the
/// defaults below; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
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
    pub coverage_uses_altitude: bool,
    pub grid_cell: f64,

    pub bandwidth: f64,
    pub channel_gain_ref: f64,
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
    pub cooperative_penalty: bool,
    pub normalize_energy_reward: bool,
    pub rejection_placement: bool,

    pub max_obs_users: usize,
    pub max_neighbors: usize,
    pub mlp_hidden: usize,
    pub mlp_out: usize,
    pub cnn_channels1: usize,
    pub cnn_channels2: usize,
    pub cnn_out: usize,
    pub gat_dim: usize,
    pub gat_heads: usize,

    pub gamma: f64,
    pub lambda_gae: f64,
    pub clip_epsilon: f64,
    pub value_coeff: f64,
    pub entropy_coeff: f64,
    pub ppo_epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub buffer_capacity: usize,
    pub policy_hidden: usize,

    pub episodes: usize,
    pub seed: u64,
    pub checkpoint_interval: usize,
    pub update_cadence_slots: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            num_uavs: 10,
            num_users: 50,
            num_slots: 80,
            area_size: 250.0,
            uav_altitude: 100.0,
            slot_duration: 1.0,
            max_uav_speed: 2.0,
            user_max_speed: 1.0,
            min_uav_distance: 10.0,
            coverage_radius: 25.0,
            communication_radius: 60.0,
            coverage_uses_altitude: false,
            grid_cell: 10.0,

            bandwidth: 1e7,
            channel_gain_ref: 1e-5,
            noise_power: 1e-12,
            user_transmit_power: 0.1,
            uav_receive_power: 0.1,
            hovering_power: 1.0,
            flying_power: 10.0,
            cpu_energy_per_cycle: 1e-27,
            initial_battery: 1e5,

            task_size_bits: [1e5, 2e5],
            task_cycles_per_bit: [150.0, 200.0],
            tasks_per_user: 3,

            w1: 0.5,
            w2: 0.5,
            penalty_factor: 500.0,
            cooperative_penalty: false,
            normalize_energy_reward: false,
            rejection_placement: false,

            max_obs_users: 10,
            max_neighbors: 4,
            mlp_hidden: 64,
            mlp_out: 64,
            cnn_channels1: 8,
            cnn_channels2: 16,
            cnn_out: 64,
            gat_dim: 128,
            gat_heads: 4,

            gamma: 0.99,
            lambda_gae: 0.95,
            clip_epsilon: 0.2,
            value_coeff: 0.5,
            entropy_coeff: 0.01,
            ppo_epochs: 4,
            minibatch: 64,
            learning_rate: 3e-4,
            grad_clip: 0.5,
            buffer_capacity: 4096,
            policy_hidden: 64,

            episodes: 900,
            seed: 0,
            checkpoint_interval: 25,
            update_cadence_slots: 0,
        }
    }
}

/// One line of documentation per configuration key, kept in the field order
/// of [`RunConfig`]. The CLI help is generated from this table and a test
/// pins it to the actual field set.
pub const CONFIG_DOCS: &[(&str, &str)] = &[
    ("num_uavs", "fleet size M"),
    ("num_users", "ground users N"),
    ("num_slots", "time slots per episode T"),
    ("area_size", "square service area side length L in meters"),
    ("uav_altitude", "fixed flight altitude H in meters"),
    ("slot_duration", "slot length in seconds"),
    ("max_uav_speed", "UAV speed limit in m/s; the per-slot travel budget is speed times slot length"),
    ("user_max_speed", "per-axis bound of the users' uniformly drawn velocities in m/s"),
    ("min_uav_distance", "minimum allowed UAV separation in meters; closer pairs count as collisions"),
    ("coverage_radius", "maximum user distance a UAV can serve, in meters"),
    ("communication_radius", "maximum UAV distance for exchanging maps, experience, and parameters, in meters"),
    ("coverage_uses_altitude", "when true, coverage range is measured on the full 3-D distance instead of the ground projection"),
    ("grid_cell", "side length of one coverage-map cell in meters"),
    ("bandwidth", "uplink channel bandwidth in Hz"),
    ("channel_gain_ref", "linear channel power gain at 1 m reference distance"),
    ("noise_power", "linear receiver noise power in watts"),
    ("user_transmit_power", "user uplink transmit power in watts"),
    ("uav_receive_power", "UAV receive-chain power draw in watts"),
    ("hovering_power", "power drawn by hovering, in watts, burning for every full slot"),
    ("flying_power", "power drawn by level flight at full speed, in watts, prorated by distance moved"),
    ("cpu_energy_per_cycle", "energy per CPU cycle of the onboard processor, in joules"),
    ("initial_battery", "per-UAV battery budget in joules"),
    ("task_size_bits", "inclusive [low, high] range of task sizes in bits"),
    ("task_cycles_per_bit", "inclusive [low, high] range of processing densities in cycles per bit"),
    ("tasks_per_user", "number of tasks each user starts the episode with"),
    ("w1", "objective weight on total energy"),
    ("w2", "objective weight on processed-task count"),
    ("penalty_factor", "reward penalty for a boundary hit or collision involvement"),
    ("cooperative_penalty", "when true, any violation penalizes every UAV instead of only the violators"),
    ("normalize_energy_reward", "when true, the reward's energy term is divided by the fleet's maximum sustained per-slot draw; logged objectives stay in raw joules"),
    ("rejection_placement", "when true, initial UAV positions are re-drawn until all pairs respect min_uav_distance"),
    ("max_obs_users", "user slots in each UAV's observation; the serve head has this many choices plus serve-nobody"),
    ("max_neighbors", "neighbor slots in each UAV's observation and neighborhood cap for all sharing"),
    ("mlp_hidden", "hidden width of the status-vector encoder"),
    ("mlp_out", "output width of the status-vector encoder"),
    ("cnn_channels1", "channels of the first map convolution"),
    ("cnn_channels2", "channels of the second map convolution"),
    ("cnn_out", "output width of the map encoder head"),
    ("gat_dim", "width of each attention head's transformed features"),
    ("gat_heads", "number of attention heads per layer"),
    ("gamma", "reward discount factor"),
    ("lambda_gae", "advantage estimator decay"),
    ("clip_epsilon", "surrogate ratio clip half-width"),
    ("value_coeff", "value-loss weight in the joint loss"),
    ("entropy_coeff", "entropy-bonus weight in the joint loss"),
    ("ppo_epochs", "passes over the pooled batch per update round"),
    ("minibatch", "minibatch size inside an update round"),
    ("learning_rate", "Adam step size"),
    ("grad_clip", "global gradient-norm ceiling"),
    ("buffer_capacity", "per-UAV experience buffer capacity"),
    ("policy_hidden", "hidden width of the actor and critic heads"),
    ("episodes", "training episode count"),
    ("seed", "master seed; every random stream derives from it"),
    ("checkpoint_interval", "episodes between periodic checkpoints"),
    ("update_cadence_slots", "0 runs one update round per episode; k > 0 runs a round every k slots"),
];

impl RunConfig {
    /// Scaled-down profile for fast single-machine runs.
    pub fn desk_profile() -> Self {
        RunConfig {
            num_uavs: 4,
            num_users: 15,
            num_slots: 60,
            area_size: 150.0,
            episodes: 300,
            normalize_energy_reward: true,
            ..RunConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            num_uavs: self.num_uavs,
            num_users: self.num_users,
            num_slots: self.num_slots,
            area_size: self.area_size,
            uav_altitude: self.uav_altitude,
            slot_duration: self.slot_duration,
            max_uav_speed: self.max_uav_speed,
            user_max_speed: self.user_max_speed,
            min_uav_distance: self.min_uav_distance,
            coverage_radius: self.coverage_radius,
            communication_radius: self.communication_radius,
            coverage_uses_altitude: self.coverage_uses_altitude,
            bandwidth: self.bandwidth,
            channel_gain_ref: self.channel_gain_ref,
            noise_power: self.noise_power,
            user_transmit_power: self.user_transmit_power,
            uav_receive_power: self.uav_receive_power,
            hovering_power: self.hovering_power,
            flying_power: self.flying_power,
            cpu_energy_per_cycle: self.cpu_energy_per_cycle,
            initial_battery: self.initial_battery,
            task_size_bits: self.task_size_bits,
            task_cycles_per_bit: self.task_cycles_per_bit,
            tasks_per_user: self.tasks_per_user,
            w1: self.w1,
            w2: self.w2,
            penalty_factor: self.penalty_factor,
            cooperative_penalty: self.cooperative_penalty,
            normalize_energy_reward: self.normalize_energy_reward,
            rejection_placement: self.rejection_placement,
            grid_cell: self.grid_cell,
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            max_neighbors: self.max_neighbors,
            max_obs_users: self.max_obs_users,
            grid_dim: self.env_config().grid_dim(),
            mlp_hidden: self.mlp_hidden,
            mlp_out: self.mlp_out,
            cnn_channels1: self.cnn_channels1,
            cnn_channels2: self.cnn_channels2,
            cnn_out: self.cnn_out,
            gat_dim: self.gat_dim,
            gat_heads: self.gat_heads,
        }
    }

    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            gamma: self.gamma,
            lambda_gae: self.lambda_gae,
            clip_epsilon: self.clip_epsilon,
            value_coeff: self.value_coeff,
            entropy_coeff: self.entropy_coeff,
            epochs: self.ppo_epochs,
            minibatch: self.minibatch,
            learning_rate: self.learning_rate,
            grad_clip: self.grad_clip,
            buffer_capacity: self.buffer_capacity,
            policy_hidden: self.policy_hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env_config().validate()?;
        self.encoder_config().validate()?;
        self.ppo_config().validate()?;
        if self.episodes == 0 {
            return Err(Error::config("episodes must be positive"));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::config("checkpoint_interval must be positive"));
        }
        Ok(())
    }

    /// Help text listing every key with its default, generated from
    /// [`CONFIG_DOCS`] and the Default impl.
    pub fn keys_help() -> String {
        let defaults = serde_json::to_value(RunConfig::default()).expect("config serializes");
        let obj = defaults.as_object().expect("config is a JSON object");
        let mut out = String::from("Configuration keys (JSON, all optional):\n");
        for (key, doc) in CONFIG_DOCS {
            let d = obj.get(*key).map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("  {key} (default {d})\n      {doc}\n"));
        }
        out
    }
}
