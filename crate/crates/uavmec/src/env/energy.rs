//! Per-slot UAV energy accounting.

use serde::{Deserialize, Serialize};

use super::world::EnvConfig;

/// Energy spent by one UAV in one slot, split by cause. All joules.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub hover: f64,
    pub fly: f64,
    pub receive: f64,
    pub compute: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.hover + self.fly + self.receive + self.compute
    }
}

/// Energy drawn by a UAV that moved by `displacement` meters this slot and,
/// if `served` is set, received and processed a task of `size_bits` bits at
/// `cycles_per_bit` cycles per bit over a link running at `rate_bps`.
///
/// Hovering power burns for the full slot regardless of motion. Flying power
/// burns for the fraction of the slot spent at full speed, which is the
/// executed displacement over the maximum step. Reception burns receive power
/// for the upload duration `size / rate`; computation costs a fixed energy
/// per CPU cycle.
pub fn slot_energy(
    cfg: &EnvConfig,
    displacement: [f64; 2],
    served: Option<(f64, f64, f64)>,
) -> EnergyBreakdown {
    let dt = cfg.slot_duration;
    let hover = cfg.hovering_power * dt;

    let dist = (displacement[0] * displacement[0] + displacement[1] * displacement[1]).sqrt();
    let fly_fraction = (dist / cfg.max_step()).min(1.0);
    let fly = cfg.flying_power * fly_fraction * dt;

    let (receive, compute) = match served {
        Some((size_bits, cycles_per_bit, rate_bps)) => {
            let upload = size_bits / rate_bps;
            let receive = cfg.uav_receive_power * upload;
            let compute = cfg.cpu_energy_per_cycle * size_bits * cycles_per_bit;
            (receive, compute)
        }
        None => (0.0, 0.0),
    };

    EnergyBreakdown {
        hover,
        fly,
        receive,
        compute,
    }
}
