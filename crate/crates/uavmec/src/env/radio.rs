//! Air-to-ground uplink model: free-space path loss over line-of-sight
//! distance and the Shannon rate of the resulting SNR.

use crate::error::{Error, Result};

/// Channel power gain at distance `dist_m`, from the reference gain at 1 m
/// and inverse-square path loss.
pub fn channel_gain(gain_ref: f64, dist_m: f64) -> Result<f64> {
    if !(dist_m > 0.0) {
        return Err(Error::domain(format!(
            "channel gain needs a positive distance, got {dist_m}"
        )));
    }
    Ok(gain_ref / (dist_m * dist_m))
}

/// Uplink rate in bits per second for a user transmitting at `tx_power_w`
/// over a channel with power gain `gain` against noise `noise_w`.
pub fn data_rate(bandwidth_hz: f64, tx_power_w: f64, gain: f64, noise_w: f64) -> Result<f64> {
    if !(noise_w > 0.0) {
        return Err(Error::domain(format!(
            "noise power must be positive, got {noise_w}"
        )));
    }
    if gain < 0.0 || tx_power_w < 0.0 || bandwidth_hz < 0.0 {
        return Err(Error::domain(
            "bandwidth, transmit power, and gain must be non-negative",
        ));
    }
    let snr = tx_power_w * gain / noise_w;
    Ok(bandwidth_hz * (1.0 + snr).log2())
}
