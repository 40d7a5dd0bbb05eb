//! Generalized advantage estimation over one trajectory.

use crate::error::{Error, Result};

/// Backward recursion over one time-ordered trajectory. A `true` done flag
/// cuts bootstrapping after that step; the value beyond the last step is
/// taken as zero. Returns raw advantages and the value targets
/// `advantage + value`; any batch-level normalization is the caller's
/// business.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(Error::contract(format!(
            "sequence lengths differ: {} rewards, {} values, {} dones",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let cont = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_value * cont - values[t];
        carry = delta + gamma * lambda * cont * carry;
        advantages[t] = carry;
    }
    let returns = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    Ok((advantages, returns))
}
