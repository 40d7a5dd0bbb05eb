//! Neighbor discovery and the three neighbor-only exchange primitives:
//! visit-map merging, experience-pool union, and parameter averaging.
//!
//! All exchanges happen at a slot barrier against an immutable snapshot of
//! every peer's data, so the primitives are pure functions from the joint
//! inputs to per-UAV outputs.

use crate::env::{horizontal_distance, GridMap};
use crate::error::{Error, Result};
use crate::nn::{ParameterStore, RealArray};

/// Per-UAV neighbor lists. Each list starts with the UAV itself, followed by
/// the nearest in-range peers in ascending distance order.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    lists: Vec<Vec<usize>>,
}

impl NeighborSet {
    /// Members of UAV `m`'s neighborhood, self first.
    pub fn members(&self, m: usize) -> &[usize] {
        &self.lists[m]
    }

    /// Non-self members of UAV `m`'s neighborhood.
    pub fn peers(&self, m: usize) -> &[usize] {
        &self.lists[m][1..]
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    /// A neighborhood per UAV containing only that UAV. Useful for runs with
    /// communication disabled.
    pub fn isolated(count: usize) -> Self {
        NeighborSet {
            lists: (0..count).map(|m| vec![m]).collect(),
        }
    }

    /// Builds the set directly from membership lists. Each list must start
    /// with its own index. Intended for tests and hand-built topologies.
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Result<Self> {
        for (m, list) in lists.iter().enumerate() {
            if list.first() != Some(&m) {
                return Err(Error::contract(format!(
                    "neighbor list {m} must start with {m}"
                )));
            }
            for &j in list {
                if j >= lists.len() {
                    return Err(Error::contract(format!(
                        "neighbor list {m} references unknown UAV {j}"
                    )));
                }
            }
        }
        Ok(NeighborSet { lists })
    }
}

/// Discovers each UAV's neighborhood: peers within `r_com` (horizontal
/// distance, all UAVs share one altitude), kept in ascending distance order
/// with ties broken by lower id, truncated to the nearest `max_neighbors`.
/// The UAV itself always heads its own list.
pub fn build_neighbors(positions: &[[f64; 2]], r_com: f64, max_neighbors: usize) -> NeighborSet {
    let lists = positions
        .iter()
        .enumerate()
        .map(|(m, pos)| {
            let mut in_range: Vec<(f64, usize)> = positions
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != m)
                .map(|(j, q)| (horizontal_distance(*pos, *q), j))
                .filter(|(d, _)| *d <= r_com)
                .collect();
            in_range.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
            let mut list = vec![m];
            list.extend(in_range.iter().take(max_neighbors).map(|(_, j)| *j));
            list
        })
        .collect();
    NeighborSet { lists }
}

/// Merges visit maps: each UAV's merged map is the elementwise OR over its
/// neighborhood. Inputs are untouched.
pub fn merge_maps(maps: &[GridMap], neighbors: &NeighborSet) -> Result<Vec<GridMap>> {
    if maps.len() != neighbors.len() {
        return Err(Error::contract(format!(
            "{} maps for {} neighbor lists",
            maps.len(),
            neighbors.len()
        )));
    }
    if let Some(first) = maps.first() {
        if maps.iter().any(|m| m.dim() != first.dim()) {
            return Err(Error::contract("visit maps must share one grid size"));
        }
    }
    Ok((0..maps.len())
        .map(|m| {
            let mut merged = maps[m].clone();
            for &j in neighbors.peers(m) {
                merged.or_with(&maps[j]);
            }
            merged
        })
        .collect())
}

/// Builds each UAV's training pool as the concatenation of its neighborhood's
/// buffers, visited in ascending UAV id so every pool keeps each source's
/// transitions contiguous and in insertion order.
pub fn union_buffers<T: Clone>(buffers: &[Vec<T>], neighbors: &NeighborSet) -> Vec<Vec<T>> {
    (0..buffers.len())
        .map(|m| {
            let mut ids: Vec<usize> = neighbors.members(m).to_vec();
            ids.sort_unstable();
            let mut pool = Vec::with_capacity(ids.iter().map(|&j| buffers[j].len()).sum());
            for j in ids {
                pool.extend(buffers[j].iter().cloned());
            }
            pool
        })
        .collect()
}

/// Replaces each UAV's parameters with the mean over its neighborhood,
/// computed simultaneously from the pre-round snapshot.
///
/// The mean is evaluated in deviation form, `x_m + mean_j(x_j - x_m)`, so a
/// neighborhood that already agrees on a value keeps it bit-exactly.
pub fn average_parameters(
    stores: &[ParameterStore],
    neighbors: &NeighborSet,
) -> Result<Vec<ParameterStore>> {
    if stores.len() != neighbors.len() {
        return Err(Error::contract(format!(
            "{} stores for {} neighbor lists",
            stores.len(),
            neighbors.len()
        )));
    }
    if let Some(first) = stores.first() {
        for s in stores.iter().skip(1) {
            if !s.same_layout(first) {
                return Err(Error::contract(
                    "parameter stores must share names and shapes to average",
                ));
            }
        }
    }
    (0..stores.len())
        .map(|m| {
            let mut out = stores[m].clone();
            let count = neighbors.members(m).len() as f64;
            for (name, value) in out.iter_mut() {
                let own = stores[m].get(name)?.data();
                let peers = neighbors
                    .members(m)
                    .iter()
                    .map(|&j| stores[j].get(name).map(|a| a.data()))
                    .collect::<Result<Vec<_>>>()?;
                let buf = value.data_mut();
                for i in 0..buf.len() {
                    let delta: f64 = peers.iter().map(|p| p[i] - own[i]).sum();
                    buf[i] = own[i] + delta / count;
                }
            }
            out.bump_version();
            Ok(out)
        })
        .collect()
}

/// Mean of every parameter over all UAVs, in deviation form. This is the
/// fleet's consensus point; it is what checkpoints persist so a saved policy
/// is independent of the fleet size it was trained with.
pub fn consensus_mean(stores: &[ParameterStore]) -> Result<ParameterStore> {
    let first = stores
        .first()
        .ok_or_else(|| Error::contract("consensus of zero stores"))?;
    for s in stores.iter().skip(1) {
        if !s.same_layout(first) {
            return Err(Error::contract(
                "parameter stores must share names and shapes to average",
            ));
        }
    }
    let mut out = first.clone();
    let count = stores.len() as f64;
    for (name, value) in out.iter_mut() {
        let own = first.get(name)?.data();
        let all = stores
            .iter()
            .map(|s| s.get(name).map(|a| a.data()))
            .collect::<Result<Vec<_>>>()?;
        let buf = value.data_mut();
        for i in 0..buf.len() {
            let delta: f64 = all.iter().map(|p| p[i] - own[i]).sum();
            buf[i] = own[i] + delta / count;
        }
    }
    Ok(out)
}

/// Largest per-coordinate spread (max minus min) over any parameter across
/// the stores. Zero means full consensus.
pub fn parameter_spread(stores: &[ParameterStore]) -> Result<f64> {
    let first = stores
        .first()
        .ok_or_else(|| Error::contract("spread of zero stores"))?;
    let mut spread: f64 = 0.0;
    for (name, value) in first.iter() {
        for i in 0..value.data().len() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for s in stores {
                let x = s.get(name)?.data()[i];
                lo = lo.min(x);
                hi = hi.max(x);
            }
            spread = spread.max(hi - lo);
        }
    }
    Ok(spread)
}
