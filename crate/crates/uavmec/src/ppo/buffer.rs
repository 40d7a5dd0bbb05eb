//! Transition storage with bounded first-in-first-out eviction.

use serde::{Deserialize, Serialize};

/// One joint decision: a requested planar displacement in meters and a
/// choice from the observed-user list, where the last slot means "serve
/// nobody".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridAction {
    pub movement: [f64; 2],
    pub serve: usize,
}

/// One slot of experience as seen by one UAV. `z` is the encoded state the
/// action was sampled from, `serve_mask` the validity mask active at that
/// moment (needed to re-evaluate the discrete head), and `source` the UAV
/// that generated the sample.
#[derive(Debug, Clone)]
pub struct Transition {
    pub z: Vec<f64>,
    pub action: HybridAction,
    pub serve_mask: Vec<bool>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
    pub source: usize,
}

/// Bounded buffer of transitions. Pushing past capacity drops the oldest
/// entries; iteration order is always oldest first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            items: Vec::new(),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.remove(0);
        }
        self.items.push(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn items(&self) -> &[Transition] {
        &self.items
    }

    pub fn snapshot(&self) -> Vec<Transition> {
        self.items.clone()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(reward: f64) -> Transition {
        Transition {
            z: vec![0.0],
            action: HybridAction {
                movement: [0.0, 0.0],
                serve: 0,
            },
            serve_mask: vec![true],
            log_prob: 0.0,
            reward,
            value: 0.0,
            done: false,
            source: 0,
        }
    }

    #[test]
    fn eviction_is_oldest_first_and_capacity_holds() {
        let mut b = ReplayBuffer::new(4);
        for k in 0..7 {
            b.push(t(k as f64));
        }
        assert_eq!(b.len(), 4);
        let rewards: Vec<f64> = b.items().iter().map(|x| x.reward).collect();
        assert_eq!(rewards, vec![3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn snapshot_preserves_order_and_clear_empties() {
        let mut b = ReplayBuffer::new(8);
        b.push(t(1.0));
        b.push(t(2.0));
        let s = b.snapshot();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].reward, 1.0);
        b.clear();
        assert!(b.is_empty());
        assert_eq!(b.capacity(), 8);
    }
}
