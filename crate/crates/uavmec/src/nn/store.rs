//! Named parameter collections.

use std::collections::BTreeMap;

use super::array::RealArray;
use crate::error::{Error, Result};

/// A flat, name-keyed set of parameter arrays with a version counter that
/// advances on every optimizer step or averaging round.
///
/// Iteration order is the sorted name order (BTreeMap), which keeps every
/// bulk operation over a store deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    entries: BTreeMap<String, RealArray>,
    version: u64,
}

impl Default for ParameterStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        ParameterStore {
            entries: BTreeMap::new(),
            version: 0,
        }
    }

    pub fn insert(&mut self, name: String, arr: RealArray) -> Result<()> {
        if self.entries.contains_key(&name) {
            return Err(Error::contract(format!("duplicate parameter name {name}")));
        }
        self.entries.insert(name, arr);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&RealArray> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut RealArray> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &RealArray)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut RealArray)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar coordinates across all entries.
    pub fn coordinate_count(&self) -> usize {
        self.entries.values().map(|a| a.len()).sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn set_version(&mut self, v: u64) {
        self.version = v;
    }

    /// True when both stores hold the same names with the same shapes.
    pub fn same_layout(&self, other: &ParameterStore) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(other.entries.iter())
                .all(|((an, aa), (bn, ba))| an == bn && aa.shape() == ba.shape())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut s = ParameterStore::new();
        s.insert("w".into(), RealArray::scalar(1.0)).unwrap();
        assert!(s.insert("w".into(), RealArray::scalar(2.0)).is_err());
    }

    #[test]
    fn layout_comparison() {
        let mut a = ParameterStore::new();
        a.insert("w".into(), RealArray::zeros(vec![2, 3])).unwrap();
        let mut b = ParameterStore::new();
        b.insert("w".into(), RealArray::zeros(vec![2, 3])).unwrap();
        assert!(a.same_layout(&b));
        let mut c = ParameterStore::new();
        c.insert("w".into(), RealArray::zeros(vec![3, 2])).unwrap();
        assert!(!a.same_layout(&c));
    }
}
