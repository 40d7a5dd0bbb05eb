//! Adam optimizer with bias correction, plus global gradient-norm clipping.

use std::collections::BTreeMap;

use super::array::RealArray;
use super::store::ParameterStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, lazily allocated per parameter name.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: BTreeMap<String, RealArray>,
    v: BTreeMap<String, RealArray>,
    step: u64,
    pub params: AdamParams,
}

impl AdamState {
    pub fn new(params: AdamParams) -> Self {
        AdamState {
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            step: 0,
            params,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over every entry of `store`.
    ///
    /// `grads` must be keyed exactly like the store: a missing or extra key is
    /// a contract error, as is a shape mismatch. Zero gradients leave the
    /// parameters unchanged while still advancing the step and version
    /// counters.
    pub fn step(
        &mut self,
        store: &mut ParameterStore,
        grads: &BTreeMap<String, RealArray>,
        lr: f64,
    ) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::config(format!("non-positive learning rate {lr}")));
        }
        if grads.len() != store.len() {
            return Err(Error::contract(format!(
                "gradient map has {} entries, store has {}",
                grads.len(),
                store.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let AdamParams { beta1, beta2, eps } = self.params;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for (name, param) in store.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::contract(format!("missing gradient for {name}")))?;
            if g.shape() != param.shape() {
                return Err(Error::contract(format!(
                    "gradient shape {:?} for {name} does not match parameter {:?}",
                    g.shape(),
                    param.shape()
                )));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| RealArray::zeros(param.shape().to_vec()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| RealArray::zeros(param.shape().to_vec()));
            let (md, vd, pd) = (m.data_mut(), v.data_mut(), param.data_mut());
            for i in 0..pd.len() {
                let gi = g.data()[i];
                md[i] = beta1 * md[i] + (1.0 - beta1) * gi;
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gi * gi;
                let mhat = md[i] / bc1;
                let vhat = vd[i] / bc2;
                pd[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        store.bump_version();
        Ok(())
    }
}

/// Scales all gradients down so their joint L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut BTreeMap<String, RealArray>, max_norm: f64) -> f64 {
    let sq: f64 = grads
        .values()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param_store(v: f64) -> ParameterStore {
        let mut s = ParameterStore::new();
        s.insert("w".into(), RealArray::vector(vec![v, -v])).unwrap();
        s
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged_but_advance_version() {
        let mut store = one_param_store(1.25);
        let mut st = AdamState::new(AdamParams::default());
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), RealArray::vector(vec![0.0, 0.0]));
        let v0 = store.version();
        st.step(&mut store, &grads, 1e-3).unwrap();
        assert_eq!(store.get("w").unwrap().data(), &[1.25, -1.25]);
        assert_eq!(store.version(), v0 + 1);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_with_constant_gradient_matches_closed_form() {
        // With fresh moments the bias-corrected update is
        // -lr * g / (|g| + eps).
        let mut store = one_param_store(0.0);
        let mut st = AdamState::new(AdamParams::default());
        let g = 0.73;
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), RealArray::vector(vec![g, -g]));
        let lr = 3e-4;
        st.step(&mut store, &grads, lr).unwrap();
        let expect = -lr * g / (g.abs() + 1e-8);
        let got = store.get("w").unwrap().data();
        assert!((got[0] - expect).abs() < 1e-12, "{} vs {}", got[0], expect);
        assert!((got[1] + expect).abs() < 1e-12);
    }

    #[test]
    fn ten_steps_are_deterministic() {
        let run = || {
            let mut store = one_param_store(0.5);
            let mut st = AdamState::new(AdamParams::default());
            for k in 1..=10 {
                let mut grads = BTreeMap::new();
                grads.insert(
                    "w".to_string(),
                    RealArray::vector(vec![0.1 * k as f64, -0.05 * k as f64]),
                );
                st.step(&mut store, &grads, 1e-2).unwrap();
            }
            store.get("w").unwrap().data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn missing_gradient_key_is_a_contract_error() {
        let mut store = one_param_store(1.0);
        let mut st = AdamState::new(AdamParams::default());
        let grads = BTreeMap::new();
        assert!(st.step(&mut store, &grads, 1e-3).is_err());
    }

    #[test]
    fn global_norm_clip_scales_down_only_when_needed() {
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), RealArray::vector(vec![3.0]));
        grads.insert("b".to_string(), RealArray::vector(vec![4.0]));
        let norm = clip_global_norm(&mut grads, 0.5);
        assert!((norm - 5.0).abs() < 1e-12);
        let sq: f64 = grads.values().flat_map(|g| g.data()).map(|v| v * v).sum();
        assert!((sq.sqrt() - 0.5).abs() < 1e-12);

        let mut small = BTreeMap::new();
        small.insert("a".to_string(), RealArray::vector(vec![0.1]));
        clip_global_norm(&mut small, 0.5);
        assert_eq!(small["a"].data(), &[0.1]);
    }
}
