//! Finite-difference verification of tape gradients.
//!
//! The checker takes a loss function of a parameter store, computes tape
//! gradients once, then compares randomly sampled coordinates against central
//! differences `(f(x+h) - f(x-h)) / 2h` with `h = 1e-5`. A coordinate passes
//! when the relative error `|ad - fd| / max(|ad|, |fd|)` is within tolerance,
//! or when both values are tiny in absolute terms.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::array::RealArray;
use super::store::ParameterStore;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const DEFAULT_REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CoordReport {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub total: usize,
    pub passed: usize,
    pub worst: Option<CoordReport>,
}

impl CheckReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.passed as f64 / self.total as f64
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom == 0.0 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Checks analytic gradients against central differences on `samples`
/// randomly chosen parameter coordinates.
///
/// `loss` evaluates the scalar objective for an arbitrary store with the same
/// layout; `grads` are the tape gradients at `store` (typically from
/// [`crate::nn::Tape::backward`]).
pub fn check_against_fd<F>(
    store: &ParameterStore,
    grads: &BTreeMap<String, RealArray>,
    loss: F,
    samples: usize,
    seed: u64,
    rel_tol: f64,
) -> Result<CheckReport>
where
    F: Fn(&ParameterStore) -> Result<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<&String> = store.names().collect();
    let mut passed = 0;
    let mut worst: Option<CoordReport> = None;

    for _ in 0..samples {
        let name = names[rng.gen_range(0..names.len())].clone();
        let len = store.get(&name)?.len();
        let idx = rng.gen_range(0..len);

        let mut plus = store.clone();
        plus.get_mut(&name)?.data_mut()[idx] += FD_STEP;
        let mut minus = store.clone();
        minus.get_mut(&name)?.data_mut()[idx] -= FD_STEP;
        let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * FD_STEP);

        let analytic = grads
            .get(&name)
            .map(|g| g.data()[idx])
            .unwrap_or(0.0);

        let re = rel_err(analytic, numeric);
        let pass = re <= rel_tol || (analytic.abs() <= ABS_FLOOR && numeric.abs() <= ABS_FLOOR);
        if pass {
            passed += 1;
        }
        let report = CoordReport {
            name,
            index: idx,
            analytic,
            numeric,
            rel_err: re,
            pass,
        };
        if worst.as_ref().map_or(true, |w| report.rel_err > w.rel_err) {
            worst = Some(report);
        }
    }

    Ok(CheckReport {
        total: samples,
        passed,
        worst,
    })
}
