//! Parameter initialization.
//!
//! Weights draw from the Xavier/Glorot uniform distribution,
//! `U(-limit, limit)` with `limit = sqrt(6 / (fan_in + fan_out))`; biases and
//! other zero-initialized tensors start at zero. A single seeded stream walks
//! the spec entries in order, so the same spec and seed always produce the
//! same store and any shape change shifts nothing before it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::array::RealArray;
use super::store::ParameterStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum ParamInit {
    /// Weight matrix `[rows, cols]`; fan_in = cols, fan_out = rows.
    DenseXavier { rows: usize, cols: usize },
    /// Conv kernels `[out_c, in_c, kh, kw]`; fans follow the receptive field.
    ConvXavier {
        out_c: usize,
        in_c: usize,
        kh: usize,
        kw: usize,
    },
    /// 1-D vector treated as a projection to a scalar (fan_out = 1).
    VectorXavier { len: usize },
    Zeros { shape: Vec<usize> },
    Const { shape: Vec<usize>, value: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct ParamSpec {
    pub entries: Vec<(String, ParamInit)>,
}

impl ParamSpec {
    pub fn push(&mut self, name: impl Into<String>, init: ParamInit) {
        self.entries.push((name.into(), init));
    }

    pub fn extend(&mut self, other: ParamSpec) {
        self.entries.extend(other.entries);
    }
}

fn xavier(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Result<RealArray> {
    if fan_in == 0 || fan_out == 0 || shape.contains(&0) {
        return Err(Error::config(format!(
            "zero-width layer in parameter spec (shape {shape:?})"
        )));
    }
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    RealArray::new(shape, data)
}

/// Builds a fresh store from `spec`, filling weights Xavier-uniform from a
/// stream seeded by `seed`. Entry order in the spec fixes the draw order.
pub fn init_parameters(spec: &ParamSpec, seed: u64) -> Result<ParameterStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    for (name, init) in &spec.entries {
        let arr = match init {
            ParamInit::DenseXavier { rows, cols } => {
                xavier(&mut rng, vec![*rows, *cols], *cols, *rows)?
            }
            ParamInit::ConvXavier { out_c, in_c, kh, kw } => xavier(
                &mut rng,
                vec![*out_c, *in_c, *kh, *kw],
                in_c * kh * kw,
                out_c * kh * kw,
            )?,
            ParamInit::VectorXavier { len } => xavier(&mut rng, vec![*len], *len, 1)?,
            ParamInit::Zeros { shape } => {
                if shape.is_empty() || shape.contains(&0) {
                    return Err(Error::config(format!("zero-sized parameter {name}")));
                }
                RealArray::zeros(shape.clone())
            }
            ParamInit::Const { shape, value } => {
                if shape.is_empty() || shape.contains(&0) {
                    return Err(Error::config(format!("zero-sized parameter {name}")));
                }
                let n: usize = shape.iter().product();
                RealArray::new(shape.clone(), vec![*value; n])?
            }
        };
        store.insert(name.clone(), arr)?;
    }
    Ok(store)
}
