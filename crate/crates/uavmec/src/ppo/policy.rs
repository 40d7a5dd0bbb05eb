//! Actor and critic heads over encoded states.
//!
//! The actor is hybrid: a squashed Gaussian proposes the displacement, a
//! masked categorical picks which observed user to serve (last slot: serve
//! nobody). The Gaussian log-std is a state-independent learnable vector.

use super::HybridAction;
use crate::error::{Error, Result};
use crate::nn::{
    node, softmax_stable, NodeId, NodeMap, ParamInit, ParamSpec, RealArray, Tape, LEAKY_SLOPE,
};
use rand::Rng;
use rand_distr::StandardNormal;

/// Additive logit for invalid serve slots; drives their softmax weight to
/// exactly zero in f64.
pub const MASK_LOGIT: f64 = -1e30;

const LN_2PI: f64 = 1.837877066409345;

/// Per-component scale for the squashed displacement mean. Dividing by √2
/// keeps the mean vector's norm within the per-slot travel budget.
pub fn move_scale(v_max: f64, delta_t: f64) -> f64 {
    v_max * delta_t / std::f64::consts::SQRT_2
}

/// Initialization layout for both heads. The log-std starts at zero, giving
/// unit exploration noise in meters.
pub fn policy_param_spec(z_dim: usize, hidden: usize, serve_actions: usize) -> ParamSpec {
    let mut spec = ParamSpec::default();
    spec.push(
        "actor.fc.w",
        ParamInit::DenseXavier {
            rows: hidden,
            cols: z_dim,
        },
    );
    spec.push("actor.fc.b", ParamInit::Zeros { shape: vec![hidden] });
    spec.push(
        "actor.mu.w",
        ParamInit::DenseXavier { rows: 2, cols: hidden },
    );
    spec.push("actor.mu.b", ParamInit::Zeros { shape: vec![2] });
    spec.push(
        "actor.log_std",
        ParamInit::Const {
            shape: vec![2],
            value: 0.0,
        },
    );
    spec.push(
        "actor.serve.w",
        ParamInit::DenseXavier {
            rows: serve_actions,
            cols: hidden,
        },
    );
    spec.push(
        "actor.serve.b",
        ParamInit::Zeros {
            shape: vec![serve_actions],
        },
    );
    spec.push(
        "critic.fc.w",
        ParamInit::DenseXavier {
            rows: hidden,
            cols: z_dim,
        },
    );
    spec.push("critic.fc.b", ParamInit::Zeros { shape: vec![hidden] });
    spec.push(
        "critic.v.w",
        ParamInit::DenseXavier { rows: 1, cols: hidden },
    );
    spec.push("critic.v.b", ParamInit::Zeros { shape: vec![1] });
    spec
}

/// Tape nodes describing one state's action distribution. `serve_logits`
/// already carries the validity mask.
#[derive(Debug, Clone, Copy)]
pub struct PolicyNodes {
    pub move_mean: NodeId,
    pub log_std: NodeId,
    pub serve_logits: NodeId,
}

/// Builds the actor heads for a single encoded state.
pub fn policy_forward(
    tape: &mut Tape,
    params: &NodeMap,
    z: NodeId,
    serve_mask: &[bool],
    move_scale: f64,
) -> Result<PolicyNodes> {
    if !serve_mask.iter().any(|&m| m) {
        return Err(Error::contract("serve mask with no valid slot"));
    }
    let hidden = tape.dense(
        z,
        node(params, "actor.fc.w")?,
        Some(node(params, "actor.fc.b")?),
    )?;
    let hidden = tape.leaky_relu(hidden, LEAKY_SLOPE);

    let raw = tape.dense(
        hidden,
        node(params, "actor.mu.w")?,
        Some(node(params, "actor.mu.b")?),
    )?;
    let squashed = tape.tanh(raw);
    let move_mean = tape.scale(squashed, move_scale);

    let logits = tape.dense(
        hidden,
        node(params, "actor.serve.w")?,
        Some(node(params, "actor.serve.b")?),
    )?;
    if tape.value(logits).len() != serve_mask.len() {
        return Err(Error::contract(format!(
            "serve mask of {} entries against {} logits",
            serve_mask.len(),
            tape.value(logits).len()
        )));
    }
    let mask_vec: Vec<f64> = serve_mask
        .iter()
        .map(|&m| if m { 0.0 } else { MASK_LOGIT })
        .collect();
    let mask = tape.leaf(RealArray::vector(mask_vec));
    let serve_logits = tape.add(logits, mask)?;

    Ok(PolicyNodes {
        move_mean,
        log_std: node(params, "actor.log_std")?,
        serve_logits,
    })
}

/// Critic value for one encoded state ([z_dim] input, [1] output) or a batch
/// ([B, z_dim] input, [B, 1] output).
pub fn value_forward(tape: &mut Tape, params: &NodeMap, z: NodeId) -> Result<NodeId> {
    let hidden = tape.dense(
        z,
        node(params, "critic.fc.w")?,
        Some(node(params, "critic.fc.b")?),
    )?;
    let hidden = tape.leaky_relu(hidden, LEAKY_SLOPE);
    tape.dense(
        hidden,
        node(params, "critic.v.w")?,
        Some(node(params, "critic.v.b")?),
    )
}

fn gauss_log_density(x: &[f64; 2], mean: &[f64], log_std: &[f64]) -> f64 {
    (0..2)
        .map(|i| {
            let s = log_std[i].exp();
            let d = (x[i] - mean[i]) / s;
            -log_std[i] - 0.5 * LN_2PI - 0.5 * d * d
        })
        .sum()
}

/// Draws a hybrid action and its joint log density. Always consumes exactly
/// two standard normals and one uniform from `rng`, so the stream position
/// does not depend on the mask. The displacement is the pre-clip draw; the
/// environment applies the travel-budget clip.
pub fn sample_action<R: Rng>(tape: &Tape, heads: &PolicyNodes, rng: &mut R) -> (HybridAction, f64) {
    let mean = tape.value(heads.move_mean).data();
    let log_std = tape.value(heads.log_std).data();
    let n0: f64 = rng.sample(StandardNormal);
    let n1: f64 = rng.sample(StandardNormal);
    let movement = [
        mean[0] + log_std[0].exp() * n0,
        mean[1] + log_std[1].exp() * n1,
    ];

    let probs = softmax_stable(tape.value(heads.serve_logits).data());
    let u: f64 = rng.gen();
    let mut serve = None;
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            serve = Some(i);
            break;
        }
    }
    let serve = serve.unwrap_or_else(|| {
        probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty serve distribution")
    });

    let log_prob = gauss_log_density(&movement, mean, log_std) + probs[serve].ln();
    (HybridAction { movement, serve }, log_prob)
}

/// Deterministic action: the displacement mean and the highest valid logit.
pub fn greedy_action(tape: &Tape, heads: &PolicyNodes) -> HybridAction {
    let mean = tape.value(heads.move_mean).data();
    let logits = tape.value(heads.serve_logits).data();
    let serve = logits
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty serve logits");
    HybridAction {
        movement: [mean[0], mean[1]],
        serve,
    }
}
