//! Clipped-ratio updates over pooled experience and the per-round
//! update-then-average cycle.

use super::buffer::{ReplayBuffer, Transition};
use super::gae::compute_gae;
use super::policy::MASK_LOGIT;
use super::PpoConfig;
use crate::comm::{average_parameters, union_buffers, NeighborSet};
use crate::error::{Error, Result};
use crate::nn::{
    clip_global_norm, node, register_store, AdamState, ParameterStore, RealArray, Tape,
    LEAKY_SLOPE,
};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

const LN_2PI: f64 = 1.837877066409345;

/// Averages over all minibatch steps of one update call.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub steps: usize,
}

/// Advantages and value targets for a pool that concatenates one
/// time-ordered segment per source UAV. Each segment gets its own recursion;
/// outputs stay aligned with the pool. Advantages are raw here.
pub(crate) fn pooled_advantages(
    pool: &[Transition],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut advantages = Vec::with_capacity(pool.len());
    let mut returns = Vec::with_capacity(pool.len());
    let mut start = 0;
    while start < pool.len() {
        let source = pool[start].source;
        let mut end = start + 1;
        while end < pool.len() && pool[end].source == source {
            end += 1;
        }
        let seg = &pool[start..end];
        let rewards: Vec<f64> = seg.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = seg.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = seg.iter().map(|t| t.done).collect();
        let (adv, ret) = compute_gae(&rewards, &values, &dones, gamma, lambda)?;
        advantages.extend(adv);
        returns.extend(ret);
        start = end;
    }
    Ok((advantages, returns))
}

/// In-place shift to zero mean and unit variance. Batches of one are left
/// alone; there is no spread to standardize.
pub(crate) fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

fn validate_pool(pool: &[Transition]) -> Result<(usize, usize)> {
    let z_dim = pool[0].z.len();
    let mask_len = pool[0].serve_mask.len();
    for (k, t) in pool.iter().enumerate() {
        if t.z.len() != z_dim || t.serve_mask.len() != mask_len {
            return Err(Error::contract(format!(
                "transition {k} breaks the pool's dimensions"
            )));
        }
        if t.action.serve >= mask_len || !t.serve_mask[t.action.serve] {
            return Err(Error::contract(format!(
                "transition {k} serves a masked or out-of-range slot"
            )));
        }
        if !t.log_prob.is_finite() || !t.reward.is_finite() || !t.value.is_finite() {
            return Err(Error::contract(format!("transition {k} holds non-finite numbers")));
        }
    }
    Ok((z_dim, mask_len))
}

/// One optimization pass over a pooled batch: for every epoch, shuffled
/// minibatches of the clipped-surrogate loss with a squared-error value term
/// and an entropy bonus, gradients norm-clipped and applied with Adam.
pub fn ppo_update(
    store: &mut ParameterStore,
    opt: &mut AdamState,
    pool: &[Transition],
    cfg: &PpoConfig,
    move_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    if pool.is_empty() {
        return Err(Error::contract("update over an empty pool"));
    }
    let (z_dim, mask_len) = validate_pool(pool)?;
    let (raw_adv, returns) = pooled_advantages(pool, cfg.gamma, cfg.lambda_gae)?;
    let mut adv = raw_adv;
    normalize_advantages(&mut adv);

    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let step = minibatch_step(
                store, opt, pool, &adv, &returns, chunk, cfg, move_scale, z_dim, mask_len,
            )?;
            stats.actor_loss += step.actor_loss;
            stats.critic_loss += step.critic_loss;
            stats.entropy += step.entropy;
            stats.clip_fraction += step.clip_fraction;
            stats.mean_ratio += step.mean_ratio;
            stats.steps += 1;
        }
    }
    let n = stats.steps as f64;
    stats.actor_loss /= n;
    stats.critic_loss /= n;
    stats.entropy /= n;
    stats.clip_fraction /= n;
    stats.mean_ratio /= n;
    Ok(stats)
}

struct StepStats {
    actor_loss: f64,
    critic_loss: f64,
    entropy: f64,
    clip_fraction: f64,
    mean_ratio: f64,
}

#[allow(clippy::too_many_arguments)]
fn minibatch_step(
    store: &mut ParameterStore,
    opt: &mut AdamState,
    pool: &[Transition],
    adv: &[f64],
    returns: &[f64],
    idx: &[usize],
    cfg: &PpoConfig,
    move_scale: f64,
    z_dim: usize,
    mask_len: usize,
) -> Result<StepStats> {
    let b = idx.len();
    let mut z = Vec::with_capacity(b * z_dim);
    let mut moves = Vec::with_capacity(b * 2);
    let mut serves = Vec::with_capacity(b);
    let mut mask = Vec::with_capacity(b * mask_len);
    let mut old_lp = Vec::with_capacity(b);
    let mut a = Vec::with_capacity(b);
    let mut r = Vec::with_capacity(b);
    for &i in idx {
        let t = &pool[i];
        z.extend_from_slice(&t.z);
        moves.extend_from_slice(&t.action.movement);
        serves.push(t.action.serve);
        mask.extend(
            t.serve_mask
                .iter()
                .map(|&m| if m { 0.0 } else { MASK_LOGIT }),
        );
        old_lp.push(t.log_prob);
        a.push(adv[i]);
        r.push(returns[i]);
    }

    let mut tape = Tape::new();
    let params = register_store(&mut tape, store, true);

    let zb = tape.leaf(RealArray::new(vec![b, z_dim], z)?);
    let hidden = tape.dense(
        zb,
        node(&params, "actor.fc.w")?,
        Some(node(&params, "actor.fc.b")?),
    )?;
    let hidden = tape.leaky_relu(hidden, LEAKY_SLOPE);
    let raw = tape.dense(
        hidden,
        node(&params, "actor.mu.w")?,
        Some(node(&params, "actor.mu.b")?),
    )?;
    let squashed = tape.tanh(raw);
    let mean = tape.scale(squashed, move_scale);

    let log_std = node(&params, "actor.log_std")?;
    let mv = tape.leaf(RealArray::new(vec![b, 2], moves)?);
    let diff = tape.sub(mv, mean)?;
    let neg_ls = tape.neg(log_std);
    let inv_std = tape.exp(neg_ls);
    let scaled = tape.mul_row(diff, inv_std)?;
    let sq = tape.mul(scaled, scaled)?;
    let rs = tape.row_sum(sq)?;
    let half = tape.scale(rs, -0.5);
    let sum_ls = tape.sum(log_std);
    let shifted = tape.add_scalar_node(half, sum_ls, -1.0)?;
    let cont_lp = tape.add_const(shifted, -LN_2PI);

    let logits = tape.dense(
        hidden,
        node(&params, "actor.serve.w")?,
        Some(node(&params, "actor.serve.b")?),
    )?;
    let mask_leaf = tape.leaf(RealArray::new(vec![b, mask_len], mask)?);
    let masked = tape.add(logits, mask_leaf)?;
    let log_rows = tape.log_softmax_rows(masked)?;
    let cat_lp = tape.gather_rows(log_rows, serves)?;
    let new_lp = tape.add(cont_lp, cat_lp)?;

    let old_leaf = tape.leaf(RealArray::vector(old_lp));
    let diff_lp = tape.sub(new_lp, old_leaf)?;
    let ratio = tape.exp(diff_lp);
    let adv_leaf = tape.leaf(RealArray::vector(a));
    let surr_raw = tape.mul(ratio, adv_leaf)?;
    let clipped = tape.clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
    let surr_clip = tape.mul(clipped, adv_leaf)?;
    let surr = tape.min_elem(surr_raw, surr_clip)?;
    let mean_surr = tape.mean(surr);
    let actor_loss = tape.neg(mean_surr);

    let v_hidden = tape.dense(
        zb,
        node(&params, "critic.fc.w")?,
        Some(node(&params, "critic.fc.b")?),
    )?;
    let v_hidden = tape.leaky_relu(v_hidden, LEAKY_SLOPE);
    let v = tape.dense(
        v_hidden,
        node(&params, "critic.v.w")?,
        Some(node(&params, "critic.v.b")?),
    )?;
    let v = tape.reshape(v, vec![b])?;
    let ret_leaf = tape.leaf(RealArray::vector(r));
    let v_diff = tape.sub(v, ret_leaf)?;
    let v_sq = tape.mul(v_diff, v_diff)?;
    let critic_loss = tape.mean(v_sq);

    let probs = tape.exp(log_rows);
    let p_log_p = tape.mul(probs, log_rows)?;
    let row_ent = tape.row_sum(p_log_p)?;
    let mean_row_ent = tape.mean(row_ent);
    let cat_entropy = tape.neg(mean_row_ent);
    let gauss_entropy = tape.add_const(sum_ls, LN_2PI + 1.0);
    let entropy = tape.add(cat_entropy, gauss_entropy)?;

    let weighted_value = tape.scale(critic_loss, cfg.value_coeff);
    let weighted_entropy = tape.scale(entropy, -cfg.entropy_coeff);
    let partial = tape.add(actor_loss, weighted_value)?;
    let loss = tape.add(partial, weighted_entropy)?;

    let ratio_vals = tape.value(ratio).data();
    let lo = 1.0 - cfg.clip_epsilon;
    let hi = 1.0 + cfg.clip_epsilon;
    let step = StepStats {
        actor_loss: tape.value(actor_loss).item(),
        critic_loss: tape.value(critic_loss).item(),
        entropy: tape.value(entropy).item(),
        clip_fraction: ratio_vals.iter().filter(|&&x| x < lo || x > hi).count() as f64 / b as f64,
        mean_ratio: ratio_vals.iter().sum::<f64>() / b as f64,
    };

    let mut grads = tape.backward(loss)?;
    clip_global_norm(&mut grads, cfg.grad_clip);
    opt.step(store, &grads, cfg.learning_rate)?;
    Ok(step)
}

/// One synchronized round: every UAV pools experience from its neighborhood,
/// updates its own parameters on that pool, and the post-update snapshots
/// are neighborhood-averaged. Buffers are cleared afterwards so the next
/// round trains on fresh experience. A UAV whose pool came up empty skips
/// its update but still participates in averaging.
pub fn learner_round(
    stores: &mut [ParameterStore],
    opts: &mut [AdamState],
    buffers: &mut [ReplayBuffer],
    neighbors: &NeighborSet,
    cfg: &PpoConfig,
    move_scale: f64,
    rngs: &mut [ChaCha8Rng],
) -> Result<Vec<UpdateStats>> {
    let m = stores.len();
    if opts.len() != m || buffers.len() != m || rngs.len() != m || neighbors.len() != m {
        return Err(Error::contract(format!(
            "learner round over {m} stores, {} optimizers, {} buffers, {} rngs, {} neighbor lists",
            opts.len(),
            buffers.len(),
            rngs.len(),
            neighbors.len()
        )));
    }
    let snapshots: Vec<Vec<Transition>> = buffers.iter().map(|b| b.snapshot()).collect();
    let pools = union_buffers(&snapshots, neighbors);
    let mut stats = Vec::with_capacity(m);
    for i in 0..m {
        if pools[i].is_empty() {
            stats.push(UpdateStats::default());
            continue;
        }
        stats.push(ppo_update(
            &mut stores[i],
            &mut opts[i],
            &pools[i],
            cfg,
            move_scale,
            &mut rngs[i],
        )?);
    }
    let averaged = average_parameters(stores, neighbors)?;
    for (dst, src) in stores.iter_mut().zip(averaged) {
        *dst = src;
    }
    for b in buffers.iter_mut() {
        b.clear();
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_parameters, AdamParams};
    use crate::ppo::policy::{policy_forward, policy_param_spec, sample_action, value_forward};
    use crate::ppo::HybridAction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const Z: usize = 5;
    const HIDDEN: usize = 6;
    const SERVE: usize = 3;
    const SCALE: f64 = 1.0;

    fn test_cfg() -> PpoConfig {
        PpoConfig {
            epochs: 2,
            minibatch: 8,
            ..PpoConfig::default()
        }
    }

    fn test_store(seed: u64) -> ParameterStore {
        init_parameters(&policy_param_spec(Z, HIDDEN, SERVE), seed).unwrap()
    }

    fn random_pool(n: usize, seed: u64, source: usize) -> Vec<Transition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|k| Transition {
                z: (0..Z).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                action: HybridAction {
                    movement: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    serve: rng.gen_range(0..SERVE),
                },
                serve_mask: vec![true; SERVE],
                log_prob: rng.gen_range(-3.0..-0.5),
                reward: rng.gen_range(-2.0..2.0),
                value: rng.gen_range(-1.0..1.0),
                done: k == n - 1,
                source,
            })
            .collect()
    }

    fn rollout_pool(store: &ParameterStore, n: usize, seed: u64, source: usize) -> Vec<Transition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|k| {
                let zv: Vec<f64> = (0..Z).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mask = vec![true; SERVE];
                let mut tape = Tape::new();
                let params = register_store(&mut tape, store, false);
                let z = tape.leaf(RealArray::vector(zv.clone()));
                let heads = policy_forward(&mut tape, &params, z, &mask, SCALE).unwrap();
                let (action, log_prob) = sample_action(&tape, &heads, &mut rng);
                let v = value_forward(&mut tape, &params, z).unwrap();
                Transition {
                    z: zv,
                    action,
                    serve_mask: mask,
                    log_prob,
                    reward: rng.gen_range(-1.0..1.0),
                    value: tape.value(v).data()[0],
                    done: k == n - 1,
                    source,
                }
            })
            .collect()
    }

    fn stores_equal(a: &ParameterStore, b: &ParameterStore) -> bool {
        a.iter().zip(b.iter()).all(|((na, va), (nb, vb))| {
            na == nb
                && va
                    .data()
                    .iter()
                    .zip(vb.data())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
        })
    }

    #[test]
    fn segmented_advantages_match_per_source_recursions() {
        let mut pool = random_pool(5, 1, 0);
        pool.extend(random_pool(4, 2, 1));
        let (adv, ret) = pooled_advantages(&pool, 0.99, 0.95).unwrap();

        for (range, seed_pool) in [(0..5, random_pool(5, 1, 0)), (5..9, random_pool(4, 2, 1))] {
            let rewards: Vec<f64> = seed_pool.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = seed_pool.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = seed_pool.iter().map(|t| t.done).collect();
            let (ea, er) = compute_gae(&rewards, &values, &dones, 0.99, 0.95).unwrap();
            for (k, i) in range.enumerate() {
                assert_eq!(adv[i], ea[k]);
                assert_eq!(ret[i], er[k]);
            }
        }
    }

    #[test]
    fn normalization_yields_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut adv: Vec<f64> = (0..50).map(|_| rng.gen_range(-10.0..10.0)).collect();
        normalize_advantages(&mut adv);
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unchanged_parameters_give_unit_ratios() {
        let store = test_store(11);
        let pool = rollout_pool(&store, 8, 12, 0);
        let mut working = store.clone();
        let mut opt = AdamState::new(AdamParams::default());
        let cfg = PpoConfig {
            epochs: 1,
            minibatch: 8,
            ..PpoConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let stats = ppo_update(&mut working, &mut opt, &pool, &cfg, SCALE, &mut rng).unwrap();
        assert_eq!(stats.steps, 1);
        assert!((stats.mean_ratio - 1.0).abs() < 1e-9, "{}", stats.mean_ratio);
        assert_eq!(stats.clip_fraction, 0.0);
    }

    #[test]
    fn zero_advantages_and_no_entropy_leave_the_actor_untouched() {
        let store = test_store(21);
        let mut pool = random_pool(8, 22, 0);
        // Dyadic values and a power-of-two discount keep the one-step TD
        // residuals exactly zero in floating point; Adam would otherwise
        // blow rounding dust up to visible steps.
        let gamma = 0.5;
        let mut dyadic = ChaCha8Rng::seed_from_u64(24);
        for t in pool.iter_mut() {
            t.value = dyadic.gen_range(-16..16) as f64 * 0.125;
        }
        for k in 0..pool.len() {
            let next = if k + 1 < pool.len() && !pool[k].done {
                pool[k + 1].value
            } else {
                0.0
            };
            pool[k].reward = pool[k].value - gamma * next;
        }
        let mut working = store.clone();
        let mut opt = AdamState::new(AdamParams::default());
        let cfg = PpoConfig {
            entropy_coeff: 0.0,
            gamma,
            ..test_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        ppo_update(&mut working, &mut opt, &pool, &cfg, SCALE, &mut rng).unwrap();
        for name in ["actor.fc.w", "actor.mu.w", "actor.serve.w", "actor.log_std"] {
            let before = store.get(name).unwrap().data();
            let after = working.get(name).unwrap().data();
            assert_eq!(before, after, "{name} moved");
        }
        let v_before = store.get("critic.v.w").unwrap().data();
        let v_after = working.get("critic.v.w").unwrap().data();
        assert_ne!(v_before, v_after);
    }

    #[test]
    fn clipped_surrogate_value_and_dead_gradient_on_scalar_probes() {
        // Positive advantage, ratio beyond the upper clip.
        let mut tape = Tape::new();
        let rho = tape.param("rho", RealArray::scalar(1.5));
        let adv = tape.leaf(RealArray::scalar(1.0));
        let s1 = tape.mul(rho, adv).unwrap();
        let c = tape.clamp(rho, 0.8, 1.2);
        let s2 = tape.mul(c, adv).unwrap();
        let surr = tape.min_elem(s1, s2).unwrap();
        assert!((tape.value(surr).item() - 1.2).abs() < 1e-12);
        let grads = tape.backward(surr).unwrap();
        assert_eq!(grads["rho"].item(), 0.0);

        // Negative advantage, ratio below the lower clip.
        let mut tape = Tape::new();
        let rho = tape.param("rho", RealArray::scalar(0.5));
        let adv = tape.leaf(RealArray::scalar(-1.0));
        let s1 = tape.mul(rho, adv).unwrap();
        let c = tape.clamp(rho, 0.8, 1.2);
        let s2 = tape.mul(c, adv).unwrap();
        let surr = tape.min_elem(s1, s2).unwrap();
        assert!((tape.value(surr).item() + 0.8).abs() < 1e-12);
        let grads = tape.backward(surr).unwrap();
        assert_eq!(grads["rho"].item(), 0.0);

        // Interior ratio keeps the vanilla gradient.
        let mut tape = Tape::new();
        let rho = tape.param("rho", RealArray::scalar(1.1));
        let adv = tape.leaf(RealArray::scalar(1.0));
        let s1 = tape.mul(rho, adv).unwrap();
        let c = tape.clamp(rho, 0.8, 1.2);
        let s2 = tape.mul(c, adv).unwrap();
        let surr = tape.min_elem(s1, s2).unwrap();
        let grads = tape.backward(surr).unwrap();
        assert!((grads["rho"].item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_pool_is_a_contract_error() {
        let mut store = test_store(31);
        let mut opt = AdamState::new(AdamParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let r = ppo_update(&mut store, &mut opt, &[], &test_cfg(), SCALE, &mut rng);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn single_uav_round_reduces_to_a_plain_update() {
        let store = test_store(41);
        let pool = rollout_pool(&store, 10, 42, 0);

        let mut direct = store.clone();
        let mut direct_opt = AdamState::new(AdamParams::default());
        let mut direct_rng = ChaCha8Rng::seed_from_u64(43);
        ppo_update(
            &mut direct,
            &mut direct_opt,
            &pool,
            &test_cfg(),
            SCALE,
            &mut direct_rng,
        )
        .unwrap();

        let mut stores = vec![store];
        let mut opts = vec![AdamState::new(AdamParams::default())];
        let mut buffers = vec![ReplayBuffer::new(64)];
        for t in &pool {
            buffers[0].push(t.clone());
        }
        let mut rngs = vec![ChaCha8Rng::seed_from_u64(43)];
        let n = NeighborSet::isolated(1);
        learner_round(
            &mut stores,
            &mut opts,
            &mut buffers,
            &n,
            &test_cfg(),
            SCALE,
            &mut rngs,
        )
        .unwrap();
        assert!(stores_equal(&stores[0], &direct));
        assert!(buffers[0].is_empty());
    }

    #[test]
    fn complete_graph_with_shared_seeds_stays_synchronized() {
        let base = test_store(51);
        let mut stores = vec![base.clone(), base];
        let mut opts = vec![
            AdamState::new(AdamParams::default()),
            AdamState::new(AdamParams::default()),
        ];
        let mut buffers = vec![ReplayBuffer::new(64), ReplayBuffer::new(64)];
        for t in random_pool(6, 52, 0) {
            buffers[0].push(t);
        }
        for t in random_pool(6, 53, 1) {
            buffers[1].push(t);
        }
        let mut rngs = vec![ChaCha8Rng::seed_from_u64(54), ChaCha8Rng::seed_from_u64(54)];
        let n = NeighborSet::from_lists(vec![vec![0, 1], vec![1, 0]]).unwrap();
        learner_round(
            &mut stores,
            &mut opts,
            &mut buffers,
            &n,
            &test_cfg(),
            SCALE,
            &mut rngs,
        )
        .unwrap();
        let (a, b) = stores.split_at(1);
        assert!(stores_equal(&a[0], &b[0]));
    }

    #[test]
    fn disconnected_uavs_evolve_independently() {
        let s0 = test_store(61);
        let s1 = test_store(62);
        let pool0 = rollout_pool(&s0, 9, 63, 0);
        let pool1 = rollout_pool(&s1, 7, 64, 1);

        let mut d0 = s0.clone();
        let mut d1 = s1.clone();
        let mut o = AdamState::new(AdamParams::default());
        let mut r = ChaCha8Rng::seed_from_u64(65);
        ppo_update(&mut d0, &mut o, &pool0, &test_cfg(), SCALE, &mut r).unwrap();
        let mut o = AdamState::new(AdamParams::default());
        let mut r = ChaCha8Rng::seed_from_u64(66);
        ppo_update(&mut d1, &mut o, &pool1, &test_cfg(), SCALE, &mut r).unwrap();

        let mut stores = vec![s0, s1];
        let mut opts = vec![
            AdamState::new(AdamParams::default()),
            AdamState::new(AdamParams::default()),
        ];
        let mut buffers = vec![ReplayBuffer::new(64), ReplayBuffer::new(64)];
        for t in pool0 {
            buffers[0].push(t);
        }
        for t in pool1 {
            buffers[1].push(t);
        }
        let mut rngs = vec![ChaCha8Rng::seed_from_u64(65), ChaCha8Rng::seed_from_u64(66)];
        learner_round(
            &mut stores,
            &mut opts,
            &mut buffers,
            &NeighborSet::isolated(2),
            &test_cfg(),
            SCALE,
            &mut rngs,
        )
        .unwrap();
        assert!(stores_equal(&stores[0], &d0));
        assert!(stores_equal(&stores[1], &d1));
    }

    #[test]
    fn empty_buffers_skip_the_update_but_keep_the_store() {
        let store = test_store(71);
        let mut stores = vec![store.clone()];
        let mut opts = vec![AdamState::new(AdamParams::default())];
        let mut buffers = vec![ReplayBuffer::new(8)];
        let mut rngs = vec![ChaCha8Rng::seed_from_u64(72)];
        let stats = learner_round(
            &mut stores,
            &mut opts,
            &mut buffers,
            &NeighborSet::isolated(1),
            &test_cfg(),
            SCALE,
            &mut rngs,
        )
        .unwrap();
        assert_eq!(stats[0].steps, 0);
        assert!(stores_equal(&stores[0], &store));
    }
}
