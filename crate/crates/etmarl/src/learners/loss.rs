//! Loss construction on the tape: joint action/trigger log-probabilities,
//! entropies, the clipped PPO surrogate, and the A2C score-function loss.
//!
//! The joint log-probability treats trigger and action as a factored joint
//! action: log π(T|·) plus, on event steps only, log π(u|·) — on hold
//! steps no action was sampled, so the action head earns no credit. The
//! time-triggered variant bypasses the trigger head entirely, which makes
//! the whole pipeline collapse to the vanilla algorithm.

use crate::error::{Error, Result};
use crate::numerics::{NodeId, Tape, Tensor};

/// Joint log-probability node plus entropy nodes for one batch.
pub struct JointLogp {
    /// [B × 1] joint log-probability of the sampled (action, trigger) pair.
    pub node: NodeId,
    /// Scalar mean action entropy over event rows (0 when no events).
    pub action_entropy: NodeId,
    /// Scalar mean trigger entropy; `None` when the trigger head is bypassed.
    pub trigger_entropy: Option<NodeId>,
}

/// Build the joint log-probability and entropies from head logits.
///
/// `include_trigger = false` (the tt variant) drops every trigger term so
/// the result is exactly the vanilla single-head quantity.
pub fn joint_logp_and_entropy(
    tape: &mut Tape,
    action_logits: NodeId,
    trigger_logits: NodeId,
    actions: &[usize],
    triggers: &[u8],
    events: &[bool],
    include_trigger: bool,
) -> JointLogp {
    let n = actions.len();
    assert_eq!(tape.value(action_logits).rows(), n);
    let action_count = tape.value(action_logits).cols();

    let logp_all = tape.log_softmax_rows(action_logits);
    let logp_taken = tape.gather_cols(logp_all, actions.to_vec());
    let mask_col = Tensor::from_vec(n, 1, events.iter().map(|&e| f64::from(u8::from(e))).collect());
    let n_events = events.iter().filter(|&&e| e).count();
    let mask_node = tape.constant(mask_col);
    let masked_logp_action = tape.mul(logp_taken, mask_node);

    // Mean action entropy over event rows: −Σ p·logp restricted to events.
    let probs = tape.softmax_rows(action_logits);
    let plogp = tape.mul(probs, logp_all);
    let action_entropy = if n_events == 0 {
        tape.constant(Tensor::scalar(0.0))
    } else {
        let mut wide = Tensor::zeros(n, action_count);
        for (r, &e) in events.iter().enumerate() {
            if e {
                for c in 0..action_count {
                    wide.set(r, c, 1.0);
                }
            }
        }
        let wide = tape.constant(wide);
        let masked = tape.mul(plogp, wide);
        let total = tape.sum_all(masked);
        let neg = tape.neg(total);
        tape.mul_scalar(neg, 1.0 / n_events as f64)
    };

    if !include_trigger {
        return JointLogp { node: masked_logp_action, action_entropy, trigger_entropy: None };
    }

    // log p(T=1) = −softplus(−l); log p(T=0) = −softplus(l).
    let neg_logits = tape.neg(trigger_logits);
    let sp_neg = tape.softplus(neg_logits);
    let sp_pos = tape.softplus(trigger_logits);
    let t_col = Tensor::from_vec(n, 1, triggers.iter().map(|&t| f64::from(t)).collect());
    let t_node = tape.constant(t_col);
    let neg_t = tape.neg(t_node);
    let one_minus_t = tape.add_scalar(neg_t, 1.0);
    let fired = tape.mul(t_node, sp_neg);
    let held = tape.mul(one_minus_t, sp_pos);
    let nll = tape.add(fired, held);
    let logp_trigger = tape.neg(nll);
    let joint = tape.add(masked_logp_action, logp_trigger);

    // Bernoulli entropy: p·softplus(−l) + (1−p)·softplus(l), mean over rows.
    let p = tape.sigmoid(trigger_logits);
    let neg_p = tape.neg(p);
    let one_minus_p = tape.add_scalar(neg_p, 1.0);
    let h1 = tape.mul(p, sp_neg);
    let h2 = tape.mul(one_minus_p, sp_pos);
    let h = tape.add(h1, h2);
    let trigger_entropy = tape.mean_all(h);

    JointLogp { node: joint, action_entropy, trigger_entropy: Some(trigger_entropy) }
}

/// Scalar diagnostics of one loss evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub mean_ratio: f64,
}

/// Policy-side and value-side loss nodes (they live on separate tapes
/// because policy and critic own separate parameter stores).
pub struct PpoTerms {
    pub policy_loss: NodeId,
    pub value_loss: NodeId,
    pub stats: LossStats,
}

/// Clipped-surrogate PPO loss with entropy bonus and value regression.
///
/// policy side: −mean(min(ρA, clip(ρ, 1−ε, 1+ε)·A)) − entropy_coef·H
/// value side:  value_coef·mean((V − target)²)
///
/// Advantages must already be normalized per update batch. The trigger
/// penalty enters through the shaped rewards behind `advantages`, not here.
#[allow(clippy::too_many_arguments)]
pub fn ppo_loss(
    policy_tape: &mut Tape,
    joint: &JointLogp,
    old_logp: &[f64],
    advantages: &[f64],
    clip: f64,
    entropy_coef: f64,
    critic_tape: &mut Tape,
    values: NodeId,
    value_targets: &[f64],
    value_coef: f64,
) -> Result<PpoTerms> {
    let n = old_logp.len();
    assert_eq!(advantages.len(), n);
    let old = policy_tape.constant(Tensor::from_vec(n, 1, old_logp.to_vec()));
    let diff = policy_tape.sub(joint.node, old);
    let ratio = policy_tape.exp(diff);
    if let Some(bad) = policy_tape
        .value(ratio)
        .data()
        .iter()
        .position(|v| !v.is_finite())
    {
        return Err(Error::Numeric(format!(
            "non-finite PPO ratio at batch step {bad} (new logp {}, old logp {})",
            policy_tape.value(joint.node).data()[bad],
            old_logp[bad]
        )));
    }
    let adv = policy_tape.constant(Tensor::from_vec(n, 1, advantages.to_vec()));
    let surr_unclipped = policy_tape.mul(ratio, adv);
    let ratio_clipped = policy_tape.clamp(ratio, 1.0 - clip, 1.0 + clip);
    let surr_clipped = policy_tape.mul(ratio_clipped, adv);
    let surrogate = policy_tape.minimum(surr_unclipped, surr_clipped);
    let surrogate_mean = policy_tape.mean_all(surrogate);

    let entropy_total = match joint.trigger_entropy {
        Some(te) => policy_tape.add(joint.action_entropy, te),
        None => joint.action_entropy,
    };
    let neg_surr = policy_tape.neg(surrogate_mean);
    let ent_term = policy_tape.mul_scalar(entropy_total, entropy_coef);
    let policy_loss = policy_tape.sub(neg_surr, ent_term);

    let value_loss = value_loss(critic_tape, values, value_targets, value_coef);

    let ratios = policy_tape.value(ratio).data();
    let clip_frac =
        ratios.iter().filter(|r| (*r - 1.0).abs() > clip).count() as f64 / n as f64;
    let mean_ratio = ratios.iter().sum::<f64>() / n as f64;
    let stats = LossStats {
        policy_loss: policy_tape.value(policy_loss).item(),
        value_loss: critic_tape.value(value_loss).item(),
        entropy: policy_tape.value(entropy_total).item(),
        clip_frac,
        mean_ratio,
    };
    if !stats.policy_loss.is_finite() || !stats.value_loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite PPO loss (policy {}, value {})",
            stats.policy_loss, stats.value_loss
        )));
    }
    Ok(PpoTerms { policy_loss, value_loss, stats })
}

/// A2C score-function loss: −mean(logπ_joint·A) − entropy_coef·H plus the
/// value regression term. Advantages are constants; no gradient flows
/// through them.
#[allow(clippy::too_many_arguments)]
pub fn a2c_loss(
    policy_tape: &mut Tape,
    joint: &JointLogp,
    advantages: &[f64],
    entropy_coef: f64,
    critic_tape: &mut Tape,
    values: NodeId,
    value_targets: &[f64],
    value_coef: f64,
) -> Result<PpoTerms> {
    let n = advantages.len();
    let adv = policy_tape.constant(Tensor::from_vec(n, 1, advantages.to_vec()));
    let weighted = policy_tape.mul(joint.node, adv);
    let mean = policy_tape.mean_all(weighted);
    let entropy_total = match joint.trigger_entropy {
        Some(te) => policy_tape.add(joint.action_entropy, te),
        None => joint.action_entropy,
    };
    let neg = policy_tape.neg(mean);
    let ent_term = policy_tape.mul_scalar(entropy_total, entropy_coef);
    let policy_loss = policy_tape.sub(neg, ent_term);

    let value_loss = value_loss(critic_tape, values, value_targets, value_coef);

    let stats = LossStats {
        policy_loss: policy_tape.value(policy_loss).item(),
        value_loss: critic_tape.value(value_loss).item(),
        entropy: policy_tape.value(entropy_total).item(),
        clip_frac: 0.0,
        mean_ratio: 1.0,
    };
    if !stats.policy_loss.is_finite() || !stats.value_loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite A2C loss (policy {}, value {})",
            stats.policy_loss, stats.value_loss
        )));
    }
    Ok(PpoTerms { policy_loss, value_loss, stats })
}

/// value_coef · mean((V − target)²) on the critic tape.
pub fn value_loss(tape: &mut Tape, values: NodeId, targets: &[f64], value_coef: f64) -> NodeId {
    let t = tape.constant(Tensor::from_vec(targets.len(), 1, targets.to_vec()));
    let diff = tape.sub(values, t);
    let sq = tape.square(diff);
    let mse = tape.mean_all(sq);
    tape.mul_scalar(mse, value_coef)
}

/// Normalize advantages to mean 0, std 1 (guarding std ≥ 1e-8).
pub fn normalize_advantages(advantages: &[f64]) -> Vec<f64> {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    advantages.iter().map(|a| (a - mean) / std).collect()
}
