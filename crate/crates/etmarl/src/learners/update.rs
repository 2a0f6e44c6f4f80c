//! The optimization step binding buffers, losses, and optimizers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::advantage::{a2c_advantage, td_lambda_advantage};
use super::buffer::RolloutBuffer;
use super::critic::Critic;
use super::loss::{a2c_loss, joint_logp_and_entropy, normalize_advantages, ppo_loss, LossStats};
use super::{Algo, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::{Adam, NodeId, Tape, Tensor};
use crate::policy::{DualHeadPolicy, Variant};

/// One agent's learnable state: policy, critic, and their optimizers.
pub struct AgentLearner {
    pub policy: DualHeadPolicy,
    pub critic: Critic,
    pub policy_opt: Adam,
    pub critic_opt: Adam,
}

impl AgentLearner {
    pub fn new(policy: DualHeadPolicy, critic: Critic, lr: f64) -> Self {
        let policy_opt = Adam::new(lr, &policy.params);
        let critic_opt = Adam::new(lr, &critic.params);
        AgentLearner { policy, critic, policy_opt, critic_opt }
    }
}

/// Mean loss statistics for one agent over all minibatches of an update.
#[derive(Debug, Clone, Copy, Default)]
pub struct AgentUpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub mean_ratio: f64,
    pub trigger_rate: f64,
}

#[derive(Debug, Clone, Default)]
pub struct UpdateDiagnostics {
    pub per_agent: Vec<AgentUpdateStats>,
}

/// Run one optimization step for every agent from its rollout buffer.
///
/// IPPO: clipped PPO, local-feature critics. MAPPO: clipped PPO, critics
/// consume the global state. IA2C: one full-batch score-function epoch.
pub fn update(
    agents: &mut [AgentLearner],
    buffers: &[RolloutBuffer],
    cfg: &TrainConfig,
    algo: Algo,
    variant: Variant,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateDiagnostics> {
    assert_eq!(agents.len(), buffers.len(), "one buffer per agent");
    let mut diag = UpdateDiagnostics::default();
    for (idx, (agent, buffer)) in agents.iter_mut().zip(buffers).enumerate() {
        let stats = update_agent(agent, buffer, cfg, algo, variant, rng)
            .map_err(|e| Error::Numeric(format!("agent {idx}: {e}")))?;
        diag.per_agent.push(stats);
    }
    Ok(diag)
}

fn update_agent(
    agent: &mut AgentLearner,
    buffer: &RolloutBuffer,
    cfg: &TrainConfig,
    algo: Algo,
    variant: Variant,
    rng: &mut ChaCha8Rng,
) -> Result<AgentUpdateStats> {
    if buffer.is_empty() {
        return Err(Error::Contract("update called with an empty buffer".into()));
    }
    let estimate = match algo {
        Algo::Ippo | Algo::Mappo => td_lambda_advantage(buffer, cfg.gamma, cfg.lambda),
        Algo::Ia2c => a2c_advantage(buffer, cfg.gamma),
    };
    // Value targets keep the raw advantage scale; normalization (PPO only)
    // feeds the surrogate.
    let targets = &estimate.returns;
    let include_trigger = variant != Variant::Tt;
    let old_logp: Vec<f64> = (0..buffer.len())
        .map(|i| {
            let action_part = if buffer.events[i] { buffer.logp_action[i] } else { 0.0 };
            if include_trigger {
                action_part + buffer.logp_trigger[i]
            } else {
                action_part
            }
        })
        .collect();

    let mut acc = Vec::new();
    match algo {
        Algo::Ippo | Algo::Mappo => {
            let normalized = normalize_advantages(&estimate.advantages);
            let mut indices: Vec<usize> = (0..buffer.len()).collect();
            for _ in 0..cfg.epochs {
                shuffle(&mut indices, rng);
                for chunk in indices.chunks(cfg.minibatch) {
                    let stats = minibatch_step(
                        agent,
                        buffer,
                        chunk,
                        &normalized,
                        targets,
                        &old_logp,
                        cfg,
                        algo,
                        variant,
                        true,
                    )?;
                    acc.push(stats);
                }
            }
        }
        Algo::Ia2c => {
            let indices: Vec<usize> = (0..buffer.len()).collect();
            let stats = minibatch_step(
                agent,
                buffer,
                &indices,
                &estimate.advantages,
                targets,
                &old_logp,
                cfg,
                algo,
                variant,
                false,
            )?;
            acc.push(stats);
        }
    }

    let n = acc.len() as f64;
    let mut mean = AgentUpdateStats { trigger_rate: buffer.trigger_rate(), ..Default::default() };
    for s in &acc {
        mean.policy_loss += s.policy_loss / n;
        mean.value_loss += s.value_loss / n;
        mean.entropy += s.entropy / n;
        mean.clip_frac += s.clip_frac / n;
        mean.mean_ratio += s.mean_ratio / n;
    }
    Ok(mean)
}

#[allow(clippy::too_many_arguments)]
fn minibatch_step(
    agent: &mut AgentLearner,
    buffer: &RolloutBuffer,
    rows: &[usize],
    advantages: &[f64],
    targets: &[f64],
    old_logp: &[f64],
    cfg: &TrainConfig,
    algo: Algo,
    variant: Variant,
    clipped: bool,
) -> Result<LossStats> {
    let mut ptape = Tape::new();
    let mut ctape = Tape::new();

    let features = gather_rows(&buffer.features, rows);
    let feat_node = ptape.constant(features);
    let context = if variant.uses_attention() {
        Some(batched_context(&mut ptape, agent, buffer, rows)?)
    } else {
        None
    };
    let (action_logits, trigger_logits) = agent.policy.forward(&mut ptape, feat_node, context)?;

    let actions: Vec<usize> = rows.iter().map(|&i| buffer.actions[i]).collect();
    let triggers: Vec<u8> = rows.iter().map(|&i| buffer.triggers[i]).collect();
    let events: Vec<bool> = rows.iter().map(|&i| buffer.events[i]).collect();
    let include_trigger = variant != Variant::Tt;
    let joint = joint_logp_and_entropy(
        &mut ptape,
        action_logits,
        trigger_logits,
        &actions,
        &triggers,
        &events,
        include_trigger,
    );

    let critic_rows = match agent.critic.mode {
        super::critic::CriticInput::Local => gather_rows(&buffer.features, rows),
        super::critic::CriticInput::Global => gather_rows(&buffer.global_states, rows),
    };
    let critic_input = ctape.constant(critic_rows);
    let values = agent.critic.forward(&mut ctape, critic_input)?;

    let adv: Vec<f64> = rows.iter().map(|&i| advantages[i]).collect();
    let tgt: Vec<f64> = rows.iter().map(|&i| targets[i]).collect();
    let old: Vec<f64> = rows.iter().map(|&i| old_logp[i]).collect();

    let terms = if clipped {
        ppo_loss(
            &mut ptape,
            &joint,
            &old,
            &adv,
            cfg.clip,
            cfg.entropy_coef,
            &mut ctape,
            values,
            &tgt,
            cfg.value_coef,
        )?
    } else {
        a2c_loss(
            &mut ptape,
            &joint,
            &adv,
            cfg.entropy_coef,
            &mut ctape,
            values,
            &tgt,
            cfg.value_coef,
        )?
    };

    agent.policy.params.zero_grads();
    ptape.backward(terms.policy_loss, &mut agent.policy.params)?;
    agent.policy.params.clip_grad_norm(cfg.max_grad_norm);
    agent.policy_opt.step(&mut agent.policy.params);

    agent.critic.params.zero_grads();
    ctape.backward(terms.value_loss, &mut agent.critic.params)?;
    agent.critic.params.clip_grad_norm(cfg.max_grad_norm);
    agent.critic_opt.step(&mut agent.critic.params);

    let _ = algo;
    Ok(terms.stats)
}

/// Recompute per-row attention contexts on the tape and stack them.
/// Peer message embeddings are replay constants; the query path (own
/// observation embedding) and all attention projections stay differentiable.
fn batched_context(
    tape: &mut Tape,
    agent: &AgentLearner,
    buffer: &RolloutBuffer,
    rows: &[usize],
) -> Result<NodeId> {
    let mut per_row = Vec::with_capacity(rows.len());
    for &i in rows {
        let obs = tape.constant(Tensor::row(&buffer.query_obs[i]));
        let query = agent.policy.embed_on_tape(tape, obs)?;
        let ctx = agent.policy.aggregate_on_tape(tape, query, &buffer.message_sets[i])?;
        per_row.push(ctx);
    }
    Ok(tape.concat_rows(&per_row))
}

fn gather_rows(source: &[Vec<f64>], rows: &[usize]) -> Tensor {
    let cols = source[rows[0]].len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for &i in rows {
        data.extend_from_slice(&source[i]);
    }
    Tensor::from_vec(rows.len(), cols, data)
}

/// Fisher–Yates with the update's dedicated rng stream.
fn shuffle(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}
