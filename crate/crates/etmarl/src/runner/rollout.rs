//! Rollout collection: binds environments, event schedules, message
//! passing, and policies into per-agent buffers for one update window.
//!
//! Message timing under the attention variant: an agent that triggers at
//! step k broadcasts its embedded observation after acting; the message is
//! delivered for every agent's step k+1 decision. Receivers hold the most
//! recent message from each sender for the rest of the episode, mirroring
//! the action-hold semantics. At the first step of an episode no message
//! has arrived yet and the context is zero.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::envs::Environment;
use crate::error::Result;
use crate::learners::{shape_rewards, AgentLearner, Algo, RolloutBuffer, TrainConfig};
use crate::policy::{
    assemble_features, bernoulli_logp, sample_categorical, Variant,
};
use crate::trigger::EventSchedule;

/// One parallel episode stream and its bookkeeping.
pub struct SlotState {
    pub env: Box<dyn Environment>,
    pub sched: EventSchedule,
    held_msgs: Vec<Option<Vec<f64>>>,
    pending_msgs: Vec<Option<Vec<f64>>>,
    obs: Vec<Vec<f64>>,
    states: Vec<Vec<f64>>,
    step_in_ep: usize,
    ep_returns: Vec<f64>,
    sample_rng: ChaCha8Rng,
}

impl SlotState {
    pub fn new(mut env: Box<dyn Environment>, sample_rng: ChaCha8Rng) -> Self {
        let n = env.agent_count();
        let (obs, states) = env.reset();
        SlotState {
            sched: EventSchedule::new(n),
            held_msgs: vec![None; n],
            pending_msgs: vec![None; n],
            obs,
            states,
            step_in_ep: 0,
            ep_returns: vec![0.0; n],
            sample_rng,
            env,
        }
    }

    fn begin_episode(&mut self) {
        let (obs, states) = self.env.reset();
        self.obs = obs;
        self.states = states;
        self.sched.reset();
        self.held_msgs.iter_mut().for_each(|m| *m = None);
        self.pending_msgs.iter_mut().for_each(|m| *m = None);
        self.step_in_ep = 0;
        self.ep_returns.iter_mut().for_each(|r| *r = 0.0);
    }

    /// Messages currently visible, ordered by sender id.
    fn message_set(&self) -> Vec<Vec<f64>> {
        self.held_msgs.iter().flatten().cloned().collect()
    }
}

/// Episodes finished during a collection window.
#[derive(Debug, Clone, Default)]
pub struct CompletedEpisodes {
    /// Raw (unshaped) episode return per agent, one entry per episode.
    pub per_agent: Vec<Vec<f64>>,
    /// Mean over agents per episode.
    pub team: Vec<f64>,
}

pub struct CollectOutput {
    pub buffers: Vec<RolloutBuffer>,
    pub completed: CompletedEpisodes,
}

/// Collect `cfg.horizon` steps from every slot into per-agent buffers.
pub fn collect(
    slots: &mut [SlotState],
    agents: &[AgentLearner],
    cfg: &TrainConfig,
    algo: Algo,
    variant: Variant,
    psi: f64,
) -> Result<CollectOutput> {
    let n_agents = agents.len();
    let mut buffers: Vec<RolloutBuffer> = (0..n_agents)
        .map(|_| RolloutBuffer::new(slots.len(), cfg.horizon))
        .collect();
    let mut completed = CompletedEpisodes { per_agent: vec![Vec::new(); n_agents], team: Vec::new() };

    for slot in slots.iter_mut() {
        let scale = slot.env.obs_scale();
        for _ in 0..cfg.horizon {
            // Decision phase: features, logits, trigger, effective action.
            let mut joint_actions = vec![0usize; n_agents];
            let global_state: Vec<f64> = if algo.uses_global_critic() {
                slot.obs
                    .iter()
                    .flat_map(|o| o.iter().map(|v| v * scale))
                    .collect()
            } else {
                Vec::new()
            };
            for (i, agent) in agents.iter().enumerate() {
                let obs_scaled: Vec<f64> = slot.obs[i].iter().map(|v| v * scale).collect();
                let err_scaled: Vec<f64> = if slot.sched.has_event(i) {
                    slot.sched
                        .error_signal(i, &slot.states[i])?
                        .iter()
                        .map(|v| v * scale)
                        .collect()
                } else {
                    vec![0.0; slot.env.state_dim()]
                };
                let held = slot.sched.has_event(i).then(|| slot.sched.held_action(i));
                let features =
                    assemble_features(&obs_scaled, &err_scaled, held, slot.env.action_count());
                let message_set = variant.uses_attention().then(|| slot.message_set());
                let context = match &message_set {
                    Some(msgs) => Some(agent.policy.aggregate_values(&obs_scaled, msgs)?),
                    None => None,
                };
                let (action_logits, trigger_logit) =
                    agent.policy.forward_values(&features, context.as_deref())?;

                let (trigger, logp_trigger) = if variant == Variant::Tt {
                    (1u8, 0.0)
                } else {
                    let p = crate::numerics::sigmoid(trigger_logit);
                    let t = u8::from(slot.sample_rng.random::<f64>() < p);
                    (t, bernoulli_logp(trigger_logit, t))
                };
                let event = trigger == 1 || slot.step_in_ep == 0;
                let (fresh_action, logp_action) = if event {
                    sample_categorical(&action_logits, &mut slot.sample_rng)
                } else {
                    (slot.sched.held_action(i), 0.0)
                };
                let effective = slot.sched.apply_trigger(
                    i,
                    slot.step_in_ep,
                    trigger,
                    fresh_action,
                    &slot.states[i],
                )?;
                joint_actions[i] = effective;

                let value = match agents[i].critic.mode {
                    crate::learners::CriticInput::Local => agents[i].critic.value(&features)?,
                    crate::learners::CriticInput::Global => agents[i].critic.value(&global_state)?,
                };

                let buf = &mut buffers[i];
                buf.features.push(features);
                if variant.uses_attention() {
                    buf.query_obs.push(obs_scaled.clone());
                    buf.message_sets.push(message_set.unwrap_or_default());
                }
                if algo.uses_global_critic() {
                    buf.global_states.push(global_state.clone());
                }
                buf.actions.push(effective);
                buf.triggers.push(trigger);
                buf.events.push(event);
                buf.logp_action.push(logp_action);
                buf.logp_trigger.push(logp_trigger);
                buf.values.push(value);

                if event && variant.uses_attention() {
                    let msg = agent.policy.embed_message(&obs_scaled, slot.step_in_ep, i)?;
                    slot.pending_msgs[i] = Some(msg.embedding);
                }
            }

            // Transition phase.
            let result = slot.env.step(&joint_actions)?;
            for i in 0..n_agents {
                buffers[i].rewards.push(result.rewards[i]);
                buffers[i].dones.push(result.done);
                slot.ep_returns[i] += result.rewards[i];
            }
            // Deliver broadcasts for the next decision.
            for i in 0..n_agents {
                if let Some(m) = slot.pending_msgs[i].take() {
                    slot.held_msgs[i] = Some(m);
                }
            }
            if result.done {
                for i in 0..n_agents {
                    completed.per_agent[i].push(slot.ep_returns[i]);
                }
                completed
                    .team
                    .push(slot.ep_returns.iter().sum::<f64>() / n_agents as f64);
                slot.begin_episode();
            } else {
                slot.obs = result.observations;
                slot.states = result.states;
                slot.step_in_ep += 1;
            }
        }

        // Bootstrap values for the state each slot stopped in.
        let global_state: Vec<f64> = if algo.uses_global_critic() {
            slot.obs
                .iter()
                .flat_map(|o| o.iter().map(|v| v * scale))
                .collect()
        } else {
            Vec::new()
        };
        for (i, agent) in agents.iter().enumerate() {
            let obs_scaled: Vec<f64> = slot.obs[i].iter().map(|v| v * scale).collect();
            let err_scaled: Vec<f64> = if slot.sched.has_event(i) {
                slot.sched
                    .error_signal(i, &slot.states[i])?
                    .iter()
                    .map(|v| v * scale)
                    .collect()
            } else {
                vec![0.0; slot.env.state_dim()]
            };
            let held = slot.sched.has_event(i).then(|| slot.sched.held_action(i));
            let features = assemble_features(&obs_scaled, &err_scaled, held, slot.env.action_count());
            let value = match agent.critic.mode {
                crate::learners::CriticInput::Local => agent.critic.value(&features)?,
                crate::learners::CriticInput::Global => agent.critic.value(&global_state)?,
            };
            buffers[i].bootstrap.push(value);
        }
    }

    let shaped_psi = if variant == Variant::Tt { 0.0 } else { psi };
    for buf in &mut buffers {
        shape_rewards(buf, shaped_psi);
    }
    Ok(CollectOutput { buffers, completed })
}
