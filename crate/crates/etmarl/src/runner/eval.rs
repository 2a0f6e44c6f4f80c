//! Deployment-mode evaluation: greedy action head, sampled trigger head,
//! no learning, local observations only. The centralized critic (when one
//! was trained) is never consulted, so decentralized execution holds by
//! construction.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::envs::{EnvKind, Environment};
use crate::error::Result;
use crate::metrics::lyapunov;
use crate::policy::{argmax_action, assemble_features, DualHeadPolicy, Variant};
use crate::trigger::EventSchedule;

/// One agent's traced step: (physical state, action, reward).
pub type TraceEntry = (Vec<f64>, usize, f64);

/// Everything measured over a batch of evaluation episodes.
#[derive(Debug, Clone, Default)]
pub struct EvalOutcome {
    pub episodes: usize,
    pub steps_per_episode: usize,
    /// `[agent][episode]` raw episode return.
    pub returns_per_agent: Vec<Vec<f64>>,
    /// `[episode]` mean over agents.
    pub team_returns: Vec<f64>,
    /// `[episode][agent][step]` trigger bits.
    pub trigger_bits: Vec<Vec<Vec<u8>>>,
    /// `[agent]` inter-event gaps pooled over episodes.
    pub inter_event: Vec<Vec<usize>>,
    /// `[episode][step]` joint quadratic Lyapunov value (integrator only).
    pub lyapunov: Vec<Vec<f64>>,
    /// `[episode]` mean |x| over agents at the final step (integrator only).
    pub final_abs_state: Vec<f64>,
    /// `[episode][step][agent]` entries, populated when tracing.
    pub trace: Vec<Vec<Vec<TraceEntry>>>,
}

impl EvalOutcome {
    pub fn trigger_rate_per_agent(&self) -> Vec<f64> {
        let n_agents = self.returns_per_agent.len();
        let mut rates = vec![0.0; n_agents];
        let mut steps = 0usize;
        for ep in &self.trigger_bits {
            steps += ep[0].len();
            for (i, bits) in ep.iter().enumerate() {
                rates[i] += bits.iter().map(|&b| f64::from(b)).sum::<f64>();
            }
        }
        if steps > 0 {
            for r in &mut rates {
                *r /= steps as f64;
            }
        }
        rates
    }

    pub fn pooled_trigger_rate(&self) -> f64 {
        let rates = self.trigger_rate_per_agent();
        if rates.is_empty() {
            0.0
        } else {
            rates.iter().sum::<f64>() / rates.len() as f64
        }
    }

    pub fn mean_team_return(&self) -> f64 {
        if self.team_returns.is_empty() {
            0.0
        } else {
            self.team_returns.iter().sum::<f64>() / self.team_returns.len() as f64
        }
    }
}

/// Run `episodes` greedy-action episodes with the given policies.
pub fn evaluate(
    policies: &[&DualHeadPolicy],
    env: &mut dyn Environment,
    episodes: usize,
    variant: Variant,
    trigger_rng: &mut ChaCha8Rng,
    keep_trace: bool,
) -> Result<EvalOutcome> {
    let n_agents = policies.len();
    let mut outcome = EvalOutcome {
        steps_per_episode: env.episode_len(),
        returns_per_agent: vec![Vec::new(); n_agents],
        inter_event: vec![Vec::new(); n_agents],
        ..EvalOutcome::default()
    };
    if episodes == 0 {
        return Ok(outcome);
    }
    let scale = env.obs_scale();
    let is_integrator = env.kind() == EnvKind::Integrator;

    for _ep in 0..episodes {
        let (mut obs, mut states) = env.reset();
        let mut sched = EventSchedule::new(n_agents);
        let mut held_msgs: Vec<Option<Vec<f64>>> = vec![None; n_agents];
        let mut pending: Vec<Option<Vec<f64>>> = vec![None; n_agents];
        let mut bits: Vec<Vec<u8>> = vec![Vec::new(); n_agents];
        let mut returns = vec![0.0; n_agents];
        let mut v_series = Vec::new();
        let mut trace_ep = Vec::new();
        let mut step = 0usize;
        loop {
            if is_integrator {
                let joint: Vec<f64> = states.iter().map(|s| s[0]).collect();
                v_series.push(lyapunov(&joint));
            }
            let mut joint_actions = vec![0usize; n_agents];
            let message_set: Vec<Vec<f64>> = held_msgs.iter().flatten().cloned().collect();
            for (i, policy) in policies.iter().enumerate() {
                let obs_scaled: Vec<f64> = obs[i].iter().map(|v| v * scale).collect();
                let err_scaled: Vec<f64> = if sched.has_event(i) {
                    sched.error_signal(i, &states[i])?.iter().map(|v| v * scale).collect()
                } else {
                    vec![0.0; env.state_dim()]
                };
                let held = sched.has_event(i).then(|| sched.held_action(i));
                let features = assemble_features(&obs_scaled, &err_scaled, held, env.action_count());
                let context = if variant.uses_attention() {
                    Some(policy.aggregate_values(&obs_scaled, &message_set)?)
                } else {
                    None
                };
                let (action_logits, trigger_logit) =
                    policy.forward_values(&features, context.as_deref())?;
                let trigger = if variant == Variant::Tt {
                    1u8
                } else {
                    let p = crate::numerics::sigmoid(trigger_logit);
                    u8::from(trigger_rng.random::<f64>() < p)
                };
                let fresh = argmax_action(&action_logits);
                let effective = sched.apply_trigger(i, step, trigger, fresh, &states[i])?;
                joint_actions[i] = effective;
                bits[i].push(trigger);
                if (trigger == 1 || step == 0) && variant.uses_attention() {
                    pending[i] = Some(policy.embed_message(&obs_scaled, step, i)?.embedding);
                }
            }
            let result = env.step(&joint_actions)?;
            for i in 0..n_agents {
                returns[i] += result.rewards[i];
            }
            if keep_trace {
                let row: Vec<TraceEntry> = (0..n_agents)
                    .map(|i| (result.states[i].clone(), joint_actions[i], result.rewards[i]))
                    .collect();
                trace_ep.push(row);
            }
            for i in 0..n_agents {
                if let Some(m) = pending[i].take() {
                    held_msgs[i] = Some(m);
                }
            }
            obs = result.observations;
            states = result.states;
            step += 1;
            if result.done {
                break;
            }
        }
        if is_integrator {
            let joint: Vec<f64> = states.iter().map(|s| s[0]).collect();
            v_series.push(lyapunov(&joint));
            outcome
                .final_abs_state
                .push(states.iter().map(|s| s[0].abs()).sum::<f64>() / n_agents as f64);
            outcome.lyapunov.push(v_series);
        }
        for i in 0..n_agents {
            outcome.returns_per_agent[i].push(returns[i]);
            outcome.inter_event[i].extend(sched.inter_event_times(i));
        }
        outcome.team_returns.push(returns.iter().sum::<f64>() / n_agents as f64);
        outcome.trigger_bits.push(bits);
        if keep_trace {
            outcome.trace.push(trace_ep);
        }
        outcome.episodes += 1;
    }
    Ok(outcome)
}
