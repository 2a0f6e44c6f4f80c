//! Metric exports: per-run CSV files with stable schemas, a summary.json
//! per seed, and a cross-seed aggregate.json. No timestamps or absolute
//! paths appear anywhere, so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::learners::AgentUpdateStats;
use crate::metrics::{inter_event_stats, moving_avg_trigger, trigger_reduction};
use crate::runner::eval::EvalOutcome;

/// One diagnostics.csv row per (update, agent).
pub fn write_diagnostics_csv(path: &Path, rows: &[(usize, usize, AgentUpdateStats)]) -> Result<()> {
    let mut out = String::from("update,agent,policy_loss,value_loss,entropy,clip_frac,mean_ratio,trigger_rate\n");
    for (update, agent, s) in rows {
        writeln!(
            out,
            "{update},{agent},{},{},{},{},{},{}",
            s.policy_loss, s.value_loss, s.entropy, s.clip_frac, s.mean_ratio, s.trigger_rate
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Mean episode return of episodes completed within each update window;
/// rows appear only for windows that completed at least one episode.
/// `agent` is an index or the literal `team`.
pub fn write_returns_csv(path: &Path, rows: &[(usize, String, f64, usize)]) -> Result<()> {
    let mut out = String::from("update,agent,mean_episode_return,episodes\n");
    for (update, agent, mean, count) in rows {
        writeln!(out, "{update},{agent},{mean},{count}").expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Evaluation-phase event log: one row per (episode, step, agent) with the
/// trigger bit and, at event rows after the first, the inter-event gap.
pub fn write_events_csv(path: &Path, outcome: &EvalOutcome) -> Result<()> {
    let mut out = String::from("episode,step,agent,triggered,inter_event_gap_or_blank\n");
    for (episode, per_agent) in outcome.trigger_bits.iter().enumerate() {
        for (agent, bits) in per_agent.iter().enumerate() {
            let mut last_event: Option<usize> = None;
            for (step, &bit) in bits.iter().enumerate() {
                let fires = bit == 1 || step == 0;
                let gap = if fires {
                    let g = last_event.map(|prev| (step - prev).to_string()).unwrap_or_default();
                    last_event = Some(step);
                    g
                } else {
                    String::new()
                };
                writeln!(out, "{episode},{step},{agent},{bit},{gap}").expect("string write");
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Moving-average trigger frequency per agent within each eval episode.
pub fn write_ma_trigger_csv(path: &Path, outcome: &EvalOutcome, window: usize) -> Result<()> {
    let mut out = String::from("episode,step,agent,moving_avg\n");
    for (episode, per_agent) in outcome.trigger_bits.iter().enumerate() {
        for (agent, bits) in per_agent.iter().enumerate() {
            for (step, v) in moving_avg_trigger(bits, window).iter().enumerate() {
                writeln!(out, "{episode},{step},{agent},{v}").expect("string write");
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Joint quadratic Lyapunov series per eval episode (integrator runs).
pub fn write_lyapunov_csv(path: &Path, outcome: &EvalOutcome) -> Result<()> {
    let mut out = String::from("episode,step,v\n");
    for (episode, series) in outcome.lyapunov.iter().enumerate() {
        for (step, v) in series.iter().enumerate() {
            writeln!(out, "{episode},{step},{v}").expect("string write");
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Optional per-step evaluation trace: states, action, reward per agent.
pub fn write_eval_trace_csv(path: &Path, outcome: &EvalOutcome, state_dim: usize) -> Result<()> {
    let mut out = String::from("episode,step,agent");
    for d in 0..state_dim {
        write!(out, ",state{d}").expect("string write");
    }
    out.push_str(",action,reward\n");
    for (episode, steps) in outcome.trace.iter().enumerate() {
        for (step, row) in steps.iter().enumerate() {
            for (agent, (state, action, reward)) in row.iter().enumerate() {
                write!(out, "{episode},{step},{agent}").expect("string write");
                for v in state {
                    write!(out, ",{v}").expect("string write");
                }
                writeln!(out, ",{action},{reward}").expect("string write");
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterEventSummary {
    pub min: usize,
    pub mean: f64,
    pub max: usize,
}

/// Per-seed run summary, serialized as summary.json.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub env: String,
    pub algo: String,
    pub variant: String,
    pub seed: u64,
    pub total_env_steps: usize,
    pub updates: usize,
    pub eval_episodes: usize,
    /// Mean over eval episodes of the team (agent-mean) raw return.
    pub final_return_team: f64,
    pub final_return_per_agent: Vec<f64>,
    /// final_return_team divided by the episode length.
    pub mean_per_step_reward: f64,
    pub trigger_rate_per_agent: Vec<f64>,
    /// Pooled over agents and episodes.
    pub trigger_rate: f64,
    /// 1 − triggers/steps against the time-triggered step count.
    pub trigger_reduction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inter_event_per_agent: Option<Vec<Option<InterEventSummary>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inter_event_pooled: Option<InterEventSummary>,
    /// Integrator only: mean |x| at episode end over eval episodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_abs_final_state: Option<f64>,
    /// Integrator only: mean final Lyapunov value over eval episodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_final: Option<f64>,
}

impl Summary {
    pub fn from_eval(
        env: &str,
        algo: &str,
        variant: &str,
        seed: u64,
        total_env_steps: usize,
        updates: usize,
        outcome: &EvalOutcome,
    ) -> Summary {
        let n_agents = outcome.returns_per_agent.len();
        let per_agent_return: Vec<f64> = outcome
            .returns_per_agent
            .iter()
            .map(|r| if r.is_empty() { 0.0 } else { r.iter().sum::<f64>() / r.len() as f64 })
            .collect();
        let all_bits: Vec<u8> = outcome
            .trigger_bits
            .iter()
            .flat_map(|ep| ep.iter().flatten().copied())
            .collect();
        let tt_steps = outcome.episodes * outcome.steps_per_episode * n_agents;
        let reduction = if tt_steps > 0 { trigger_reduction(&all_bits, tt_steps) } else { 0.0 };
        let per_agent_ie: Vec<Option<InterEventSummary>> = outcome
            .inter_event
            .iter()
            .map(|gaps| {
                inter_event_stats(gaps).map(|(min, mean, max)| InterEventSummary { min, mean, max })
            })
            .collect();
        let pooled_gaps: Vec<usize> = outcome.inter_event.iter().flatten().copied().collect();
        let pooled_ie = inter_event_stats(&pooled_gaps)
            .map(|(min, mean, max)| InterEventSummary { min, mean, max });
        let lyapunov_final = if outcome.lyapunov.is_empty() {
            None
        } else {
            Some(
                outcome.lyapunov.iter().map(|s| *s.last().unwrap()).sum::<f64>()
                    / outcome.lyapunov.len() as f64,
            )
        };
        let mean_abs_final_state = if outcome.final_abs_state.is_empty() {
            None
        } else {
            Some(outcome.final_abs_state.iter().sum::<f64>() / outcome.final_abs_state.len() as f64)
        };
        Summary {
            env: env.to_string(),
            algo: algo.to_string(),
            variant: variant.to_string(),
            seed,
            total_env_steps,
            updates,
            eval_episodes: outcome.episodes,
            final_return_team: outcome.mean_team_return(),
            final_return_per_agent: per_agent_return,
            mean_per_step_reward: if outcome.steps_per_episode > 0 {
                outcome.mean_team_return() / outcome.steps_per_episode as f64
            } else {
                0.0
            },
            trigger_rate_per_agent: outcome.trigger_rate_per_agent(),
            trigger_rate: outcome.pooled_trigger_rate(),
            trigger_reduction: reduction,
            inter_event_per_agent: Some(per_agent_ie),
            inter_event_pooled: pooled_ie,
            mean_abs_final_state,
            lyapunov_final,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

/// Cross-seed aggregate, serialized as aggregate.json.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub env: String,
    pub algo: String,
    pub variant: String,
    pub seeds: Vec<u64>,
    pub final_return_team: MeanStd,
    pub mean_per_step_reward: MeanStd,
    pub trigger_rate: MeanStd,
    pub trigger_reduction: MeanStd,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inter_event_mean: Option<MeanStd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_abs_final_state: Option<MeanStd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_final: Option<MeanStd>,
    pub per_seed_final_return_team: Vec<f64>,
}

impl Aggregate {
    pub fn from_summaries(summaries: &[Summary]) -> Aggregate {
        let first = &summaries[0];
        let collect = |f: &dyn Fn(&Summary) -> f64| summaries.iter().map(f).collect::<Vec<_>>();
        let opt_collect = |f: &dyn Fn(&Summary) -> Option<f64>| {
            let vals: Vec<f64> = summaries.iter().filter_map(f).collect();
            if vals.len() == summaries.len() {
                Some(mean_std(&vals))
            } else {
                None
            }
        };
        Aggregate {
            env: first.env.clone(),
            algo: first.algo.clone(),
            variant: first.variant.clone(),
            seeds: summaries.iter().map(|s| s.seed).collect(),
            final_return_team: mean_std(&collect(&|s| s.final_return_team)),
            mean_per_step_reward: mean_std(&collect(&|s| s.mean_per_step_reward)),
            trigger_rate: mean_std(&collect(&|s| s.trigger_rate)),
            trigger_reduction: mean_std(&collect(&|s| s.trigger_reduction)),
            inter_event_mean: opt_collect(&|s| s.inter_event_pooled.as_ref().map(|ie| ie.mean)),
            mean_abs_final_state: opt_collect(&|s| s.mean_abs_final_state),
            lyapunov_final: opt_collect(&|s| s.lyapunov_final),
            per_seed_final_return_team: collect(&|s| s.final_return_team),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
