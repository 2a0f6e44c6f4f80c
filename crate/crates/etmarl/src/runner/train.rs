//! The train/evaluate loop: seeds run as independent workers, each one
//! deterministic end to end, emitting CSV metric streams, a summary, and a
//! parameter checkpoint.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::envs::{make_env, EnvKind};
use crate::error::{Error, Result};
use crate::learners::{update, AgentLearner, Critic, CriticInput};
use crate::policy::{DualHeadPolicy, PolicyConfig};
use crate::runner::checkpoint::{Checkpoint, CheckpointMeta};
use crate::runner::eval::{evaluate, EvalOutcome};
use crate::runner::output::{
    write_diagnostics_csv, write_eval_trace_csv, write_events_csv, write_lyapunov_csv,
    write_ma_trigger_csv, write_returns_csv, Aggregate, Summary,
};
use crate::runner::rollout::{collect, SlotState};
use crate::runner::rng::stream;
use crate::runner::ResolvedConfig;

/// Moving-average window used for exported trigger curves.
pub const MA_WINDOW: usize = 100;

/// Train and evaluate one seed; writes every artifact into `dir`.
pub fn run_seed(cfg: &ResolvedConfig, seed: u64, dir: &Path) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    let context = format!(
        "{}_{}_{} seed {seed}",
        cfg.kind.name(),
        cfg.algo.name(),
        cfg.variant.name()
    );

    // Probe dimensions from a scratch instance.
    let probe = make_env(cfg.kind, stream(seed, "env", 0), cfg.perturbation);
    let n_agents = probe.agent_count();
    let obs_dim = probe.obs_dim();
    let state_dim = probe.state_dim();
    let action_count = probe.action_count();
    drop(probe);

    let mut agents: Vec<AgentLearner> = (0..n_agents)
        .map(|i| -> Result<AgentLearner> {
            let pcfg = PolicyConfig::new(obs_dim, state_dim, action_count, cfg.variant);
            let mut init_rng = stream(seed, "init-policy", i as u64);
            let policy = DualHeadPolicy::init(pcfg.clone(), &mut init_rng)?;
            let (dim, mode) = if cfg.algo.uses_global_critic() {
                (n_agents * obs_dim, CriticInput::Global)
            } else {
                (pcfg.feature_dim(), CriticInput::Local)
            };
            let mut critic_rng = stream(seed, "init-critic", i as u64);
            let critic = Critic::init(dim, pcfg.hidden, mode, &mut critic_rng)?;
            Ok(AgentLearner::new(policy, critic, cfg.train.learning_rate))
        })
        .collect::<Result<_>>()?;

    let mut slots: Vec<SlotState> = (0..cfg.train.slots)
        .map(|i| {
            SlotState::new(
                make_env(cfg.kind, stream(seed, "env", i as u64), cfg.perturbation),
                stream(seed, "sample", i as u64),
            )
        })
        .collect();

    let steps_per_update = cfg.train.steps_per_update();
    let updates = cfg.total_steps.div_ceil(steps_per_update);
    let mut update_rng = stream(seed, "update", 0);

    let mut diag_rows = Vec::new();
    let mut return_rows: Vec<(usize, String, f64, usize)> = Vec::new();
    for update_idx in 0..updates {
        let out = collect(&mut slots, &agents, &cfg.train, cfg.algo, cfg.variant, cfg.train.psi)
            .map_err(|e| Error::Numeric(format!("{context}, update {update_idx}: {e}")))?;
        let diag = update(
            &mut agents,
            &out.buffers,
            &cfg.train,
            cfg.algo,
            cfg.variant,
            &mut update_rng,
        )
        .map_err(|e| Error::Numeric(format!("{context}, update {update_idx}: {e}")))?;
        for (agent_idx, stats) in diag.per_agent.iter().enumerate() {
            diag_rows.push((update_idx, agent_idx, *stats));
        }
        if !out.completed.team.is_empty() {
            let count = out.completed.team.len();
            for (agent_idx, returns) in out.completed.per_agent.iter().enumerate() {
                let mean = returns.iter().sum::<f64>() / count as f64;
                return_rows.push((update_idx, agent_idx.to_string(), mean, count));
            }
            let team_mean = out.completed.team.iter().sum::<f64>() / count as f64;
            return_rows.push((update_idx, "team".to_string(), team_mean, count));
        }
    }

    // Deployment-mode evaluation with the trained policies.
    let mut eval_env = make_env(cfg.kind, stream(seed, "eval-env", 0), cfg.perturbation);
    let mut trigger_rng = stream(seed, "eval-sample", 0);
    let policy_refs: Vec<&DualHeadPolicy> = agents.iter().map(|a| &a.policy).collect();
    let outcome: EvalOutcome = evaluate(
        &policy_refs,
        eval_env.as_mut(),
        cfg.eval_episodes,
        cfg.variant,
        &mut trigger_rng,
        cfg.trace,
    )?;

    write_diagnostics_csv(&dir.join("diagnostics.csv"), &diag_rows)?;
    write_returns_csv(&dir.join("returns.csv"), &return_rows)?;
    write_events_csv(&dir.join("events.csv"), &outcome)?;
    write_ma_trigger_csv(&dir.join("ma_trigger.csv"), &outcome, MA_WINDOW)?;
    if cfg.kind == EnvKind::Integrator {
        write_lyapunov_csv(&dir.join("lyapunov.csv"), &outcome)?;
    }
    if cfg.trace {
        write_eval_trace_csv(&dir.join("eval_trace.csv"), &outcome, state_dim)?;
    }

    let meta = CheckpointMeta {
        env: cfg.kind.name().to_string(),
        algo: cfg.algo.name().to_string(),
        variant: cfg.variant.name().to_string(),
        seed,
        agent_count: n_agents,
        obs_dim,
        err_dim: state_dim,
        action_count,
        hidden: agents[0].policy.cfg.hidden,
        msg_dim: agents[0].policy.cfg.msg_dim,
        heads: agents[0].policy.cfg.heads,
        critic_input_dim: agents[0].critic.input_dim,
    };
    let critic_refs: Vec<&Critic> = agents.iter().map(|a| &a.critic).collect();
    Checkpoint::capture(meta, &policy_refs, &critic_refs).save(&dir.join("checkpoint.json"))?;

    let summary = Summary::from_eval(
        cfg.kind.name(),
        cfg.algo.name(),
        cfg.variant.name(),
        seed,
        updates * steps_per_update,
        updates,
        &outcome,
    );
    summary.save(&dir.join("summary.json"))?;
    Ok(summary)
}

/// Run every seed of the experiment (in parallel workers), then write the
/// cross-seed aggregate. Returns the combination directory.
pub fn run_experiment_resolved(cfg: &ResolvedConfig) -> Result<PathBuf> {
    let combo = format!("{}_{}_{}", cfg.kind.name(), cfg.algo.name(), cfg.variant.name());
    let combo_dir = cfg.out_dir.join(combo);
    std::fs::create_dir_all(&combo_dir)?;

    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(cfg.seeds.len())
        .max(1);
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<Summary>>>> =
        cfg.seeds.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= cfg.seeds.len() {
                    break;
                }
                let seed = cfg.seeds[idx];
                let dir = combo_dir.join(format!("seed_{seed}"));
                let outcome = run_seed(cfg, seed, &dir);
                *results[idx].lock().expect("worker poisoned") = Some(outcome);
            });
        }
    });

    let mut summaries = Vec::with_capacity(cfg.seeds.len());
    for slot in results {
        summaries.push(slot.into_inner().expect("worker poisoned").expect("worker finished")?);
    }
    Aggregate::from_summaries(&summaries).save(&combo_dir.join("aggregate.json"))?;
    Ok(combo_dir)
}
