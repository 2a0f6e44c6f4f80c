//! Experiment configuration, seeding, the train/evaluate loop, and the
//! surfaces the command-line binary calls into.

pub mod checkpoint;
pub mod eval;
pub mod output;
pub mod rng;
pub mod rollout;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use eval::{evaluate, EvalOutcome};
pub use output::{Aggregate, Summary};
pub use train::{run_seed, MA_WINDOW};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{make_env, EnvKind};
use crate::error::{Error, Result};
use crate::learners::{Algo, TrainConfig};
use crate::policy::Variant;

/// On-disk experiment description; CLI flags override file values.
/// `total_steps = 0` selects the per-environment default budget
/// (500k for integrator/matrix, 2M for the particle tasks).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub env: String,
    pub algo: String,
    pub variant: String,
    pub seeds: Vec<u64>,
    pub total_steps: usize,
    pub eval_episodes: usize,
    /// Integrator perturbation toggle (exact-arithmetic tests switch it off).
    pub perturbation: bool,
    /// Also emit per-step evaluation traces.
    pub trace: bool,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: "integrator".into(),
            algo: "ippo".into(),
            variant: "et".into(),
            seeds: vec![0, 1, 2, 3, 4],
            total_steps: 0,
            eval_episodes: 30,
            perturbation: true,
            trace: false,
            out_dir: PathBuf::from("runs"),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Validate names and ranges, resolving the default step budget.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let kind = EnvKind::parse(&self.env)?;
        let algo = Algo::parse(&self.algo)?;
        let variant = Variant::parse(&self.variant)?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        let total_steps = if self.total_steps == 0 {
            match kind {
                EnvKind::Integrator | EnvKind::MatrixPenalty => 500_000,
                EnvKind::MpeReference | EnvKind::MpeSpread => 2_000_000,
            }
        } else {
            self.total_steps
        };
        let mut train = self.train.clone();
        if variant == Variant::Tt {
            // The tt variant is the plain time-triggered baseline: every
            // step is an event and no penalty applies.
            train.psi = 0.0;
        }
        Ok(ResolvedConfig {
            kind,
            algo,
            variant,
            seeds: self.seeds.clone(),
            total_steps,
            eval_episodes: self.eval_episodes,
            perturbation: self.perturbation,
            trace: self.trace,
            out_dir: self.out_dir.clone(),
            train,
        })
    }
}

/// Parsed, validated configuration actually used by the loops.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub kind: EnvKind,
    pub algo: Algo,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub total_steps: usize,
    pub eval_episodes: usize,
    pub perturbation: bool,
    pub trace: bool,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
}

/// Train every seed and write aggregates; returns the combination
/// directory `<out>/<env>_<algo>_<variant>/`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let resolved = cfg.resolve()?;
    train::run_experiment_resolved(&resolved)
}

/// Evaluation summary for a stored checkpoint (the `eval` subcommand).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub env: String,
    pub variant: String,
    pub episodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_return_team: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_return_per_agent: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trigger_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trigger_reduction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inter_event_min: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inter_event_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_abs_final_state: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_final: Option<f64>,
}

/// Load a checkpoint and run deployment-mode evaluation episodes.
/// Zero episodes is valid and yields an empty summary.
pub fn evaluate_checkpoint(
    checkpoint_path: &Path,
    env_override: Option<&str>,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    let ck = Checkpoint::load(checkpoint_path)?;
    let env_name = env_override.unwrap_or(&ck.metadata.env).to_string();
    let kind = EnvKind::parse(&env_name)?;
    let variant = Variant::parse(&ck.metadata.variant)?;
    let policies = ck.restore_policies()?;

    let mut env = make_env(kind, rng::stream(seed, "eval-env", 0), true);
    if env.agent_count() != policies.len()
        || env.obs_dim() != ck.metadata.obs_dim
        || env.action_count() != ck.metadata.action_count
        || env.state_dim() != ck.metadata.err_dim
    {
        return Err(Error::Config(format!(
            "checkpoint dimensions (agents {}, obs {}, actions {}) do not match environment `{}` \
             (agents {}, obs {}, actions {})",
            policies.len(),
            ck.metadata.obs_dim,
            ck.metadata.action_count,
            env_name,
            env.agent_count(),
            env.obs_dim(),
            env.action_count()
        )));
    }

    let mut trigger_rng = rng::stream(seed, "eval-sample", 0);
    let refs: Vec<&crate::policy::DualHeadPolicy> = policies.iter().collect();
    let outcome = evaluate(&refs, env.as_mut(), episodes, variant, &mut trigger_rng, false)?;

    if episodes == 0 {
        return Ok(EvalSummary {
            env: env_name,
            variant: ck.metadata.variant.clone(),
            episodes: 0,
            mean_return_team: None,
            mean_return_per_agent: None,
            trigger_rate: None,
            trigger_reduction: None,
            inter_event_min: None,
            inter_event_mean: None,
            mean_abs_final_state: None,
            lyapunov_final: None,
        });
    }
    let summary = Summary::from_eval(&env_name, &ck.metadata.algo, &ck.metadata.variant, seed, 0, 0, &outcome);
    Ok(EvalSummary {
        env: env_name,
        variant: ck.metadata.variant.clone(),
        episodes,
        mean_return_team: Some(summary.final_return_team),
        mean_return_per_agent: Some(summary.final_return_per_agent),
        trigger_rate: Some(summary.trigger_rate),
        trigger_reduction: Some(summary.trigger_reduction),
        inter_event_min: summary.inter_event_pooled.as_ref().map(|ie| ie.min),
        inter_event_mean: summary.inter_event_pooled.as_ref().map(|ie| ie.mean),
        mean_abs_final_state: summary.mean_abs_final_state,
        lyapunov_final: summary.lyapunov_final,
    })
}
