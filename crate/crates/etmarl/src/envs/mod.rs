//! Benchmark environments behind one trait: a perturbed single-integrator
//! chain, the Claus–Boutilier penalty matrix game, and simplified
//! particle tasks (reference and spread).

mod integrator;
mod matrix_game;
mod particle;

pub use integrator::{integrator_reward, IntegratorConfig, IntegratorEnv};
pub use matrix_game::{MatrixGameConfig, MatrixGameEnv};
pub use particle::{
    reference_reward, spread_reward, ParticleConfig, ParticleEnv, ParticleTask,
};

use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;

/// Names accepted by the `env` config field.
pub const ENV_NAMES: [&str; 4] = ["integrator", "matrix_penalty", "mpe_reference", "mpe_spread"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Integrator,
    MatrixPenalty,
    MpeReference,
    MpeSpread,
}

impl EnvKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "integrator" => Ok(EnvKind::Integrator),
            "matrix_penalty" => Ok(EnvKind::MatrixPenalty),
            "mpe_reference" => Ok(EnvKind::MpeReference),
            "mpe_spread" => Ok(EnvKind::MpeSpread),
            other => Err(Error::Config(format!(
                "unknown environment `{other}`; valid values: {}",
                ENV_NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Integrator => "integrator",
            EnvKind::MatrixPenalty => "matrix_penalty",
            EnvKind::MpeReference => "mpe_reference",
            EnvKind::MpeSpread => "mpe_spread",
        }
    }
}

/// One transition's outputs.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Per-agent observations of the post-transition state.
    pub observations: Vec<Vec<f64>>,
    /// Per-agent rewards.
    pub rewards: Vec<f64>,
    /// True exactly at the episode length limit.
    pub done: bool,
    /// Per-agent physical states, for error signals and Lyapunov
    /// monitoring; zeros in the stateless matrix game.
    pub states: Vec<Vec<f64>>,
}

/// A seeded, resettable multi-agent environment instance.
///
/// Step and reset are deterministic functions of the construction seed and
/// the action history; every instance owns its own rng stream.
pub trait Environment: Send {
    fn kind(&self) -> EnvKind;
    fn agent_count(&self) -> usize;
    /// Per-agent observation length (uniform across agents).
    fn obs_dim(&self) -> usize;
    /// Per-agent physical-state length.
    fn state_dim(&self) -> usize;
    /// Per-agent discrete action count.
    fn action_count(&self) -> usize;
    fn episode_len(&self) -> usize;
    /// Multiplier applied to observations and error signals when they are
    /// assembled into policy features (pure input conditioning; raw values
    /// are what the environment reports).
    fn obs_scale(&self) -> f64 {
        1.0
    }
    /// Begin a fresh episode; returns (observations, states).
    fn reset(&mut self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>);
    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;
}

/// Build an environment instance with its own rng stream.
pub fn make_env(kind: EnvKind, rng: ChaCha8Rng, perturbation: bool) -> Box<dyn Environment> {
    match kind {
        EnvKind::Integrator => {
            let cfg = IntegratorConfig { perturbation, ..IntegratorConfig::default() };
            Box::new(IntegratorEnv::new(cfg, rng))
        }
        EnvKind::MatrixPenalty => Box::new(MatrixGameEnv::new(MatrixGameConfig::default())),
        EnvKind::MpeReference => {
            Box::new(ParticleEnv::new(ParticleConfig::reference(), ParticleTask::Reference, rng))
        }
        EnvKind::MpeSpread => {
            Box::new(ParticleEnv::new(ParticleConfig::spread(), ParticleTask::Spread, rng))
        }
    }
}

pub(crate) fn check_actions(actions: &[usize], n: usize, count: usize) -> Result<()> {
    if actions.len() != n {
        return Err(Error::Contract(format!(
            "expected {n} actions, got {}",
            actions.len()
        )));
    }
    if let Some(bad) = actions.iter().find(|&&a| a >= count) {
        return Err(Error::Contract(format!(
            "action index {bad} out of range (action count {count})"
        )));
    }
    Ok(())
}
