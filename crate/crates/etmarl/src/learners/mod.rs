//! Policy-gradient learners with joint action/trigger credit: independent
//! PPO, centralized-critic PPO, and independent A2C, each shaped by the
//! trigger penalty Ψ flowing through the advantage.

mod advantage;
mod buffer;
mod critic;
mod loss;
mod update;

pub use advantage::{a2c_advantage, td_lambda_advantage, td_lambda_segment, AdvantageEstimate};
pub use buffer::{shape_rewards, RolloutBuffer};
pub use critic::{critic_forward, Critic, CriticIds, CriticInput};
pub use loss::{
    a2c_loss, joint_logp_and_entropy, normalize_advantages, ppo_loss, value_loss, JointLogp,
    LossStats, PpoTerms,
};
pub use update::{update, AgentLearner, AgentUpdateStats, UpdateDiagnostics};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which policy-gradient algorithm drives the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Ippo,
    Mappo,
    Ia2c,
}

pub const ALGO_NAMES: [&str; 3] = ["ippo", "mappo", "ia2c"];

impl Algo {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "ippo" => Ok(Algo::Ippo),
            "mappo" => Ok(Algo::Mappo),
            "ia2c" => Ok(Algo::Ia2c),
            other => Err(Error::Config(format!(
                "unknown algorithm `{other}`; valid values: {}",
                ALGO_NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algo::Ippo => "ippo",
            Algo::Mappo => "mappo",
            Algo::Ia2c => "ia2c",
        }
    }

    pub fn uses_global_critic(&self) -> bool {
        matches!(self, Algo::Mappo)
    }
}

/// Training hyperparameters. Defaults are PPO-standard; Ψ is sized small
/// relative to the matrix-game payoffs and exposed for tuning.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Trigger penalty Ψ subtracted from the reward whenever T = 1.
    pub psi: f64,
    /// Discount γ.
    pub gamma: f64,
    /// TD(λ) interpolation.
    pub lambda: f64,
    /// PPO clip ε.
    pub clip: f64,
    pub learning_rate: f64,
    /// PPO epochs per update (A2C always runs one).
    pub epochs: usize,
    pub minibatch: usize,
    /// Steps collected per episode slot per update.
    pub horizon: usize,
    /// Parallel episode slots.
    pub slots: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            psi: 0.05,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            learning_rate: 3e-4,
            epochs: 4,
            minibatch: 256,
            horizon: 128,
            slots: 8,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.psi >= 0.0, "psi must be >= 0"),
            ((0.0..1.0).contains(&self.gamma), "gamma must lie in [0, 1)"),
            ((0.0..=1.0).contains(&self.lambda), "lambda must lie in [0, 1]"),
            (self.clip > 0.0, "clip must be positive"),
            (self.learning_rate > 0.0, "learning_rate must be positive"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.minibatch >= 1, "minibatch must be >= 1"),
            (self.horizon >= 1, "horizon must be >= 1"),
            (self.slots >= 1, "slots must be >= 1"),
            (self.entropy_coef >= 0.0, "entropy_coef must be >= 0"),
            (self.value_coef >= 0.0, "value_coef must be >= 0"),
            (self.max_grad_norm > 0.0, "max_grad_norm must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }

    pub fn steps_per_update(&self) -> usize {
        self.horizon * self.slots
    }
}
