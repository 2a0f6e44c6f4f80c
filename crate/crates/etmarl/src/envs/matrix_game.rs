//! Repeated two-player penalty matrix game.
//!
//! Agent 0 picks a row, agent 1 a column; both receive the matrix entry.
//! The corners pay 10 but miscoordination risks the penalty ℓ = −100;
//! the middle action pays a safe 2 regardless of the partner. The game is
//! stateless aside from episode progression, so the observation is a
//! constant plus the normalized step index.

use super::{check_actions, EnvKind, Environment, StepResult};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct MatrixGameConfig {
    pub payoff: [[f64; 3]; 3],
    pub episode_len: usize,
}

impl Default for MatrixGameConfig {
    fn default() -> Self {
        let l = -100.0;
        MatrixGameConfig {
            payoff: [[l, 0.0, 10.0], [0.0, 2.0, 0.0], [10.0, 0.0, l]],
            episode_len: 25,
        }
    }
}

pub struct MatrixGameEnv {
    cfg: MatrixGameConfig,
    step: usize,
}

impl MatrixGameEnv {
    pub fn new(cfg: MatrixGameConfig) -> Self {
        MatrixGameEnv { cfg, step: 0 }
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        let progress = self.step as f64 / self.cfg.episode_len as f64;
        vec![vec![1.0, progress]; 2]
    }

    fn states(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0]; 2]
    }
}

impl Environment for MatrixGameEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::MatrixPenalty
    }

    fn agent_count(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn action_count(&self) -> usize {
        3
    }

    fn episode_len(&self) -> usize {
        self.cfg.episode_len
    }

    fn reset(&mut self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        self.step = 0;
        (self.observations(), self.states())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(actions, 2, 3)?;
        let payoff = self.cfg.payoff[actions[0]][actions[1]];
        self.step += 1;
        Ok(StepResult {
            observations: self.observations(),
            rewards: vec![payoff; 2],
            done: self.step >= self.cfg.episode_len,
            states: self.states(),
        })
    }
}
