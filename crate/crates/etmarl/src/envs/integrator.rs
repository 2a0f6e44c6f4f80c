//! Perturbed chain of discrete-time single integrators seeking the origin.
//!
//! Each agent's scalar state advances by x' = x + u·Ts (+ a small uniform
//! perturbation), with u drawn from five symmetric control levels. The
//! reward is the improvement in |x| minus a control-effort cost, so
//! driving toward the origin and then holding still is optimal.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_actions, EnvKind, Environment, StepResult};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub n_agents: usize,
    /// Sampling time Ts.
    pub ts: f64,
    /// Discrete control levels, indexed by action.
    pub levels: Vec<f64>,
    /// Uniform perturbation bound; each step adds w ~ U[−w_max, w_max].
    pub w_max: f64,
    /// Initial state value for every agent.
    pub x0: f64,
    /// Control-effort weight c in the reward.
    pub action_cost: f64,
    pub episode_len: usize,
    pub perturbation: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            n_agents: 2,
            ts: 0.1,
            levels: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            w_max: 0.01,
            x0: 10.0,
            action_cost: 0.05,
            episode_len: 200,
            perturbation: true,
        }
    }
}

/// r = |x| − |x'| − c·|u|: reward the state-convergence improvement while
/// penalizing large or unnecessary control actions.
pub fn integrator_reward(x_before: f64, x_after: f64, u: f64, action_cost: f64) -> f64 {
    x_before.abs() - x_after.abs() - action_cost * u.abs()
}

pub struct IntegratorEnv {
    cfg: IntegratorConfig,
    x: Vec<f64>,
    step: usize,
    rng: ChaCha8Rng,
}

impl IntegratorEnv {
    pub fn new(cfg: IntegratorConfig, rng: ChaCha8Rng) -> Self {
        let n = cfg.n_agents;
        IntegratorEnv { cfg, x: vec![0.0; n], step: 0, rng }
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        self.x.iter().map(|&xi| vec![xi]).collect()
    }

    fn states(&self) -> Vec<Vec<f64>> {
        self.observations()
    }
}

impl Environment for IntegratorEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Integrator
    }

    fn agent_count(&self) -> usize {
        self.cfg.n_agents
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn action_count(&self) -> usize {
        self.cfg.levels.len()
    }

    fn episode_len(&self) -> usize {
        self.cfg.episode_len
    }

    // States start at 10; condition inputs to unit scale.
    fn obs_scale(&self) -> f64 {
        1.0 / self.cfg.x0.abs().max(1.0)
    }

    fn reset(&mut self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        self.x.fill(self.cfg.x0);
        self.step = 0;
        (self.observations(), self.states())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(actions, self.cfg.n_agents, self.action_count())?;
        let mut rewards = Vec::with_capacity(self.cfg.n_agents);
        for (i, &a) in actions.iter().enumerate() {
            let u = self.cfg.levels[a];
            let before = self.x[i];
            let mut after = before + u * self.cfg.ts;
            if self.cfg.perturbation && self.cfg.w_max > 0.0 {
                after += self.rng.random_range(-self.cfg.w_max..=self.cfg.w_max);
            }
            self.x[i] = after;
            rewards.push(integrator_reward(before, after, u, self.cfg.action_cost));
        }
        self.step += 1;
        Ok(StepResult {
            observations: self.observations(),
            rewards,
            done: self.step >= self.cfg.episode_len,
            states: self.states(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn env_no_noise() -> IntegratorEnv {
        let cfg = IntegratorConfig { perturbation: false, ..IntegratorConfig::default() };
        IntegratorEnv::new(cfg, ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn reset_places_all_agents_at_ten() {
        let mut env = env_no_noise();
        let (obs, states) = env.reset();
        assert_eq!(states, vec![vec![10.0], vec![10.0]]);
        assert_eq!(obs, vec![vec![10.0], vec![10.0]]);
    }

    #[test]
    fn step_applies_exact_dynamics_without_perturbation() {
        let mut env = env_no_noise();
        env.reset();
        // u = −1 at index 0: x' = 10 − 0.1 = 9.9
        let result = env.step(&[0, 0]).unwrap();
        assert!((result.states[0][0] - 9.9).abs() < 1e-15);
        // reward = |10| − |9.9| − 0.05·1 = 0.05
        assert!((result.rewards[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn reward_cases() {
        assert!((integrator_reward(10.0, 9.9, -1.0, 0.05) - 0.05).abs() < 1e-12);
        // null action, state unchanged
        assert_eq!(integrator_reward(3.0, 3.0, 0.0, 0.05), 0.0);
        // equilibrium absorbing
        assert_eq!(integrator_reward(0.0, 0.0, 0.0, 0.05), 0.0);
    }

    #[test]
    fn dynamics_are_affine_without_perturbation() {
        // x' − x must equal u·Ts exactly for every level from any state.
        let mut env = env_no_noise();
        env.reset();
        let levels = [-1.0, -0.5, 0.0, 0.5, 1.0];
        for (a, &u) in levels.iter().enumerate() {
            let before = env.x[0];
            let result = env.step(&[a, 2]).unwrap();
            assert!((result.states[0][0] - (before + 0.1 * u)).abs() < 1e-15);
        }
    }

    #[test]
    fn perturbation_stays_within_bound() {
        let cfg = IntegratorConfig::default();
        let mut env = IntegratorEnv::new(cfg, ChaCha8Rng::seed_from_u64(7));
        env.reset();
        for _ in 0..500 {
            let before = env.x[0];
            let result = env.step(&[2, 2]).unwrap();
            let w = result.states[0][0] - before;
            assert!(w.abs() <= 0.01 + 1e-15);
            if result.done {
                env.reset();
            }
        }
    }

    #[test]
    fn episode_terminates_at_limit() {
        let mut env = env_no_noise();
        env.reset();
        for step in 0..200 {
            let result = env.step(&[2, 2]).unwrap();
            assert_eq!(result.done, step == 199);
        }
    }

    #[test]
    fn out_of_range_action_rejected() {
        let mut env = env_no_noise();
        env.reset();
        assert!(env.step(&[5, 0]).is_err());
        assert!(env.step(&[0]).is_err());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let run = |seed: u64| {
            let mut env = IntegratorEnv::new(
                IntegratorConfig::default(),
                ChaCha8Rng::seed_from_u64(seed),
            );
            env.reset();
            let mut trace = Vec::new();
            for k in 0..50 {
                let result = env.step(&[k % 5, (k + 2) % 5]).unwrap();
                trace.push(result.states[0][0].to_bits());
            }
            trace
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }
}
