//! Simplified 2-D particle tasks: cooperative navigation with point-mass
//! kinematics in the arena [−1,1]².
//!
//! Reference: two agents, three landmarks; each agent has a private target
//! landmark encoded only in the *other* agent's observation. Spread: three
//! agents cover three landmarks while avoiding collisions. Kinematics are
//! a deliberate reimplementation at desk scale, not the original particle
//! physics engine.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_actions, EnvKind, Environment, StepResult};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticleTask {
    Reference,
    Spread,
}

#[derive(Debug, Clone)]
pub struct ParticleConfig {
    pub n_agents: usize,
    pub n_landmarks: usize,
    /// Acceleration magnitude per action.
    pub accel: f64,
    /// Velocity damping factor per step.
    pub damping: f64,
    pub dt: f64,
    /// Agent disk radius; a pair collides when closer than twice this.
    pub collision_radius: f64,
    pub episode_len: usize,
}

impl ParticleConfig {
    pub fn reference() -> Self {
        ParticleConfig {
            n_agents: 2,
            n_landmarks: 3,
            accel: 0.5,
            damping: 0.25,
            dt: 0.1,
            collision_radius: 0.15,
            episode_len: 50,
        }
    }

    pub fn spread() -> Self {
        ParticleConfig { n_agents: 3, ..ParticleConfig::reference() }
    }
}

/// Global coverage reward plus per-agent collision penalties.
///
/// Global term: negative sum over landmarks of the distance to the closest
/// agent. Each member of a colliding pair is penalized −1, so an agent
/// colliding with two others accrues −2.
pub fn spread_reward(
    positions: &[[f64; 2]],
    landmarks: &[[f64; 2]],
    collision_radius: f64,
) -> (f64, Vec<f64>) {
    let global: f64 = -landmarks
        .iter()
        .map(|l| {
            positions
                .iter()
                .map(|p| dist(p, l))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>();
    let mut penalties = vec![0.0; positions.len()];
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            if dist(&positions[i], &positions[j]) < 2.0 * collision_radius {
                penalties[i] -= 1.0;
                penalties[j] -= 1.0;
            }
        }
    }
    (global, penalties)
}

/// Per-agent reward mixing the local target distance and the team mean.
///
/// local_i = −dist(agent_i, target_i); global = mean of locals;
/// reward_i = ½·local_i + ½·global.
pub fn reference_reward(positions: &[[f64; 2]], targets: &[[f64; 2]]) -> Vec<f64> {
    let locals: Vec<f64> = positions
        .iter()
        .zip(targets)
        .map(|(p, t)| -dist(p, t))
        .collect();
    let global = locals.iter().sum::<f64>() / locals.len() as f64;
    locals.iter().map(|l| 0.5 * l + 0.5 * global).collect()
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub struct ParticleEnv {
    cfg: ParticleConfig,
    task: ParticleTask,
    pos: Vec<[f64; 2]>,
    vel: Vec<[f64; 2]>,
    landmarks: Vec<[f64; 2]>,
    /// Target landmark index per agent (reference only).
    targets: Vec<usize>,
    step: usize,
    rng: ChaCha8Rng,
}

const ACCEL_DIRS: [[f64; 2]; 5] = [[0.0, 0.0], [-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]];

impl ParticleEnv {
    pub fn new(cfg: ParticleConfig, task: ParticleTask, rng: ChaCha8Rng) -> Self {
        let n = cfg.n_agents;
        let m = cfg.n_landmarks;
        ParticleEnv {
            cfg,
            task,
            pos: vec![[0.0; 2]; n],
            vel: vec![[0.0; 2]; n],
            landmarks: vec![[0.0; 2]; m],
            targets: vec![0; n],
            step: 0,
            rng,
        }
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.cfg.n_agents).map(|i| self.observe(i)).collect()
    }

    fn observe(&self, i: usize) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.obs_dim());
        obs.extend_from_slice(&self.vel[i]);
        obs.extend_from_slice(&self.pos[i]);
        for l in &self.landmarks {
            obs.push(l[0] - self.pos[i][0]);
            obs.push(l[1] - self.pos[i][1]);
        }
        for (j, p) in self.pos.iter().enumerate() {
            if j != i {
                obs.push(p[0] - self.pos[i][0]);
                obs.push(p[1] - self.pos[i][1]);
            }
        }
        if self.task == ParticleTask::Reference {
            // Private targets: agent i sees the OTHER agent's target only.
            let other = 1 - i;
            for l in 0..self.cfg.n_landmarks {
                obs.push(if self.targets[other] == l { 1.0 } else { 0.0 });
            }
        }
        obs
    }

    fn states(&self) -> Vec<Vec<f64>> {
        (0..self.cfg.n_agents)
            .map(|i| vec![self.pos[i][0], self.pos[i][1], self.vel[i][0], self.vel[i][1]])
            .collect()
    }

    fn rewards(&self) -> Vec<f64> {
        match self.task {
            ParticleTask::Spread => {
                let (global, penalties) =
                    spread_reward(&self.pos, &self.landmarks, self.cfg.collision_radius);
                penalties.iter().map(|p| global + p).collect()
            }
            ParticleTask::Reference => {
                let targets: Vec<[f64; 2]> =
                    self.targets.iter().map(|&t| self.landmarks[t]).collect();
                reference_reward(&self.pos, &targets)
            }
        }
    }
}

impl Environment for ParticleEnv {
    fn kind(&self) -> EnvKind {
        match self.task {
            ParticleTask::Reference => EnvKind::MpeReference,
            ParticleTask::Spread => EnvKind::MpeSpread,
        }
    }

    fn agent_count(&self) -> usize {
        self.cfg.n_agents
    }

    fn obs_dim(&self) -> usize {
        let base = 4 + 2 * self.cfg.n_landmarks + 2 * (self.cfg.n_agents - 1);
        match self.task {
            ParticleTask::Reference => base + self.cfg.n_landmarks,
            ParticleTask::Spread => base,
        }
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn action_count(&self) -> usize {
        5
    }

    fn episode_len(&self) -> usize {
        self.cfg.episode_len
    }

    fn reset(&mut self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        for p in &mut self.pos {
            *p = [self.rng.random_range(-1.0..1.0), self.rng.random_range(-1.0..1.0)];
        }
        for v in &mut self.vel {
            *v = [0.0, 0.0];
        }
        for l in &mut self.landmarks {
            *l = [self.rng.random_range(-1.0..1.0), self.rng.random_range(-1.0..1.0)];
        }
        if self.task == ParticleTask::Reference {
            for t in &mut self.targets {
                *t = self.rng.random_range(0..self.cfg.n_landmarks);
            }
        }
        self.step = 0;
        (self.observations(), self.states())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(actions, self.cfg.n_agents, 5)?;
        for (i, &a) in actions.iter().enumerate() {
            let acc = ACCEL_DIRS[a];
            for d in 0..2 {
                self.vel[i][d] =
                    self.vel[i][d] * (1.0 - self.cfg.damping) + acc[d] * self.cfg.accel * self.cfg.dt;
                self.pos[i][d] = (self.pos[i][d] + self.vel[i][d] * self.cfg.dt).clamp(-1.0, 1.0);
            }
        }
        self.step += 1;
        Ok(StepResult {
            observations: self.observations(),
            rewards: self.rewards(),
            done: self.step >= self.cfg.episode_len,
            states: self.states(),
        })
    }
}
