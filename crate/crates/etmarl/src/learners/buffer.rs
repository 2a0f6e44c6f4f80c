//! Per-agent rollout storage for one update window.

/// Trajectories for one agent across all episode slots, slot-major:
/// index `slot * horizon + t`. Every per-step vector has identical length;
/// `bootstrap` holds one tail value per slot.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub slots: usize,
    pub horizon: usize,
    /// Policy feature rows (observation, error signal, held one-hot).
    pub features: Vec<Vec<f64>>,
    /// Scaled observation used as the attention query source (AET only).
    pub query_obs: Vec<Vec<f64>>,
    /// Held message embeddings visible at each step (AET only).
    pub message_sets: Vec<Vec<Vec<f64>>>,
    /// Global-state rows for the centralized critic (MAPPO only).
    pub global_states: Vec<Vec<f64>>,
    /// Effective action index applied at each step.
    pub actions: Vec<usize>,
    /// Sampled trigger bit.
    pub triggers: Vec<u8>,
    /// Whether an event occurred (trigger fired or forced step-0 event);
    /// exactly the steps whose action log-probability is credited.
    pub events: Vec<bool>,
    /// log π(u|·) at sampling time; 0 on non-event steps.
    pub logp_action: Vec<f64>,
    /// log π(T|·) at sampling time.
    pub logp_trigger: Vec<f64>,
    /// Critic value estimates V(z_k).
    pub values: Vec<f64>,
    /// Raw environment rewards.
    pub rewards: Vec<f64>,
    /// Penalty-shaped rewards: reward − Ψ·𝕀(T = 1).
    pub shaped: Vec<f64>,
    pub dones: Vec<bool>,
    /// Tail value V(z_{horizon}) per slot for bootstrapping.
    pub bootstrap: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(slots: usize, horizon: usize) -> Self {
        let cap = slots * horizon;
        RolloutBuffer {
            slots,
            horizon,
            features: Vec::with_capacity(cap),
            query_obs: Vec::new(),
            message_sets: Vec::new(),
            global_states: Vec::new(),
            actions: Vec::with_capacity(cap),
            triggers: Vec::with_capacity(cap),
            events: Vec::with_capacity(cap),
            logp_action: Vec::with_capacity(cap),
            logp_trigger: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
            rewards: Vec::with_capacity(cap),
            shaped: Vec::with_capacity(cap),
            dones: Vec::with_capacity(cap),
            bootstrap: Vec::with_capacity(slots),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Step index range belonging to one slot.
    pub fn slot_range(&self, slot: usize) -> std::ops::Range<usize> {
        slot * self.horizon..(slot + 1) * self.horizon
    }

    /// Fraction of steps whose trigger bit fired.
    pub fn trigger_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.triggers.iter().map(|&t| f64::from(t)).sum::<f64>() / self.len() as f64
    }
}

/// Apply the trigger penalty as reward shaping:
/// shaped = reward − psi·𝕀(trigger = 1) at every step. Shaping (rather
/// than a loss-side constant) lets the penalty flow through the advantage
/// so the trigger head receives a learning signal.
pub fn shape_rewards(buffer: &mut RolloutBuffer, psi: f64) {
    assert!(psi >= 0.0, "psi must be nonnegative");
    buffer.shaped = buffer
        .rewards
        .iter()
        .zip(&buffer.triggers)
        .map(|(&r, &t)| r - psi * f64::from(t))
        .collect();
}
