//! Advantage estimation: TD(λ) via the backward recursion
//! A_k = δ_k + γλ(1−done_k)·A_{k+1}, δ_k = r_k + γ(1−done_k)·V_{k+1} − V_k,
//! and the one-step residual used by A2C.

use super::buffer::RolloutBuffer;

/// Per-step advantages and value-regression targets (A_k + V_k).
#[derive(Debug, Clone)]
pub struct AdvantageEstimate {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// TD(λ) over one contiguous segment with a tail bootstrap value.
pub fn td_lambda_segment(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    assert_eq!(rewards.len(), dones.len());
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    for k in (0..n).rev() {
        let nonterminal = if dones[k] { 0.0 } else { 1.0 };
        let next_value = if k + 1 < n { values[k + 1] } else { bootstrap };
        let delta = rewards[k] + gamma * next_value * nonterminal - values[k];
        next_adv = delta + gamma * lambda * nonterminal * next_adv;
        advantages[k] = next_adv;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// TD(λ) advantages over the shaped rewards of a whole buffer, slot by slot.
pub fn td_lambda_advantage(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> AdvantageEstimate {
    assert!(!buffer.is_empty(), "advantage estimation needs a nonempty buffer");
    assert!((0.0..1.0).contains(&gamma) && (0.0..=1.0).contains(&lambda));
    let mut advantages = Vec::with_capacity(buffer.len());
    let mut returns = Vec::with_capacity(buffer.len());
    for slot in 0..buffer.slots {
        let range = buffer.slot_range(slot);
        let (a, r) = td_lambda_segment(
            &buffer.shaped[range.clone()],
            &buffer.values[range.clone()],
            &buffer.dones[range],
            buffer.bootstrap[slot],
            gamma,
            lambda,
        );
        advantages.extend(a);
        returns.extend(r);
    }
    AdvantageEstimate { advantages, returns }
}

/// One-step TD residual per step: r_k + γ(1−done_k)·V_{k+1} − V_k.
pub fn a2c_advantage(buffer: &RolloutBuffer, gamma: f64) -> AdvantageEstimate {
    td_lambda_advantage(buffer, gamma, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Forward-sum oracle: A_k = Σ_{l≥0} (γλ)^l δ_{k+l}, cut at episode ends.
    fn forward_sum_oracle(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        bootstrap: f64,
        gamma: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let n = rewards.len();
        let delta = |k: usize| {
            let nonterminal = if dones[k] { 0.0 } else { 1.0 };
            let next = if k + 1 < n { values[k + 1] } else { bootstrap };
            rewards[k] + gamma * next * nonterminal - values[k]
        };
        (0..n)
            .map(|k| {
                let mut acc = 0.0;
                let mut weight = 1.0;
                for l in k..n {
                    acc += weight * delta(l);
                    if dones[l] {
                        break;
                    }
                    weight *= gamma * lambda;
                }
                acc
            })
            .collect()
    }

    fn lcg_stream(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed;
        move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    #[test]
    fn single_terminal_step() {
        let (adv, ret) = td_lambda_segment(&[1.0], &[0.0], &[true], 0.0, 0.99, 0.95);
        assert_eq!(adv, vec![1.0]);
        assert_eq!(ret, vec![1.0]);
    }

    #[test]
    fn lambda_zero_collapses_to_one_step_residual() {
        let rewards = [0.5, -0.2, 1.0, 0.0];
        let values = [0.3, 0.1, -0.4, 0.2];
        let dones = [false, false, false, true];
        let (adv, _) = td_lambda_segment(&rewards, &values, &dones, 0.7, 0.9, 0.0);
        for k in 0..4 {
            let nonterminal = if dones[k] { 0.0 } else { 1.0 };
            let next = if k + 1 < 4 { values[k + 1] } else { 0.7 };
            let delta = rewards[k] + 0.9 * next * nonterminal - values[k];
            assert!((adv[k] - delta).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_forward_sum_oracle_on_100_random_trajectories() {
        let mut rand = lcg_stream(0xDEADBEEF);
        for trial in 0..100 {
            let n = 10;
            let rewards: Vec<f64> = (0..n).map(|_| rand() * 4.0 - 2.0).collect();
            let values: Vec<f64> = (0..n).map(|_| rand() * 2.0 - 1.0).collect();
            let mut dones = vec![false; n];
            // occasional episode cut mid-segment
            if trial % 3 == 0 {
                let cut = 2 + (rand() * 6.0) as usize;
                dones[cut] = true;
            }
            if trial % 2 == 0 {
                dones[n - 1] = true;
            }
            let bootstrap = rand() * 2.0 - 1.0;
            let (adv, ret) = td_lambda_segment(&rewards, &values, &dones, bootstrap, 0.99, 0.95);
            let oracle = forward_sum_oracle(&rewards, &values, &dones, bootstrap, 0.99, 0.95);
            for k in 0..n {
                assert!((adv[k] - oracle[k]).abs() < 1e-10, "trial {trial}, step {k}");
                assert!((ret[k] - (oracle[k] + values[k])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lambda_one_equals_monte_carlo_minus_baseline() {
        // Finite episode terminated inside the segment: with λ=1 the
        // advantage telescopes to the discounted return minus V_k.
        let mut rand = lcg_stream(42);
        let n = 10;
        let rewards: Vec<f64> = (0..n).map(|_| rand() * 2.0 - 1.0).collect();
        let values: Vec<f64> = (0..n).map(|_| rand() - 0.5).collect();
        let mut dones = vec![false; n];
        dones[n - 1] = true;
        let gamma = 0.97;
        let (adv, _) = td_lambda_segment(&rewards, &values, &dones, 123.0, gamma, 1.0);
        for k in 0..n {
            let mut ret = 0.0;
            for l in (k..n).rev() {
                ret = rewards[l] + gamma * ret;
            }
            assert!((adv[k] - (ret - values[k])).abs() < 1e-10, "step {k}");
        }
    }

    #[test]
    fn a2c_equals_lambda_zero_on_random_buffer() {
        let mut rand = lcg_stream(7);
        let mut buffer = RolloutBuffer::new(2, 8);
        for _ in 0..16 {
            buffer.shaped.push(rand() * 2.0 - 1.0);
            buffer.values.push(rand() - 0.5);
            buffer.dones.push(rand() < 0.2);
        }
        buffer.rewards = buffer.shaped.clone();
        buffer.bootstrap = vec![rand(), rand()];
        let a2c = a2c_advantage(&buffer, 0.99);
        let tdl = td_lambda_advantage(&buffer, 0.99, 0.0);
        assert_eq!(a2c.advantages, tdl.advantages);
        assert_eq!(a2c.returns, tdl.returns);
    }

    #[test]
    fn a2c_constant_critic_cases() {
        // r = 0, constant critic c, nonterminal: A = γc − c.
        let (adv, _) = td_lambda_segment(&[0.0], &[2.0], &[false], 2.0, 0.9, 0.0);
        assert!((adv[0] - (0.9 * 2.0 - 2.0)).abs() < 1e-15);
        // terminal step, r = 5, V = 1: A = 4.
        let (adv, _) = td_lambda_segment(&[5.0], &[1.0], &[true], 9.0, 0.9, 0.0);
        assert!((adv[0] - 4.0).abs() < 1e-15);
    }
}
