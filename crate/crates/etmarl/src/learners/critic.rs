//! Value networks: a 2×64 tanh trunk with a scalar head, consuming either
//! the agent's local features or the concatenated global state.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{NodeId, ParamId, ParamStore, Tape, Tensor};

/// What the value network reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticInput {
    /// The agent's own policy features (independent learners).
    Local,
    /// Concatenated observations of all agents (centralized critic).
    Global,
}

/// Parameter handles of a critic inside its store.
#[derive(Debug, Clone, Copy)]
pub struct CriticIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

pub struct Critic {
    pub params: ParamStore,
    pub input_dim: usize,
    pub mode: CriticInput,
    ids: CriticIds,
}

impl Critic {
    pub fn init(input_dim: usize, hidden: usize, mode: CriticInput, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut params = ParamStore::new();
        let xavier = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| rand::Rng::random_range(rng, -bound..bound))
                .collect();
            Tensor::from_vec(rows, cols, data)
        };
        let ids = CriticIds {
            w1: params.insert("critic.w1", xavier(rng, input_dim, hidden))?,
            b1: params.insert("critic.b1", Tensor::zeros(1, hidden))?,
            w2: params.insert("critic.w2", xavier(rng, hidden, hidden))?,
            b2: params.insert("critic.b2", Tensor::zeros(1, hidden))?,
            head_w: params.insert("critic.head.w", xavier(rng, hidden, 1))?,
            head_b: params.insert("critic.head.b", Tensor::zeros(1, 1))?,
        };
        Ok(Critic { params, input_dim, mode, ids })
    }

    /// Rebuild around an existing store (checkpoint loading).
    pub fn from_store(input_dim: usize, mode: CriticInput, params: ParamStore) -> Result<Self> {
        let want = |name: &str| {
            params
                .id(name)
                .ok_or_else(|| Error::Config(format!("checkpoint missing parameter `{name}`")))
        };
        let ids = CriticIds {
            w1: want("critic.w1")?,
            b1: want("critic.b1")?,
            w2: want("critic.w2")?,
            b2: want("critic.b2")?,
            head_w: want("critic.head.w")?,
            head_b: want("critic.head.b")?,
        };
        if params.value(ids.w1).rows() != input_dim {
            return Err(Error::Config(format!(
                "critic.w1 expects input dim {}, configuration says {input_dim}",
                params.value(ids.w1).rows()
            )));
        }
        Ok(Critic { params, input_dim, mode, ids })
    }

    pub fn ids(&self) -> CriticIds {
        self.ids
    }

    /// [n × input_dim] → [n × 1] values on the tape.
    pub fn forward(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        critic_forward(self.input_dim, self.ids, &self.params, tape, input)
    }

    /// Scalar value of a single input row.
    pub fn value(&self, input: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(input));
        let v = self.forward(&mut tape, x)?;
        Ok(tape.value(v).item())
    }
}

/// Graph builder for the value network, callable against any store with
/// this layout.
pub fn critic_forward(
    input_dim: usize,
    ids: CriticIds,
    params: &ParamStore,
    tape: &mut Tape,
    input: NodeId,
) -> Result<NodeId> {
    if tape.value(input).cols() != input_dim {
        return Err(Error::Config(format!(
            "critic input has {} columns, expected {input_dim}",
            tape.value(input).cols()
        )));
    }
    let (w1, b1) = (tape.param(params, ids.w1), tape.param(params, ids.b1));
    let (w2, b2) = (tape.param(params, ids.w2), tape.param(params, ids.b2));
    let (hw, hb) = (tape.param(params, ids.head_w), tape.param(params, ids.head_b));
    let h = tape.affine(input, w1, b1);
    let h = tape.tanh(h);
    let h = tape.affine(h, w2, b2);
    let h = tape.tanh(h);
    Ok(tape.affine(h, hw, hb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn scalar_output_per_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let critic = Critic::init(5, 8, CriticInput::Local, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(7, 5));
        let v = critic.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(v).shape(), (7, 1));
        assert!(critic.value(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap().is_finite());
        assert!(critic.value(&[0.0; 4]).is_err(), "dimension mismatch must error");
    }

    #[test]
    fn value_gradient_passes_finite_differences() {
        use crate::numerics::finite_diff_check;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut critic = Critic::init(4, 6, CriticInput::Local, &mut rng).unwrap();
        let ids = critic.ids();
        let targets = [0.7, -0.3];
        let inputs = Tensor::from_vec(2, 4, vec![0.1, -0.2, 0.5, 0.9, -0.6, 0.3, 0.0, 0.4]);
        let err = finite_diff_check(
            |tape, params| {
                let x = tape.constant(inputs.clone());
                let v = critic_forward(4, ids, params, tape, x).unwrap();
                let t = tape.constant(Tensor::from_vec(2, 1, targets.to_vec()));
                let d = tape.sub(v, t);
                let sq = tape.square(d);
                tape.mean_all(sq)
            },
            &mut critic.params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "value loss gradient error {err}");
    }
}
