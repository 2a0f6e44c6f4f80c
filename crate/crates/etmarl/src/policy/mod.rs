//! The dual-head agent policy: one shared trunk feeding an action head
//! (categorical over the discrete action set) and a trigger head (a single
//! Bernoulli logit deciding whether to resample). Under the attention
//! variant the policy also owns a message-embedding layer and a multi-head
//! attention block whose context is fused into the trunk input.

mod attention;

pub use attention::{attention_aggregate, attention_weights, AttentionDims, Message};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{NodeId, ParamId, ParamStore, Tape, Tensor};

/// Execution variant of the whole experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Time-triggered: every step is an event; the trigger head is bypassed.
    Tt,
    /// Event-triggered: the trigger head gates action resampling.
    Et,
    /// Event-triggered with attention communication.
    Aet,
}

pub const VARIANT_NAMES: [&str; 3] = ["tt", "et", "aet"];

impl Variant {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "tt" => Ok(Variant::Tt),
            "et" => Ok(Variant::Et),
            "aet" => Ok(Variant::Aet),
            other => Err(Error::Config(format!(
                "unknown variant `{other}`; valid values: {}",
                VARIANT_NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Tt => "tt",
            Variant::Et => "et",
            Variant::Aet => "aet",
        }
    }

    pub fn uses_attention(&self) -> bool {
        matches!(self, Variant::Aet)
    }
}

#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub obs_dim: usize,
    pub err_dim: usize,
    pub action_count: usize,
    pub variant: Variant,
    pub hidden: usize,
    pub msg_dim: usize,
    pub heads: usize,
}

impl PolicyConfig {
    pub fn new(obs_dim: usize, err_dim: usize, action_count: usize, variant: Variant) -> Self {
        PolicyConfig { obs_dim, err_dim, action_count, variant, hidden: 64, msg_dim: 32, heads: 4 }
    }

    /// Observation + error signal + held-action one-hot.
    pub fn feature_dim(&self) -> usize {
        self.obs_dim + self.err_dim + self.action_count
    }

    pub fn context_dim(&self) -> usize {
        if self.variant.uses_attention() {
            self.msg_dim
        } else {
            0
        }
    }

    pub fn input_dim(&self) -> usize {
        self.feature_dim() + self.context_dim()
    }

    pub fn attention_dims(&self) -> AttentionDims {
        AttentionDims { msg_dim: self.msg_dim, heads: self.heads }
    }
}

/// Parameter handles of the attention extension.
#[derive(Debug, Clone, Copy)]
pub struct AttnParamIds {
    pub embed_w: ParamId,
    pub embed_b: ParamId,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

impl AttnParamIds {
    pub fn projection_ids(&self) -> [ParamId; 4] {
        [self.wq, self.wk, self.wv, self.wo]
    }
}

/// Parameter handles of a dual-head policy inside its store. Copyable so
/// graph builders (and gradient checkers) can run against a store borrowed
/// elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct PolicyIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub action_w: ParamId,
    pub action_b: ParamId,
    pub trigger_w: ParamId,
    pub trigger_b: ParamId,
    pub attn: Option<AttnParamIds>,
}

/// Shared trunk, action head, trigger head, and (AET only) message
/// embedding plus attention parameters.
pub struct DualHeadPolicy {
    pub cfg: PolicyConfig,
    pub params: ParamStore,
    ids: PolicyIds,
}

/// Uniform Xavier/Glorot initialization.
fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gain: f64) -> Tensor {
    let bound = gain * (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::from_vec(rows, cols, data)
}

impl DualHeadPolicy {
    /// Build with Xavier-initialized trunk and near-zero heads (small head
    /// gain keeps the initial policy close to uniform).
    pub fn init(cfg: PolicyConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if cfg.variant.uses_attention() {
            let dims = cfg.attention_dims();
            if !dims.msg_dim.is_multiple_of(dims.heads) {
                return Err(Error::Config(format!(
                    "message dim {} must be divisible by head count {}",
                    dims.msg_dim, dims.heads
                )));
            }
        }
        let mut params = ParamStore::new();
        let input = cfg.input_dim();
        let h = cfg.hidden;
        let mut ids = PolicyIds {
            w1: params.insert("trunk.w1", xavier(rng, input, h, 1.0))?,
            b1: params.insert("trunk.b1", Tensor::zeros(1, h))?,
            w2: params.insert("trunk.w2", xavier(rng, h, h, 1.0))?,
            b2: params.insert("trunk.b2", Tensor::zeros(1, h))?,
            action_w: params.insert("action.w", xavier(rng, h, cfg.action_count, 0.01))?,
            action_b: params.insert("action.b", Tensor::zeros(1, cfg.action_count))?,
            trigger_w: params.insert("trigger.w", xavier(rng, h, 1, 0.01))?,
            trigger_b: params.insert("trigger.b", Tensor::zeros(1, 1))?,
            attn: None,
        };
        if cfg.variant.uses_attention() {
            let m = cfg.msg_dim;
            ids.attn = Some(AttnParamIds {
                embed_w: params.insert("embed.w", xavier(rng, cfg.obs_dim, m, 1.0))?,
                embed_b: params.insert("embed.b", Tensor::zeros(1, m))?,
                wq: params.insert("attn.wq", xavier(rng, m, m, 1.0))?,
                wk: params.insert("attn.wk", xavier(rng, m, m, 1.0))?,
                wv: params.insert("attn.wv", xavier(rng, m, m, 1.0))?,
                wo: params.insert("attn.wo", xavier(rng, m, m, 1.0))?,
            });
        }
        Ok(DualHeadPolicy { cfg, params, ids })
    }

    /// Rebuild around an existing store (checkpoint loading). The store
    /// must contain exactly the parameters `init` would create.
    pub fn from_store(cfg: PolicyConfig, params: ParamStore) -> Result<Self> {
        let want = |name: &str| {
            params
                .id(name)
                .ok_or_else(|| Error::Config(format!("checkpoint missing parameter `{name}`")))
        };
        let attn = if cfg.variant.uses_attention() {
            Some(AttnParamIds {
                embed_w: want("embed.w")?,
                embed_b: want("embed.b")?,
                wq: want("attn.wq")?,
                wk: want("attn.wk")?,
                wv: want("attn.wv")?,
                wo: want("attn.wo")?,
            })
        } else {
            None
        };
        let ids = PolicyIds {
            w1: want("trunk.w1")?,
            b1: want("trunk.b1")?,
            w2: want("trunk.w2")?,
            b2: want("trunk.b2")?,
            action_w: want("action.w")?,
            action_b: want("action.b")?,
            trigger_w: want("trigger.w")?,
            trigger_b: want("trigger.b")?,
            attn,
        };
        let policy = DualHeadPolicy { cfg, params, ids };
        policy.check_dims()?;
        Ok(policy)
    }

    fn check_dims(&self) -> Result<()> {
        let w1 = self.params.value(self.ids.w1);
        if w1.shape() != (self.cfg.input_dim(), self.cfg.hidden) {
            return Err(Error::Config(format!(
                "trunk.w1 has shape {:?}, expected {:?}",
                w1.shape(),
                (self.cfg.input_dim(), self.cfg.hidden)
            )));
        }
        let aw = self.params.value(self.ids.action_w);
        if aw.cols() != self.cfg.action_count {
            return Err(Error::Config(format!(
                "action head emits {} logits, expected {}",
                aw.cols(),
                self.cfg.action_count
            )));
        }
        Ok(())
    }

    pub fn ids(&self) -> PolicyIds {
        self.ids
    }

    /// Trunk + heads on the tape. `features` is [n × feature_dim]; for the
    /// attention variant `context` ([n × msg_dim]) is concatenated onto it.
    /// Returns `(action_logits [n × |U|], trigger_logits [n × 1])`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        features: NodeId,
        context: Option<NodeId>,
    ) -> Result<(NodeId, NodeId)> {
        policy_forward(&self.cfg, self.ids, &self.params, tape, features, context)
    }

    /// Convenience single-row forward returning plain values.
    pub fn forward_values(
        &self,
        features: &[f64],
        context: Option<&[f64]>,
    ) -> Result<(Vec<f64>, f64)> {
        let mut tape = Tape::new();
        let f = tape.constant(Tensor::row(features));
        let ctx = context.map(|c| tape.constant(Tensor::row(c)));
        let (a, t) = self.forward(&mut tape, f, ctx)?;
        Ok((tape.value(a).data().to_vec(), tape.value(t).item()))
    }

    /// Learned affine+tanh embedding of an observation, broadcast to peers
    /// at trigger instants. Attention variant only.
    pub fn embed_message(&self, observation: &[f64], sent_at: usize, sender: usize) -> Result<Message> {
        let mut tape = Tape::new();
        let obs = tape.constant(Tensor::row(observation));
        let node = self.embed_on_tape(&mut tape, obs)?;
        Ok(Message { sender, embedding: tape.value(node).data().to_vec(), sent_at })
    }

    /// Taped message embedding, used when the update pass differentiates
    /// through the sender-side query path.
    pub fn embed_on_tape(&self, tape: &mut Tape, observation: NodeId) -> Result<NodeId> {
        let attn = self.attn_ids()?;
        embed_observation(attn, &self.params, tape, observation)
    }

    /// Attention aggregation over a message set, producing the context
    /// vector fused into the policy input. Empty sets yield zeros.
    pub fn aggregate_on_tape(
        &self,
        tape: &mut Tape,
        query_source: NodeId,
        messages: &[Vec<f64>],
    ) -> Result<NodeId> {
        let attn = self.attn_ids()?;
        attention_aggregate(
            tape,
            &self.params,
            attn.projection_ids(),
            self.cfg.attention_dims(),
            query_source,
            messages,
        )
    }

    /// Plain-value context computation for rollout (no gradients needed).
    pub fn aggregate_values(&self, query_obs: &[f64], messages: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let obs = tape.constant(Tensor::row(query_obs));
        let query = self.embed_on_tape(&mut tape, obs)?;
        let ctx = self.aggregate_on_tape(&mut tape, query, messages)?;
        Ok(tape.value(ctx).data().to_vec())
    }

    /// Per-head attention weights over a message set, for diagnostics.
    pub fn attention_pattern(&self, query_obs: &[f64], messages: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let attn = self.attn_ids()?;
        let query = self.embed_message(query_obs, 0, 0)?;
        attention_weights(
            &self.params,
            attn.projection_ids(),
            self.cfg.attention_dims(),
            &query.embedding,
            messages,
        )
    }

    fn attn_ids(&self) -> Result<AttnParamIds> {
        self.ids.attn.ok_or_else(|| {
            Error::Contract("attention machinery requested on a policy without attention".into())
        })
    }
}

/// Graph builder for the dual-head forward pass, callable against any
/// store with this layout (the gradient checker perturbs a store while
/// rebuilding the graph through this function).
pub fn policy_forward(
    cfg: &PolicyConfig,
    ids: PolicyIds,
    params: &ParamStore,
    tape: &mut Tape,
    features: NodeId,
    context: Option<NodeId>,
) -> Result<(NodeId, NodeId)> {
    let feat_cols = tape.value(features).cols();
    if feat_cols != cfg.feature_dim() {
        return Err(Error::Config(format!(
            "policy features have {feat_cols} columns, expected {}",
            cfg.feature_dim()
        )));
    }
    let input = match (cfg.variant.uses_attention(), context) {
        (true, Some(ctx)) => {
            if tape.value(ctx).cols() != cfg.msg_dim {
                return Err(Error::Config(format!(
                    "context has {} columns, expected {}",
                    tape.value(ctx).cols(),
                    cfg.msg_dim
                )));
            }
            tape.concat_cols(features, ctx)
        }
        (true, None) => {
            let rows = tape.value(features).rows();
            let zeros = tape.constant(Tensor::zeros(rows, cfg.msg_dim));
            tape.concat_cols(features, zeros)
        }
        (false, Some(_)) => {
            return Err(Error::Contract("context supplied to a non-attention policy".into()))
        }
        (false, None) => features,
    };
    let (w1, b1) = (tape.param(params, ids.w1), tape.param(params, ids.b1));
    let (w2, b2) = (tape.param(params, ids.w2), tape.param(params, ids.b2));
    let h1 = tape.affine(input, w1, b1);
    let h1 = tape.tanh(h1);
    let h2 = tape.affine(h1, w2, b2);
    let h2 = tape.tanh(h2);
    let (aw, ab) = (tape.param(params, ids.action_w), tape.param(params, ids.action_b));
    let (tw, tb) = (tape.param(params, ids.trigger_w), tape.param(params, ids.trigger_b));
    let action_logits = tape.affine(h2, aw, ab);
    let trigger_logits = tape.affine(h2, tw, tb);
    Ok((action_logits, trigger_logits))
}

/// Graph builder for the affine+tanh message embedding.
pub fn embed_observation(
    attn: AttnParamIds,
    params: &ParamStore,
    tape: &mut Tape,
    observation: NodeId,
) -> Result<NodeId> {
    let w = tape.param(params, attn.embed_w);
    let b = tape.param(params, attn.embed_b);
    let y = tape.affine(observation, w, b);
    Ok(tape.tanh(y))
}

/// Outcome of sampling both heads at one decision point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledHeads {
    pub action: usize,
    pub trigger: u8,
    pub logp_action: f64,
    pub logp_trigger: f64,
}

/// Sample `action ~ Categorical(softmax(action_logits))` and
/// `trigger ~ Bernoulli(σ(trigger_logit))`, returning the log-probabilities
/// of the sampled outcomes.
pub fn sample_heads(action_logits: &[f64], trigger_logit: f64, rng: &mut ChaCha8Rng) -> SampledHeads {
    let (action, logp_action) = sample_categorical(action_logits, rng);
    let p_trigger = crate::numerics::sigmoid(trigger_logit);
    let trigger = u8::from(rng.random::<f64>() < p_trigger);
    let logp_trigger = bernoulli_logp(trigger_logit, trigger);
    SampledHeads { action, trigger, logp_action, logp_trigger }
}

/// log p(T = bit) for a Bernoulli logit, evaluated overflow-safe.
pub fn bernoulli_logp(logit: f64, bit: u8) -> f64 {
    if bit == 1 {
        -crate::numerics::softplus(-logit)
    } else {
        -crate::numerics::softplus(logit)
    }
}

/// Sample a categorical index from logits; returns (index, log-probability).
pub fn sample_categorical(logits: &[f64], rng: &mut ChaCha8Rng) -> (usize, f64) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let u = rng.random::<f64>() * z;
    let mut cum = 0.0;
    let mut idx = logits.len() - 1;
    for (i, &e) in exps.iter().enumerate() {
        cum += e;
        if u < cum {
            idx = i;
            break;
        }
    }
    let logp = logits[idx] - max - z.ln();
    (idx, logp)
}

/// Greedy argmax over action logits (ties pick the lowest index).
pub fn argmax_action(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Assemble the policy feature vector: scaled observation, scaled error
/// signal, and the held-action one-hot (zeros before the first event).
pub fn assemble_features(
    obs_scaled: &[f64],
    err_scaled: &[f64],
    held_action: Option<usize>,
    action_count: usize,
) -> Vec<f64> {
    let mut f = Vec::with_capacity(obs_scaled.len() + err_scaled.len() + action_count);
    f.extend_from_slice(obs_scaled);
    f.extend_from_slice(err_scaled);
    let mut onehot = vec![0.0; action_count];
    if let Some(a) = held_action {
        onehot[a] = 1.0;
    }
    f.extend_from_slice(&onehot);
    f
}

#[cfg(test)]
mod tests;
