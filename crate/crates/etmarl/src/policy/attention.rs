//! Multi-head scaled dot-product attention over a set of peer messages.
//!
//! The querying agent projects its own embedded observation to per-head
//! queries; received message embeddings provide keys and values. Per head,
//! weights are softmax(q·Kᵀ/√d_k) and the context is the weight-averaged
//! values, concatenated over heads and passed through an output projection.
//! The empty message set maps to a zero context by convention.

use crate::error::{Error, Result};
use crate::numerics::{softmax_rows_value, NodeId, ParamId, ParamStore, Tape, Tensor};

/// Message-embedding width and head count; per-head key width is
/// `msg_dim / heads` and must divide evenly.
#[derive(Debug, Clone, Copy)]
pub struct AttentionDims {
    pub msg_dim: usize,
    pub heads: usize,
}

impl AttentionDims {
    pub fn head_dim(&self) -> usize {
        self.msg_dim / self.heads
    }
}

/// A broadcast message: the sender's learned observation embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: usize,
    pub embedding: Vec<f64>,
    pub sent_at: usize,
}

/// Taped multi-head attention: `query_source` is [1 × msg_dim] (the
/// querying agent's embedded observation) and `messages` are the held
/// peer embeddings. Weight order is [wq, wk, wv, wo]. Returns the
/// [1 × msg_dim] context node; an empty message set yields zeros.
pub fn attention_aggregate(
    tape: &mut Tape,
    params: &ParamStore,
    [wq, wk, wv, wo]: [ParamId; 4],
    dims: AttentionDims,
    query_source: NodeId,
    messages: &[Vec<f64>],
) -> Result<NodeId> {
    if messages.is_empty() {
        return Ok(tape.constant(Tensor::zeros(1, dims.msg_dim)));
    }
    for m in messages {
        if m.len() != dims.msg_dim {
            return Err(Error::Config(format!(
                "message embedding has dim {}, expected {}",
                m.len(),
                dims.msg_dim
            )));
        }
    }
    let stacked = {
        let mut data = Vec::with_capacity(messages.len() * dims.msg_dim);
        for m in messages {
            data.extend_from_slice(m);
        }
        tape.constant(Tensor::from_vec(messages.len(), dims.msg_dim, data))
    };
    let wq = tape.param(params, wq);
    let wk = tape.param(params, wk);
    let wv = tape.param(params, wv);
    let wo = tape.param(params, wo);
    let q = tape.matmul(query_source, wq);
    let k = tape.matmul(stacked, wk);
    let v = tape.matmul(stacked, wv);

    let dk = dims.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    let mut head_contexts = Vec::with_capacity(dims.heads);
    for h in 0..dims.heads {
        let qh = tape.slice_cols(q, h * dk, dk);
        let kh = tape.slice_cols(k, h * dk, dk);
        let vh = tape.slice_cols(v, h * dk, dk);
        let scores = tape.matmul_nt(qh, kh);
        let scores = tape.mul_scalar(scores, scale);
        let alpha = tape.softmax_rows(scores);
        head_contexts.push(tape.matmul(alpha, vh));
    }
    let mut ctx = head_contexts[0];
    for &hc in &head_contexts[1..] {
        ctx = tape.concat_cols(ctx, hc);
    }
    Ok(tape.matmul(ctx, wo))
}

/// Per-head attention weights for a raw query embedding, without building
/// a tape. Returns `heads` vectors, each summing to 1 over the messages.
pub fn attention_weights(
    params: &ParamStore,
    [wq, wk, _wv, _wo]: [ParamId; 4],
    dims: AttentionDims,
    query_embedding: &[f64],
    messages: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if messages.is_empty() {
        return Ok(vec![Vec::new(); dims.heads]);
    }
    let query = Tensor::row(query_embedding);
    let mut data = Vec::with_capacity(messages.len() * dims.msg_dim);
    for m in messages {
        if m.len() != dims.msg_dim {
            return Err(Error::Config(format!(
                "message embedding has dim {}, expected {}",
                m.len(),
                dims.msg_dim
            )));
        }
        data.extend_from_slice(m);
    }
    let stacked = Tensor::from_vec(messages.len(), dims.msg_dim, data);
    let q = query.matmul(params.value(wq));
    let k = stacked.matmul(params.value(wk));
    let dk = dims.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    let mut out = Vec::with_capacity(dims.heads);
    for h in 0..dims.heads {
        let mut scores = Tensor::zeros(1, messages.len());
        for (j, _) in messages.iter().enumerate() {
            let mut dot = 0.0;
            for c in 0..dk {
                dot += q.get(0, h * dk + c) * k.get(j, h * dk + c);
            }
            scores.set(0, j, dot * scale);
        }
        out.push(softmax_rows_value(&scores).data().to_vec());
    }
    Ok(out)
}
