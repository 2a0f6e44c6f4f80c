use super::*;
use crate::numerics::{finite_diff_check, Tensor};
use rand::SeedableRng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn et_policy(seed: u64) -> DualHeadPolicy {
    let cfg = PolicyConfig::new(3, 2, 4, Variant::Et);
    DualHeadPolicy::init(cfg, &mut rng(seed)).unwrap()
}

fn aet_policy(seed: u64) -> DualHeadPolicy {
    let mut cfg = PolicyConfig::new(3, 2, 4, Variant::Aet);
    cfg.hidden = 16;
    cfg.msg_dim = 8;
    cfg.heads = 2;
    DualHeadPolicy::init(cfg, &mut rng(seed)).unwrap()
}

fn zero_param(policy: &mut DualHeadPolicy, name: &str) {
    let id = policy.params.id(name).unwrap();
    policy.params.value_mut(id).data_mut().fill(0.0);
}

#[test]
fn zeroed_heads_give_equal_logits_and_zero_trigger() {
    let mut policy = et_policy(0);
    for name in ["action.w", "action.b", "trigger.w", "trigger.b"] {
        zero_param(&mut policy, name);
    }
    let features = assemble_features(&[0.3, -0.8, 1.2], &[0.5, -0.5], Some(2), 4);
    let (action_logits, trigger_logit) = policy.forward_values(&features, None).unwrap();
    assert!(action_logits.iter().all(|&l| l == 0.0));
    assert_eq!(trigger_logit, 0.0);
}

#[test]
fn forward_is_deterministic() {
    let policy = et_policy(7);
    let features = assemble_features(&[0.1, 0.2, 0.3], &[0.0, -1.0], Some(0), 4);
    let (a1, t1) = policy.forward_values(&features, None).unwrap();
    let (a2, t2) = policy.forward_values(&features, None).unwrap();
    assert_eq!(a1, a2);
    assert_eq!(t1.to_bits(), t2.to_bits());
    assert!(a1.iter().all(|l| l.is_finite()) && t1.is_finite());
}

#[test]
fn forward_rejects_wrong_dimensions() {
    let policy = et_policy(1);
    assert!(policy.forward_values(&[0.0; 3], None).is_err());
    assert!(policy.forward_values(&[0.0; 9], Some(&[0.0; 8])).is_err());
}

#[test]
fn log_probability_gradients_pass_finite_differences() {
    // Score-function pieces used by every learner: logp of a fixed action
    // plus logp of a fixed trigger bit, differentiated through the trunk.
    let mut policy = et_policy(3);
    let features = assemble_features(&[0.4, -0.2, 0.9], &[0.3, 0.1], Some(1), 4);
    let action = 2usize;
    let trigger_bit = 1u8;
    let cfg_feature_dim = policy.cfg.feature_dim();
    let forward = move |tape: &mut Tape, params: &ParamStore| -> NodeId {
        // Rebuild the same graph as DualHeadPolicy::forward against the
        // store being perturbed by the checker.
        let f = tape.constant(Tensor::from_vec(1, cfg_feature_dim, features.clone()));
        let w1 = tape.param(params, params.id("trunk.w1").unwrap());
        let b1 = tape.param(params, params.id("trunk.b1").unwrap());
        let w2 = tape.param(params, params.id("trunk.w2").unwrap());
        let b2 = tape.param(params, params.id("trunk.b2").unwrap());
        let h = tape.affine(f, w1, b1);
        let h = tape.tanh(h);
        let h = tape.affine(h, w2, b2);
        let h = tape.tanh(h);
        let aw = tape.param(params, params.id("action.w").unwrap());
        let ab = tape.param(params, params.id("action.b").unwrap());
        let tw = tape.param(params, params.id("trigger.w").unwrap());
        let tb = tape.param(params, params.id("trigger.b").unwrap());
        let action_logits = tape.affine(h, aw, ab);
        let trigger_logit = tape.affine(h, tw, tb);
        let logp_all = tape.log_softmax_rows(action_logits);
        let logp_action = tape.gather_cols(logp_all, vec![action]);
        // logp(T=1) = −softplus(−l)
        let logp_trigger = if trigger_bit == 1 {
            let neg = tape.neg(trigger_logit);
            let sp = tape.softplus(neg);
            tape.neg(sp)
        } else {
            let sp = tape.softplus(trigger_logit);
            tape.neg(sp)
        };
        let joint = tape.add(logp_action, logp_trigger);
        tape.mean_all(joint)
    };
    let err = finite_diff_check(forward, &mut policy.params, 1e-5).unwrap();
    assert!(err <= 1e-4, "logp gradient check error {err}");
}

#[test]
fn sample_heads_saturated_logits() {
    let mut r = rng(0);
    for _ in 0..50 {
        let s = sample_heads(&[50.0, -50.0, -50.0], 50.0, &mut r);
        assert_eq!(s.action, 0);
        assert_eq!(s.trigger, 1);
        assert!(s.logp_action.abs() < 1e-12, "logp_action ≈ 0, got {}", s.logp_action);
        assert!(s.logp_trigger.abs() < 1e-12);
    }
}

#[test]
fn sample_heads_uniform_frequency() {
    let mut r = rng(42);
    let logits = [0.7; 4];
    let mut counts = [0usize; 4];
    let draws = 100_000;
    for _ in 0..draws {
        let s = sample_heads(&logits, 0.0, &mut r);
        counts[s.action] += 1;
    }
    for &c in &counts {
        let freq = c as f64 / draws as f64;
        assert!((freq - 0.25).abs() < 0.01, "frequency {freq}");
    }
}

#[test]
fn sample_heads_seeded_determinism() {
    let draw = || {
        let mut r = rng(1234);
        sample_heads(&[0.3, -0.1, 0.2], -0.4, &mut r)
    };
    assert_eq!(draw(), draw());
}

#[test]
fn sampled_logps_match_distribution() {
    let logits = [1.0, 0.0, -1.0];
    let mut r = rng(9);
    let max = 1.0f64;
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    for _ in 0..200 {
        let s = sample_heads(&logits, 0.8, &mut r);
        let expect = logits[s.action] - max - z.ln();
        assert!((s.logp_action - expect).abs() < 1e-12);
        let p = 1.0 / (1.0 + (-0.8f64).exp());
        let expect_t = if s.trigger == 1 { p.ln() } else { (1.0 - p).ln() };
        assert!((s.logp_trigger - expect_t).abs() < 1e-9);
    }
}

#[test]
fn embed_message_zero_weights_gives_zero() {
    let mut policy = aet_policy(5);
    zero_param(&mut policy, "embed.w");
    zero_param(&mut policy, "embed.b");
    let m = policy.embed_message(&[0.9, -0.4, 0.2], 3, 1).unwrap();
    assert!(m.embedding.iter().all(|&v| v == 0.0));
    assert_eq!((m.sender, m.sent_at), (1, 3));
}

#[test]
fn embed_message_matches_affine_tanh_oracle() {
    let policy = aet_policy(6);
    let obs = [0.25, -0.75, 0.5];
    let m = policy.embed_message(&obs, 0, 0).unwrap();
    assert_eq!(m.embedding, policy.embed_message(&obs, 0, 0).unwrap().embedding);

    let w = policy.params.value(policy.params.id("embed.w").unwrap());
    let b = policy.params.value(policy.params.id("embed.b").unwrap());
    for c in 0..w.cols() {
        let mut acc = b.get(0, c);
        for (r, &o) in obs.iter().enumerate() {
            acc += o * w.get(r, c);
        }
        assert!((m.embedding[c] - acc.tanh()).abs() < 1e-12);
    }
}

#[test]
fn embed_rejected_outside_attention_variant() {
    let policy = et_policy(2);
    assert!(policy.embed_message(&[0.0, 0.0, 0.0], 0, 0).is_err());
    assert!(policy.aggregate_values(&[0.0; 3], &[]).is_err());
}

#[test]
fn empty_message_set_yields_zero_context() {
    let policy = aet_policy(8);
    let ctx = policy.aggregate_values(&[0.5, 0.1, -0.3], &[]).unwrap();
    assert_eq!(ctx, vec![0.0; policy.cfg.msg_dim]);
}

#[test]
fn singleton_message_weights_are_one() {
    let policy = aet_policy(10);
    let msg = policy.embed_message(&[0.2, 0.8, -0.5], 0, 1).unwrap();
    let weights = policy.attention_pattern(&[0.4, -0.1, 0.6], &[msg.embedding.clone()]).unwrap();
    for head in &weights {
        assert_eq!(head.len(), 1);
        assert!((head[0] - 1.0).abs() < 1e-15);
    }
    // Context equals the output projection of the message's value vector.
    let ctx = policy.aggregate_values(&[0.4, -0.1, 0.6], &[msg.embedding.clone()]).unwrap();
    let wv = policy.params.value(policy.params.id("attn.wv").unwrap());
    let wo = policy.params.value(policy.params.id("attn.wo").unwrap());
    let v = Tensor::row(&msg.embedding).matmul(wv);
    let expect = v.matmul(wo);
    for (a, e) in ctx.iter().zip(expect.data()) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn identical_messages_split_weights_evenly() {
    let policy = aet_policy(11);
    let m = policy.embed_message(&[0.1, 0.4, -0.2], 0, 0).unwrap().embedding;
    let weights = policy
        .attention_pattern(&[0.7, 0.0, 0.3], &[m.clone(), m.clone()])
        .unwrap();
    for head in &weights {
        assert!((head[0] - 0.5).abs() < 1e-12);
        assert!((head[1] - 0.5).abs() < 1e-12);
    }
}

#[test]
fn attention_matches_direct_evaluation_oracle() {
    // Straight-line reimplementation of multi-head attention, independent
    // of the tape machinery, on three random-ish messages.
    let policy = aet_policy(13);
    let query_obs = [0.3, -0.6, 0.1];
    let msgs: Vec<Vec<f64>> = [
        [0.9, -0.3, 0.5],
        [-0.2, 0.7, 0.05],
        [0.4, 0.4, -0.8],
    ]
    .iter()
    .map(|o| policy.embed_message(o, 0, 0).unwrap().embedding)
    .collect();
    let got = policy.aggregate_values(&query_obs, &msgs).unwrap();

    let p = &policy.params;
    let get = |name: &str| p.value(p.id(name).unwrap());
    let q_emb = policy.embed_message(&query_obs, 0, 0).unwrap().embedding;
    let q = Tensor::row(&q_emb).matmul(get("attn.wq"));
    let mut stacked = Vec::new();
    for m in &msgs {
        stacked.extend_from_slice(m);
    }
    let m = Tensor::from_vec(3, policy.cfg.msg_dim, stacked);
    let k = m.matmul(get("attn.wk"));
    let v = m.matmul(get("attn.wv"));
    let dk = policy.cfg.msg_dim / policy.cfg.heads;
    let mut concat = vec![0.0; policy.cfg.msg_dim];
    for h in 0..policy.cfg.heads {
        // scores, softmax, weighted sum entirely by hand
        let mut scores = vec![0.0; 3];
        for (j, s) in scores.iter_mut().enumerate() {
            let mut dot = 0.0;
            for c in 0..dk {
                dot += q.get(0, h * dk + c) * k.get(j, h * dk + c);
            }
            *s = dot / (dk as f64).sqrt();
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for c in 0..dk {
            let mut acc = 0.0;
            for j in 0..3 {
                acc += exps[j] / z * v.get(j, h * dk + c);
            }
            concat[h * dk + c] = acc;
        }
    }
    let expect = Tensor::row(&concat).matmul(get("attn.wo"));
    for (a, e) in got.iter().zip(expect.data()) {
        assert!((a - e).abs() < 1e-10, "{a} vs {e}");
    }
}

#[test]
fn attention_is_permutation_equivariant() {
    let policy = aet_policy(17);
    let query = [0.2, 0.5, -0.9];
    let msgs: Vec<Vec<f64>> = [[0.3, 0.1, 0.7], [-0.5, 0.2, 0.0], [0.8, -0.8, 0.4], [0.0, 0.9, -0.1]]
        .iter()
        .map(|o| policy.embed_message(o, 0, 0).unwrap().embedding)
        .collect();
    let base = policy.aggregate_values(&query, &msgs).unwrap();
    let permutations: [[usize; 4]; 3] = [[3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]];
    for perm in permutations {
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| msgs[i].clone()).collect();
        let got = policy.aggregate_values(&query, &shuffled).unwrap();
        for (a, b) in got.iter().zip(&base) {
            assert!((a - b).abs() <= 1e-12, "permutation changed context: {a} vs {b}");
        }
    }
}

#[test]
fn attention_weights_normalized_and_nonnegative() {
    let policy = aet_policy(19);
    for count in 1..=5 {
        let msgs: Vec<Vec<f64>> = (0..count)
            .map(|i| {
                let obs = [0.1 * i as f64, -0.3 + 0.2 * i as f64, 0.05 * i as f64];
                policy.embed_message(&obs, 0, i).unwrap().embedding
            })
            .collect();
        let weights = policy.attention_pattern(&[0.33, -0.21, 0.57], &msgs).unwrap();
        assert_eq!(weights.len(), policy.cfg.heads);
        for head in &weights {
            assert!(head.iter().all(|&w| w >= 0.0));
            let sum: f64 = head.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn uniform_key_shifts_leave_weights_unchanged() {
    // Shifting every message by the same vector shifts all keys identically,
    // which cancels in the softmax at the logit level.
    let policy = aet_policy(23);
    let query = [0.5, 0.5, -0.5];
    let msgs: Vec<Vec<f64>> = [[0.2, -0.1, 0.9], [0.7, 0.3, -0.4], [-0.6, 0.0, 0.2]]
        .iter()
        .map(|o| policy.embed_message(o, 0, 0).unwrap().embedding)
        .collect();
    let shift = 0.37;
    let shifted: Vec<Vec<f64>> = msgs
        .iter()
        .map(|m| m.iter().map(|v| v + shift).collect())
        .collect();
    let base = policy.attention_pattern(&query, &msgs).unwrap();
    let moved = policy.attention_pattern(&query, &shifted).unwrap();
    // Note: scores change by q·(δ·Wk)ᵀ, identical across messages.
    for (h_base, h_moved) in base.iter().zip(&moved) {
        for (a, b) in h_base.iter().zip(h_moved) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn aet_forward_with_context_passes_gradient_check() {
    // Differentiates through trunk, heads, embedding, and attention at once.
    let mut policy = aet_policy(29);
    let features = assemble_features(&[0.1, -0.5, 0.8], &[0.2, -0.2], Some(3), 4);
    let query_obs = vec![0.1, -0.5, 0.8];
    let peer_msgs = vec![
        policy.embed_message(&[0.6, 0.2, -0.3], 0, 1).unwrap().embedding,
        policy.embed_message(&[-0.4, 0.9, 0.1], 0, 2).unwrap().embedding,
    ];
    let cfg = policy.cfg.clone();
    let err = finite_diff_check(
        |tape, params| {
            let ids = [
                params.id("attn.wq").unwrap(),
                params.id("attn.wk").unwrap(),
                params.id("attn.wv").unwrap(),
                params.id("attn.wo").unwrap(),
            ];
            let obs = tape.constant(Tensor::row(&query_obs));
            let ew = tape.param(params, params.id("embed.w").unwrap());
            let eb = tape.param(params, params.id("embed.b").unwrap());
            let emb = tape.affine(obs, ew, eb);
            let emb = tape.tanh(emb);
            let ctx = attention_aggregate(tape, params, ids, cfg.attention_dims(), emb, &peer_msgs)
                .unwrap();
            let f = tape.constant(Tensor::from_vec(1, cfg.feature_dim(), features.clone()));
            let input = tape.concat_cols(f, ctx);
            let w1 = tape.param(params, params.id("trunk.w1").unwrap());
            let b1 = tape.param(params, params.id("trunk.b1").unwrap());
            let w2 = tape.param(params, params.id("trunk.w2").unwrap());
            let b2 = tape.param(params, params.id("trunk.b2").unwrap());
            let h = tape.affine(input, w1, b1);
            let h = tape.tanh(h);
            let h = tape.affine(h, w2, b2);
            let h = tape.tanh(h);
            let aw = tape.param(params, params.id("action.w").unwrap());
            let ab = tape.param(params, params.id("action.b").unwrap());
            let logits = tape.affine(h, aw, ab);
            let logp = tape.log_softmax_rows(logits);
            let picked = tape.gather_cols(logp, vec![1]);
            tape.mean_all(picked)
        },
        &mut policy.params,
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-4, "aet gradient check error {err}");
}
