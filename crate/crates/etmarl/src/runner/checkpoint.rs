//! Parameter checkpoints: one JSON document per run with every agent's
//! policy and critic parameters plus a metadata block. Values round-trip
//! bit-exactly (shortest-representation f64 encoding).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{Critic, CriticInput};
use crate::numerics::{ParamStore, Tensor};
use crate::policy::{DualHeadPolicy, PolicyConfig, Variant};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub env: String,
    pub algo: String,
    pub variant: String,
    pub seed: u64,
    pub agent_count: usize,
    pub obs_dim: usize,
    pub err_dim: usize,
    pub action_count: usize,
    pub hidden: usize,
    pub msg_dim: usize,
    pub heads: usize,
    pub critic_input_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamBlob {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// Serialized form: parameter names map to shape + flat values; a BTreeMap
/// keeps the byte layout deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub metadata: CheckpointMeta,
    pub params: BTreeMap<String, ParamBlob>,
}

impl Checkpoint {
    pub fn capture(
        meta: CheckpointMeta,
        policies: &[&DualHeadPolicy],
        critics: &[&Critic],
    ) -> Checkpoint {
        let mut params = BTreeMap::new();
        for (i, policy) in policies.iter().enumerate() {
            dump(&mut params, &format!("agent{i}/policy/"), &policy.params);
        }
        for (i, critic) in critics.iter().enumerate() {
            dump(&mut params, &format!("agent{i}/critic/"), &critic.params);
        }
        Checkpoint { metadata: meta, params }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Rebuild the policies recorded in this checkpoint.
    pub fn restore_policies(&self) -> Result<Vec<DualHeadPolicy>> {
        let meta = &self.metadata;
        let variant = Variant::parse(&meta.variant)?;
        (0..meta.agent_count)
            .map(|i| {
                let cfg = PolicyConfig {
                    hidden: meta.hidden,
                    msg_dim: meta.msg_dim,
                    heads: meta.heads,
                    ..PolicyConfig::new(meta.obs_dim, meta.err_dim, meta.action_count, variant)
                };
                let store = self.collect_store(&format!("agent{i}/policy/"))?;
                DualHeadPolicy::from_store(cfg, store)
            })
            .collect()
    }

    /// Rebuild the critics recorded in this checkpoint.
    pub fn restore_critics(&self, mode: CriticInput) -> Result<Vec<Critic>> {
        let meta = &self.metadata;
        (0..meta.agent_count)
            .map(|i| {
                let store = self.collect_store(&format!("agent{i}/critic/"))?;
                Critic::from_store(meta.critic_input_dim, mode, store)
            })
            .collect()
    }

    fn collect_store(&self, prefix: &str) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        let mut found = false;
        for (key, blob) in self.params.range(prefix.to_string()..) {
            if !key.starts_with(prefix) {
                break;
            }
            found = true;
            let name = &key[prefix.len()..];
            let [rows, cols] = blob.shape;
            if rows * cols != blob.values.len() {
                return Err(Error::Config(format!(
                    "checkpoint blob `{key}` shape {rows}x{cols} does not match {} values",
                    blob.values.len()
                )));
            }
            store.insert(name, Tensor::from_vec(rows, cols, blob.values.clone()))?;
        }
        if !found {
            return Err(Error::Config(format!("checkpoint has no parameters under `{prefix}`")));
        }
        Ok(store)
    }
}

fn dump(out: &mut BTreeMap<String, ParamBlob>, prefix: &str, store: &ParamStore) {
    for id in store.ids() {
        let value = store.value(id);
        out.insert(
            format!("{prefix}{}", store.name(id)),
            ParamBlob {
                shape: [value.rows(), value.cols()],
                values: value.data().to_vec(),
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let cfg = PolicyConfig::new(3, 1, 4, Variant::Aet);
        let policy = DualHeadPolicy::init(cfg.clone(), &mut rng).unwrap();
        let critic = Critic::init(cfg.feature_dim(), 64, CriticInput::Local, &mut rng).unwrap();
        let meta = CheckpointMeta {
            env: "integrator".into(),
            algo: "ippo".into(),
            variant: "aet".into(),
            seed: 99,
            agent_count: 1,
            obs_dim: 3,
            err_dim: 1,
            action_count: 4,
            hidden: 64,
            msg_dim: 32,
            heads: 4,
            critic_input_dim: cfg.feature_dim(),
        };
        let ck = Checkpoint::capture(meta, &[&policy], &[&critic]);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        ck.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();

        let policies = loaded.restore_policies().unwrap();
        for id in policy.params.ids() {
            let name = policy.params.name(id);
            let restored_id = policies[0].params.id(name).unwrap();
            let (a, b) = (policy.params.value(id), policies[0].params.value(restored_id));
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "parameter {name} not bit-exact");
            }
        }
        let critics = loaded.restore_critics(CriticInput::Local).unwrap();
        assert_eq!(critics[0].input_dim, cfg.feature_dim());

        // Re-serialization is byte-identical.
        let again = serde_json::to_string_pretty(&loaded).unwrap();
        let first = std::fs::read_to_string(&path).unwrap();
        assert_eq!(first, again);
    }
}
