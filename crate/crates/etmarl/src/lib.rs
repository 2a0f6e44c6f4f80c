//! Event-triggered multi-agent policy-gradient learning.
//!
//! Agents learn a dual-head policy — an action head and a trigger head —
//! so that each one decides not only *what* to do but *when* to recompute
//! it; between events the last action is held. An attention variant adds
//! learned message passing gated by the same trigger. Three policy-gradient
//! learners (independent PPO, centralized-critic PPO, independent A2C) run
//! against three benchmark families, with a deterministic experiment
//! runner that emits CSV metric streams.

pub mod envs;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod numerics;
pub mod policy;
pub mod runner;
pub mod trigger;

pub use error::{Error, Result};
