//! mdbook cannot run a book's code fences against a crate, so each chapter
//! is included here as a module's documentation and `cargo test --doc`
//! executes every snippet. A failing chapter names its module below.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/tensors-and-gradients.md")]
pub mod tensors_and_gradients {}

#[doc = include_str!("../../../book/src/dual-head-policies.md")]
pub mod dual_head_policies {}

#[doc = include_str!("../../../book/src/event-triggering.md")]
pub mod event_triggering {}

#[doc = include_str!("../../../book/src/attention-communication.md")]
pub mod attention_communication {}

#[doc = include_str!("../../../book/src/learners.md")]
pub mod learners {}

#[doc = include_str!("../../../book/src/environments.md")]
pub mod environments {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/running-experiments.md")]
pub mod running_experiments {}
