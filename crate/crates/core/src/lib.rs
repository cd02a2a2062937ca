//! Subnetwork-selective fine-tuning over a small feed-forward network.
//!
//! The crate provides five interchangeable update strategies — vanilla
//! fine-tuning, Mixout, child tuning with a fixed Fisher mask, and two
//! dynamic parameter-selection variants (dense and mix) that re-derive
//! their subnetwork each cycle from gradients accumulated while training —
//! plus an optimizer loop with timing instrumentation and a synthetic
//! pretrain/fine-tune benchmark harness for multi-seed stability studies.

pub mod error;
pub mod net;
pub mod optim;
pub mod strategy;
pub mod train;
pub mod tensor;

pub use error::{Error, Result};
