//! Joint RRH association and packet scheduling for an all-mmWave cloud-RAN.
//!
//! A central unit (CU) holds a packet queue and, each slot, picks one remote
//! radio head (RRH) to serve a mobile user and how many packets to push over
//! that RRH's fronthaul. Fronthaul and access links follow independent
//! finite-state Markov chains; switching RRH costs signalling time.
//!
//! - [`channel`]: link chains and joint link transition probabilities.
//! - [`dynamics`]: handover cost, scheduling bounds, delivery, queue updates.
//! - [`exact`]: state indexing and the exact average-cost solver.
//! - [`learning`]: decomposed post-decision value learning.
//! - [`policies`]: the policy interface and the baselines.
//! - [`harness`]: the slot loop, metrics, configuration, sweeps and output.

pub mod channel;
pub mod dynamics;
pub mod error;
pub mod exact;
pub mod harness;
pub mod learning;
pub mod policies;

pub use error::{Error, Result};
