//! Service-oriented TSCH scheduling.
//!
//! Tasks enter at the Root, are provisioned with slots by cluster leaders
//! and, when a cluster lacks a capability, staffed by recruiting mobile
//! nodes. The crate also carries four comparison schedulers and a
//! deterministic slot-level simulator that runs all of them on the same
//! scenarios.

pub mod baselines;
pub mod codec;
pub mod model;
pub mod monaas;
pub mod net;
pub mod roles;
pub mod scheduler;
pub mod sim;
pub mod strategy;
pub mod trace;
pub mod tsch;
