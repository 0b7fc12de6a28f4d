//! LEAD: a distributed hash table whose key placement comes from a learned,
//! order-preserving model, together with a deterministic discrete-event
//! simulator and a batched Chord baseline.

pub mod balancer;
pub mod config;
pub mod baseline;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod frm;
pub mod learned_hash;
pub mod overlay;
pub mod query;
pub mod rig;
pub mod ring;
pub mod rng;
pub mod simnet;
pub mod store;

pub use error::{LeadError, Result};
pub use ring::{HashSpace, Vid};
