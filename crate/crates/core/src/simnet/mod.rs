//! Deterministic discrete-event simulation primitives: the event queue and
//! clock, latency topologies, churn and workload schedules.
//!
//! Time is kept in integer microseconds so that sub-millisecond latencies
//! from Euclidean or matrix topologies are not rounded away; reports convert
//! to logical milliseconds.

mod churn;
mod event;
mod topology;
mod workload;

pub use churn::{churn_schedule, ChurnAction, ChurnConfig, DurationDist, DEFAULT_PARETO_SHAPE};
pub use event::{ms, EventQueue, Time, MINUTE, MS, SECOND};
pub use topology::{Topology, TopologyKind};
pub use workload::{workload_times, QueryKind, WorkloadConfig};
