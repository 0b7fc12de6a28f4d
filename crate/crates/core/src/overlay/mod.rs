//! Chord-style ring of virtual peers running on the simulator.
//!
//! Every peer keeps successor and predecessor lists, a decimal and a binary
//! finger table, and heartbeat monitors for its list neighbors. Messages
//! are routed recursively; the owner answers the origin directly.

mod finger;
mod maintenance;
mod message;
mod network;
mod peer;
mod routing;

pub use finger::{binary_target, decimal_target, FingerSlot, FingerTable};
pub use message::{Beat, FindPurpose, Msg, NeighborPurpose, RangeMsg, ReqId, RouteMsg, RouteOp, TransferReason};
pub use network::{NetConfig, NetStats, Network, Node, Placement, WorkItem};
pub(crate) use network::TimerKind;
pub use peer::{normalize_predecessors, normalize_successors, Monitor, PeerIdx, PeerRef, Session, VirtualPeer};
pub use routing::Hop;
