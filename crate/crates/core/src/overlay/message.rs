use std::sync::Arc;

use crate::learned_hash::RmiModel;
use crate::store::Value;

use super::finger::FingerSlot;
use super::peer::{PeerIdx, PeerRef};

pub type ReqId = u64;

/// What the owner of a routed identifier is asked to do.
#[derive(Debug, Clone, PartialEq)]
pub enum RouteOp {
    FindSuccessor(FindPurpose),
    Lookup { key: u64 },
    Put { key: u64, value: Value },
    Range { start_key: u64, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FindPurpose {
    Join,
    Finger(FingerSlot),
    /// Stand-alone `find_successor`, recorded like a lookup.
    Probe,
}

/// A request travelling greedily toward the owner of `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteMsg {
    pub req: ReqId,
    pub target: u64,
    pub op: RouteOp,
    pub origin: PeerRef,
    pub hops: u32,
    pub msgs: u32,
    /// Retries spent on the current hop.
    pub retries: u32,
    /// The sender decided the receiver owns `target`.
    pub final_hop: bool,
    pub trace: Vec<PeerIdx>,
}

/// A range query walking the successor chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeMsg {
    pub req: ReqId,
    pub origin: PeerRef,
    /// Smallest hash the receiver should serve.
    pub floor: u64,
    pub start_key: u64,
    pub remaining: usize,
    pub results: Vec<u64>,
    pub msgs: u32,
    pub hops: u32,
    pub forwards: u32,
    pub retries: u32,
    pub short: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborPurpose {
    Successor,
    Predecessor,
    Join,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferReason {
    Join,
    Depart,
    Reshelve,
}

/// Peer state carried by heartbeats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Beat {
    pub sender: PeerRef,
    pub version: u32,
    pub digest: u64,
    pub ready: bool,
    pub ack: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Msg {
    Route(RouteMsg),
    FindSuccessorReply {
        req: ReqId,
        purpose: FindPurpose,
        owner: PeerRef,
        hops: u32,
        msgs: u32,
    },
    LookupReply {
        req: ReqId,
        value: Option<Value>,
        hops: u32,
        msgs: u32,
    },
    PutAck {
        req: ReqId,
        hops: u32,
        msgs: u32,
    },
    RangeForward(RangeMsg),
    RangeReply(RangeMsg),
    Notify(PeerRef),
    /// "Your successor is me": sent by a joining peer to its predecessor.
    NotifySuccessor(PeerRef),
    GetNeighbors(NeighborPurpose),
    NeighborsReply {
        purpose: NeighborPurpose,
        predecessor: Option<PeerRef>,
        successors: Vec<PeerRef>,
        predecessors: Vec<PeerRef>,
    },
    GetFingers,
    FingersReply(Vec<Option<PeerRef>>),
    TransferKeys {
        pairs: Vec<(u64, Value)>,
        version: u32,
        reason: TransferReason,
        ttl: u32,
    },
    Leave {
        successors: Vec<PeerRef>,
        predecessors: Vec<PeerRef>,
    },
    Heartbeat(Beat),
    ModelConfirm {
        session: u64,
        version: u32,
    },
    /// Participant answer; no blob means busy.
    ModelPush {
        session: u64,
        blob: Option<Vec<u8>>,
    },
    ModelPull,
    ModelFull(Arc<RmiModel>),
}

impl Msg {
    /// Messages that expect the receiver to act and are reported back to
    /// the sender as undeliverable when it is gone.
    pub fn is_rpc(&self) -> bool {
        matches!(
            self,
            Msg::Route(_)
                | Msg::RangeForward(_)
                | Msg::GetNeighbors(_)
                | Msg::GetFingers
                | Msg::TransferKeys { .. }
                | Msg::ModelConfirm { .. }
                | Msg::ModelPull
        )
    }

    /// Replies a joining peer must receive before it is part of the ring.
    pub fn reaches_unjoined(&self) -> bool {
        matches!(
            self,
            Msg::FindSuccessorReply { .. }
                | Msg::NeighborsReply { .. }
                | Msg::FingersReply(_)
                | Msg::TransferKeys { .. }
                | Msg::LookupReply { .. }
                | Msg::PutAck { .. }
                | Msg::RangeReply(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Msg::Route(_) => "route",
            Msg::FindSuccessorReply { .. } => "find_successor_reply",
            Msg::LookupReply { .. } => "lookup_reply",
            Msg::PutAck { .. } => "put_ack",
            Msg::RangeForward(_) => "range_forward",
            Msg::RangeReply(_) => "range_reply",
            Msg::Notify(_) => "notify",
            Msg::NotifySuccessor(_) => "notify_successor",
            Msg::GetNeighbors(_) => "get_neighbors",
            Msg::NeighborsReply { .. } => "neighbors_reply",
            Msg::GetFingers => "get_fingers",
            Msg::FingersReply(_) => "fingers_reply",
            Msg::TransferKeys { .. } => "transfer_keys",
            Msg::Leave { .. } => "leave",
            Msg::Heartbeat(_) => "heartbeat",
            Msg::ModelConfirm { .. } => "model_confirm",
            Msg::ModelPush { .. } => "model_push",
            Msg::ModelPull => "model_pull",
            Msg::ModelFull(_) => "model_full",
        }
    }
}
