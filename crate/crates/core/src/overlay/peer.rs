use std::collections::BTreeMap;
use std::sync::Arc;

use crate::frm::UpdateState;
use crate::learned_hash::RmiModel;
use crate::ring::{HashSpace, Vid};
use crate::simnet::Time;
use crate::store::OrderedStore;

use super::finger::FingerTable;

/// Index of a virtual peer in the network; doubles as its address.
pub type PeerIdx = usize;

/// A peer as known by another peer: its ring identifier and address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerRef {
    pub vid: Vid,
    pub idx: PeerIdx,
}

/// What a peer knows about a neighbor from its heartbeats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Monitor {
    pub last_heard: Time,
    pub suspected: bool,
    pub version: u32,
    pub digest: u64,
    pub ready: bool,
    /// `last_heard` value a suspicion check is already scheduled for.
    pub pending: Option<Time>,
}

/// Open FRM coordinator session.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: u64,
    pub base_version: u32,
    pub waiting: usize,
    /// Blob per responding participant; `None` when it answered busy.
    pub collected: BTreeMap<PeerIdx, Option<Vec<u8>>>,
}

#[derive(Debug, Clone)]
pub struct VirtualPeer {
    pub idx: PeerIdx,
    pub vid: Vid,
    pub node: usize,
    pub port: u16,
    pub alive: bool,
    /// Left for good (shed by the balancer); never rejoins.
    pub retired: bool,
    pub joined: bool,
    /// Bumped on crash and rejoin; timers from older epochs are void.
    pub epoch: u32,
    pub join_started: Time,
    pub successors: Vec<PeerRef>,
    pub predecessors: Vec<PeerRef>,
    pub predecessor: Option<PeerRef>,
    pub fingers: FingerTable,
    pub store: OrderedStore,
    pub active: Option<Arc<RmiModel>>,
    /// Digest of `active`, kept in step by [`VirtualPeer::set_active`].
    active_digest: u64,
    pub update: Option<RmiModel>,
    pub update_state: UpdateState,
    /// Peers this one believes dead, with the time of the verdict.
    pub failed: BTreeMap<PeerIdx, Time>,
    pub monitors: BTreeMap<PeerIdx, Monitor>,
    /// Requests served as owner, the Shadow Balancer's traffic signal.
    pub served: u64,
    pub session: Option<Session>,
    /// Coordinator whose session this peer currently belongs to.
    pub busy_with: Option<PeerIdx>,
    pub pulling: Option<Time>,
    pub adopted_versions: Vec<u32>,
    /// Ownership may have changed; re-check the store on the next tick.
    pub reshelve_pending: bool,
}

impl VirtualPeer {
    pub fn new(idx: PeerIdx, vid: Vid, node: usize, port: u16, space: HashSpace, threshold: f64) -> Self {
        VirtualPeer {
            idx,
            vid,
            node,
            port,
            alive: true,
            retired: false,
            joined: false,
            epoch: 0,
            join_started: 0,
            successors: Vec::new(),
            predecessors: Vec::new(),
            predecessor: None,
            fingers: FingerTable::new(space),
            store: OrderedStore::new(),
            active: None,
            active_digest: 0,
            update: None,
            update_state: UpdateState::new(threshold),
            failed: BTreeMap::new(),
            monitors: BTreeMap::new(),
            served: 0,
            session: None,
            busy_with: None,
            pulling: None,
            adopted_versions: Vec::new(),
            reshelve_pending: false,
        }
    }

    pub fn me(&self) -> PeerRef {
        PeerRef {
            vid: self.vid,
            idx: self.idx,
        }
    }

    /// Primary successor; the peer itself when it knows no other.
    pub fn successor(&self) -> PeerRef {
        self.successors.first().copied().unwrap_or_else(|| self.me())
    }

    pub fn model_version(&self) -> u32 {
        self.active.as_ref().map_or(0, |m| m.version())
    }

    pub fn model_digest(&self) -> u64 {
        self.active_digest
    }

    pub fn set_active(&mut self, model: Arc<RmiModel>) {
        self.active_digest = model.digest();
        self.active = Some(model);
    }

    /// Successor and predecessor list members, without self or duplicates.
    pub fn neighbors(&self) -> Vec<PeerRef> {
        let mut out: Vec<PeerRef> = Vec::with_capacity(self.successors.len() + self.predecessors.len());
        for p in self.successors.iter().chain(&self.predecessors) {
            if p.idx != self.idx && !out.iter().any(|q| q.idx == p.idx) {
                out.push(*p);
            }
        }
        out
    }

    /// Drop all routing state, keep the store.
    pub fn reset_routing(&mut self) {
        self.joined = false;
        self.successors.clear();
        self.predecessors.clear();
        self.predecessor = None;
        self.fingers.clear();
        self.failed.clear();
        self.monitors.clear();
        self.session = None;
        self.busy_with = None;
        self.pulling = None;
    }
}

/// Keep `list` ordered by clockwise distance from `from`, deduplicated,
/// without `from` itself, at most `r` long.
pub fn normalize_successors(space: HashSpace, from: Vid, list: &mut Vec<PeerRef>, r: usize) {
    list.retain(|p| p.vid != from);
    list.sort_by_key(|p| (space.distance(from.0, p.vid.0), p.idx));
    list.dedup_by_key(|p| p.idx);
    list.truncate(r);
}

/// Same as [`normalize_successors`] in the counter-clockwise direction.
pub fn normalize_predecessors(space: HashSpace, from: Vid, list: &mut Vec<PeerRef>, r: usize) {
    list.retain(|p| p.vid != from);
    list.sort_by_key(|p| (space.distance(p.vid.0, from.0), p.idx));
    list.dedup_by_key(|p| p.idx);
    list.truncate(r);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(v: u64, idx: usize) -> PeerRef {
        PeerRef { vid: Vid(v), idx }
    }

    #[test]
    fn lists_sort_by_ring_distance() {
        let s = HashSpace::new(8).unwrap();
        let mut succ = vec![r(10, 1), r(200, 2), r(60, 3), r(10, 1), r(100, 0)];
        normalize_successors(s, Vid(100), &mut succ, 3);
        assert_eq!(succ, vec![r(200, 2), r(10, 1), r(60, 3)]);
        let mut pred = vec![r(10, 1), r(200, 2), r(60, 3)];
        normalize_predecessors(s, Vid(100), &mut pred, 2);
        assert_eq!(pred, vec![r(60, 3), r(10, 1)]);
    }
}
