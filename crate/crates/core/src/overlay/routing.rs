//! Greedy forwarding toward the owner of an identifier.
//!
//! Decisions use only successor lists and finger tables, never the learned
//! model, so a peer with a stale model can misplace a key but never
//! misroute a message.

use super::message::{FindPurpose, Msg, RouteMsg, RouteOp};
use super::network::Network;
use super::peer::{PeerIdx, PeerRef};
use crate::query::RangeStart;

/// Where a routed message goes next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hop {
    /// This peer owns the identifier.
    Local,
    /// The next peer owns it.
    Final(PeerRef),
    /// The next peer is closer.
    Forward(PeerRef),
}

impl Network {
    pub fn next_hop(&self, at: PeerIdx, target: u64) -> Hop {
        let space = self.cfg.space;
        let p = &self.peers[at];
        let me = p.vid;
        if p.successors.is_empty() {
            return Hop::Local;
        }
        if let Some(pred) = p.predecessor {
            if pred.idx == at || space.in_half_open(target, pred.vid.0, me.0) {
                return Hop::Local;
            }
        }
        let succ = p.successor();
        if space.in_half_open(target, me.0, succ.vid.0) {
            return Hop::Final(succ);
        }
        let best = p
            .successors
            .iter()
            .copied()
            .chain(p.fingers.entries())
            .filter(|q| q.idx != at && !p.failed.contains_key(&q.idx))
            .filter(|q| space.in_open(q.vid.0, me.0, target))
            .max_by_key(|q| (space.distance(me.0, q.vid.0), std::cmp::Reverse(q.idx)));
        match best {
            Some(b) => Hop::Forward(b),
            None => Hop::Final(succ),
        }
    }

    /// Start routing `op` toward `target` from `origin`.
    pub(crate) fn start_route(&mut self, origin: PeerIdx, req: u64, target: u64, op: RouteOp) {
        let m = RouteMsg {
            req,
            target,
            op,
            origin: self.peers[origin].me(),
            hops: 0,
            msgs: 0,
            retries: 0,
            final_hop: false,
            trace: vec![origin],
        };
        self.advance_route(origin, m);
    }

    pub(crate) fn on_route(&mut self, at: PeerIdx, mut m: RouteMsg) {
        m.retries = 0;
        if m.trace.last() != Some(&at) {
            m.trace.push(at);
        }
        if m.final_hop {
            self.execute_route(at, m);
        } else {
            self.advance_route(at, m);
        }
    }

    fn advance_route(&mut self, at: PeerIdx, mut m: RouteMsg) {
        let (next, final_hop) = match self.next_hop(at, m.target) {
            Hop::Local => return self.execute_route(at, m),
            Hop::Final(q) => (q, true),
            Hop::Forward(q) => (q, false),
        };
        if next.idx == at {
            return self.execute_route(at, m);
        }
        m.hops += 1;
        m.msgs += 1;
        m.final_hop = final_hop;
        self.send(at, next.idx, Msg::Route(m));
    }

    /// The hop `at` sent `m` to timed out.
    pub(crate) fn retry_route(&mut self, at: PeerIdx, mut m: RouteMsg) {
        m.hops = m.hops.saturating_sub(1);
        if m.retries >= self.cfg.hop_retries {
            log::debug!("req {}: lookup-failed at peer {at}", m.req);
            self.fail_query(m.req);
            if let RouteOp::FindSuccessor(FindPurpose::Join) = m.op {
                self.restart_join(m.origin.idx);
            }
            return;
        }
        m.retries += 1;
        self.advance_route(at, m);
    }

    fn execute_route(&mut self, at: PeerIdx, m: RouteMsg) {
        let origin = m.origin.idx;
        let reply_msgs = m.msgs + u32::from(origin != at);
        match m.op {
            RouteOp::FindSuccessor(purpose) => {
                if matches!(purpose, FindPurpose::Probe) {
                    if let Some(r) = self.records.get_mut(&m.req) {
                        r.trace = m.trace.clone();
                    }
                }
                let owner = self.peers[at].me();
                self.send(
                    at,
                    origin,
                    Msg::FindSuccessorReply {
                        req: m.req,
                        purpose,
                        owner,
                        hops: m.hops,
                        msgs: reply_msgs,
                    },
                );
            }
            RouteOp::Lookup { key } => {
                self.peers[at].served += 1;
                let value = self.peers[at].store.get(key).cloned();
                if let Some(r) = self.records.get_mut(&m.req) {
                    r.trace = m.trace;
                    r.owner = Some(self.peers[at].me());
                }
                self.send(
                    at,
                    origin,
                    Msg::LookupReply {
                        req: m.req,
                        value,
                        hops: m.hops,
                        msgs: reply_msgs,
                    },
                );
            }
            RouteOp::Put { key, value } => {
                self.peers[at].served += 1;
                let (index, new) = self.peers[at].store.insert(key, value);
                if new {
                    self.record_insert(at, key, index);
                }
                if let Some(r) = self.records.get_mut(&m.req) {
                    r.trace = m.trace;
                    r.owner = Some(self.peers[at].me());
                }
                self.send(
                    at,
                    origin,
                    Msg::PutAck {
                        req: m.req,
                        hops: m.hops,
                        msgs: reply_msgs,
                    },
                );
            }
            RouteOp::Range { start_key, n } => {
                self.peers[at].served += 1;
                if let Some(r) = self.records.get_mut(&m.req) {
                    r.trace = m.trace;
                    r.owner = Some(self.peers[at].me());
                }
                self.begin_range(
                    at,
                    RangeStart {
                        req: m.req,
                        origin: m.origin,
                        floor: m.target,
                        start_key,
                        n,
                        hops: m.hops,
                        msgs: m.msgs,
                    },
                );
            }
        }
    }

    pub(crate) fn on_find_successor_reply(
        &mut self,
        at: PeerIdx,
        req: u64,
        purpose: FindPurpose,
        owner: PeerRef,
        hops: u32,
        msgs: u32,
    ) {
        match purpose {
            FindPurpose::Join => self.join_found_successor(at, owner),
            FindPurpose::Finger(slot) => {
                if !self.peers[at].failed.contains_key(&owner.idx) {
                    self.peers[at].fingers.set(slot, Some(owner));
                }
            }
            FindPurpose::Probe => self.complete_probe(req, owner, hops, msgs),
        }
    }
}
