//! Put, lookup and range queries over the overlay, with per-query metrics.
//!
//! A range query routes to the owner of `hash(K)`, which serves what it
//! holds and passes the remainder down the successor chain. The last peer
//! sends the accumulated result straight to the origin, so a query costs
//! routing hops + chain forwards + one reply.

use std::fmt::Write as _;

use crate::overlay::{Msg, Network, PeerIdx, PeerRef, RangeMsg, ReqId, RouteOp, WorkItem};
use crate::overlay::FindPurpose;
use crate::simnet::{ms, Time};
use crate::store::{value_from_u64, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Lookup,
    Range,
    Put,
    /// Bare `find_successor` on an identifier.
    Probe,
    /// A batched Chord range: the aggregate over its single-key lookups.
    BatchRange,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Lookup => "lookup",
            OpKind::Range => "range",
            OpKind::Put => "put",
            OpKind::Probe => "probe",
            OpKind::BatchRange => "batch_range",
        }
    }
}

/// Outcome and cost of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub id: ReqId,
    pub kind: OpKind,
    pub origin: PeerIdx,
    pub key: u64,
    pub n: usize,
    pub start: Time,
    pub complete: Option<Time>,
    /// Overlay messages attributable to the query, replies included.
    pub messages: u32,
    /// Routing hops toward the owner.
    pub hops: u32,
    /// Successor-chain forwards of a range query.
    pub forwards: u32,
    pub success: bool,
    /// Fewer than `n` keys exist at or after the start key.
    pub short: bool,
    pub results: Vec<u64>,
    pub value: Option<Value>,
    pub owner: Option<PeerRef>,
    pub trace: Vec<PeerIdx>,
    /// Batch this lookup belongs to.
    pub parent: Option<u64>,
}

pub const CSV_HEADER: &str = "kind,start_ms,complete_ms,latency_ms,messages,hops,success";

impl QueryRecord {
    pub(crate) fn new(id: ReqId, kind: OpKind, origin: PeerIdx, key: u64, n: usize, start: Time) -> Self {
        QueryRecord {
            id,
            kind,
            origin,
            key,
            n,
            start,
            complete: None,
            messages: 0,
            hops: 0,
            forwards: 0,
            success: false,
            short: false,
            results: Vec::new(),
            value: None,
            owner: None,
            trace: Vec::new(),
            parent: None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.complete.is_some()
    }

    /// Completion minus start; zero while in flight.
    pub fn latency(&self) -> Time {
        self.complete.map_or(0, |c| c - self.start)
    }

    pub fn latency_ms(&self) -> f64 {
        ms(self.latency())
    }

    /// One CSV row in [`CSV_HEADER`] order, without a newline.
    pub fn csv_row(&self) -> String {
        let mut s = String::with_capacity(64);
        let complete = self.complete.map_or(String::new(), |c| format!("{:.3}", ms(c)));
        let _ = write!(
            s,
            "{},{:.3},{},{:.3},{},{},{}",
            self.kind.name(),
            ms(self.start),
            complete,
            self.latency_ms(),
            self.messages,
            self.hops,
            self.success
        );
        s
    }
}

/// State handed from routing to the first peer of a range query.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeStart {
    pub req: ReqId,
    pub origin: PeerRef,
    pub floor: u64,
    pub start_key: u64,
    pub n: usize,
    pub hops: u32,
    pub msgs: u32,
}

impl Network {
    fn open_record(&mut self, kind: OpKind, origin: PeerIdx, key: u64, n: usize) -> ReqId {
        let req = self.fresh_req();
        let rec = QueryRecord::new(req, kind, origin, key, n, self.now);
        self.records.insert(req, rec);
        let at = self.now + self.cfg.query_timeout;
        self.schedule_query_timeout(at, req);
        req
    }

    /// Start a lookup of `key` from `origin`; the record completes later.
    pub fn issue_lookup(&mut self, origin: PeerIdx, key: u64) -> ReqId {
        let req = self.open_record(OpKind::Lookup, origin, key, 1);
        let id = self.key_id(origin, key);
        self.start_route(origin, req, id, RouteOp::Lookup { key });
        req
    }

    pub fn issue_put(&mut self, origin: PeerIdx, key: u64, value: Value) -> ReqId {
        let req = self.open_record(OpKind::Put, origin, key, 1);
        let id = self.key_id(origin, key);
        self.start_route(origin, req, id, RouteOp::Put { key, value });
        req
    }

    /// Start a query for the `n` smallest stored keys `>= key`.
    pub fn issue_range(&mut self, origin: PeerIdx, key: u64, n: usize) -> ReqId {
        let n = n.max(1);
        let req = self.open_record(OpKind::Range, origin, key, n);
        let id = self.key_id(origin, key);
        self.start_route(origin, req, id, RouteOp::Range { start_key: key, n });
        req
    }

    /// Resolve the owner of identifier `target`.
    pub fn issue_probe(&mut self, origin: PeerIdx, target: u64) -> ReqId {
        let req = self.open_record(OpKind::Probe, origin, target, 1);
        self.start_route(origin, req, target, RouteOp::FindSuccessor(FindPurpose::Probe));
        req
    }

    /// Run a lookup to completion.
    pub fn lookup(&mut self, origin: PeerIdx, key: u64) -> QueryRecord {
        let req = self.issue_lookup(origin, key);
        self.finish_sync(req)
    }

    pub fn put(&mut self, origin: PeerIdx, key: u64, value: Value) -> QueryRecord {
        let req = self.issue_put(origin, key, value);
        self.finish_sync(req)
    }

    pub fn range_query(&mut self, origin: PeerIdx, key: u64, n: usize) -> QueryRecord {
        let req = self.issue_range(origin, key, n);
        self.finish_sync(req)
    }

    pub fn find_successor(&mut self, origin: PeerIdx, target: u64) -> QueryRecord {
        let req = self.issue_probe(origin, target);
        self.finish_sync(req)
    }

    fn finish_sync(&mut self, req: ReqId) -> QueryRecord {
        self.run_until_done(req);
        self.records.remove(&req).expect("record exists until taken")
    }

    pub(crate) fn begin_range(&mut self, at: PeerIdx, s: RangeStart) {
        let m = RangeMsg {
            req: s.req,
            origin: s.origin,
            floor: s.floor,
            start_key: s.start_key,
            remaining: s.n,
            results: Vec::new(),
            msgs: s.msgs,
            hops: s.hops,
            forwards: 0,
            retries: 0,
            short: false,
        };
        self.serve_range(at, m);
    }

    pub(crate) fn on_range_forward(&mut self, at: PeerIdx, mut m: RangeMsg) {
        m.retries = 0;
        self.peers[at].served += 1;
        self.serve_range(at, m);
    }

    /// Serve stored keys `>= start_key` whose hash lies in `[floor, upper]`,
    /// then forward or reply.
    fn serve_range(&mut self, at: PeerIdx, mut m: RangeMsg) {
        let space_max = self.cfg.space.max();
        let vid = self.peers[at].vid.0;
        // A floor past our identifier means the range wrapped: we own the
        // top of the ring and nothing after us is larger.
        let upper = if m.floor <= vid { vid } else { space_max };
        let mut last = None;
        let p = &self.peers[at];
        let mut taken = Vec::new();
        for (k, _) in p.store.iter_from(m.start_key) {
            if taken.len() >= m.remaining {
                break;
            }
            let h = self.key_id(at, *k);
            if h > upper {
                break;
            }
            last = Some(*k);
            if h >= m.floor {
                taken.push(*k);
            }
        }
        m.remaining -= taken.len();
        m.results.extend(taken);
        let at_end = upper == space_max || last == Some(u64::MAX);
        let succ = self.peers[at].successor();
        if m.remaining == 0 || at_end || succ.idx == at {
            m.short = m.remaining > 0;
            self.reply_range(at, m);
            return;
        }
        m.floor = upper + 1;
        if let Some(k) = last {
            m.start_key = k + 1;
        }
        self.forward_range(at, succ.idx, m);
    }

    fn forward_range(&mut self, at: PeerIdx, next: PeerIdx, mut m: RangeMsg) {
        m.msgs += 1;
        m.forwards += 1;
        self.send(at, next, Msg::RangeForward(m));
    }

    fn reply_range(&mut self, at: PeerIdx, mut m: RangeMsg) {
        let origin = m.origin.idx;
        if origin != at {
            m.msgs += 1;
        }
        self.send(at, origin, Msg::RangeReply(m));
    }

    /// The successor a range chain was forwarded to is gone.
    pub(crate) fn retry_range(&mut self, at: PeerIdx, mut m: RangeMsg) {
        m.forwards = m.forwards.saturating_sub(1);
        m.retries += 1;
        self.retry_range_now(at, m);
    }

    /// Continue a stalled chain once a live successor is known; otherwise
    /// wait a stabilization round. The query timeout bounds the wait.
    pub(crate) fn retry_range_now(&mut self, at: PeerIdx, m: RangeMsg) {
        if self.records.get(&m.req).is_none_or(|r| r.is_done()) {
            return;
        }
        let succ = self.peers[at].successor();
        if succ.idx != at && !self.peers[at].failed.contains_key(&succ.idx) {
            self.forward_range(at, succ.idx, m);
        } else {
            let epoch = self.peers[at].epoch;
            let when = self.now + self.cfg.stabilize_interval;
            self.timer(at, epoch, when, crate::overlay::TimerKind::RetryRange(Box::new(m)));
        }
    }

    pub(crate) fn on_range_reply(&mut self, m: RangeMsg) {
        let now = self.now;
        let Some(r) = self.records.get_mut(&m.req) else {
            return;
        };
        if r.is_done() {
            return;
        }
        r.complete = Some(now);
        r.messages = m.msgs;
        r.hops = m.hops;
        r.forwards = m.forwards;
        r.short = m.short;
        r.results = m.results;
        r.success = true;
        self.query_done(m.req);
    }

    pub(crate) fn on_lookup_reply(&mut self, req: ReqId, value: Option<Value>, hops: u32, msgs: u32) {
        let now = self.now;
        let Some(r) = self.records.get_mut(&req) else {
            return;
        };
        if r.is_done() {
            return;
        }
        r.complete = Some(now);
        r.messages = msgs;
        r.hops = hops;
        r.success = value.is_some();
        r.value = value;
        self.query_done(req);
    }

    pub(crate) fn on_put_ack(&mut self, req: ReqId, hops: u32, msgs: u32) {
        let now = self.now;
        let Some(r) = self.records.get_mut(&req) else {
            return;
        };
        if r.is_done() {
            return;
        }
        r.complete = Some(now);
        r.messages = msgs;
        r.hops = hops;
        r.success = true;
        self.query_done(req);
    }

    pub(crate) fn complete_probe(&mut self, req: ReqId, owner: PeerRef, hops: u32, msgs: u32) {
        let now = self.now;
        let Some(r) = self.records.get_mut(&req) else {
            return;
        };
        if r.is_done() {
            return;
        }
        r.complete = Some(now);
        r.messages = msgs;
        r.hops = hops;
        r.owner = Some(owner);
        r.success = true;
        self.query_done(req);
    }

    /// Mark `req` failed now, if it is still open.
    pub(crate) fn fail_query(&mut self, req: ReqId) {
        let now = self.now;
        let Some(r) = self.records.get_mut(&req) else {
            return;
        };
        if r.is_done() {
            return;
        }
        r.complete = Some(now);
        r.success = false;
        self.query_done(req);
    }

    pub(crate) fn on_query_timeout(&mut self, req: ReqId) {
        if self.records.get(&req).is_some_and(|r| !r.is_done()) {
            log::debug!("req {req}: timed out");
            self.fail_query(req);
        }
    }

    fn query_done(&mut self, req: ReqId) {
        if let Some(batch) = self.records.get(&req).and_then(|r| r.parent) {
            self.batch_member_done(batch, req);
        }
    }

    /// Issue a workload query from a random live peer.
    pub(crate) fn on_work(&mut self, item: WorkItem) {
        let Some(origin) = self.random_live_peer() else {
            return;
        };
        match item {
            WorkItem::Range { key, n } => {
                self.issue_range(origin, key, n);
            }
            WorkItem::Lookup { key } => {
                self.issue_lookup(origin, key);
            }
            WorkItem::Put { key } => {
                self.issue_put(origin, key, value_from_u64(key));
            }
        }
    }
}

/// The `n` smallest keys `>= start` of a sorted key array.
pub fn range_oracle(sorted: &[u64], start: u64, n: usize) -> Vec<u64> {
    let i = sorted.partition_point(|&k| k < start);
    sorted[i..].iter().take(n).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_takes_from_lower_bound() {
        let keys = [1, 3, 5, 7, 9];
        assert_eq!(range_oracle(&keys, 4, 2), vec![5, 7]);
        assert_eq!(range_oracle(&keys, 3, 10), vec![3, 5, 7, 9]);
        assert!(range_oracle(&keys, 10, 3).is_empty());
    }

    #[test]
    fn csv_row_layout() {
        let mut r = QueryRecord::new(1, OpKind::Range, 0, 5, 10, 2_000);
        r.complete = Some(14_500);
        r.messages = 9;
        r.hops = 6;
        r.success = true;
        assert_eq!(r.csv_row(), "range,2.000,14.500,12.500,9,6,true");
    }
}
