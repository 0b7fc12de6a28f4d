//! Chord baseline: uniform key hashing on the same overlay, and range
//! queries answered as batches of single-key lookups.
//!
//! A DHT cannot enumerate a key range, so the harness hands the batch the
//! exact keys it must fetch. That favors the baseline.

use std::collections::BTreeSet;

use crate::overlay::{Network, PeerIdx, ReqId};
use crate::query::{OpKind, QueryRecord};
use crate::simnet::Time;

/// The keys of a range split into lookup batches of `size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub keys: Vec<u64>,
    pub size: usize,
}

impl BatchPlan {
    pub fn new(keys: Vec<u64>, size: usize) -> Self {
        assert!(size >= 1, "batch size must be positive");
        BatchPlan { keys, size }
    }

    pub fn batch_count(&self) -> usize {
        self.keys.len().div_ceil(self.size)
    }

    pub fn batch_sizes(&self) -> Vec<usize> {
        self.keys.chunks(self.size).map(|c| c.len()).collect()
    }

    pub fn batch(&self, i: usize) -> &[u64] {
        self.keys.chunks(self.size).nth(i).unwrap_or(&[])
    }
}

/// Progress of one batched range query.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchState {
    pub req: ReqId,
    pub origin: PeerIdx,
    pub plan: BatchPlan,
    pub current: usize,
    pub batch_start: Time,
    pub outstanding: BTreeSet<ReqId>,
    /// Keys already retried once.
    pub retried: BTreeSet<u64>,
    pub found: Vec<u64>,
    pub misses: usize,
    pub messages: u32,
    pub hops: u32,
    /// Span of each finished batch.
    pub spans: Vec<Time>,
}

impl Network {
    /// Fetch the given range keys from `origin` in sequential batches of
    /// `size` concurrent lookups. Completes as a `BatchRange` record.
    pub fn issue_batch_range(&mut self, origin: PeerIdx, keys: Vec<u64>, size: usize) -> ReqId {
        let req = self.fresh_req();
        let first = keys.first().copied().unwrap_or(0);
        let n = keys.len();
        let rec = QueryRecord::new(req, OpKind::BatchRange, origin, first, n, self.now);
        self.records.insert(req, rec);
        let state = BatchState {
            req,
            origin,
            plan: BatchPlan::new(keys, size),
            current: 0,
            batch_start: self.now,
            outstanding: BTreeSet::new(),
            retried: BTreeSet::new(),
            found: Vec::with_capacity(n),
            misses: 0,
            messages: 0,
            hops: 0,
            spans: Vec::new(),
        };
        self.batches.insert(req, state);
        self.launch_batch(req);
        req
    }

    /// Run a batched range to completion.
    pub fn chord_batch_range(&mut self, origin: PeerIdx, keys: Vec<u64>, size: usize) -> QueryRecord {
        let req = self.issue_batch_range(origin, keys, size);
        self.run_until_done(req);
        self.records.remove(&req).expect("record exists until taken")
    }

    fn launch_batch(&mut self, batch: ReqId) {
        let Some(st) = self.batches.get_mut(&batch) else {
            return;
        };
        if st.current >= st.plan.batch_count() {
            self.finish_batch(batch);
            return;
        }
        st.batch_start = self.now;
        let keys = st.plan.batch(st.current).to_vec();
        let origin = st.origin;
        for key in keys {
            self.launch_member(batch, origin, key);
        }
    }

    fn launch_member(&mut self, batch: ReqId, origin: PeerIdx, key: u64) {
        let req = self.issue_lookup(origin, key);
        if let Some(r) = self.records.get_mut(&req) {
            r.parent = Some(batch);
        }
        let done = self.records.get(&req).is_some_and(|r| r.is_done());
        if let Some(st) = self.batches.get_mut(&batch) {
            st.outstanding.insert(req);
        }
        // A lookup resolved at the origin completes before it is tagged.
        if done {
            self.batch_member_done(batch, req);
        }
    }

    pub(crate) fn batch_member_done(&mut self, batch: ReqId, req: ReqId) {
        let Some(st) = self.batches.get_mut(&batch) else {
            return;
        };
        if !st.outstanding.remove(&req) {
            return;
        }
        let r = self.records.remove(&req).expect("member record");
        st.messages += r.messages;
        st.hops += r.hops;
        if r.success {
            st.found.push(r.key);
        } else if st.retried.insert(r.key) {
            let origin = st.origin;
            self.launch_member(batch, origin, r.key);
            return;
        } else {
            st.misses += 1;
        }
        if st.outstanding.is_empty() {
            st.spans.push(self.now - st.batch_start);
            st.current += 1;
            self.launch_batch(batch);
        }
    }

    fn finish_batch(&mut self, batch: ReqId) {
        let Some(mut st) = self.batches.remove(&batch) else {
            return;
        };
        st.found.sort_unstable();
        let now = self.now;
        if let Some(r) = self.records.get_mut(&batch) {
            r.complete = Some(now);
            r.messages = st.messages;
            r.hops = st.hops;
            r.success = st.misses == 0;
            r.results = st.found;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_ceiling() {
        let p = BatchPlan::new((0..250).collect(), 100);
        assert_eq!(p.batch_count(), 3);
        assert_eq!(p.batch_sizes(), vec![100, 100, 50]);
        assert_eq!(p.batch(2).len(), 50);
        assert!(p.batch(3).is_empty());
        assert_eq!(BatchPlan::new(vec![], 100).batch_count(), 0);
    }
}
