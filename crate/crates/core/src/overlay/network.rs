use std::collections::BTreeMap;
use std::sync::Arc;

use log::{debug, warn};

use crate::error::{LeadError, Result};
use crate::frm::FrmConfig;
use crate::learned_hash::RmiModel;
use crate::query::QueryRecord;
use crate::ring::{fmix64, peer_hash, uniform_key_hash, HashSpace, Vid};
use crate::rng::SplitMix64;
use crate::simnet::{ChurnAction, EventQueue, Time, Topology, MS, SECOND};
use crate::store::value_from_u64;

use super::finger::{FingerSlot, FingerTable};
use super::message::{Msg, NeighborPurpose, RangeMsg, ReqId, TransferReason};
use super::peer::{normalize_predecessors, normalize_successors, PeerIdx, PeerRef, VirtualPeer};

/// How keys are mapped onto the ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// The peer's ACTIVE learned model.
    Learned,
    /// A uniform hash of the key, as in plain Chord.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub space: HashSpace,
    pub placement: Placement,
    /// Successor and predecessor list length.
    pub list_len: usize,
    pub stabilize_interval: Time,
    pub heartbeat_interval: Time,
    pub miss_threshold: u32,
    pub failure_timeout: Time,
    pub node_rejoin_timeout: Time,
    /// Per-hop timeout; `None` means four times the topology's p99.
    pub hop_timeout: Option<Time>,
    pub hop_retries: u32,
    pub query_timeout: Time,
    /// Run stabilization, finger repair, heartbeats and the observer.
    pub maintenance: bool,
    /// How long a failure verdict is remembered without news from the peer.
    pub failure_memory: Time,
    pub reshelve_ttl: u32,
    pub frm: FrmConfig,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            space: HashSpace::default(),
            placement: Placement::Learned,
            list_len: 4,
            stabilize_interval: 1000 * MS,
            heartbeat_interval: 500 * MS,
            miss_threshold: 3,
            failure_timeout: 2000 * MS,
            node_rejoin_timeout: 10 * SECOND,
            hop_timeout: None,
            hop_retries: 1,
            query_timeout: 30 * SECOND,
            maintenance: true,
            failure_memory: 30 * SECOND,
            reshelve_ttl: 32,
            frm: FrmConfig::default(),
        }
    }
}

/// A physical node hosting virtual peers.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub address: String,
    pub vnodes: Vec<PeerIdx>,
    pub alive: bool,
    pub capacity: f64,
    pub next_port: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TimerKind {
    Stabilize,
    FixFingers,
    Heartbeat,
    Suspect { target: PeerIdx, heard: Time },
    Fail { target: PeerIdx, heard: Time },
    SessionTimeout(u64),
    RetryRange(Box<RangeMsg>),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Event {
    Deliver { src: PeerIdx, dst: PeerIdx, sent: Time, msg: Msg },
    Undeliverable { src: PeerIdx, dst: PeerIdx, msg: Msg },
    Timer { peer: PeerIdx, epoch: u32, kind: TimerKind },
    Churn { node: usize, action: ChurnAction },
    Workload(WorkItem),
    QueryTimeout(ReqId),
    Observer,
}

/// Query issued by a workload driver at its scheduled time.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkItem {
    Range { key: u64, n: usize },
    Lookup { key: u64 },
    Put { key: u64 },
}

/// Network-wide counters kept by the passive observer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetStats {
    pub messages: u64,
    pub by_kind: BTreeMap<&'static str, u64>,
    pub events: u64,
    pub trace_hash: u64,
    /// `(time, peer, version)` for every model adoption.
    pub adoptions: Vec<(Time, PeerIdx, u32)>,
    /// `(time, coordinator, version)` for every published aggregate.
    pub publishes: Vec<(Time, PeerIdx, u32)>,
    pub rejoins: u64,
    pub dropped_keys: u64,
}

/// Discrete-event simulation of the overlay.
pub struct Network {
    pub(crate) cfg: NetConfig,
    pub(crate) topo: Topology,
    pub(crate) now: Time,
    pub(crate) queue: EventQueue<Event>,
    pub(crate) peers: Vec<VirtualPeer>,
    pub(crate) nodes: Vec<Node>,
    pub(crate) records: BTreeMap<ReqId, QueryRecord>,
    pub(crate) next_req: ReqId,
    pub(crate) next_session: u64,
    pub(crate) rng: SplitMix64,
    pub(crate) hop_timeout: Time,
    pub(crate) stats: NetStats,
    pub(crate) batches: BTreeMap<u64, crate::baseline::BatchState>,
    pub(crate) observer_on: bool,
}

impl Network {
    pub fn new(cfg: NetConfig, topo: Topology, seed: u64) -> Self {
        let hop_timeout = cfg.hop_timeout.unwrap_or(4 * topo.p99()).max(1);
        Network {
            cfg,
            topo,
            now: 0,
            queue: EventQueue::new(),
            peers: Vec::new(),
            nodes: Vec::new(),
            records: BTreeMap::new(),
            next_req: 1,
            next_session: 1,
            rng: SplitMix64::derive(seed, "network"),
            hop_timeout,
            stats: NetStats::default(),
            batches: BTreeMap::new(),
            observer_on: false,
        }
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }
    pub fn now(&self) -> Time {
        self.now
    }
    pub fn topology(&self) -> &Topology {
        &self.topo
    }
    pub fn peers(&self) -> &[VirtualPeer] {
        &self.peers
    }
    pub fn peer(&self, idx: PeerIdx) -> &VirtualPeer {
        &self.peers[idx]
    }
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }
    pub fn stats(&self) -> &NetStats {
        &self.stats
    }
    pub fn hop_timeout(&self) -> Time {
        self.hop_timeout
    }
    pub fn records(&self) -> &BTreeMap<ReqId, QueryRecord> {
        &self.records
    }
    pub fn record(&self, req: ReqId) -> Option<&QueryRecord> {
        self.records.get(&req)
    }
    pub fn take_records(&mut self) -> BTreeMap<ReqId, QueryRecord> {
        std::mem::take(&mut self.records)
    }

    /// Create node `address` with `k` virtual peers on ports `7000..`. The
    /// peers exist but have not joined.
    pub fn add_node(&mut self, address: &str, k: usize, capacity: f64) -> usize {
        let node = self.nodes.len();
        self.nodes.push(Node {
            address: address.to_string(),
            vnodes: Vec::new(),
            alive: true,
            capacity,
            next_port: 7000,
        });
        for _ in 0..k {
            self.add_vnode(node);
        }
        node
    }

    /// One more virtual peer on `node`, on the next free port whose
    /// identifier does not collide.
    pub fn add_vnode(&mut self, node: usize) -> PeerIdx {
        let space = self.cfg.space;
        let address = self.nodes[node].address.clone();
        let mut port = self.nodes[node].next_port;
        let vid = loop {
            let vid = peer_hash(space, &address, port);
            if !self.peers.iter().any(|p| p.vid == vid) {
                break vid;
            }
            debug!("vid collision for {address}:{port}, trying next port");
            port = port.wrapping_add(1);
        };
        self.nodes[node].next_port = port.wrapping_add(1);
        let idx = self.peers.len();
        self.peers
            .push(VirtualPeer::new(idx, vid, node, port, space, self.cfg.frm.threshold));
        self.nodes[node].vnodes.push(idx);
        idx
    }

    /// Give every peer the same ACTIVE model.
    pub fn install_model(&mut self, model: RmiModel) {
        let m = Arc::new(model);
        for p in &mut self.peers {
            p.set_active(m.clone());
            p.update = None;
        }
    }

    /// Live, joined peers sorted by identifier.
    pub fn live_ring(&self) -> Vec<PeerRef> {
        let mut v: Vec<PeerRef> = self
            .peers
            .iter()
            .filter(|p| p.alive && p.joined)
            .map(|p| p.me())
            .collect();
        v.sort();
        v
    }

    /// Brute-force owner of identifier `x` among live joined peers.
    pub fn owner_of(&self, x: u64) -> Result<PeerRef> {
        let ring = self.live_ring();
        if ring.is_empty() {
            return Err(LeadError::NoPeers);
        }
        let i = ring.partition_point(|p| p.vid.0 < x);
        Ok(ring[i % ring.len()])
    }

    /// Ring identifier of `key` as computed at peer `at`.
    pub fn key_id(&self, at: PeerIdx, key: u64) -> u64 {
        match self.cfg.placement {
            Placement::Uniform => uniform_key_hash(self.cfg.space, key),
            Placement::Learned => match &self.peers[at].active {
                Some(m) => m.hash(key),
                None => uniform_key_hash(self.cfg.space, key),
            },
        }
    }

    /// Set up every live peer with the routing state a fully stabilized ring
    /// would converge to. Used by quiescent benches that do not study joins.
    pub fn build_converged(&mut self) {
        let space = self.cfg.space;
        let r = self.cfg.list_len;
        for p in &mut self.peers {
            if p.alive && self.nodes[p.node].alive {
                p.joined = true;
            }
        }
        let ring = self.live_ring();
        let n = ring.len();
        if n == 0 {
            return;
        }
        let succ_of = |x: u64| ring[ring.partition_point(|p| p.vid.0 < x) % n];
        for (pos, me) in ring.iter().enumerate() {
            let succs: Vec<PeerRef> = (1..=r.min(n - 1)).map(|d| ring[(pos + d) % n]).collect();
            let preds: Vec<PeerRef> = (1..=r.min(n - 1)).map(|d| ring[(pos + n - d) % n]).collect();
            let mut fingers = FingerTable::new(space);
            let slots: Vec<FingerSlot> = fingers.slots().collect();
            for s in slots {
                fingers.set(s, Some(succ_of(s.target(space, me.vid))));
            }
            let p = &mut self.peers[me.idx];
            p.successors = succs;
            p.predecessors = preds;
            p.predecessor = p.predecessors.first().copied().or(Some(*me));
            if n == 1 {
                p.predecessor = Some(*me);
            }
            p.fingers = fingers;
            p.monitors.clear();
            p.failed.clear();
        }
    }

    /// Put every key on its brute-force owner without messages.
    pub fn bulk_load(&mut self, keys: &[u64]) -> Result<()> {
        let ring = self.live_ring();
        if ring.is_empty() {
            return Err(LeadError::NoPeers);
        }
        let at = ring[0].idx;
        let mut per_peer: BTreeMap<PeerIdx, Vec<(u64, crate::store::Value)>> = BTreeMap::new();
        for &k in keys {
            let id = self.key_id(at, k);
            let i = ring.partition_point(|p| p.vid.0 < id) % ring.len();
            per_peer.entry(ring[i].idx).or_default().push((k, value_from_u64(k)));
        }
        for (idx, pairs) in per_peer {
            self.peers[idx].store.extend(pairs);
        }
        for p in &mut self.peers {
            let len = p.store.len() as u64;
            p.update_state.reset(len);
        }
        Ok(())
    }

    /// Move every stored key to its brute-force owner (no messages). Test
    /// and bench helper.
    pub fn oracle_reshelve(&mut self) -> Result<()> {
        let mut all = Vec::new();
        for p in &mut self.peers {
            all.extend(p.store.clear().into_iter().map(|e| e.0));
        }
        all.sort_unstable();
        self.bulk_load(&all)
    }

    /// Schedule periodic maintenance timers for every live joined peer.
    pub fn start_maintenance(&mut self) {
        if !self.cfg.maintenance {
            return;
        }
        for idx in 0..self.peers.len() {
            if self.peers[idx].alive && self.peers[idx].joined {
                self.schedule_peer_timers(idx);
            }
        }
        self.ensure_observer();
    }

    pub(crate) fn ensure_observer(&mut self) {
        if self.cfg.maintenance && !self.observer_on {
            self.observer_on = true;
            let at = self.now + self.cfg.stabilize_interval;
            self.queue.schedule(at, Event::Observer);
        }
    }

    /// Stagger the first firing of each timer so peers do not beat in
    /// lockstep.
    pub(crate) fn schedule_peer_timers(&mut self, idx: PeerIdx) {
        let epoch = self.peers[idx].epoch;
        let jitter = |rng: &mut SplitMix64, span: Time| rng.below(span.max(1));
        let s = self.now + jitter(&mut self.rng, self.cfg.stabilize_interval);
        let f = self.now + jitter(&mut self.rng, self.cfg.stabilize_interval);
        let h = self.now + jitter(&mut self.rng, self.cfg.heartbeat_interval);
        self.timer(idx, epoch, s, TimerKind::Stabilize);
        self.timer(idx, epoch, f, TimerKind::FixFingers);
        self.timer(idx, epoch, h, TimerKind::Heartbeat);
    }

    pub(crate) fn timer(&mut self, peer: PeerIdx, epoch: u32, at: Time, kind: TimerKind) {
        self.queue.schedule(at, Event::Timer { peer, epoch, kind });
    }

    pub(crate) fn schedule_query_timeout(&mut self, at: Time, req: ReqId) {
        self.queue.schedule(at, Event::QueryTimeout(req));
    }

    pub fn schedule_work(&mut self, at: Time, item: WorkItem) {
        self.queue.schedule(at, Event::Workload(item));
    }

    pub fn schedule_churn(&mut self, at: Time, node: usize, action: ChurnAction) {
        self.queue.schedule(at, Event::Churn { node, action });
    }

    pub(crate) fn fresh_req(&mut self) -> ReqId {
        let r = self.next_req;
        self.next_req += 1;
        r
    }

    /// Send `msg`; self-delivery is immediate and free.
    pub(crate) fn send(&mut self, src: PeerIdx, dst: PeerIdx, msg: Msg) {
        let at = if src == dst {
            self.now
        } else {
            self.stats.messages += 1;
            *self.stats.by_kind.entry(msg.kind()).or_insert(0) += 1;
            self.now + self.topo.latency(self.peers[src].node, self.peers[dst].node)
        };
        self.queue.schedule(
            at,
            Event::Deliver {
                src,
                dst,
                sent: self.now,
                msg,
            },
        );
    }

    /// Latency of one message between two peers.
    pub fn peer_latency(&self, a: PeerIdx, b: PeerIdx) -> Time {
        if a == b {
            0
        } else {
            self.topo.latency(self.peers[a].node, self.peers[b].node)
        }
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// Process one event; false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some((t, seq, ev)) = self.queue.pop() else {
            return false;
        };
        debug_assert!(t >= self.now);
        self.now = t;
        self.stats.events += 1;
        self.stats.trace_hash = fmix64(self.stats.trace_hash ^ t.rotate_left(17) ^ seq);
        self.dispatch(ev);
        true
    }

    /// Run every event with time `<= until`, then advance the clock there.
    pub fn run_until(&mut self, until: Time) {
        while let Some(t) = self.queue.peek_time() {
            if t > until {
                break;
            }
            self.step();
        }
        self.now = self.now.max(until);
    }

    pub fn run_for(&mut self, d: Time) {
        let until = self.now + d;
        self.run_until(until);
    }

    /// Run until the queue drains or `max_events` have been processed.
    pub fn run_until_idle(&mut self, max_events: u64) -> bool {
        let start = self.stats.events;
        while self.stats.events - start < max_events {
            if !self.step() {
                return true;
            }
        }
        false
    }

    /// Run until query `req` completes (or no events remain).
    pub fn run_until_done(&mut self, req: ReqId) -> Option<&QueryRecord> {
        while self.records.get(&req).is_some_and(|r| r.complete.is_none()) {
            if !self.step() {
                break;
            }
        }
        self.records.get(&req)
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Deliver { src, dst, sent, msg } => {
                let p = &self.peers[dst];
                let ok = p.alive && (p.joined || msg.reaches_unjoined() || src == dst);
                if ok {
                    self.receive(src, dst, msg);
                } else if msg.is_rpc() {
                    let at = self.now.max(sent + self.hop_timeout);
                    self.queue.schedule(at, Event::Undeliverable { src, dst, msg });
                }
            }
            Event::Undeliverable { src, dst, msg } => self.on_undeliverable(src, dst, msg),
            Event::Timer { peer, epoch, kind } => {
                let p = &self.peers[peer];
                if p.alive && p.epoch == epoch {
                    self.on_timer(peer, kind);
                }
            }
            Event::Churn { node, action } => match action {
                ChurnAction::Exit => self.crash_node(node),
                ChurnAction::Rejoin => self.rejoin_node(node),
            },
            Event::Workload(item) => self.on_work(item),
            Event::QueryTimeout(req) => self.on_query_timeout(req),
            Event::Observer => self.on_observer(),
        }
    }

    fn receive(&mut self, src: PeerIdx, dst: PeerIdx, msg: Msg) {
        if src != dst {
            // Direct contact refutes an old failure verdict.
            self.peers[dst].failed.remove(&src);
        }
        match msg {
            Msg::Route(m) => self.on_route(dst, m),
            Msg::FindSuccessorReply {
                req,
                purpose,
                owner,
                hops,
                msgs,
            } => self.on_find_successor_reply(dst, req, purpose, owner, hops, msgs),
            Msg::LookupReply {
                req,
                value,
                hops,
                msgs,
            } => self.on_lookup_reply(req, value, hops, msgs),
            Msg::PutAck { req, hops, msgs } => self.on_put_ack(req, hops, msgs),
            Msg::RangeForward(m) => self.on_range_forward(dst, m),
            Msg::RangeReply(m) => self.on_range_reply(m),
            Msg::Notify(n) => self.on_notify(dst, n),
            Msg::NotifySuccessor(n) => self.on_notify_successor(dst, n),
            Msg::GetNeighbors(purpose) => self.on_get_neighbors(src, dst, purpose),
            Msg::NeighborsReply {
                purpose,
                predecessor,
                successors,
                predecessors,
            } => self.on_neighbors_reply(src, dst, purpose, predecessor, successors, predecessors),
            Msg::GetFingers => {
                let table = self.peers[dst].fingers.decimal.clone();
                self.send(dst, src, Msg::FingersReply(table));
            }
            Msg::FingersReply(table) => self.on_fingers_reply(dst, table),
            Msg::TransferKeys {
                pairs,
                version,
                reason,
                ttl,
            } => self.on_transfer(dst, pairs, version, reason, ttl),
            Msg::Leave {
                successors,
                predecessors,
            } => self.on_leave(src, dst, successors, predecessors),
            Msg::Heartbeat(beat) => self.on_heartbeat(dst, beat),
            Msg::ModelConfirm { session, version } => self.on_model_confirm(src, dst, session, version),
            Msg::ModelPush { session, blob } => self.on_model_push(src, dst, session, blob),
            Msg::ModelPull => {
                if let Some(m) = self.peers[dst].active.clone() {
                    self.send(dst, src, Msg::ModelFull(m));
                }
            }
            Msg::ModelFull(m) => self.on_model_full(dst, m),
        }
    }

    fn on_undeliverable(&mut self, src: PeerIdx, dst: PeerIdx, msg: Msg) {
        if let Msg::TransferKeys { pairs, reason, .. } = &msg {
            if *reason == TransferReason::Depart {
                self.redirect_depart_transfer(src, dst, pairs.clone());
                return;
            }
        }
        if !self.peers[src].alive {
            return;
        }
        self.mark_failed(src, dst);
        match msg {
            Msg::Route(m) => self.retry_route(src, m),
            Msg::RangeForward(m) => self.retry_range(src, m),
            Msg::GetNeighbors(NeighborPurpose::Join) => self.restart_join(src),
            Msg::TransferKeys { pairs, .. } => {
                // Keep the keys and try again once the lists have healed.
                self.peers[src].store.extend(pairs);
            }
            Msg::ModelConfirm { session, .. } => self.on_model_push(dst, src, session, None),
            Msg::ModelPull => self.peers[src].pulling = None,
            _ => {}
        }
    }

    /// A departed peer's keys bounced: hand them to the next predecessor it
    /// knew, then to its successors.
    fn redirect_depart_transfer(&mut self, src: PeerIdx, dst: PeerIdx, pairs: Vec<(u64, crate::store::Value)>) {
        let p = &self.peers[src];
        let order: Vec<PeerRef> = p.predecessors.iter().chain(&p.successors).copied().collect();
        let pos = order.iter().position(|q| q.idx == dst);
        let next = match pos {
            Some(i) => order.get(i + 1).copied(),
            None => order.first().copied(),
        };
        match next {
            Some(q) if q.idx != src => {
                let version = self.peers[src].model_version();
                self.send(
                    src,
                    q.idx,
                    Msg::TransferKeys {
                        pairs,
                        version,
                        reason: TransferReason::Depart,
                        ttl: self.cfg.reshelve_ttl,
                    },
                );
            }
            _ => {
                warn!("departing peer {src}: no live neighbor, dropping {} keys", pairs.len());
                self.stats.dropped_keys += pairs.len() as u64;
            }
        }
    }

    /// `at` now believes `dead` is gone: drop it from lists and fingers and
    /// promote the next entries.
    pub(crate) fn mark_failed(&mut self, at: PeerIdx, dead: PeerIdx) {
        if at == dead {
            return;
        }
        let now = self.now;
        let p = &mut self.peers[at];
        p.failed.insert(dead, now);
        p.monitors.remove(&dead);
        let was_succ = p.successors.first().is_some_and(|s| s.idx == dead);
        p.successors.retain(|q| q.idx != dead);
        p.predecessors.retain(|q| q.idx != dead);
        p.fingers.forget(dead);
        if p.predecessor.is_some_and(|q| q.idx == dead) {
            p.predecessor = p.predecessors.first().copied();
        }
        if p.busy_with == Some(dead) {
            p.busy_with = None;
        }
        if p.successors.is_empty() {
            // Fall back to the closest live finger, if any.
            let me = p.vid;
            let space = self.cfg.space;
            let best = p
                .fingers
                .entries()
                .filter(|q| q.idx != at)
                .min_by_key(|q| (space.distance(me.0, q.vid.0), q.idx));
            if let Some(b) = best {
                p.successors.push(b);
            }
        }
        if was_succ {
            if let Some(s) = self.peers[at].successors.first().copied() {
                let me = self.peers[at].me();
                self.send(at, s.idx, Msg::Notify(me));
            }
        }
    }

    /// Forget stale failure verdicts.
    pub(crate) fn expire_failures(&mut self, at: PeerIdx) {
        let cutoff = self.now.saturating_sub(self.cfg.failure_memory);
        self.peers[at].failed.retain(|_, t| *t > cutoff);
    }

    /// Merge `extra` into `at`'s successor list.
    pub(crate) fn merge_successors(&mut self, at: PeerIdx, extra: &[PeerRef]) {
        let space = self.cfg.space;
        let r = self.cfg.list_len;
        let p = &mut self.peers[at];
        let failed = &p.failed;
        let mut list: Vec<PeerRef> = p
            .successors
            .iter()
            .chain(extra)
            .filter(|q| !failed.contains_key(&q.idx))
            .copied()
            .collect();
        normalize_successors(space, p.vid, &mut list, r);
        p.successors = list;
    }

    pub(crate) fn merge_predecessors(&mut self, at: PeerIdx, extra: &[PeerRef]) {
        let space = self.cfg.space;
        let r = self.cfg.list_len;
        let p = &mut self.peers[at];
        let failed = &p.failed;
        let mut list: Vec<PeerRef> = p
            .predecessors
            .iter()
            .chain(extra)
            .filter(|q| !failed.contains_key(&q.idx))
            .copied()
            .collect();
        normalize_predecessors(space, p.vid, &mut list, r);
        p.predecessors = list;
    }

    /// Identifier of every live joined peer on `node`.
    pub fn node_peers(&self, node: usize) -> Vec<PeerIdx> {
        self.nodes[node]
            .vnodes
            .iter()
            .copied()
            .filter(|&i| self.peers[i].alive)
            .collect()
    }

    /// Total number of stored pairs.
    pub fn total_keys(&self) -> usize {
        self.peers.iter().filter(|p| p.alive).map(|p| p.store.len()).sum()
    }

    /// Every stored key on live peers, sorted.
    pub fn all_keys(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self
            .peers
            .iter()
            .filter(|p| p.alive)
            .flat_map(|p| p.store.keys())
            .collect();
        v.sort_unstable();
        v
    }

    /// Pick a uniformly random live joined peer.
    pub fn random_live_peer(&mut self) -> Option<PeerIdx> {
        let live: Vec<PeerIdx> = self
            .peers
            .iter()
            .filter(|p| p.alive && p.joined)
            .map(|p| p.idx)
            .collect();
        self.rng.pick(&live).copied()
    }

    pub fn rng(&mut self) -> &mut SplitMix64 {
        &mut self.rng
    }

    /// Vid of peer `idx`.
    pub fn vid(&self, idx: PeerIdx) -> Vid {
        self.peers[idx].vid
    }
}
