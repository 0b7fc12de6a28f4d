//! Ring membership and repair: join, departure, crash and rejoin,
//! stabilization, finger repair, heartbeats and failure detection, and
//! re-shelving of keys whose owner changed.

use log::{debug, warn};

use crate::error::{LeadError, Result};
use crate::simnet::Time;
use crate::store::Value;

use super::finger::FingerSlot;
use super::message::{Beat, FindPurpose, Msg, NeighborPurpose, RouteMsg, RouteOp, TransferReason};
use super::network::{Event, Network, Placement, TimerKind};
use super::peer::{normalize_predecessors, normalize_successors, Monitor, PeerIdx, PeerRef};

impl Network {
    /// Join peer `idx` through `bootstrap`, or form a one-peer ring.
    pub fn join(&mut self, idx: PeerIdx, bootstrap: Option<PeerIdx>) -> Result<()> {
        match bootstrap {
            None => {
                self.self_ring(idx);
                Ok(())
            }
            Some(b) => {
                let bp = &self.peers[b];
                if !bp.alive || !bp.joined {
                    return Err(LeadError::BootstrapUnreachable);
                }
                self.join_via(idx, b);
                Ok(())
            }
        }
    }

    /// Join every virtual peer of `node`. Without a bootstrap the first
    /// one forms the ring and the others join through it.
    pub fn start_node(&mut self, node: usize, bootstrap: Option<PeerIdx>) -> Result<()> {
        let vnodes: Vec<PeerIdx> = self.nodes[node]
            .vnodes
            .iter()
            .copied()
            .filter(|&i| !self.peers[i].retired)
            .collect();
        let mut via = bootstrap;
        for idx in vnodes {
            match via {
                None => {
                    self.self_ring(idx);
                    via = Some(idx);
                }
                Some(b) => self.join(idx, Some(b))?,
            }
        }
        Ok(())
    }

    fn self_ring(&mut self, idx: PeerIdx) {
        let me = self.peers[idx].me();
        let p = &mut self.peers[idx];
        p.reset_routing();
        p.joined = true;
        p.predecessor = Some(me);
        self.schedule_peer_timers(idx);
        self.ensure_observer();
    }

    pub(crate) fn join_via(&mut self, idx: PeerIdx, bootstrap: PeerIdx) {
        self.peers[idx].join_started = self.now;
        if self.cfg.placement == Placement::Learned {
            // The joining handshake hands over the bootstrap's model.
            if let Some(m) = self.peers[bootstrap].active.clone() {
                if m.version() > self.peers[idx].model_version() {
                    self.adopt_model(idx, m);
                }
            }
        }
        let vid = self.peers[idx].vid;
        let m = RouteMsg {
            req: 0,
            target: vid.0,
            op: RouteOp::FindSuccessor(FindPurpose::Join),
            origin: self.peers[idx].me(),
            hops: 1,
            msgs: 1,
            retries: 0,
            final_hop: false,
            trace: vec![idx],
        };
        self.send(idx, bootstrap, Msg::Route(m));
    }

    /// Throw away routing state and join again through a sibling or any
    /// live peer.
    pub(crate) fn restart_join(&mut self, idx: PeerIdx) {
        if !self.peers[idx].alive {
            return;
        }
        self.stats.rejoins += 1;
        let p = &mut self.peers[idx];
        p.reset_routing();
        p.epoch += 1;
        match self.pick_bootstrap(idx) {
            Some(b) => self.join_via(idx, b),
            None => self.self_ring(idx),
        }
    }

    fn pick_bootstrap(&mut self, idx: PeerIdx) -> Option<PeerIdx> {
        let node = self.peers[idx].node;
        let usable = |n: &Network, i: PeerIdx| i != idx && n.peers[i].alive && n.peers[i].joined;
        let sibling = self.nodes[node].vnodes.iter().copied().find(|&i| usable(self, i));
        if sibling.is_some() {
            return sibling;
        }
        let others: Vec<PeerIdx> = (0..self.peers.len()).filter(|&i| usable(self, i)).collect();
        self.rng.pick(&others).copied()
    }

    pub(crate) fn join_found_successor(&mut self, at: PeerIdx, owner: PeerRef) {
        if self.peers[at].joined {
            return;
        }
        if owner.idx == at {
            self.restart_join(at);
            return;
        }
        self.peers[at].successors = vec![owner];
        self.send(at, owner.idx, Msg::GetNeighbors(NeighborPurpose::Join));
        self.send(at, owner.idx, Msg::GetFingers);
    }

    pub(crate) fn on_get_neighbors(&mut self, src: PeerIdx, at: PeerIdx, purpose: NeighborPurpose) {
        let p = &self.peers[at];
        let reply = Msg::NeighborsReply {
            purpose,
            predecessor: p.predecessor,
            successors: p.successors.clone(),
            predecessors: p.predecessors.clone(),
        };
        self.send(at, src, reply);
    }

    pub(crate) fn on_neighbors_reply(
        &mut self,
        src: PeerIdx,
        at: PeerIdx,
        purpose: NeighborPurpose,
        predecessor: Option<PeerRef>,
        successors: Vec<PeerRef>,
        predecessors: Vec<PeerRef>,
    ) {
        let space = self.cfg.space;
        let r = self.cfg.list_len;
        let sender = self.peers[src].me();
        match purpose {
            NeighborPurpose::Join => {
                if self.peers[at].joined {
                    return;
                }
                let me = self.peers[at].me();
                let p = &mut self.peers[at];
                let mut succ = vec![sender];
                succ.extend(successors);
                normalize_successors(space, me.vid, &mut succ, r);
                p.successors = succ;
                p.predecessor = predecessor.filter(|q| q.idx != at);
                let mut preds: Vec<PeerRef> = predecessor.into_iter().chain(predecessors).collect();
                normalize_predecessors(space, me.vid, &mut preds, r);
                p.predecessors = preds;
                p.joined = true;
                p.reshelve_pending = true;
                self.send(at, src, Msg::Notify(me));
                if let Some(pred) = self.peers[at].predecessor {
                    if pred.idx != src {
                        self.send(at, pred.idx, Msg::NotifySuccessor(me));
                    }
                }
                self.schedule_peer_timers(at);
                self.ensure_observer();
            }
            NeighborPurpose::Successor => {
                let p = &self.peers[at];
                if p.successors.first().map(|s| s.idx) != Some(src) {
                    return;
                }
                let me = p.me();
                let mut list = Vec::with_capacity(r + 2);
                if let Some(x) = predecessor {
                    let usable = x.idx != at && !p.failed.contains_key(&x.idx);
                    if usable && space.in_open(x.vid.0, me.vid.0, sender.vid.0) {
                        list.push(x);
                    }
                }
                list.push(sender);
                list.extend(successors.into_iter().filter(|q| !p.failed.contains_key(&q.idx)));
                normalize_successors(space, me.vid, &mut list, r);
                let new_succ = list.first().copied();
                self.peers[at].successors = list;
                if let Some(s) = new_succ {
                    self.send(at, s.idx, Msg::Notify(me));
                }
            }
            NeighborPurpose::Predecessor => {
                let p = &self.peers[at];
                if p.predecessor.map(|q| q.idx) != Some(src) {
                    return;
                }
                let me = p.vid;
                let mut list = vec![sender];
                list.extend(predecessors.into_iter().filter(|q| !p.failed.contains_key(&q.idx)));
                normalize_predecessors(space, me, &mut list, r);
                self.peers[at].predecessors = list;
            }
        }
    }

    pub(crate) fn on_fingers_reply(&mut self, at: PeerIdx, table: Vec<Option<PeerRef>>) {
        let succ = self.peers[at].successor();
        let p = &mut self.peers[at];
        for (i, e) in table.into_iter().enumerate().skip(1) {
            if i < p.fingers.decimal.len() {
                if let Some(q) = e.filter(|q| q.idx != at && !p.failed.contains_key(&q.idx)) {
                    p.fingers.decimal[i] = Some(q);
                }
            }
        }
        if !p.fingers.decimal.is_empty() && succ.idx != at {
            p.fingers.decimal[0] = Some(succ);
        }
    }

    pub(crate) fn on_notify(&mut self, at: PeerIdx, n: PeerRef) {
        if n.idx == at || !self.peers[at].joined {
            return;
        }
        let space = self.cfg.space;
        let p = &self.peers[at];
        let me = p.vid;
        let accept = match p.predecessor {
            None => true,
            Some(q) if q.idx == at || p.failed.contains_key(&q.idx) => true,
            Some(q) => q.idx != n.idx && space.in_open(n.vid.0, q.vid.0, me.0),
        };
        if accept {
            self.peers[at].predecessor = Some(n);
            self.merge_predecessors(at, &[n]);
            if self.peers[at].successors.is_empty() {
                self.peers[at].successors.push(n);
            }
            // Everything outside (n, me] is no longer ours.
            let pairs = self.extract_not_owned(at, n.vid.0, me.0);
            if !pairs.is_empty() {
                let version = self.peers[at].model_version();
                self.send(
                    at,
                    n.idx,
                    Msg::TransferKeys {
                        pairs,
                        version,
                        reason: TransferReason::Join,
                        ttl: self.cfg.reshelve_ttl,
                    },
                );
            }
        }
    }

    pub(crate) fn on_notify_successor(&mut self, at: PeerIdx, n: PeerRef) {
        if n.idx == at {
            return;
        }
        let space = self.cfg.space;
        let p = &self.peers[at];
        let succ = p.successor();
        if p.successors.is_empty() || space.in_open(n.vid.0, p.vid.0, succ.vid.0) {
            self.merge_successors(at, &[n]);
        }
    }

    fn extract_not_owned(&mut self, at: PeerIdx, lo: u64, hi: u64) -> Vec<(u64, Value)> {
        let space = self.cfg.space;
        let hashes: Vec<(u64, u64)> = self.peers[at]
            .store
            .keys()
            .map(|k| (k, self.key_id(at, k)))
            .collect();
        let mut out = Vec::new();
        let store = &mut self.peers[at].store;
        for (k, id) in hashes {
            if !space.in_half_open(id, lo, hi) {
                if let Some(v) = store.remove(k) {
                    out.push((k, v));
                }
            }
        }
        out
    }

    pub(crate) fn on_transfer(
        &mut self,
        at: PeerIdx,
        pairs: Vec<(u64, Value)>,
        version: u32,
        reason: TransferReason,
        ttl: u32,
    ) {
        let keys: Vec<u64> = pairs.iter().map(|p| p.0).collect();
        self.peers[at].store.extend(pairs);
        let newer_elsewhere = version > self.peers[at].model_version();
        if ttl == 0 || newer_elsewhere {
            // Hold them; the next adoption re-shelves the whole store.
            if ttl == 0 {
                debug!("peer {at}: transfer ttl exhausted ({reason:?}), keeping {} keys", keys.len());
            }
            return;
        }
        self.reshelve(at, Some(keys), ttl - 1);
    }

    /// Send the keys of `at` it does not own toward their owner: clockwise
    /// when the owner is less than half a ring ahead, else counter-clockwise.
    /// `None` checks the whole store.
    pub(crate) fn reshelve(&mut self, at: PeerIdx, keys: Option<Vec<u64>>, ttl: u32) {
        let p = &self.peers[at];
        if !p.joined || p.successors.is_empty() {
            return;
        }
        let Some(pred) = p.predecessor.filter(|q| q.idx != at) else {
            return;
        };
        let space = self.cfg.space;
        let me = p.vid;
        let succ = p.successor();
        let half = (space.size() / 2) as u64;
        let keys: Vec<u64> = keys.unwrap_or_else(|| p.store.keys().collect());
        let (mut fwd, mut back) = (Vec::new(), Vec::new());
        for k in keys {
            let id = self.key_id(at, k);
            if space.in_half_open(id, pred.vid.0, me.0) {
                continue;
            }
            let Some(v) = self.peers[at].store.remove(k) else {
                continue;
            };
            if space.distance(me.0, id) < half {
                fwd.push((k, v));
            } else {
                back.push((k, v));
            }
        }
        let version = self.peers[at].model_version();
        for (dst, pairs) in [(succ.idx, fwd), (pred.idx, back)] {
            if !pairs.is_empty() {
                self.send(
                    at,
                    dst,
                    Msg::TransferKeys {
                        pairs,
                        version,
                        reason: TransferReason::Reshelve,
                        ttl,
                    },
                );
            }
        }
    }

    /// Graceful departure: tell both neighbors, hand the store to the
    /// predecessor, go away for good.
    pub fn depart(&mut self, idx: PeerIdx) {
        let p = &self.peers[idx];
        if !p.alive {
            return;
        }
        let others = self.peers.iter().any(|q| q.idx != idx && q.alive && q.joined);
        let pred = p.predecessor.filter(|q| q.idx != idx).or_else(|| p.predecessors.first().copied());
        let succ = p.successors.first().copied();
        let leave = Msg::Leave {
            successors: p.successors.clone(),
            predecessors: p.predecessors.clone(),
        };
        if p.joined && others {
            for q in [pred, succ].into_iter().flatten() {
                if q.idx != idx {
                    self.send(idx, q.idx, leave.clone());
                }
            }
            let pairs = self.peers[idx].store.clear();
            match pred.or(succ) {
                Some(q) if !pairs.is_empty() => {
                    let version = self.peers[idx].model_version();
                    self.send(
                        idx,
                        q.idx,
                        Msg::TransferKeys {
                            pairs,
                            version,
                            reason: TransferReason::Depart,
                            ttl: self.cfg.reshelve_ttl,
                        },
                    );
                }
                Some(_) => {}
                None => {
                    warn!("peer {idx} departs with no neighbor; {} keys dropped", pairs.len());
                    self.stats.dropped_keys += pairs.len() as u64;
                }
            }
        } else {
            let n = self.peers[idx].store.clear().len();
            if n > 0 {
                warn!("last peer {idx} departs; {n} keys dropped");
                self.stats.dropped_keys += n as u64;
            }
        }
        let p = &mut self.peers[idx];
        p.alive = false;
        p.retired = true;
        p.joined = false;
        p.epoch += 1;
    }

    pub(crate) fn on_leave(&mut self, src: PeerIdx, at: PeerIdx, succs: Vec<PeerRef>, preds: Vec<PeerRef>) {
        self.mark_failed(at, src);
        let succs: Vec<PeerRef> = succs.into_iter().filter(|q| q.idx != src).collect();
        let preds: Vec<PeerRef> = preds.into_iter().filter(|q| q.idx != src).collect();
        self.merge_successors(at, &succs);
        self.merge_predecessors(at, &preds);
        let p = &mut self.peers[at];
        if p.predecessor.is_none() {
            p.predecessor = p.predecessors.first().copied();
        }
        // Keep the departed identifier out of routing until it speaks again.
        p.failed.insert(src, self.now);
    }

    /// Crash every virtual peer of `node`. Stores survive the crash.
    pub fn crash_node(&mut self, node: usize) {
        if !self.nodes[node].alive {
            return;
        }
        self.nodes[node].alive = false;
        for i in self.nodes[node].vnodes.clone() {
            let p = &mut self.peers[i];
            if p.alive {
                p.alive = false;
                p.joined = false;
                p.epoch += 1;
            }
        }
    }

    /// Bring `node` back with fresh routing state; every surviving virtual
    /// peer joins through a live peer elsewhere.
    pub fn rejoin_node(&mut self, node: usize) {
        if self.nodes[node].alive {
            return;
        }
        self.nodes[node].alive = true;
        let vnodes: Vec<PeerIdx> = self.nodes[node]
            .vnodes
            .iter()
            .copied()
            .filter(|&i| !self.peers[i].retired)
            .collect();
        for &i in &vnodes {
            let p = &mut self.peers[i];
            p.alive = true;
            p.reset_routing();
            p.epoch += 1;
        }
        let others: Vec<PeerIdx> = (0..self.peers.len())
            .filter(|&i| self.peers[i].alive && self.peers[i].joined && self.peers[i].node != node)
            .collect();
        let mut bootstrap = self.rng.pick(&others).copied();
        for i in vnodes {
            match bootstrap {
                Some(b) => self.join_via(i, b),
                None => {
                    self.self_ring(i);
                    bootstrap = Some(i);
                }
            }
        }
    }

    pub(crate) fn on_timer(&mut self, at: PeerIdx, kind: TimerKind) {
        let epoch = self.peers[at].epoch;
        match kind {
            TimerKind::Stabilize => {
                self.stabilize(at);
                let next = self.now + self.cfg.stabilize_interval;
                self.timer(at, epoch, next, TimerKind::Stabilize);
            }
            TimerKind::FixFingers => {
                self.fix_fingers(at);
                let next = self.now + self.cfg.stabilize_interval;
                self.timer(at, epoch, next, TimerKind::FixFingers);
            }
            TimerKind::Heartbeat => {
                self.heartbeat_tick(at);
                let next = self.now + self.cfg.heartbeat_interval;
                self.timer(at, epoch, next, TimerKind::Heartbeat);
            }
            TimerKind::Suspect { target, heard } => {
                let ft = self.cfg.failure_timeout;
                if let Some(m) = self.peers[at].monitors.get_mut(&target) {
                    if m.last_heard == heard {
                        m.suspected = true;
                        let at_time = self.now + ft;
                        self.timer(at, epoch, at_time, TimerKind::Fail { target, heard });
                    }
                }
            }
            TimerKind::Fail { target, heard } => {
                let still = self.peers[at]
                    .monitors
                    .get(&target)
                    .is_some_and(|m| m.last_heard == heard);
                if still {
                    debug!("peer {at}: neighbor {target} failed at {}", self.now);
                    self.mark_failed(at, target);
                }
            }
            TimerKind::SessionTimeout(id) => self.session_timeout(at, id),
            TimerKind::RetryRange(m) => self.retry_range_now(at, *m),
        }
    }

    /// Verify successor and predecessor, refresh both lists, and re-shelve
    /// keys that changed owner.
    pub fn stabilize(&mut self, at: PeerIdx) {
        if !self.peers[at].joined {
            return;
        }
        self.expire_failures(at);
        let p = &self.peers[at];
        let succ = p.successors.first().copied();
        let pred = p.predecessor.filter(|q| q.idx != at);
        if let Some(s) = succ {
            self.send(at, s.idx, Msg::GetNeighbors(NeighborPurpose::Successor));
        }
        if let Some(q) = pred {
            self.send(at, q.idx, Msg::GetNeighbors(NeighborPurpose::Predecessor));
        }
        if self.peers[at].reshelve_pending && pred.is_some() && succ.is_some() {
            self.peers[at].reshelve_pending = false;
            let ttl = self.cfg.reshelve_ttl;
            self.reshelve(at, None, ttl);
        }
    }

    /// Re-resolve every finger target.
    pub fn fix_fingers(&mut self, at: PeerIdx) {
        if !self.peers[at].joined {
            return;
        }
        let space = self.cfg.space;
        let me = self.peers[at].me();
        let succ = self.peers[at].successor();
        let slots: Vec<FingerSlot> = self.peers[at].fingers.slots().collect();
        for slot in slots {
            let t = slot.target(space, me.vid);
            if succ.idx == at {
                self.peers[at].fingers.set(slot, None);
            } else if space.in_half_open(t, me.vid.0, succ.vid.0) {
                self.peers[at].fingers.set(slot, Some(succ));
            } else {
                self.start_route(at, 0, t, RouteOp::FindSuccessor(FindPurpose::Finger(slot)));
            }
        }
    }

    fn heartbeat_tick(&mut self, at: PeerIdx) {
        if !self.peers[at].joined {
            return;
        }
        let now = self.now;
        let hb = self.cfg.heartbeat_interval;
        let window = hb * self.cfg.miss_threshold as Time;
        let neighbors = self.peers[at].neighbors();
        let beat = self.beat(at, false);
        {
            let p = &mut self.peers[at];
            p.monitors.retain(|k, _| neighbors.iter().any(|q| q.idx == *k));
            for q in &neighbors {
                p.monitors.entry(q.idx).or_insert(Monitor {
                    last_heard: now,
                    suspected: false,
                    version: 0,
                    digest: 0,
                    ready: false,
                    pending: None,
                });
            }
        }
        for q in &neighbors {
            self.send(at, q.idx, Msg::Heartbeat(beat));
        }
        let epoch = self.peers[at].epoch;
        let mut checks = Vec::new();
        for (&k, m) in self.peers[at].monitors.iter_mut() {
            let due = m.last_heard + window;
            if !m.suspected && m.pending != Some(m.last_heard) && due <= now + hb {
                m.pending = Some(m.last_heard);
                checks.push((k, m.last_heard, due.max(now)));
            }
        }
        for (target, heard, due) in checks {
            self.timer(at, epoch, due, TimerKind::Suspect { target, heard });
        }
        self.frm_tick(at);
    }

    pub(crate) fn beat(&self, at: PeerIdx, ack: bool) -> Beat {
        let p = &self.peers[at];
        Beat {
            sender: p.me(),
            version: p.model_version(),
            digest: p.model_digest(),
            ready: p.update_state.ready() && p.busy_with.is_none() && p.session.is_none(),
            ack,
        }
    }

    pub(crate) fn on_heartbeat(&mut self, at: PeerIdx, beat: Beat) {
        let now = self.now;
        let m = self.peers[at].monitors.entry(beat.sender.idx).or_insert(Monitor {
            last_heard: now,
            suspected: false,
            version: 0,
            digest: 0,
            ready: false,
            pending: None,
        });
        m.last_heard = now;
        m.suspected = false;
        m.pending = None;
        m.version = beat.version;
        m.digest = beat.digest;
        m.ready = beat.ready;
        if !beat.ack {
            let reply = self.beat(at, true);
            self.send(at, beat.sender.idx, Msg::Heartbeat(reply));
        }
        self.maybe_pull(at, beat);
    }

    /// The owning node acts as observer: a virtual peer that has not
    /// managed to (re)establish itself in time is rejoined.
    pub(crate) fn on_observer(&mut self) {
        let now = self.now;
        let limit = self.cfg.node_rejoin_timeout;
        let live = self.peers.iter().filter(|p| p.alive && p.joined).count();
        let mut stuck = Vec::new();
        for p in &self.peers {
            if !p.alive {
                continue;
            }
            let lost = !p.joined && now.saturating_sub(p.join_started) > limit;
            let isolated = p.joined && p.successors.is_empty() && live > 1 && now.saturating_sub(p.join_started) > limit;
            if lost || isolated {
                stuck.push(p.idx);
            }
        }
        for idx in stuck {
            debug!("observer: rejoining peer {idx}");
            self.restart_join(idx);
        }
        let at = now + self.cfg.stabilize_interval;
        self.queue.schedule(at, Event::Observer);
    }
}
