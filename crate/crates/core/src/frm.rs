//! Federated model refresh.
//!
//! Every insert nudges the owner's private UPDATE copy of the model toward
//! the key's observed rank. Once enough of a peer's keys are new and nearly
//! all of its list neighbors agree, it coordinates a session: neighbors
//! push their changed leaves, the coordinator averages them into a model
//! with a higher version, and the new model spreads by heartbeats.

use std::sync::Arc;

use log::{debug, warn};

use crate::learned_hash::{decode_segments, serialize_changed_segments, Anchor, LeafModel, LeafParams, RmiModel};
use crate::overlay::{Beat, Msg, Network, Placement, PeerIdx, Session, TimerKind};
use crate::simnet::{Time, MS};

#[derive(Debug, Clone, PartialEq)]
pub struct FrmConfig {
    pub enabled: bool,
    /// Fraction of new keys that makes a peer ready.
    pub threshold: f64,
    /// Fraction of list neighbors that must be ready too.
    pub quorum: f64,
    pub learning_rate: f64,
    pub session_timeout: Time,
}

impl Default for FrmConfig {
    fn default() -> Self {
        FrmConfig {
            enabled: true,
            threshold: 0.40,
            quorum: 0.90,
            learning_rate: 0.05,
            session_timeout: 2000 * MS,
        }
    }
}

/// Drift counters of one peer since its last adoption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateState {
    pub threshold: f64,
    /// Keys held at the last adoption.
    pub base_count: u64,
    /// Keys inserted since.
    pub new_since_update: u64,
}

impl UpdateState {
    pub fn new(threshold: f64) -> Self {
        UpdateState {
            threshold,
            base_count: 0,
            new_since_update: 0,
        }
    }

    pub fn reset(&mut self, base_count: u64) {
        self.base_count = base_count;
        self.new_since_update = 0;
    }

    /// `new / (base + new)`, with 0/0 = 0.
    pub fn drift(&self) -> f64 {
        let total = self.base_count + self.new_since_update;
        if total == 0 {
            0.0
        } else {
            self.new_since_update as f64 / total as f64
        }
    }

    pub fn ready(&self) -> bool {
        self.new_since_update > 0 && self.drift() >= self.threshold
    }

    /// Growth of the peer's key set since adoption, `(k + m) / k`.
    pub fn growth(&self) -> f64 {
        if self.base_count == 0 {
            1.0
        } else {
            (self.base_count + self.new_since_update) as f64 / self.base_count as f64
        }
    }
}

/// At least `quorum` of `total` neighbors are ready; never with no
/// neighbors.
pub fn quorum_met(ready: usize, total: usize, quorum: f64) -> bool {
    total > 0 && ready as f64 >= quorum * total as f64
}

/// Rank target for a key at local index `index` in a store whose smallest
/// key the ACTIVE model ranks at `base_rank`.
///
/// The peer's keys fill the slice of rank space that its old keys did, so
/// local positions are compressed by the peer's growth factor. This keeps
/// the model's total count, and every interval it did not touch, valid.
pub fn target_rank(base_rank: f64, index: usize, growth: f64) -> f64 {
    base_rank.floor() + index as f64 / growth.max(1.0)
}

/// Result of averaging segment blobs into a base model.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub model: RmiModel,
    /// Blob positions dropped as incompatible or malformed.
    pub dropped: Vec<usize>,
    /// Leaves that received at least one segment.
    pub touched: usize,
}

/// Average changed segments into `active`.
///
/// Per leaf: parameters are the mean over the blobs carrying that leaf,
/// the interval spans their minimum `rank_lo` and maximum `rank_hi`; other
/// leaves keep `active`'s values. The result is re-monotonized and carries
/// version `max(active, blobs) + 1`.
pub fn aggregate(active: &RmiModel, blobs: &[&[u8]]) -> Aggregate {
    let b = active.branching();
    let p = active.family().param_count();
    let mut sums: Vec<Option<(Vec<f64>, usize, u64, u64)>> = vec![None; b];
    let mut version = active.version();
    let mut dropped = Vec::new();
    for (i, bytes) in blobs.iter().enumerate() {
        let blob = match decode_segments(bytes) {
            Ok(blob) => blob,
            Err(e) => {
                warn!("aggregate: dropping blob {i}: {e}");
                dropped.push(i);
                continue;
            }
        };
        let h = blob.header;
        if h.family != active.family() || h.branching as usize != b || h.space != active.space() {
            warn!(
                "aggregate: dropping blob {i}: {} x{} vs {} x{}",
                h.family,
                h.branching,
                active.family(),
                b
            );
            dropped.push(i);
            continue;
        }
        version = version.max(h.version);
        for seg in blob.leaves {
            let j = seg.index as usize;
            let vals = seg.params.to_vec();
            let e = sums[j].get_or_insert_with(|| (vec![0.0; p], 0, u64::MAX, 0));
            for (s, v) in e.0.iter_mut().zip(&vals) {
                *s += v;
            }
            e.1 += 1;
            e.2 = e.2.min(seg.rank_lo);
            e.3 = e.3.max(seg.rank_hi);
        }
    }
    let new_version = version.saturating_add(1);
    let mut model = active.clone();
    let mut touched = 0;
    for (j, e) in sums.into_iter().enumerate() {
        let Some((sum, count, lo, hi)) = e else {
            continue;
        };
        touched += 1;
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut params = LeafParams::from_slice(active.family(), &mean);
        params.normalize();
        model.leaves[j] = LeafModel {
            params,
            anchor: Anchor::default(),
            rank_lo: lo,
            rank_hi: hi,
            stamp: new_version,
        };
        model.raw[j] = (lo, hi);
    }
    model.version = new_version;
    model.remonotonize();
    Aggregate {
        model,
        dropped,
        touched,
    }
}

impl Network {
    /// Account for a key newly stored at `at` under local index `index`
    /// and train the UPDATE copy on it.
    pub(crate) fn record_insert(&mut self, at: PeerIdx, key: u64, index: usize) {
        let lr = self.cfg.frm.learning_rate;
        let learned = self.cfg.placement == Placement::Learned;
        let p = &mut self.peers[at];
        p.update_state.new_since_update += 1;
        if !self.cfg.frm.enabled || !learned {
            return;
        }
        let Some(active) = p.active.clone() else {
            return;
        };
        // Ranks rise with the local index only within one arc segment. The
        // peer whose arc wraps past zero holds a low segment (ids up to its
        // own) followed by a high one (ids above its predecessor).
        let vid = p.vid.0;
        let seg = if active.hash(key) > vid {
            p.store.partition_point(|k| active.hash(k) <= vid)
        } else {
            0
        };
        let first = p.store.key_at(seg).unwrap_or(key);
        let target = target_rank(active.predict_rank(first), index - seg, p.update_state.growth());
        let update = p.update.get_or_insert_with(|| (*active).clone());
        update.leaf_update(key, target, lr);
    }

    /// Heartbeat-time hook: coordinate a session when due.
    pub(crate) fn frm_tick(&mut self, at: PeerIdx) {
        if self.cfg.frm.enabled && self.cfg.placement == Placement::Learned {
            self.maybe_coordinate(at);
        }
    }

    /// Open a session if `at` is ready and enough list neighbors are too.
    /// Returns the number of invited participants.
    pub fn maybe_coordinate(&mut self, at: PeerIdx) -> Option<usize> {
        let p = &self.peers[at];
        if !p.joined || p.active.is_none() || p.session.is_some() || p.busy_with.is_some() {
            return None;
        }
        if !p.update_state.ready() {
            return None;
        }
        let neighbors = p.neighbors();
        let flagged: Vec<PeerIdx> = neighbors
            .iter()
            .filter(|q| p.monitors.get(&q.idx).is_some_and(|m| m.ready))
            .map(|q| q.idx)
            .collect();
        if !quorum_met(flagged.len(), neighbors.len(), self.cfg.frm.quorum) {
            return None;
        }
        let id = self.next_session;
        self.next_session += 1;
        let version = p.model_version();
        self.peers[at].session = Some(Session {
            id,
            base_version: version,
            waiting: flagged.len(),
            collected: Default::default(),
        });
        debug!("peer {at}: coordinating session {id} with {} peers", flagged.len());
        for &q in &flagged {
            self.send(at, q, Msg::ModelConfirm { session: id, version });
        }
        let epoch = self.peers[at].epoch;
        let when = self.now + self.cfg.frm.session_timeout;
        self.timer(at, epoch, when, TimerKind::SessionTimeout(id));
        Some(flagged.len())
    }

    pub(crate) fn on_model_confirm(&mut self, src: PeerIdx, at: PeerIdx, session: u64, _version: u32) {
        let p = &self.peers[at];
        let busy = p.session.is_some() || p.busy_with.is_some_and(|c| c != src) || p.active.is_none();
        if busy {
            self.send(at, src, Msg::ModelPush { session, blob: None });
            return;
        }
        let active = p.active.clone().expect("checked above");
        let base = active.version();
        let blob = match &p.update {
            Some(u) => serialize_changed_segments(u, base),
            None => serialize_changed_segments(&active, base),
        };
        let p = &mut self.peers[at];
        p.busy_with = Some(src);
        let len = p.store.len() as u64;
        p.update_state.reset(len);
        self.send(at, src, Msg::ModelPush { session, blob: Some(blob) });
        let epoch = self.peers[at].epoch;
        let when = self.now + 2 * self.cfg.frm.session_timeout;
        self.timer(at, epoch, when, TimerKind::SessionTimeout(session));
    }

    pub(crate) fn on_model_push(&mut self, src: PeerIdx, at: PeerIdx, session: u64, blob: Option<Vec<u8>>) {
        let Some(s) = self.peers[at].session.as_mut() else {
            return;
        };
        if s.id != session {
            return;
        }
        s.collected.insert(src, blob);
        if s.collected.len() >= s.waiting {
            self.finish_session(at);
        }
    }

    pub(crate) fn session_timeout(&mut self, at: PeerIdx, id: u64) {
        let p = &mut self.peers[at];
        if p.session.as_ref().is_some_and(|s| s.id == id) {
            self.finish_session(at);
        } else if p.busy_with.is_some() && p.session.is_none() {
            // The coordinator never published; stop waiting for it.
            p.busy_with = None;
        }
    }

    fn finish_session(&mut self, at: PeerIdx) {
        let Some(session) = self.peers[at].session.take() else {
            return;
        };
        let Some(active) = self.peers[at].active.clone() else {
            return;
        };
        let theirs: Vec<Vec<u8>> = session.collected.into_values().flatten().collect();
        if theirs.is_empty() {
            debug!("peer {at}: session {} had no participants", session.id);
            return;
        }
        let own = match &self.peers[at].update {
            Some(u) => serialize_changed_segments(u, active.version()),
            None => serialize_changed_segments(&active, active.version()),
        };
        let mut blobs: Vec<&[u8]> = vec![&own];
        blobs.extend(theirs.iter().map(|b| b.as_slice()));
        let agg = aggregate(&active, &blobs);
        let v = agg.model.version();
        debug!(
            "peer {at}: publishing version {v} ({} leaves, {} blobs, {} dropped)",
            agg.touched,
            blobs.len(),
            agg.dropped.len()
        );
        self.stats.publishes.push((self.now, at, v));
        self.adopt_model(at, Arc::new(agg.model));
    }

    /// Make `model` the ACTIVE model of `at` if it is newer.
    pub(crate) fn adopt_model(&mut self, at: PeerIdx, model: Arc<RmiModel>) -> bool {
        let v = model.version();
        let p = &mut self.peers[at];
        if p.active.is_some() && v <= p.model_version() {
            return false;
        }
        p.set_active(model);
        p.update = None;
        let len = p.store.len() as u64;
        p.update_state.reset(len);
        p.adopted_versions.push(v);
        p.busy_with = None;
        p.pulling = None;
        p.reshelve_pending = true;
        self.stats.adoptions.push((self.now, at, v));
        true
    }

    /// A neighbor advertises a newer model, or a different one with the
    /// same version: fetch it.
    pub(crate) fn maybe_pull(&mut self, at: PeerIdx, beat: Beat) {
        if !self.cfg.frm.enabled || self.cfg.placement != Placement::Learned {
            return;
        }
        let p = &self.peers[at];
        let mine = p.model_version();
        let differs = beat.version > mine || (beat.version == mine && beat.digest != p.model_digest());
        if !differs || beat.version == 0 {
            return;
        }
        let stale = p.pulling.is_none_or(|t| self.now >= t + 2 * self.hop_timeout);
        if stale {
            self.peers[at].pulling = Some(self.now);
            self.send(at, beat.sender.idx, Msg::ModelPull);
        }
    }

    pub(crate) fn on_model_full(&mut self, at: PeerIdx, model: Arc<RmiModel>) {
        self.peers[at].pulling = None;
        let mine = self.peers[at].model_version();
        if model.version() > mine {
            self.adopt_model(at, model);
            return;
        }
        if model.version() < mine || model.digest() == self.peers[at].model_digest() {
            return;
        }
        // Concurrent sessions published the same version: join them leaf by
        // leaf so every peer lands on the same model whatever the order.
        let Some(current) = self.peers[at].active.clone() else {
            return;
        };
        let mut joined = (*current).clone();
        match joined.join_leaves(&model) {
            Ok(true) => {
                let p = &mut self.peers[at];
                p.set_active(Arc::new(joined));
                p.reshelve_pending = true;
            }
            Ok(false) => {}
            Err(e) => warn!("peer {at}: cannot reconcile model: {e}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(base: u64, new: u64) -> UpdateState {
        UpdateState {
            threshold: 0.40,
            base_count: base,
            new_since_update: new,
        }
    }

    #[test]
    fn readiness_boundary() {
        assert!(!state(100, 0).ready());
        assert!(state(60, 40).ready());
        assert!(!state(100, 66).ready());
        assert!(!state(0, 0).ready());
    }

    #[test]
    fn quorum_arithmetic() {
        assert!(!quorum_met(0, 8, 0.9));
        assert!(quorum_met(8, 8, 0.9));
        assert!(!quorum_met(7, 8, 0.9));
        assert!(!quorum_met(0, 0, 0.9));
    }

    #[test]
    fn target_rank_compresses_by_growth() {
        assert_eq!(target_rank(40.7, 0, 1.0), 40.0);
        assert_eq!(target_rank(100.0, 11, 1.0), 111.0);
        assert_eq!(target_rank(100.0, 30, 1.5), 120.0);
    }
}
