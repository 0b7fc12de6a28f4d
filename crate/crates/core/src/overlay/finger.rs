use crate::ring::{HashSpace, Vid};

use super::peer::PeerRef;

/// Routing table of one virtual peer.
///
/// `decimal[i]` targets `vid + 10^i`; this is the table the protocol
/// publishes and copies on join. `binary[i]` targets `vid + 2^i` and only
/// widens the choice of next hops: with decimal strides alone the gaps
/// between consecutive targets grow tenfold and greedy routing loses the
/// halving step that bounds hop counts by `log2 P`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FingerTable {
    pub decimal: Vec<Option<PeerRef>>,
    pub binary: Vec<Option<PeerRef>>,
}

pub fn decimal_target(space: HashSpace, vid: Vid, i: usize) -> u64 {
    space.add(vid.0, 10u64.pow(i as u32))
}

pub fn binary_target(space: HashSpace, vid: Vid, i: usize) -> u64 {
    space.add(vid.0, 1u64 << i)
}

/// Which table a finger slot lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FingerSlot {
    Decimal(usize),
    Binary(usize),
}

impl FingerSlot {
    pub fn target(self, space: HashSpace, vid: Vid) -> u64 {
        match self {
            FingerSlot::Decimal(i) => decimal_target(space, vid, i),
            FingerSlot::Binary(i) => binary_target(space, vid, i),
        }
    }
}

impl FingerTable {
    pub fn new(space: HashSpace) -> Self {
        FingerTable {
            decimal: vec![None; space.decimal_fingers()],
            binary: vec![None; space.bits() as usize],
        }
    }

    pub fn slots(&self) -> impl Iterator<Item = FingerSlot> + '_ {
        (0..self.decimal.len())
            .map(FingerSlot::Decimal)
            .chain((0..self.binary.len()).map(FingerSlot::Binary))
    }

    pub fn get(&self, slot: FingerSlot) -> Option<PeerRef> {
        match slot {
            FingerSlot::Decimal(i) => self.decimal[i],
            FingerSlot::Binary(i) => self.binary[i],
        }
    }

    pub fn set(&mut self, slot: FingerSlot, peer: Option<PeerRef>) {
        match slot {
            FingerSlot::Decimal(i) => self.decimal[i] = peer,
            FingerSlot::Binary(i) => self.binary[i] = peer,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = PeerRef> + '_ {
        self.decimal.iter().chain(&self.binary).flatten().copied()
    }

    /// Forget every entry pointing at `idx`.
    pub fn forget(&mut self, idx: usize) {
        for e in self.decimal.iter_mut().chain(self.binary.iter_mut()) {
            if e.is_some_and(|p| p.idx == idx) {
                *e = None;
            }
        }
    }

    pub fn clear(&mut self) {
        self.decimal.iter_mut().for_each(|e| *e = None);
        self.binary.iter_mut().for_each(|e| *e = None);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_wrap() {
        let s = HashSpace::new(8).unwrap();
        assert_eq!(decimal_target(s, Vid(250), 1), 4);
        assert_eq!(binary_target(s, Vid(250), 3), 2);
        let t = FingerTable::new(s);
        assert_eq!((t.decimal.len(), t.binary.len()), (2, 8));
    }

    #[test]
    fn forget_clears_matching_entries() {
        let s = HashSpace::new(8).unwrap();
        let mut t = FingerTable::new(s);
        let p = PeerRef { vid: Vid(9), idx: 3 };
        t.set(FingerSlot::Decimal(0), Some(p));
        t.set(FingerSlot::Binary(5), Some(p));
        t.forget(3);
        assert_eq!(t.entries().count(), 0);
    }
}
