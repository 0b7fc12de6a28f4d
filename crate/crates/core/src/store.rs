//! Per-peer ordered key-value store.
//!
//! Backed by a sorted vector: peers hold thousands of keys, inserts are
//! memmove-cheap at that size, and the FRM update path needs order
//! statistics (the local rank of a key), which a sorted vector gives by
//! binary search.

use smallvec::SmallVec;

use crate::ring::HashSpace;

/// Opaque value bytes; eight bytes inline.
pub type Value = SmallVec<[u8; 8]>;

pub fn value_from_u64(x: u64) -> Value {
    SmallVec::from_slice(&x.to_le_bytes())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrderedStore {
    entries: Vec<(u64, Value)>,
}

impl OrderedStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from pairs already sorted by strictly increasing key.
    pub fn from_sorted(entries: Vec<(u64, Value)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        OrderedStore { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert or overwrite. Returns the key's index afterwards and whether it
    /// was new.
    pub fn insert(&mut self, key: u64, value: Value) -> (usize, bool) {
        match self.entries.binary_search_by_key(&key, |e| e.0) {
            Ok(i) => {
                self.entries[i].1 = value;
                (i, false)
            }
            Err(i) => {
                self.entries.insert(i, (key, value));
                (i, true)
            }
        }
    }

    pub fn get(&self, key: u64) -> Option<&Value> {
        self.entries
            .binary_search_by_key(&key, |e| e.0)
            .ok()
            .map(|i| &self.entries[i].1)
    }

    pub fn remove(&mut self, key: u64) -> Option<Value> {
        self.entries
            .binary_search_by_key(&key, |e| e.0)
            .ok()
            .map(|i| self.entries.remove(i).1)
    }

    /// Number of stored keys strictly below `key`.
    pub fn rank_of(&self, key: u64) -> usize {
        self.entries.partition_point(|e| e.0 < key)
    }

    /// Number of leading keys satisfying `pred`, which must hold on a
    /// prefix of the key order.
    pub fn partition_point(&self, mut pred: impl FnMut(u64) -> bool) -> usize {
        self.entries.partition_point(|e| pred(e.0))
    }

    pub fn key_at(&self, index: usize) -> Option<u64> {
        self.entries.get(index).map(|e| e.0)
    }

    pub fn min_key(&self) -> Option<u64> {
        self.entries.first().map(|e| e.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(u64, Value)> {
        self.entries.iter()
    }

    /// Entries with key `>= start`, ascending.
    pub fn iter_from(&self, start: u64) -> impl Iterator<Item = &(u64, Value)> {
        self.entries[self.rank_of(start)..].iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    /// Up to `n` entries with key `>= start_key`, plus how many of the `n`
    /// are still missing.
    pub fn local_range(&self, start_key: u64, n: usize) -> (Vec<(u64, Value)>, usize) {
        let pairs: Vec<(u64, Value)> = self.iter_from(start_key).take(n).cloned().collect();
        let remaining = n - pairs.len();
        (pairs, remaining)
    }

    /// Remove and return every pair whose hash lies in the ring interval
    /// `(a, b]`. `(a, a]` is empty here: nothing moves.
    pub fn extract_interval(
        &mut self,
        space: HashSpace,
        a: u64,
        b: u64,
        hash: impl Fn(u64) -> u64,
    ) -> Vec<(u64, Value)> {
        if a == b {
            return Vec::new();
        }
        self.extract_where(|k| space.in_half_open(hash(k), a, b))
    }

    /// Remove and return every pair whose key satisfies `pred`, in key order.
    pub fn extract_where(&mut self, mut pred: impl FnMut(u64) -> bool) -> Vec<(u64, Value)> {
        let mut out = Vec::new();
        self.entries.retain(|(k, v)| {
            if pred(*k) {
                out.push((*k, v.clone()));
                false
            } else {
                true
            }
        });
        out
    }

    /// Insert many pairs; cheaper than repeated [`OrderedStore::insert`] for
    /// large batches.
    pub fn extend(&mut self, mut pairs: Vec<(u64, Value)>) {
        if pairs.len() < 32 {
            for (k, v) in pairs {
                self.insert(k, v);
            }
            return;
        }
        pairs.sort_by_key(|p| p.0);
        let old = std::mem::take(&mut self.entries);
        let mut merged = Vec::with_capacity(old.len() + pairs.len());
        let mut a = old.into_iter().peekable();
        let mut b = pairs.into_iter().peekable();
        loop {
            let take_a = match (a.peek(), b.peek()) {
                (Some(x), Some(y)) => x.0 <= y.0,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            let next = if take_a { a.next() } else { b.next() }.unwrap();
            match merged.last_mut() {
                // Later (incoming) values overwrite.
                Some((k, v)) if *k == next.0 => *v = next.1,
                _ => merged.push(next),
            }
        }
        self.entries = merged;
    }

    pub fn clear(&mut self) -> Vec<(u64, Value)> {
        std::mem::take(&mut self.entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(keys: &[u64]) -> OrderedStore {
        let mut s = OrderedStore::new();
        for &k in keys {
            s.insert(k, value_from_u64(k));
        }
        s
    }

    #[test]
    fn map_semantics() {
        let mut s = OrderedStore::new();
        s.insert(5, value_from_u64(1));
        assert_eq!(s.get(5), Some(&value_from_u64(1)));
        assert_eq!(s.get(6), None);
        s.insert(5, value_from_u64(2));
        assert_eq!(s.get(5), Some(&value_from_u64(2)));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn local_range_examples() {
        let s = store(&[1, 2, 3]);
        let (pairs, rem) = s.local_range(2, 5);
        assert_eq!(pairs.iter().map(|p| p.0).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(rem, 3);
        assert_eq!(s.local_range(10, 4), (vec![], 4));
        let (all, rem) = s.local_range(0, 3);
        assert_eq!((all.len(), rem), (3, 0));
    }

    #[test]
    fn extract_interval_examples() {
        let space = HashSpace::new(8).unwrap();
        let keys: Vec<u64> = (0..256).step_by(3).collect();
        let mut s = store(&keys);
        assert!(s.extract_interval(space, 40, 40, |k| k).is_empty());
        let mut full = s.clone();
        assert_eq!(full.extract_where(|_| true).len(), keys.len());
        // Split the ring at 100: (250, 100] and (100, 250].
        let a = s.extract_interval(space, 250, 100, |k| k);
        let b = s.extract_interval(space, 100, 250, |k| k);
        assert_eq!(a.len() + b.len() + s.len(), keys.len());
        assert!(a.iter().all(|p| p.0 <= 100 || p.0 > 250));
        assert!(b.iter().all(|p| p.0 > 100 && p.0 <= 250));
    }

    #[test]
    fn extend_merges_and_overwrites() {
        let mut s = store(&(0..100).map(|i| i * 2).collect::<Vec<_>>());
        let incoming: Vec<(u64, Value)> = (0..100).map(|i| (i * 3, value_from_u64(7))).collect();
        s.extend(incoming);
        assert!(s.keys().collect::<Vec<_>>().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s.get(6), Some(&value_from_u64(7)));
        assert_eq!(s.get(4), Some(&value_from_u64(4)));
    }
}
