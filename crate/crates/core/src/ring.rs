//! Identifier ring shared by peer addressing and learned-hash outputs.

use std::fmt;

use crate::error::{LeadError, Result};

pub const FNV_OFFSET: u64 = 14_695_981_039_346_656_037;
pub const FNV_PRIME: u64 = 1_099_511_628_211;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// murmur3 64-bit finalizer.
#[inline]
pub fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

/// A ring of `h = 2^bits` identifiers, `1 <= bits <= 64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HashSpace {
    bits: u32,
}

impl Default for HashSpace {
    fn default() -> Self {
        HashSpace { bits: 64 }
    }
}

impl HashSpace {
    pub fn new(bits: u32) -> Result<Self> {
        if !(1..=64).contains(&bits) {
            return Err(LeadError::InvalidConfig(format!(
                "hash space bits must be in 1..=64, got {bits}"
            )));
        }
        Ok(HashSpace { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Number of identifiers, `h`.
    pub fn size(&self) -> u128 {
        1u128 << self.bits
    }

    /// Largest identifier, `h - 1`.
    pub fn max(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        x & self.max()
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        self.reduce(a.wrapping_add(b))
    }

    /// Clockwise distance from `a` to `b`.
    #[inline]
    pub fn distance(&self, a: u64, b: u64) -> u64 {
        self.reduce(b.wrapping_sub(a))
    }

    /// `x` in the half-open ring interval `(a, b]`. `(a, a]` is the whole ring.
    #[inline]
    pub fn in_half_open(&self, x: u64, a: u64, b: u64) -> bool {
        if a == b {
            return true;
        }
        let dx = self.distance(a, x);
        dx != 0 && dx <= self.distance(a, b)
    }

    /// `x` in the open ring interval `(a, b)`. `(a, a)` is the ring minus `a`.
    #[inline]
    pub fn in_open(&self, x: u64, a: u64, b: u64) -> bool {
        if a == b {
            return x != a;
        }
        let dx = self.distance(a, x);
        dx != 0 && dx < self.distance(a, b)
    }

    /// Number of decimal finger entries, `floor(log10 h)`.
    pub fn decimal_fingers(&self) -> usize {
        let h = self.size();
        let mut b = 0;
        let mut p: u128 = 10;
        while p <= h {
            b += 1;
            p *= 10;
        }
        b
    }
}

/// Virtual-peer identifier on the ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Vid(pub u64);

impl fmt::Display for Vid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Identifier of a peer endpoint `address:port`.
///
/// FNV-1a over the UTF-8 bytes of `"address:port"`, passed through an
/// avalanche finalizer and reduced into the ring. Without the finalizer the
/// ports of one host differ only in a handful of middle bits and all of a
/// host's virtual peers land next to each other.
pub fn peer_hash(space: HashSpace, address: &str, port: u16) -> Vid {
    debug_assert!(!address.is_empty());
    let text = format!("{address}:{port}");
    Vid(space.reduce(fmix64(fnv1a64(text.as_bytes()))))
}

/// Uniform key hash used by the Chord baseline.
pub fn uniform_key_hash(space: HashSpace, key: u64) -> u64 {
    space.reduce(fmix64(fnv1a64(&key.to_le_bytes())))
}

/// First identifier in `ring` (sorted ascending) that equals or follows `x`,
/// wrapping to the smallest.
pub fn successor_of(ring: &[Vid], x: u64) -> Result<Vid> {
    if ring.is_empty() {
        return Err(LeadError::NoPeers);
    }
    let i = ring.partition_point(|v| v.0 < x);
    Ok(ring[i % ring.len()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn successor_examples() {
        let ring = [Vid(100), Vid(5000)];
        assert_eq!(successor_of(&ring, 100).unwrap(), Vid(100));
        assert_eq!(successor_of(&ring, 101).unwrap(), Vid(5000));
        assert_eq!(successor_of(&ring, 6000).unwrap(), Vid(100));
        assert_eq!(successor_of(&[], 1), Err(LeadError::NoPeers));
    }

    #[test]
    fn successor_matches_scan() {
        let ring: Vec<Vid> = [3u64, 17, 90, 91, 200].iter().map(|&v| Vid(v)).collect();
        for x in 0..256u64 {
            let brute = ring.iter().copied().find(|v| v.0 >= x).unwrap_or(ring[0]);
            assert_eq!(successor_of(&ring, x).unwrap(), brute);
        }
    }

    #[test]
    fn peer_hash_is_deterministic_and_distinct() {
        let s = HashSpace::default();
        assert_eq!(peer_hash(s, "10.0.0.1", 7000), peer_hash(s, "10.0.0.1", 7000));
        assert_ne!(peer_hash(s, "10.0.0.1", 7000), peer_hash(s, "10.0.0.1", 7001));
        let small = HashSpace::new(20).unwrap();
        for port in 0..1000u16 {
            assert!(peer_hash(small, "10.0.0.9", port).0 <= small.max());
        }
    }

    #[test]
    fn cohosted_ports_spread_over_ring() {
        let s = HashSpace::default();
        let mut vids: Vec<u64> = (0..10).map(|p| peer_hash(s, "10.0.0.1", 7000 + p).0).collect();
        vids.sort();
        let span = vids[9] - vids[0];
        assert!(span > u64::MAX / 4, "vnodes of one host clustered: span {span}");
    }

    #[test]
    fn interval_arithmetic() {
        let s = HashSpace::new(8).unwrap();
        assert!(s.in_half_open(10, 5, 10));
        assert!(!s.in_half_open(5, 5, 10));
        assert!(s.in_half_open(2, 250, 3));
        assert!(s.in_half_open(42, 7, 7));
        assert!(s.in_open(6, 5, 10));
        assert!(!s.in_open(10, 5, 10));
        assert_eq!(s.distance(250, 3), 9);
        assert_eq!(s.add(255, 2), 1);
    }

    #[test]
    fn decimal_finger_count() {
        assert_eq!(HashSpace::default().decimal_fingers(), 19);
        assert_eq!(HashSpace::new(10).unwrap().decimal_fingers(), 3);
        assert_eq!(HashSpace::new(3).unwrap().decimal_fingers(), 0);
    }
}
