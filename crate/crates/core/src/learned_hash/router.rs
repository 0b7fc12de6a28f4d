//! First model stage: sends a key to one of `B` leaves.

/// Stage-0 model kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RouterKind {
    #[default]
    Linear,
    Radix,
}

impl RouterKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(RouterKind::Linear),
            "radix" => Some(RouterKind::Radix),
            _ => None,
        }
    }
}

/// Monotone stage-0 model.
///
/// `route` returns the leaf index together with the key's normalized
/// position inside that leaf's slice of the router output. `(leaf, u)` is
/// lexicographically non-decreasing in the key.
#[derive(Debug, Clone, PartialEq)]
pub enum Router {
    /// Least-squares line from key to rank, slope clamped at zero.
    Linear { slope: f64, intercept: f64 },
    /// Buckets by the high bits of `key - min_key`.
    Radix { min_key: u64, shift: u32 },
}

impl Router {
    pub fn kind(&self) -> RouterKind {
        match self {
            Router::Linear { .. } => RouterKind::Linear,
            Router::Radix { .. } => RouterKind::Radix,
        }
    }

    /// Fit over sorted `keys` with ranks `ranks`.
    pub fn fit(kind: RouterKind, keys: &[u64], ranks: &[u64], leaves: usize) -> Router {
        match kind {
            RouterKind::Linear => {
                let n = keys.len() as f64;
                let mx = keys.iter().map(|&k| k as f64).sum::<f64>() / n;
                let my = ranks.iter().map(|&r| r as f64).sum::<f64>() / n;
                let (mut sxx, mut sxy) = (0.0, 0.0);
                for (&k, &r) in keys.iter().zip(ranks) {
                    let dx = k as f64 - mx;
                    sxx += dx * dx;
                    sxy += dx * (r as f64 - my);
                }
                let slope = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
                Router::Linear {
                    slope,
                    intercept: my - slope * mx,
                }
            }
            RouterKind::Radix => {
                let min_key = keys[0];
                let span = keys[keys.len() - 1] - min_key;
                let mut shift = 0u32;
                while shift < 64 && (span >> shift) >= leaves as u64 {
                    shift += 1;
                }
                Router::Radix { min_key, shift }
            }
        }
    }

    /// `(leaf index, position in [0, 1])` for `key`, given `b` leaves and a
    /// training count of `n`.
    #[inline]
    pub fn route(&self, key: u64, b: usize, n: u64) -> (usize, f64) {
        match self {
            Router::Linear { slope, intercept } => {
                let raw = (slope * key as f64 + intercept) * b as f64 / n as f64;
                let p = if raw.is_nan() { 0.0 } else { raw.clamp(0.0, b as f64) };
                let j = p.floor() as usize;
                if j >= b {
                    (b - 1, 1.0)
                } else {
                    (j, p - j as f64)
                }
            }
            Router::Radix { min_key, shift } => {
                if key < *min_key {
                    return (0, 0.0);
                }
                let off = key - min_key;
                let bucket = if *shift >= 64 { 0 } else { off >> shift };
                if bucket >= b as u64 {
                    return (b - 1, 1.0);
                }
                let u = if *shift == 0 {
                    0.0
                } else {
                    let mask = if *shift >= 64 { u64::MAX } else { (1u64 << shift) - 1 };
                    (off & mask) as f64 / (mask as f64 + 1.0)
                };
                (bucket as usize, u)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monotone(r: &Router, keys: impl Iterator<Item = u64>, b: usize, n: u64) {
        let mut prev = (0usize, f64::NEG_INFINITY);
        for k in keys {
            let cur = r.route(k, b, n);
            assert!(cur.0 < b);
            assert!((0.0..=1.0).contains(&cur.1));
            assert!(cur.0 > prev.0 || (cur.0 == prev.0 && cur.1 >= prev.1), "key {k}");
            prev = cur;
        }
    }

    #[test]
    fn linear_router_identity_data() {
        let keys: Vec<u64> = (0..1000).collect();
        let r = Router::fit(RouterKind::Linear, &keys, &keys, 4);
        assert_eq!(
            r,
            Router::Linear {
                slope: 1.0,
                intercept: 0.0
            }
        );
        assert_eq!(r.route(250, 4, 1000), (1, 0.0));
        monotone(&r, (0..2000).step_by(7), 4, 1000);
    }

    #[test]
    fn radix_router_covers_span() {
        let keys = vec![1000u64, 1500, 9000, 70_000];
        let ranks = vec![0, 1, 2, 3];
        let r = Router::fit(RouterKind::Radix, &keys, &ranks, 16);
        let (b, _) = r.route(70_000, 16, 4);
        assert!(b < 16);
        monotone(&r, (0..100_000).step_by(13), 16, 4);
        monotone(&r, [u64::MAX - 1, u64::MAX].into_iter(), 16, 4);
    }
}
