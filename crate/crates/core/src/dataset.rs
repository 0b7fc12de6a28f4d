//! Key sets: SOSD-layout files and seeded synthetic distributions.
//!
//! File layout: `u64` little-endian count, then `count` little-endian `u64`
//! keys.

use std::fmt;
use std::path::Path;

use log::warn;
use rand::seq::index;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::error::{LeadError, Result};
use crate::rng::SplitMix64;

/// A sorted, duplicate-free key set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub keys: Vec<u64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, mut keys: Vec<u64>) -> Self {
        if !keys.is_sorted() {
            keys.sort_unstable();
        }
        keys.dedup();
        Dataset { name: name.into(), keys }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Uniform random subsample of `n` keys, still sorted. A no-op when
    /// `n >= len`.
    pub fn take(&self, n: usize, seed: u64) -> Dataset {
        if n >= self.keys.len() {
            return self.clone();
        }
        let mut rng = SplitMix64::derive(seed, "take");
        let mut picked: Vec<usize> = index::sample(&mut rng, self.keys.len(), n).into_vec();
        picked.sort_unstable();
        Dataset {
            name: format!("{}[{n}]", self.name),
            keys: picked.into_iter().map(|i| self.keys[i]).collect(),
        }
    }
}

/// Read a SOSD-layout file. Unsorted content is sorted with a warning.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    parse_dataset(&name, &bytes)
}

pub fn parse_dataset(name: &str, bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 8 {
        return Err(LeadError::CorruptDataset(format!("{} bytes, no count header", bytes.len())));
    }
    let count = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let body = &bytes[8..];
    if count.checked_mul(8) != Some(body.len() as u64) {
        return Err(LeadError::CorruptDataset(format!(
            "count says {count} keys, body holds {} bytes",
            body.len()
        )));
    }
    let keys: Vec<u64> = body
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if !keys.is_sorted() {
        warn!("dataset {name}: keys not sorted; sorting");
    }
    Ok(Dataset::new(name, keys))
}

pub fn encode_dataset(keys: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * keys.len());
    out.extend_from_slice(&(keys.len() as u64).to_le_bytes());
    for k in keys {
        out.extend_from_slice(&k.to_le_bytes());
    }
    out
}

pub fn save_dataset(path: &Path, keys: &[u64]) -> Result<()> {
    std::fs::write(path, encode_dataset(keys))?;
    Ok(())
}

/// Synthetic key distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyDistribution {
    Uniform,
    Normal { sigma: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// `c` Gaussian clusters at evenly spaced centers; `spread` is each
    /// cluster's standard deviation as a fraction of the center spacing.
    Clustered { c: usize, spread: f64 },
}

impl fmt::Display for KeyDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyDistribution::Uniform => write!(f, "uniform"),
            KeyDistribution::Normal { sigma } => write!(f, "normal({sigma})"),
            KeyDistribution::LogNormal { mu, sigma } => write!(f, "lognormal({mu},{sigma})"),
            KeyDistribution::Clustered { c, spread } => write!(f, "clustered({c},{spread})"),
        }
    }
}

impl KeyDistribution {
    /// `uniform`, `normal[:sigma]`, `lognormal[:mu,sigma]`,
    /// `clustered[:c,spread]`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, a),
            None => (s, ""),
        };
        let nums: Vec<f64> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| LeadError::InvalidConfig(format!("bad distribution arguments `{args}`")))?
        };
        let arg = |i: usize, d: f64| nums.get(i).copied().unwrap_or(d);
        let d = match name {
            "uniform" => KeyDistribution::Uniform,
            "normal" => KeyDistribution::Normal { sigma: arg(0, 0.1) },
            "lognormal" => KeyDistribution::LogNormal {
                mu: arg(0, 0.0),
                sigma: arg(1, 1.0),
            },
            "clustered" => KeyDistribution::Clustered {
                c: arg(0, 5.0).max(1.0) as usize,
                spread: arg(1, 0.05),
            },
            other => return Err(LeadError::InvalidConfig(format!("unknown distribution `{other}`"))),
        };
        Ok(d)
    }

    fn sample(&self, rng: &mut SplitMix64) -> u64 {
        const TOP: f64 = 18_446_744_073_709_549_568.0; // largest f64 below 2^64
        let to_key = |x: f64| x.clamp(0.0, TOP) as u64;
        match *self {
            KeyDistribution::Uniform => rng.next(),
            KeyDistribution::Normal { sigma } => {
                let z: f64 = Normal::new(0.5, sigma).expect("sigma").sample(rng);
                to_key(z * TOP)
            }
            KeyDistribution::LogNormal { mu, sigma } => {
                let x: f64 = LogNormal::new(mu, sigma).expect("sigma").sample(rng);
                // 2^40 per unit keeps ~20 sigma of headroom below 2^64.
                to_key(x * (1u64 << 40) as f64)
            }
            KeyDistribution::Clustered { c, spread } => {
                let spacing = TOP / c as f64;
                let i = rng.below(c as u64) as f64;
                let z: f64 = Normal::new(0.0, spread * spacing).expect("spread").sample(rng);
                to_key((i + 0.5) * spacing + z)
            }
        }
    }
}

/// `count` distinct keys from `dist`, deterministic in `seed`.
pub fn gen_dataset(dist: KeyDistribution, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(LeadError::EmptyDataset);
    }
    let mut rng = SplitMix64::derive(seed, "dataset");
    let mut keys: Vec<u64> = (0..count).map(|_| dist.sample(&mut rng)).collect();
    keys.sort_unstable();
    keys.dedup();
    let mut guard = 0;
    while keys.len() < count {
        let missing = count - keys.len();
        keys.extend((0..missing).map(|_| dist.sample(&mut rng)));
        keys.sort_unstable();
        keys.dedup();
        guard += 1;
        if guard > 64 {
            return Err(LeadError::InvalidConfig(format!("{dist} cannot produce {count} distinct keys")));
        }
    }
    Ok(Dataset {
        name: dist.to_string(),
        keys,
    })
}

/// Equal-width histogram of `keys` over `[min, max]`.
pub fn histogram(keys: &[u64], bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins.max(1)];
    let (Some(&lo), Some(&hi)) = (keys.first(), keys.last()) else {
        return h;
    };
    let last = h.len() - 1;
    let width = (hi - lo) as f64 / h.len() as f64;
    for &k in keys {
        let b = if width > 0.0 { ((k - lo) as f64 / width) as usize } else { 0 };
        h[b.min(last)] += 1;
    }
    h
}

/// Local maxima of a histogram that rise above its mean and are separated
/// by a dip below it.
pub fn count_modes(hist: &[usize]) -> usize {
    if hist.is_empty() {
        return 0;
    }
    let mean = hist.iter().sum::<usize>() as f64 / hist.len() as f64;
    let mut modes = 0;
    let mut above = false;
    for &c in hist {
        let high = c as f64 > mean;
        if high && !above {
            modes += 1;
        }
        above = high;
    }
    modes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_corruption() {
        let bytes = encode_dataset(&[1, 2, 3]);
        assert_eq!(parse_dataset("t", &bytes).unwrap().keys, vec![1, 2, 3]);
        let err = parse_dataset("t", &bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, LeadError::CorruptDataset(_)));
        assert!(parse_dataset("t", &[1, 2]).is_err());
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let d = parse_dataset("t", &encode_dataset(&[5, 1, 3, 3])).unwrap();
        assert_eq!(d.keys, vec![1, 3, 5]);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_dataset(KeyDistribution::Uniform, 10, 7).unwrap();
        let b = gen_dataset(KeyDistribution::Uniform, 10, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
    }

    #[test]
    fn clustered_has_c_modes() {
        let d = gen_dataset(KeyDistribution::Clustered { c: 5, spread: 0.05 }, 50_000, 3).unwrap();
        assert_eq!(count_modes(&histogram(&d.keys, 100)), 5);
    }

    #[test]
    fn lognormal_is_skewed() {
        let d = gen_dataset(KeyDistribution::LogNormal { mu: 0.0, sigma: 1.0 }, 100_000, 5).unwrap();
        let mut h = histogram(&d.keys, 10);
        h.sort_unstable();
        assert!(h[9] >= 2 * h[0].max(1));
    }

    #[test]
    fn take_subsamples_sorted() {
        let d = gen_dataset(KeyDistribution::Uniform, 1000, 1).unwrap();
        let t = d.take(100, 9);
        assert_eq!(t.len(), 100);
        assert!(t.keys.windows(2).all(|w| w[0] < w[1]));
        assert!(t.keys.iter().all(|k| d.keys.binary_search(k).is_ok()));
    }
}
