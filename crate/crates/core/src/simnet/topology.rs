use std::fmt;
use std::path::Path;

use rand::Rng;

use crate::error::{LeadError, Result};
use crate::rng::SplitMix64;

use super::event::{Time, MS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Matrix,
    Euclidean,
    RandomGraph,
    UniformRandom,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::Matrix => "matrix",
            TopologyKind::Euclidean => "euclidean",
            TopologyKind::RandomGraph => "random-graph",
            TopologyKind::UniformRandom => "uniform",
        })
    }
}

/// Pairwise one-way latency between physical nodes, precomputed into a
/// dense table.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    kind: TopologyKind,
    n: usize,
    one_way: Vec<Time>,
}

fn to_time(ms_value: f64) -> Time {
    (ms_value * MS as f64).round().max(0.0) as Time
}

impl Topology {
    fn from_fn(kind: TopologyKind, n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut one_way = vec![0; n * n];
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    // Zero would let a message overtake its own cause.
                    one_way[a * n + b] = to_time(f(a, b)).max(1);
                }
            }
        }
        Topology { kind, n, one_way }
    }

    /// RTT table in ms; one-way latency is half the directional entry.
    pub fn matrix(rtt: &[Vec<f64>]) -> Result<Self> {
        let n = rtt.len();
        for (i, row) in rtt.iter().enumerate() {
            if row.len() != n {
                return Err(LeadError::IncompleteTopology(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(LeadError::IncompleteTopology(format!("entry ({i}, {j}) missing")));
            }
        }
        Ok(Self::from_fn(TopologyKind::Matrix, n, |a, b| rtt[a][b] / 2.0))
    }

    /// Plain-text matrix: node count on the first line, then one row of RTTs
    /// (ms, whitespace separated) per node.
    pub fn parse_matrix(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let n: usize = lines
            .next()
            .and_then(|l| l.parse().ok())
            .ok_or_else(|| LeadError::IncompleteTopology("missing node count".into()))?;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| LeadError::IncompleteTopology(format!("missing row {i}")))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| LeadError::IncompleteTopology(format!("row {i}: bad entry `{t}`"))))
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        Self::matrix(&rows)
    }

    pub fn load_matrix(path: &Path) -> Result<Self> {
        Self::parse_matrix(&std::fs::read_to_string(path)?)
    }

    /// Euclidean distance times `speed` ms per unit.
    pub fn euclidean(coords: &[(f64, f64)], speed: f64) -> Self {
        Self::from_fn(TopologyKind::Euclidean, coords.len(), |a, b| {
            let (dx, dy) = (coords[a].0 - coords[b].0, coords[a].1 - coords[b].1);
            (dx * dx + dy * dy).sqrt() * speed
        })
    }

    /// Random points in a `side x side` square.
    pub fn random_euclidean(n: usize, side: f64, speed: f64, rng: &mut SplitMix64) -> Self {
        let coords: Vec<(f64, f64)> = (0..n).map(|_| (rng.next_f64() * side, rng.next_f64() * side)).collect();
        Self::euclidean(&coords, speed)
    }

    /// Connected random graph (random spanning tree plus `extra_degree`
    /// extra edges per node) with edge latencies uniform in `[lo, hi]` ms;
    /// node latency is the shortest path.
    pub fn random_graph(n: usize, extra_degree: usize, lo: f64, hi: f64, rng: &mut SplitMix64) -> Self {
        let inf = f64::INFINITY;
        let mut d = vec![vec![inf; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        let add = |d: &mut Vec<Vec<f64>>, a: usize, b: usize, w: f64| {
            if w < d[a][b] {
                d[a][b] = w;
                d[b][a] = w;
            }
        };
        for b in 1..n {
            let a = rng.below(b as u64) as usize;
            let w = rng.random_range(lo..=hi);
            add(&mut d, a, b, w);
        }
        for a in 0..n {
            for _ in 0..extra_degree {
                let b = rng.below(n as u64) as usize;
                if a != b {
                    let w = rng.random_range(lo..=hi);
                    add(&mut d, a, b, w);
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                let dik = d[i][k];
                if dik == inf {
                    continue;
                }
                for j in 0..n {
                    let via = dik + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        Self::from_fn(TopologyKind::RandomGraph, n, |a, b| d[a][b])
    }

    /// Per-pair latency drawn once from `[lo, hi]` ms; symmetric.
    pub fn uniform_random(n: usize, lo: f64, hi: f64, rng: &mut SplitMix64) -> Self {
        let mut pair = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let v = rng.random_range(lo..=hi);
                pair[a * n + b] = v;
                pair[b * n + a] = v;
            }
        }
        Self::from_fn(TopologyKind::UniformRandom, n, |a, b| pair[a * n + b])
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn latency(&self, a: usize, b: usize) -> Time {
        self.one_way[a * self.n + b]
    }

    /// 99th percentile of one-way latency over distinct pairs.
    pub fn p99(&self) -> Time {
        let mut v: Vec<Time> = (0..self.n)
            .flat_map(|a| (0..self.n).filter(move |&b| b != a).map(move |b| (a, b)))
            .map(|(a, b)| self.latency(a, b))
            .collect();
        if v.is_empty() {
            return MS;
        }
        v.sort_unstable();
        let idx = ((0.99 * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
        v[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_latency_is_zero() {
        let mut rng = SplitMix64::new(1);
        let t = Topology::uniform_random(5, 10.0, 100.0, &mut rng);
        for a in 0..5 {
            assert_eq!(t.latency(a, a), 0);
            for b in 0..5 {
                if a != b {
                    let l = t.latency(a, b);
                    assert!((10 * MS..=100 * MS).contains(&l));
                    assert_eq!(l, t.latency(b, a));
                }
            }
        }
    }

    #[test]
    fn euclidean_triangle() {
        let t = Topology::euclidean(&[(0.0, 0.0), (3.0, 4.0)], 1.0);
        assert_eq!(t.latency(0, 1), 5 * MS);
    }

    #[test]
    fn matrix_halves_rtt() {
        let t = Topology::parse_matrix("2\n0 30\n50 0\n").unwrap();
        assert_eq!(t.latency(0, 1), 15 * MS);
        assert_eq!(t.latency(1, 0), 25 * MS);
        assert!(matches!(
            Topology::parse_matrix("3\n0 1 2\n1 0\n"),
            Err(LeadError::IncompleteTopology(_))
        ));
    }

    #[test]
    fn random_graph_is_metric() {
        let mut rng = SplitMix64::new(5);
        let t = Topology::random_graph(30, 2, 5.0, 50.0, &mut rng);
        for a in 0..30 {
            for b in 0..30 {
                for c in 0..30 {
                    // Rounding to microseconds can add at most 1 per leg.
                    assert!(t.latency(a, c) <= t.latency(a, b) + t.latency(b, c) + 2);
                }
            }
        }
    }
}
