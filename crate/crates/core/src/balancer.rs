//! Shadow Balancer: node virtualization, shedding of idle virtual peers,
//! and load statistics over physical nodes.

use std::fmt::Write as _;

use crate::error::Result;
use crate::overlay::{Network, PeerIdx};

impl Network {
    /// Add a node with `k` virtual peers and join them through any live
    /// peer, or form a fresh ring.
    pub fn virtualize(&mut self, address: &str, k: usize, capacity: f64) -> Result<usize> {
        let bootstrap = self.random_live_peer();
        let node = self.add_node(address, k.max(1), capacity);
        self.start_node(node, bootstrap)?;
        Ok(node)
    }

    /// Depart the live virtual peer of `node` that served the fewest
    /// requests (lowest identifier on ties). Never leaves a node empty.
    pub fn shed_load(&mut self, node: usize) -> Option<PeerIdx> {
        let live = self.node_peers(node);
        if live.len() <= 1 {
            return None;
        }
        let victim = shed_choice(live.iter().map(|&i| (i, self.peers[i].served, self.peers[i].vid.0)))?;
        self.depart(victim);
        Some(victim)
    }

    /// Key counts per live peer and per node.
    pub fn load_stats(&self) -> LoadStats {
        let per_peer: Vec<(PeerIdx, u64)> = self
            .peers
            .iter()
            .filter(|p| p.alive)
            .map(|p| (p.idx, p.store.len() as u64))
            .collect();
        let mut per_node = vec![0u64; self.nodes.len()];
        for p in self.peers.iter().filter(|p| p.alive) {
            per_node[p.node] += p.store.len() as u64;
        }
        LoadStats::from_counts(per_peer, per_node)
    }
}

/// `(peer, served, vid)` with the fewest served requests, lowest vid first.
pub fn shed_choice(candidates: impl IntoIterator<Item = (PeerIdx, u64, u64)>) -> Option<PeerIdx> {
    candidates
        .into_iter()
        .min_by_key(|&(_, served, vid)| (served, vid))
        .map(|c| c.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadStats {
    pub per_peer: Vec<(PeerIdx, u64)>,
    pub per_node: Vec<u64>,
    /// Population standard deviation of the per-node totals.
    pub stddev: f64,
    /// Per-node totals laid out row-major, `ceil(sqrt(nodes))` columns,
    /// padded with zeros.
    pub heatmap: Vec<Vec<u64>>,
}

impl LoadStats {
    pub fn from_counts(per_peer: Vec<(PeerIdx, u64)>, per_node: Vec<u64>) -> Self {
        let xs: Vec<f64> = per_node.iter().map(|&c| c as f64).collect();
        let stddev = population_stddev(&xs);
        let cols = (per_node.len() as f64).sqrt().ceil().max(1.0) as usize;
        let heatmap = heatmap(&per_node, cols);
        LoadStats {
            per_peer,
            per_node,
            stddev,
            heatmap,
        }
    }

    pub fn heatmap_csv(&self) -> String {
        let mut s = String::new();
        for row in &self.heatmap {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }
}

pub fn population_stddev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

pub fn heatmap(counts: &[u64], cols: usize) -> Vec<Vec<u64>> {
    let cols = cols.max(1);
    counts
        .chunks(cols)
        .map(|c| {
            let mut row = c.to_vec();
            row.resize(cols, 0);
            row
        })
        .collect()
}

/// `k,seed,stddev` rows.
pub fn stddev_series_csv(rows: &[(usize, u64, f64)]) -> String {
    let mut s = String::from("k,seed,stddev\n");
    for (k, seed, sd) in rows {
        let _ = writeln!(s, "{k},{seed},{sd:.6}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stddev_formula() {
        assert_eq!(population_stddev(&[5.0, 5.0, 5.0]), 0.0);
        assert_eq!(population_stddev(&[0.0, 14.0]), 7.0);
    }

    #[test]
    fn shed_argmin_and_ties() {
        assert_eq!(shed_choice([(0, 5, 900), (1, 100, 10)]), Some(0));
        assert_eq!(shed_choice([(0, 7, 900), (1, 7, 10), (2, 7, 50)]), Some(1));
        assert_eq!(shed_choice(Vec::new()), None);
    }

    #[test]
    fn heatmap_row_major() {
        let h = heatmap(&[1, 2, 3, 4, 5], 3);
        assert_eq!(h, vec![vec![1, 2, 3], vec![4, 5, 0]]);
    }
}
