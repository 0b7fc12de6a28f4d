//! Assemble a simulated deployment: topology, nodes, virtual peers, model
//! and initial key placement.

use std::path::PathBuf;

use crate::error::{LeadError, Result};
use crate::learned_hash::{train_rmi, LeafFamily, RmiModel, TrainConfig, TrainingSet};
use crate::overlay::{NetConfig, Network, Placement};
use crate::rng::SplitMix64;
use crate::simnet::Topology;

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    /// Per-pair one-way latency uniform in `[lo, hi]` ms.
    Uniform { lo: f64, hi: f64 },
    Euclidean { side: f64, speed: f64 },
    RandomGraph { degree: usize, lo: f64, hi: f64 },
    Matrix(PathBuf),
}

impl TopologySpec {
    /// `uniform[:lo,hi]`, `euclidean[:side,speed]`,
    /// `random-graph[:degree,lo,hi]`, or a path to an RTT matrix file.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| LeadError::InvalidConfig(format!("bad topology arguments `{args}`")))?
        };
        let arg = |i: usize, d: f64| nums.get(i).copied().unwrap_or(d);
        Ok(match name {
            "uniform" => TopologySpec::Uniform {
                lo: arg(0, 10.0),
                hi: arg(1, 100.0),
            },
            "euclidean" => TopologySpec::Euclidean {
                side: arg(0, 100.0),
                speed: arg(1, 1.0),
            },
            "random-graph" => TopologySpec::RandomGraph {
                degree: arg(0, 2.0) as usize,
                lo: arg(1, 5.0),
                hi: arg(2, 50.0),
            },
            _ => TopologySpec::Matrix(PathBuf::from(s)),
        })
    }

    pub fn build(&self, nodes: usize, seed: u64) -> Result<Topology> {
        let mut rng = SplitMix64::derive(seed, "topology");
        let topo = match self {
            TopologySpec::Uniform { lo, hi } => Topology::uniform_random(nodes, *lo, *hi, &mut rng),
            TopologySpec::Euclidean { side, speed } => Topology::random_euclidean(nodes, *side, *speed, &mut rng),
            TopologySpec::RandomGraph { degree, lo, hi } => {
                Topology::random_graph(nodes, *degree, *lo, *hi, &mut rng)
            }
            TopologySpec::Matrix(path) => Topology::load_matrix(path)?,
        };
        if topo.nodes() < nodes {
            return Err(LeadError::IncompleteTopology(format!(
                "topology has {} nodes, need {nodes}",
                topo.nodes()
            )));
        }
        Ok(topo)
    }
}

impl std::fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TopologySpec::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            TopologySpec::Euclidean { side, speed } => write!(f, "euclidean:{side},{speed}"),
            TopologySpec::RandomGraph { degree, lo, hi } => write!(f, "random-graph:{degree},{lo},{hi}"),
            TopologySpec::Matrix(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigConfig {
    pub nodes: usize,
    pub vnodes: usize,
    pub topology: TopologySpec,
    pub family: LeafFamily,
    pub branching: usize,
    pub net: NetConfig,
    pub seed: u64,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            nodes: 10,
            vnodes: 10,
            topology: TopologySpec::Uniform { lo: 10.0, hi: 100.0 },
            family: LeafFamily::Linear,
            branching: 1024,
            net: NetConfig::default(),
            seed: 1,
        }
    }
}

impl RigConfig {
    pub fn peers(&self) -> usize {
        self.nodes * self.vnodes
    }

    pub fn train(&self, keys: &[u64]) -> Result<RmiModel> {
        let train = TrainingSet::from_sorted(keys.to_vec());
        let mut cfg = TrainConfig::new(self.family, self.branching, self.net.space);
        cfg.branching = cfg.branching.min(keys.len().max(1));
        train_rmi(&train, &cfg)
    }

    /// Nodes and virtual peers with no routing state yet.
    pub fn empty_network(&self) -> Result<Network> {
        if self.nodes == 0 || self.vnodes == 0 {
            return Err(LeadError::InvalidConfig("nodes and vnodes must be positive".into()));
        }
        let topo = self.topology.build(self.nodes, self.seed)?;
        let mut net = Network::new(self.net.clone(), topo, self.seed);
        for address in node_addresses(self.nodes, self.seed) {
            net.add_node(&address, self.vnodes, 1.0);
        }
        Ok(net)
    }

    /// A stabilized ring holding `keys` at their owners. Learned placement
    /// trains the model on `keys` first.
    pub fn converged(&self, keys: &[u64]) -> Result<Network> {
        let model = match self.net.placement {
            Placement::Learned => Some(self.train(keys)?),
            Placement::Uniform => None,
        };
        self.converged_with(keys, model)
    }

    /// Same as [`RigConfig::converged`] with a model trained elsewhere.
    pub fn converged_with(&self, keys: &[u64], model: Option<RmiModel>) -> Result<Network> {
        let mut net = self.empty_network()?;
        if let Some(m) = model {
            net.install_model(m);
        }
        net.build_converged();
        net.bulk_load(keys)?;
        Ok(net)
    }
}

/// Distinct private addresses for `n` nodes, drawn from `seed`. The seed
/// thereby moves every virtual peer on the ring.
pub fn node_addresses(n: usize, seed: u64) -> Vec<String> {
    let mut rng = SplitMix64::derive(seed, "addresses");
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = rng.next() & 0x00ff_ffff;
        if seen.insert(x) {
            out.push(format!("10.{}.{}.{}", x >> 16, (x >> 8) & 0xff, x & 0xff));
        }
    }
    out
}
