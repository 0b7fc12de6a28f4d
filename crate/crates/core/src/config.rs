//! `key = value` experiment configuration.
//!
//! Unknown keys are rejected. [`ExperimentConfig::snapshot`] writes every
//! key in a fixed order, and parsing a snapshot gives back the same
//! configuration.

use std::path::{Path, PathBuf};

use crate::dataset::{gen_dataset, load_dataset, Dataset, KeyDistribution};
use crate::error::{LeadError, Result};
use crate::learned_hash::LeafFamily;
use crate::overlay::{NetConfig, Placement};
use crate::rig::{RigConfig, TopologySpec};
use crate::ring::HashSpace;
use crate::simnet::{DurationDist, MS};

/// Where keys come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    File(PathBuf),
    Gen(KeyDistribution),
}

impl DatasetSpec {
    /// `gen:<distribution>` or a file path.
    pub fn parse(s: &str) -> Result<Self> {
        match s.strip_prefix("gen:") {
            Some(d) => Ok(DatasetSpec::Gen(KeyDistribution::parse(d)?)),
            None => Ok(DatasetSpec::File(PathBuf::from(s))),
        }
    }
}

impl std::fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetSpec::File(p) => write!(f, "{}", p.display()),
            DatasetSpec::Gen(d) => {
                let s = match d {
                    KeyDistribution::Uniform => "uniform".to_string(),
                    KeyDistribution::Normal { sigma } => format!("normal:{sigma}"),
                    KeyDistribution::LogNormal { mu, sigma } => format!("lognormal:{mu},{sigma}"),
                    KeyDistribution::Clustered { c, spread } => format!("clustered:{c},{spread}"),
                };
                write!(f, "gen:{s}")
            }
        }
    }
}

/// A compared system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum System {
    Lead,
    /// Chord with uniform hashing; ranges as batches of `batch` lookups.
    Chord { batch: usize },
}

impl System {
    /// `lead`, `chord` (batch 100) or `chord<S>`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "lead" {
            return Ok(System::Lead);
        }
        match s.strip_prefix("chord") {
            Some("") => Ok(System::Chord { batch: 100 }),
            Some(n) => match n.parse::<usize>() {
                Ok(b) if b > 0 => Ok(System::Chord { batch: b }),
                _ => Err(LeadError::InvalidConfig(format!("bad system `{s}`"))),
            },
            None => Err(LeadError::InvalidConfig(format!("unknown system `{s}`"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            System::Lead => "lead".into(),
            System::Chord { batch } => format!("chord{batch}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub nodes: usize,
    pub vnodes: usize,
    pub dataset: DatasetSpec,
    /// Key count for generated datasets.
    pub keys: usize,
    pub take: Option<usize>,
    pub topology: TopologySpec,
    pub family: LeafFamily,
    pub branching: usize,
    pub space_bits: u32,
    pub list_len: usize,
    pub ranges: Vec<usize>,
    pub systems: Vec<System>,
    pub queries: usize,
    pub seeds: usize,
    pub lookups: usize,
    pub churn_lifetimes: Vec<String>,
    pub churn_lifetime_mean_min: f64,
    pub churn_rejoin_mean_min: f64,
    pub churn_pareto_shape: f64,
    pub churn_horizon_min: f64,
    pub workload_interval_ms: u64,
    pub workload_n: usize,
    pub stabilize_ms: u64,
    pub heartbeat_ms: u64,
    pub miss_threshold: u32,
    pub failure_timeout_ms: u64,
    /// 0 means four times the topology's p99 latency.
    pub hop_timeout_ms: u64,
    pub query_timeout_ms: u64,
    pub frm_enabled: bool,
    pub frm_threshold: f64,
    pub frm_quorum: f64,
    pub frm_learning_rate: f64,
    pub frm_session_timeout_ms: u64,
    pub balance_k: Vec<usize>,
    /// Share of the final store that arrives after training.
    pub update_new_fraction: f64,
    pub update_max_rounds: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let net = NetConfig::default();
        ExperimentConfig {
            seed: 1,
            nodes: 10,
            vnodes: 10,
            dataset: DatasetSpec::Gen(KeyDistribution::Uniform),
            keys: 1_000_000,
            take: None,
            topology: TopologySpec::Uniform { lo: 10.0, hi: 100.0 },
            family: LeafFamily::Linear,
            branching: 1024,
            space_bits: 64,
            list_len: net.list_len,
            ranges: vec![500, 2000, 5000],
            systems: vec![System::Lead, System::Chord { batch: 100 }],
            queries: 50,
            seeds: 5,
            lookups: 10_000,
            churn_lifetimes: vec!["uniform".into(), "exponential".into(), "pareto".into()],
            churn_lifetime_mean_min: 8.0,
            churn_rejoin_mean_min: 1.0,
            churn_pareto_shape: crate::simnet::DEFAULT_PARETO_SHAPE,
            churn_horizon_min: 30.0,
            workload_interval_ms: 5_000,
            workload_n: 500,
            stabilize_ms: net.stabilize_interval / MS,
            heartbeat_ms: net.heartbeat_interval / MS,
            miss_threshold: net.miss_threshold,
            failure_timeout_ms: net.failure_timeout / MS,
            hop_timeout_ms: 0,
            query_timeout_ms: net.query_timeout / MS,
            frm_enabled: net.frm.enabled,
            frm_threshold: net.frm.threshold,
            frm_quorum: net.frm.quorum,
            frm_learning_rate: net.frm.learning_rate,
            frm_session_timeout_ms: net.frm.session_timeout / MS,
            balance_k: vec![1, 2, 5, 10],
            update_new_fraction: 0.4,
            update_max_rounds: 3,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| LeadError::InvalidConfig(format!("{key}: cannot parse `{v}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse_num(key, t))
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LeadError::InvalidConfig(format!("line {}: expected `key = value`", no + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Set one key. Unknown keys fail with [`LeadError::UnknownConfigKey`].
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "nodes" => self.nodes = parse_num(key, v)?,
            "vnodes" | "vnodes_per_node" => self.vnodes = parse_num(key, v)?,
            "dataset" => self.dataset = DatasetSpec::parse(v)?,
            "keys" => self.keys = parse_num(key, v)?,
            "take" => {
                self.take = match v {
                    "" | "all" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "topology" => self.topology = TopologySpec::parse(v)?,
            "model.family" => {
                self.family = LeafFamily::parse(v)
                    .ok_or_else(|| LeadError::InvalidConfig(format!("unknown leaf family `{v}`")))?
            }
            "model.branching" => self.branching = parse_num(key, v)?,
            "space_bits" => self.space_bits = parse_num(key, v)?,
            "list_len" => self.list_len = parse_num(key, v)?,
            "ranges" => self.ranges = parse_list(key, v)?,
            "systems" => {
                self.systems = v
                    .split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(System::parse)
                    .collect::<Result<_>>()?
            }
            "queries" => self.queries = parse_num(key, v)?,
            "seeds" => self.seeds = parse_num(key, v)?,
            "lookups" => self.lookups = parse_num(key, v)?,
            "churn.lifetime" => {
                let fams: Vec<String> = v.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
                for f in &fams {
                    DurationDist::parse(f, 1.0, 2.0)?;
                }
                self.churn_lifetimes = fams;
            }
            "churn.lifetime_mean_min" => self.churn_lifetime_mean_min = parse_num(key, v)?,
            "churn.rejoin_mean_min" => self.churn_rejoin_mean_min = parse_num(key, v)?,
            "churn.pareto_shape" => self.churn_pareto_shape = parse_num(key, v)?,
            "churn.horizon_min" => self.churn_horizon_min = parse_num(key, v)?,
            "workload.interval_ms" => self.workload_interval_ms = parse_num(key, v)?,
            "workload.n" => self.workload_n = parse_num(key, v)?,
            "timers.stabilize_ms" => self.stabilize_ms = parse_num(key, v)?,
            "timers.heartbeat_ms" => self.heartbeat_ms = parse_num(key, v)?,
            "timers.miss_threshold" => self.miss_threshold = parse_num(key, v)?,
            "timers.failure_timeout_ms" => self.failure_timeout_ms = parse_num(key, v)?,
            "timers.hop_timeout_ms" => self.hop_timeout_ms = parse_num(key, v)?,
            "timers.query_timeout_ms" => self.query_timeout_ms = parse_num(key, v)?,
            "frm.enabled" => self.frm_enabled = parse_num(key, v)?,
            "frm.threshold" => self.frm_threshold = parse_num(key, v)?,
            "frm.quorum" => self.frm_quorum = parse_num(key, v)?,
            "frm.learning_rate" => self.frm_learning_rate = parse_num(key, v)?,
            "frm.session_timeout_ms" => self.frm_session_timeout_ms = parse_num(key, v)?,
            "balance.k" => self.balance_k = parse_list(key, v)?,
            "update.new_fraction" => self.update_new_fraction = parse_num(key, v)?,
            "update.max_rounds" => self.update_max_rounds = parse_num(key, v)?,
            other => return Err(LeadError::UnknownConfigKey(other.to_string())),
        }
        Ok(())
    }

    /// Every key in a fixed order, one `key = value` per line.
    pub fn snapshot(&self) -> String {
        let systems: Vec<String> = self.systems.iter().map(System::name).collect();
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("nodes", self.nodes.to_string()),
            ("vnodes", self.vnodes.to_string()),
            ("dataset", self.dataset.to_string()),
            ("keys", self.keys.to_string()),
            ("take", self.take.map_or("all".into(), |t| t.to_string())),
            ("topology", self.topology.to_string()),
            ("model.family", self.family.to_string()),
            ("model.branching", self.branching.to_string()),
            ("space_bits", self.space_bits.to_string()),
            ("list_len", self.list_len.to_string()),
            ("ranges", join(&self.ranges)),
            ("systems", systems.join(",")),
            ("queries", self.queries.to_string()),
            ("seeds", self.seeds.to_string()),
            ("lookups", self.lookups.to_string()),
            ("churn.lifetime", self.churn_lifetimes.join(",")),
            ("churn.lifetime_mean_min", self.churn_lifetime_mean_min.to_string()),
            ("churn.rejoin_mean_min", self.churn_rejoin_mean_min.to_string()),
            ("churn.pareto_shape", self.churn_pareto_shape.to_string()),
            ("churn.horizon_min", self.churn_horizon_min.to_string()),
            ("workload.interval_ms", self.workload_interval_ms.to_string()),
            ("workload.n", self.workload_n.to_string()),
            ("timers.stabilize_ms", self.stabilize_ms.to_string()),
            ("timers.heartbeat_ms", self.heartbeat_ms.to_string()),
            ("timers.miss_threshold", self.miss_threshold.to_string()),
            ("timers.failure_timeout_ms", self.failure_timeout_ms.to_string()),
            ("timers.hop_timeout_ms", self.hop_timeout_ms.to_string()),
            ("timers.query_timeout_ms", self.query_timeout_ms.to_string()),
            ("frm.enabled", self.frm_enabled.to_string()),
            ("frm.threshold", self.frm_threshold.to_string()),
            ("frm.quorum", self.frm_quorum.to_string()),
            ("frm.learning_rate", self.frm_learning_rate.to_string()),
            ("frm.session_timeout_ms", self.frm_session_timeout_ms.to_string()),
            ("balance.k", join(&self.balance_k)),
            ("update.new_fraction", self.update_new_fraction.to_string()),
            ("update.max_rounds", self.update_max_rounds.to_string()),
        ];
        let mut s = String::new();
        for (k, v) in entries {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    pub fn net_config(&self, placement: Placement) -> Result<NetConfig> {
        let mut net = NetConfig {
            space: HashSpace::new(self.space_bits)?,
            placement,
            list_len: self.list_len.max(1),
            stabilize_interval: self.stabilize_ms * MS,
            heartbeat_interval: self.heartbeat_ms * MS,
            miss_threshold: self.miss_threshold.max(1),
            failure_timeout: self.failure_timeout_ms * MS,
            hop_timeout: (self.hop_timeout_ms > 0).then_some(self.hop_timeout_ms * MS),
            query_timeout: self.query_timeout_ms * MS,
            ..NetConfig::default()
        };
        net.frm.enabled = self.frm_enabled;
        net.frm.threshold = self.frm_threshold;
        net.frm.quorum = self.frm_quorum;
        net.frm.learning_rate = self.frm_learning_rate;
        net.frm.session_timeout = self.frm_session_timeout_ms * MS;
        Ok(net)
    }

    pub fn rig(&self, placement: Placement) -> Result<RigConfig> {
        Ok(RigConfig {
            nodes: self.nodes,
            vnodes: self.vnodes,
            topology: self.topology.clone(),
            family: self.family,
            branching: self.branching,
            net: self.net_config(placement)?,
            seed: self.seed,
        })
    }

    /// Load or generate the dataset, then apply `take`.
    pub fn load_keys(&self) -> Result<Dataset> {
        let d = match &self.dataset {
            DatasetSpec::File(p) => load_dataset(p)?,
            DatasetSpec::Gen(dist) => gen_dataset(*dist, self.keys, self.seed)?,
        };
        Ok(match self.take {
            Some(n) => d.take(n, self.seed),
            None => d,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_roundtrip() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("dataset", "gen:lognormal:0,2").unwrap();
        cfg.set("systems", "lead,chord1000").unwrap();
        cfg.set("take", "5000").unwrap();
        let back = ExperimentConfig::from_text(&cfg.snapshot()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.snapshot(), cfg.snapshot());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_text("nodes = 4\nbogus.key = 1\n").unwrap_err();
        assert_eq!(err, LeadError::UnknownConfigKey("bogus.key".into()));
    }

    #[test]
    fn systems_parse() {
        assert_eq!(System::parse("chord").unwrap(), System::Chord { batch: 100 });
        assert_eq!(System::parse("chord1000").unwrap(), System::Chord { batch: 1000 });
        assert!(System::parse("kademlia").is_err());
    }
}
