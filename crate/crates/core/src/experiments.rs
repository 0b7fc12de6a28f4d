//! Benchmark runners behind the CLI subcommands, and result files.
//!
//! Every runner is a pure function of its [`ExperimentConfig`]: all
//! randomness derives from the configured seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::balancer::{population_stddev, stddev_series_csv};
use crate::config::{ExperimentConfig, System};
use crate::error::Result;
use crate::learned_hash::{error_stats, LeafFamily, RmiModel, TrainingSet};
use crate::overlay::{Network, Placement, WorkItem};
use crate::query::{range_oracle, QueryRecord, CSV_HEADER};
use crate::rng::SplitMix64;
use crate::ring::fnv1a64;
use crate::simnet::{churn_schedule, ChurnConfig, DurationDist, Time, MINUTE, MS, SECOND};

/// A finished query tagged with the system and range size it measured.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub system: String,
    pub n: usize,
    pub rec: QueryRecord,
}

/// Aggregate of the rows sharing one `(system, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub system: String,
    pub n: usize,
    pub queries: usize,
    pub success_rate: f64,
    /// Over successful queries.
    pub mean_latency_ms: f64,
    pub mean_messages: f64,
    pub max_messages: u32,
    pub mean_hops: f64,
}

pub const SUMMARY_HEADER: &str = "system,n,queries,success_rate,mean_latency_ms,mean_messages,max_messages,mean_hops";

impl SummaryRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.3},{:.3},{},{:.3}",
            self.system,
            self.n,
            self.queries,
            self.success_rate,
            self.mean_latency_ms,
            self.mean_messages,
            self.max_messages,
            self.mean_hops
        )
    }
}

/// Group rows by `(system, n)` in first-seen order.
pub fn summarize(rows: &[Row]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, usize), Vec<&QueryRecord>> = BTreeMap::new();
    for r in rows {
        let key = (r.system.clone(), r.n);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(&r.rec);
    }
    order
        .into_iter()
        .map(|key| {
            let recs = &groups[&key];
            let ok: Vec<&&QueryRecord> = recs.iter().filter(|r| r.success).collect();
            let q = recs.len().max(1) as f64;
            SummaryRow {
                system: key.0.clone(),
                n: key.1,
                queries: recs.len(),
                success_rate: ok.len() as f64 / q,
                mean_latency_ms: ok.iter().map(|r| r.latency_ms()).sum::<f64>() / ok.len().max(1) as f64,
                mean_messages: recs.iter().map(|r| r.messages as f64).sum::<f64>() / q,
                max_messages: recs.iter().map(|r| r.messages).max().unwrap_or(0),
                mean_hops: recs.iter().map(|r| r.hops as f64).sum::<f64>() / q,
            }
        })
        .collect()
}

/// Everything a subcommand writes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub records: Vec<Row>,
    /// Full `summary.csv` text, header included.
    pub summary: String,
    /// Further files by name.
    pub extra: BTreeMap<String, String>,
    /// `(criterion, passed, detail)` for `--assert`.
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl RunOutput {
    pub fn records_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.rec.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Run id: a content hash of the snapshot, as 16 hex digits.
pub fn run_id(snapshot: &str) -> String {
    format!("{:016x}", fnv1a64(snapshot.as_bytes()))
}

/// Write `config.snapshot`, `records.csv`, `summary.csv` and any extra
/// files under `<root>/<run-id>/`. The id hashes the command together with
/// the snapshot. Returns that directory.
pub fn write_results(root: &Path, command: &str, cfg: &ExperimentConfig, out: &RunOutput) -> Result<PathBuf> {
    let snapshot = cfg.snapshot();
    let dir = root.join(run_id(&format!("command = {command}\n{snapshot}")));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.snapshot"), &snapshot)?;
    std::fs::write(dir.join("records.csv"), out.records_csv())?;
    std::fs::write(dir.join("summary.csv"), &out.summary)?;
    for (name, body) in &out.extra {
        std::fs::write(dir.join(name), body)?;
    }
    if !out.checks.is_empty() {
        let mut s = String::from("check,passed,detail\n");
        for c in &out.checks {
            let _ = writeln!(s, "{},{},\"{}\"", c.name, c.passed, c.detail);
        }
        std::fs::write(dir.join("checks.csv"), s)?;
    }
    Ok(dir)
}

fn placement(system: System) -> Placement {
    match system {
        System::Lead => Placement::Learned,
        System::Chord { .. } => Placement::Uniform,
    }
}

/// A quiescent converged network for `system` holding `keys`.
pub fn quiescent_network(cfg: &ExperimentConfig, system: System, keys: &[u64]) -> Result<Network> {
    let mut rig = cfg.rig(placement(system))?;
    rig.net.maintenance = false;
    rig.converged(keys)
}

fn seed_configs(cfg: &ExperimentConfig) -> Vec<ExperimentConfig> {
    (0..cfg.seeds.max(1) as u64)
        .map(|s| ExperimentConfig {
            seed: cfg.seed + s,
            ..cfg.clone()
        })
        .collect()
}

/// Range queries of every configured size on every system. Each seed
/// draws one set of `(origin, K)` pairs shared by all systems.
pub fn range_rows(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let mut by_system: BTreeMap<usize, Vec<Row>> = BTreeMap::new();
    for c in seed_configs(cfg) {
        let keys = c.load_keys()?.keys;
        let peers = c.nodes * c.vnodes;
        let mut rng = SplitMix64::derive(c.seed, "range-queries");
        let plan: Vec<(usize, usize, u64)> = c
            .ranges
            .iter()
            .flat_map(|&n| std::iter::repeat_n(n, c.queries))
            .map(|n| (n, rng.below(peers as u64) as usize, keys[rng.below(keys.len() as u64) as usize]))
            .collect();
        for (si, &system) in c.systems.iter().enumerate() {
            let mut net = quiescent_network(&c, system, &keys)?;
            let out = by_system.entry(si).or_default();
            for &(n, origin, k) in &plan {
                let rec = match system {
                    System::Lead => net.range_query(origin, k, n),
                    System::Chord { batch } => net.chord_batch_range(origin, range_oracle(&keys, k, n), batch),
                };
                out.push(Row {
                    system: system.name(),
                    n,
                    rec,
                });
            }
        }
    }
    // Stable grouping: system, then n, then seed and query order.
    let mut rows = Vec::new();
    for (_, mut rs) in by_system {
        rs.sort_by_key(|r| r.n);
        rows.extend(rs);
    }
    Ok(rows)
}

pub fn bench_range(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let records = range_rows(cfg)?;
    let summary = summarize(&records);
    Ok(RunOutput {
        checks: range_checks(&summary, cfg),
        summary: summary_csv(&summary),
        records,
        ..Default::default()
    })
}

/// Single-key lookups from shared `(origin, key)` pairs on every system.
pub fn bench_lookup(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let keys = cfg.load_keys()?.keys;
    let peers = cfg.nodes * cfg.vnodes;
    let mut rng = SplitMix64::derive(cfg.seed, "lookups");
    let plan: Vec<(usize, u64)> = (0..cfg.lookups)
        .map(|_| (rng.below(peers as u64) as usize, keys[rng.below(keys.len() as u64) as usize]))
        .collect();
    let mut records = Vec::new();
    for &system in &cfg.systems {
        let mut net = quiescent_network(cfg, system, &keys)?;
        for &(origin, k) in &plan {
            records.push(Row {
                system: system.name(),
                n: 1,
                rec: net.lookup(origin, k),
            });
        }
    }
    let summary = summarize(&records);
    Ok(RunOutput {
        checks: lookup_checks(&summary, peers),
        summary: summary_csv(&summary),
        records,
        ..Default::default()
    })
}

fn ceil_log2(x: usize) -> u32 {
    x.max(1).next_power_of_two().trailing_zeros()
}

fn find<'a>(rows: &'a [SummaryRow], system: &str, n: usize) -> Option<&'a SummaryRow> {
    rows.iter().find(|r| r.system == system && r.n == n)
}

/// Message reduction, per-query message bound and latency flatness.
pub fn range_checks(rows: &[SummaryRow], cfg: &ExperimentConfig) -> Vec<Check> {
    let mut out = Vec::new();
    let peers = cfg.nodes * cfg.vnodes;
    let total = cfg.load_keys().map(|d| d.len()).unwrap_or(cfg.keys).max(1);
    let chord = "chord100";
    if let (Some(l), Some(c)) = (find(rows, "lead", 2000), find(rows, chord, 2000)) {
        let ratio = l.mean_messages / c.mean_messages.max(1e-9);
        out.push(Check::new(
            "message_reduction",
            ratio <= 0.2,
            format!("lead/chord100 messages at n=2000 = {ratio:.4}"),
        ));
    }
    for r in rows.iter().filter(|r| r.system == "lead") {
        let bound = ceil_log2(peers) as usize + (r.n * peers).div_ceil(total) + 2;
        out.push(Check::new(
            &format!("message_bound_n{}", r.n),
            (r.max_messages as usize) <= bound,
            format!("max messages {} vs bound {bound}", r.max_messages),
        ));
    }
    for system in ["lead", chord] {
        if let (Some(a), Some(b)) = (find(rows, system, 500), find(rows, system, 5000)) {
            let ratio = b.mean_latency_ms / a.mean_latency_ms.max(1e-9);
            let passed = if system == "lead" { ratio <= 2.0 } else { ratio >= 5.0 };
            out.push(Check::new(
                &format!("latency_ratio_{system}"),
                passed,
                format!("latency(5000)/latency(500) = {ratio:.3}"),
            ));
        }
    }
    out
}

/// Lookup latency parity and mean hop count.
pub fn lookup_checks(rows: &[SummaryRow], peers: usize) -> Vec<Check> {
    let mut out = Vec::new();
    let (Some(l), Some(c)) = (
        rows.iter().find(|r| r.system == "lead"),
        rows.iter().find(|r| r.system.starts_with("chord")),
    ) else {
        return out;
    };
    let ratio = l.mean_latency_ms / c.mean_latency_ms.max(1e-9);
    out.push(Check::new(
        "lookup_parity",
        (0.9..=1.1).contains(&ratio),
        format!("lead/chord lookup latency = {ratio:.4}"),
    ));
    let bound = ceil_log2(peers) as f64;
    out.push(Check::new(
        "lookup_hops",
        l.mean_hops <= bound,
        format!("mean hops {:.3} vs {bound}", l.mean_hops),
    ));
    out
}

/// Range and lookup benches together, with their checks.
pub fn compare(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut range = bench_range(cfg)?;
    let lookup = bench_lookup(cfg)?;
    range.records.extend(lookup.records);
    let summary = summarize(&range.records);
    range.summary = summary_csv(&summary);
    range.checks.extend(lookup.checks);
    Ok(range)
}

/// Outcome of one churn run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChurnRun {
    pub label: String,
    pub rows: Vec<Row>,
    pub success_rate: f64,
    pub mean_latency_ms: f64,
    pub events: u64,
}

/// Range workload on a maintained LEAD network, with node churn drawn from
/// `lifetime` (`None` runs churn-free).
pub fn churn_run(cfg: &ExperimentConfig, keys: &[u64], lifetime: Option<&str>) -> Result<ChurnRun> {
    let rig = cfg.rig(Placement::Learned)?;
    let mut net = rig.converged(keys)?;
    let horizon = (cfg.churn_horizon_min * MINUTE as f64) as Time;
    let label = lifetime.unwrap_or("none").to_string();
    if let Some(family) = lifetime {
        let churn = ChurnConfig {
            lifetime: DurationDist::parse(family, cfg.churn_lifetime_mean_min, cfg.churn_pareto_shape)?,
            rejoin: DurationDist::parse("exponential", cfg.churn_rejoin_mean_min, cfg.churn_pareto_shape)?,
            reset_on_rejoin: false,
        };
        let mut rng = SplitMix64::derive(cfg.seed, "churn");
        for (t, node, action) in churn_schedule(cfg.nodes, &churn, horizon, &mut rng) {
            net.schedule_churn(t, node, action);
        }
    }
    // The workload starts after a settling period and draws the same keys
    // whatever the churn.
    let mut rng = SplitMix64::derive(cfg.seed, "churn-workload");
    let interval = cfg.workload_interval_ms.max(1) * MS;
    let mut t = interval;
    while t < horizon {
        let key = keys[rng.below(keys.len() as u64) as usize];
        net.schedule_work(t, WorkItem::Range { key, n: cfg.workload_n });
        t += interval;
    }
    net.start_maintenance();
    net.run_until(horizon + cfg.query_timeout_ms * MS);
    let rows: Vec<Row> = net
        .take_records()
        .into_values()
        .map(|rec| Row {
            system: format!("lead-{label}"),
            n: cfg.workload_n,
            rec,
        })
        .collect();
    let done: Vec<&Row> = rows.iter().filter(|r| r.rec.success).collect();
    Ok(ChurnRun {
        success_rate: done.len() as f64 / rows.len().max(1) as f64,
        mean_latency_ms: done.iter().map(|r| r.rec.latency_ms()).sum::<f64>() / done.len().max(1) as f64,
        events: net.stats().events,
        label,
        rows,
    })
}

/// A churn-free reference run followed by one run per lifetime family.
pub fn bench_churn(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let keys = cfg.load_keys()?.keys;
    let base = churn_run(cfg, &keys, None)?;
    let mut runs = vec![base];
    for family in &cfg.churn_lifetimes {
        runs.push(churn_run(cfg, &keys, Some(family))?);
    }
    let mut checks = Vec::new();
    let reference = runs[0].mean_latency_ms;
    for r in &runs[1..] {
        checks.push(Check::new(
            &format!("churn_success_{}", r.label),
            r.success_rate >= 0.99,
            format!("success rate {:.4}", r.success_rate),
        ));
        let ratio = r.mean_latency_ms / reference.max(1e-9);
        checks.push(Check::new(
            &format!("churn_latency_{}", r.label),
            ratio <= 1.5,
            format!("latency vs churn-free = {ratio:.3}"),
        ));
    }
    let records: Vec<Row> = runs.into_iter().flat_map(|r| r.rows).collect();
    let summary = summarize(&records);
    Ok(RunOutput {
        summary: summary_csv(&summary),
        records,
        checks,
        ..Default::default()
    })
}

/// Per-node key-count standard deviation for each `k`, over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceSeries {
    /// `(k, seed, stddev)`.
    pub samples: Vec<(usize, u64, f64)>,
}

impl BalanceSeries {
    pub fn mean(&self, k: usize) -> f64 {
        let xs: Vec<f64> = self.samples.iter().filter(|s| s.0 == k).map(|s| s.2).collect();
        xs.iter().sum::<f64>() / xs.len().max(1) as f64
    }
}

/// Train once, then place the keys on rings with `k` virtual peers per
/// node for every `k` and seed.
pub fn balance_series(cfg: &ExperimentConfig, keys: &[u64]) -> Result<(BalanceSeries, Network)> {
    let model = cfg.rig(Placement::Learned)?.train(keys)?;
    let mut samples = Vec::new();
    let mut last = None;
    for &k in &cfg.balance_k {
        for c in seed_configs(cfg) {
            let mut rig = c.rig(Placement::Learned)?;
            rig.vnodes = k;
            rig.net.maintenance = false;
            let net = rig.converged_with(keys, Some(model.clone()))?;
            samples.push((k, c.seed, net.load_stats().stddev));
            last = Some(net);
        }
    }
    let net = match last {
        Some(n) => n,
        None => cfg.rig(Placement::Learned)?.converged_with(keys, Some(model))?,
    };
    Ok((BalanceSeries { samples }, net))
}

pub fn bench_balance(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let keys = cfg.load_keys()?.keys;
    let (series, net) = balance_series(cfg, &keys)?;
    let mut summary = String::from("k,seeds,mean_stddev\n");
    let means: Vec<(usize, f64)> = cfg.balance_k.iter().map(|&k| (k, series.mean(k))).collect();
    for &(k, m) in &means {
        let _ = writeln!(summary, "{k},{},{m:.3}", cfg.seeds.max(1));
    }
    let mut checks = Vec::new();
    let monotone = means.windows(2).all(|w| w[1].1 <= w[0].1);
    let shown: Vec<String> = means.iter().map(|(k, m)| format!("k={k}: {m:.0}")).collect();
    checks.push(Check::new("balance_monotone", monotone, format!("mean sd {}", shown.join(", "))));
    if let (Some(first), Some(last)) = (means.first(), means.last()) {
        checks.push(Check::new(
            "balance_halving",
            last.1 <= 0.5 * first.1,
            format!("sd(k={}) / sd(k={}) = {:.3}", last.0, first.0, last.1 / first.1.max(1e-9)),
        ));
    }
    let mut extra = BTreeMap::new();
    extra.insert("stddev.csv".to_string(), stddev_series_csv(&series.samples));
    extra.insert("heatmap.csv".to_string(), net.load_stats().heatmap_csv());
    Ok(RunOutput {
        summary,
        extra,
        checks,
        ..Default::default()
    })
}

/// Outcome of the drift experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    /// Per-node standard deviation under a model trained on every key.
    pub baseline_sd: f64,
    /// Keys placed by the model trained before the new keys arrived.
    pub stale_sd: f64,
    /// After inserting the new keys with FRM running.
    pub frm_sd: f64,
    /// Model versions published beyond the initial one.
    pub rounds: u32,
    /// For each published version, heartbeat rounds until every live peer
    /// held it or a later one. `None` if some peer never did.
    pub convergence_rounds: Vec<Option<f64>>,
    /// No peer ever adopted a version lower than one it held.
    pub versions_monotone: bool,
    pub puts: Vec<Row>,
}

fn node_stddev(net: &Network) -> f64 {
    let per_node: Vec<f64> = net.load_stats().per_node.iter().map(|&c| c as f64).collect();
    population_stddev(&per_node)
}

/// Split the keys into an initial share and `update_new_fraction` new
/// keys drawn at random, then compare placement quality.
pub fn update_report(cfg: &ExperimentConfig, keys: &[u64]) -> Result<UpdateReport> {
    let rig = cfg.rig(Placement::Learned)?;
    let mut rng = SplitMix64::derive(cfg.seed, "update-split");
    let new_count = (keys.len() as f64 * cfg.update_new_fraction).round() as usize;
    let mut is_new = vec![false; keys.len()];
    for i in rand::seq::index::sample(&mut rng, keys.len(), new_count) {
        is_new[i] = true;
    }
    let base: Vec<u64> = keys.iter().zip(&is_new).filter(|p| !*p.1).map(|p| *p.0).collect();
    let mut fresh: Vec<u64> = keys.iter().zip(&is_new).filter(|p| *p.1).map(|p| *p.0).collect();

    let mut quiet = rig.clone();
    quiet.net.maintenance = false;
    let baseline_sd = node_stddev(&quiet.converged(keys)?);
    let stale_model: RmiModel = rig.train(&base)?;
    let stale_sd = node_stddev(&quiet.converged_with(keys, Some(stale_model.clone()))?);

    let mut net = rig.converged_with(&base, Some(stale_model.clone()))?;
    let v0 = stale_model.version();
    // Arrival order is random; puts are spread over one minute.
    for i in (1..fresh.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        fresh.swap(i, j);
    }
    let span = MINUTE;
    let step = (span / fresh.len().max(1) as u64).max(1);
    for (i, &k) in fresh.iter().enumerate() {
        net.schedule_work(SECOND + i as u64 * step, WorkItem::Put { key: k });
    }
    net.start_maintenance();
    net.run_until(SECOND + span + MINUTE);

    let peers: Vec<usize> = (0..net.peers().len()).filter(|&i| net.peer(i).alive).collect();
    let versions_monotone = net
        .peers()
        .iter()
        .all(|p| p.adopted_versions.windows(2).all(|w| w[0] <= w[1]));
    let heartbeat = net.config().heartbeat_interval.max(1) as f64;
    let stats = net.stats();
    let mut published: Vec<(Time, u32)> = Vec::new();
    for &(t, _, v) in &stats.publishes {
        if !published.iter().any(|p| p.1 == v) {
            published.push((t, v));
        }
    }
    let convergence_rounds = published
        .iter()
        .map(|&(t0, v)| {
            let mut latest = t0;
            for &p in &peers {
                let held_from = if net.peer(p).model_version() >= v {
                    stats
                        .adoptions
                        .iter()
                        .filter(|a| a.1 == p && a.2 >= v && a.0 >= t0)
                        .map(|a| a.0)
                        .min()
                        .unwrap_or(t0)
                } else {
                    return None;
                };
                latest = latest.max(held_from);
            }
            Some((latest - t0) as f64 / heartbeat)
        })
        .collect();
    let rounds = net
        .peers()
        .iter()
        .map(|p| p.model_version())
        .max()
        .unwrap_or(v0)
        .saturating_sub(v0);
    let frm_sd = node_stddev(&net);
    let puts = net
        .take_records()
        .into_values()
        .map(|rec| Row {
            system: "lead".into(),
            n: 1,
            rec,
        })
        .collect();
    Ok(UpdateReport {
        baseline_sd,
        stale_sd,
        frm_sd,
        rounds,
        convergence_rounds,
        versions_monotone,
        puts,
    })
}

pub fn update_checks(r: &UpdateReport, cfg: &ExperimentConfig, peers: usize) -> Vec<Check> {
    let limit = 5.0 * ceil_log2(peers) as f64;
    let converged = r.convergence_rounds.iter().all(|c| c.is_some_and(|x| x <= limit));
    vec![
        Check::new(
            "drift_tolerance",
            r.stale_sd <= 2.0 * r.baseline_sd,
            format!("stale {:.1} vs baseline {:.1}", r.stale_sd, r.baseline_sd),
        ),
        Check::new(
            "drift_recovery",
            r.rounds <= cfg.update_max_rounds && r.frm_sd <= 1.25 * r.baseline_sd,
            format!("{} rounds, sd {:.1} vs baseline {:.1}", r.rounds, r.frm_sd, r.baseline_sd),
        ),
        Check::new(
            "model_convergence",
            converged && r.versions_monotone,
            format!(
                "rounds to converge {:?} (limit {limit}), monotone {}",
                r.convergence_rounds, r.versions_monotone
            ),
        ),
    ]
}

pub fn bench_update(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let keys = cfg.load_keys()?.keys;
    let r = update_report(cfg, &keys)?;
    let mut summary = String::from("baseline_sd,stale_sd,frm_sd,rounds,max_convergence_rounds\n");
    let worst = r
        .convergence_rounds
        .iter()
        .map(|c| c.map_or("never".to_string(), |x| format!("{x:.2}")))
        .max_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)))
        .unwrap_or_else(|| "none".into());
    let _ = writeln!(
        summary,
        "{:.3},{:.3},{:.3},{},{worst}",
        r.baseline_sd, r.stale_sd, r.frm_sd, r.rounds
    );
    let checks = update_checks(&r, cfg, cfg.nodes * cfg.vnodes);
    Ok(RunOutput {
        records: r.puts,
        summary,
        checks,
        ..Default::default()
    })
}

/// Error and size of a trained model for one leaf family.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub family: LeafFamily,
    pub branching: usize,
    pub avg_log2_error: f64,
    pub max_log2_error: f64,
    pub size_bytes: usize,
}

pub fn train_rows(cfg: &ExperimentConfig, keys: &[u64], families: &[LeafFamily]) -> Result<Vec<TrainRow>> {
    let eval = TrainingSet::from_sorted(keys.to_vec());
    families
        .iter()
        .map(|&family| {
            let mut rig = cfg.rig(Placement::Learned)?;
            rig.family = family;
            let model = rig.train(keys)?;
            let s = error_stats(&model, &eval)?;
            Ok(TrainRow {
                family,
                branching: model.branching(),
                avg_log2_error: s.avg_log2_error,
                max_log2_error: s.max_log2_error,
                size_bytes: s.size_bytes,
            })
        })
        .collect()
}

/// Train every leaf family on the dataset and report error and size.
pub fn train(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let keys = cfg.load_keys()?.keys;
    let families = [LeafFamily::Linear, LeafFamily::radix(), LeafFamily::Cubic];
    let rows = train_rows(cfg, &keys, &families)?;
    let mut summary = String::from("family,branching,avg_log2_error,max_log2_error,size_bytes\n");
    for r in &rows {
        let _ = writeln!(
            summary,
            "{},{},{:.4},{:.4},{}",
            r.family, r.branching, r.avg_log2_error, r.max_log2_error, r.size_bytes
        );
    }
    let (lin, rad, cub) = (&rows[0], &rows[1], &rows[2]);
    let checks = vec![
        Check::new(
            "error_order",
            cub.avg_log2_error <= rad.avg_log2_error && rad.avg_log2_error <= lin.avg_log2_error,
            format!(
                "cubic {:.3} radix {:.3} linear {:.3}",
                cub.avg_log2_error, rad.avg_log2_error, lin.avg_log2_error
            ),
        ),
        Check::new(
            "size_order",
            lin.size_bytes < rad.size_bytes && rad.size_bytes < cub.size_bytes,
            format!("linear {} radix {} cubic {}", lin.size_bytes, rad.size_bytes, cub.size_bytes),
        ),
    ];
    Ok(RunOutput {
        summary,
        checks,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::OpKind;

    fn rec(messages: u32, latency: Time, success: bool) -> QueryRecord {
        let mut r = QueryRecord::new(1, OpKind::Range, 0, 0, 10, 0);
        r.complete = Some(latency);
        r.messages = messages;
        r.success = success;
        r
    }

    #[test]
    fn summary_groups_in_order() {
        let rows = vec![
            Row { system: "lead".into(), n: 500, rec: rec(4, 10 * MS, true) },
            Row { system: "lead".into(), n: 500, rec: rec(6, 30 * MS, true) },
            Row { system: "chord100".into(), n: 500, rec: rec(100, 50 * MS, false) },
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].system, "lead");
        assert_eq!(s[0].mean_messages, 5.0);
        assert_eq!(s[0].max_messages, 6);
        assert_eq!(s[0].mean_latency_ms, 20.0);
        assert_eq!(s[1].success_rate, 0.0);
    }

    #[test]
    fn run_id_is_content_hash() {
        assert_eq!(run_id("a = 1\n"), run_id("a = 1\n"));
        assert_ne!(run_id("a = 1\n"), run_id("a = 2\n"));
        assert_eq!(run_id("x").len(), 16);
    }

    #[test]
    fn log2_ceiling() {
        assert_eq!(ceil_log2(100), 7);
        assert_eq!(ceil_log2(128), 7);
        assert_eq!(ceil_log2(50), 6);
    }
}
