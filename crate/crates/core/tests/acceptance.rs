//! Acceptance suite on the desk rig: 10 nodes x 10 virtual peers, 10^6
//! keys, uniform [10, 100] ms latencies unless a criterion says otherwise.
//!
//! Criteria run in parallel; each prints one PASS or FAIL line. The process
//! exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use lead::config::{DatasetSpec, ExperimentConfig, System};
use lead::dataset::{gen_dataset, KeyDistribution};
use lead::experiments::{
    self, bench_churn, bench_lookup, lookup_checks, range_checks, range_rows, summarize, train_rows,
    update_checks, update_report, Check,
};
use lead::learned_hash::{train_rmi, Anchor, LeafFamily, LeafModel, LeafParams, TrainConfig, TrainingSet};
use lead::overlay::{decimal_target, Placement};
use lead::query::range_oracle;
use lead::ring::{successor_of, HashSpace, Vid};
use lead::rng::SplitMix64;
use lead::simnet::SECOND;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn from_checks(checks: &[Check]) -> Self {
        Outcome {
            passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
            detail: checks
                .iter()
                .map(|c| format!("{}{}: {}", if c.passed { "" } else { "!" }, c.name, c.detail))
                .collect::<Vec<_>>()
                .join("; "),
        }
    }
}

fn pick(checks: &[Check], prefix: &str) -> Vec<Check> {
    checks.iter().filter(|c| c.name.starts_with(prefix)).cloned().collect()
}

fn lognormal() -> DatasetSpec {
    DatasetSpec::Gen(KeyDistribution::LogNormal { mu: 0.0, sigma: 1.0 })
}

/// Criteria 1 to 3 share one set of range runs: 50 queries per size, 5
/// seeds, LEAD against batch-100 Chord.
fn range_criteria() -> [Outcome; 3] {
    let cfg = ExperimentConfig {
        ranges: vec![500, 2000, 5000],
        systems: vec![System::Lead, System::Chord { batch: 100 }],
        queries: 50,
        seeds: 5,
        ..ExperimentConfig::default()
    };
    let rows = range_rows(&cfg).expect("range runs");
    let checks = range_checks(&summarize(&rows), &cfg);
    [
        Outcome::from_checks(&pick(&checks, "message_reduction")),
        Outcome::from_checks(&pick(&checks, "message_bound")),
        Outcome::from_checks(&pick(&checks, "latency_ratio")),
    ]
}

fn single_key_parity() -> Outcome {
    let cfg = ExperimentConfig {
        lookups: 10_000,
        systems: vec![System::Lead, System::Chord { batch: 100 }],
        ..ExperimentConfig::default()
    };
    let out = bench_lookup(&cfg).expect("lookup runs");
    let summary = summarize(&out.records);
    Outcome::from_checks(&lookup_checks(&summary, cfg.nodes * cfg.vnodes))
}

fn order_preservation() -> Outcome {
    let space = HashSpace::default();
    let dists = [
        KeyDistribution::Uniform,
        KeyDistribution::Normal { sigma: 0.1 },
        KeyDistribution::LogNormal { mu: 0.0, sigma: 1.0 },
        KeyDistribution::Clustered { c: 5, spread: 0.05 },
    ];
    let families = [LeafFamily::Linear, LeafFamily::radix(), LeafFamily::Cubic];
    let mut violations = 0u64;
    let mut pairs = 0u64;
    for (di, dist) in dists.iter().enumerate() {
        let keys = gen_dataset(*dist, 1_000_000, 100 + di as u64).unwrap().keys;
        let train = TrainingSet::from_sorted(keys.clone());
        for family in families {
            let model = train_rmi(&train, &TrainConfig::new(family, 1024, space)).unwrap();
            let mut rng = SplitMix64::derive(di as u64, &format!("pairs-{family}"));
            for i in 0..100_000u64 {
                // Alternate pairs across the whole key space, neighbours of
                // stored keys, and pairs inside the dataset's span.
                let (mut a, mut b) = match i % 3 {
                    0 => (rng.next(), rng.next()),
                    1 => {
                        let k = keys[rng.below(keys.len() as u64) as usize];
                        (k, k.saturating_add(1 + rng.below(16)))
                    }
                    _ => {
                        let span = keys[keys.len() - 1] - keys[0];
                        (keys[0] + rng.below(span.max(1)), keys[0] + rng.below(span.max(1)))
                    }
                };
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                pairs += 1;
                if model.hash(a) > model.hash(b) {
                    violations += 1;
                }
            }
        }
    }
    Outcome {
        passed: violations == 0,
        detail: format!("{violations} violations over {pairs} sorted pairs, 3 families x 4 distributions"),
    }
}

fn range_exactness() -> Outcome {
    let cfg = ExperimentConfig::default();
    let keys = cfg.load_keys().unwrap().keys;
    let mut net = experiments::quiescent_network(&cfg, System::Lead, &keys).unwrap();
    let mut rng = SplitMix64::derive(cfg.seed, "exactness");
    let peers = net.peers().len() as u64;
    let mut wrong = 0;
    for i in 0..1000 {
        let start = match i % 2 {
            0 => keys[rng.below(keys.len() as u64) as usize],
            _ => rng.next(),
        };
        let n = 1 + rng.below(5000) as usize;
        let origin = rng.below(peers) as usize;
        let rec = net.range_query(origin, start, n);
        if !rec.success || rec.results != range_oracle(&keys, start, n) {
            wrong += 1;
        }
    }
    Outcome {
        passed: wrong == 0,
        detail: format!("{wrong} of 1000 random (K, n) queries differ from the sorted-array oracle"),
    }
}

fn load_balance() -> Outcome {
    let cfg = ExperimentConfig {
        dataset: lognormal(),
        balance_k: vec![1, 2, 5, 10],
        seeds: 10,
        ..ExperimentConfig::default()
    };
    let out = experiments::bench_balance(&cfg).unwrap();
    Outcome::from_checks(&out.checks)
}

/// Criteria 8 and 10 share one drift run. At the default trigger of 0.40 a
/// 40% share of new keys sits exactly on the boundary and no session opens,
/// so the update run triggers at 0.25 to exercise the protocol.
fn drift_criteria() -> [Outcome; 2] {
    let cfg = ExperimentConfig {
        dataset: lognormal(),
        update_new_fraction: 0.4,
        frm_threshold: 0.25,
        ..ExperimentConfig::default()
    };
    let keys = cfg.load_keys().unwrap().keys;
    let report = update_report(&cfg, &keys).unwrap();
    let checks = update_checks(&report, &cfg, cfg.nodes * cfg.vnodes);
    let mut drift = pick(&checks, "drift");
    drift.push(Check::new(
        "updated",
        report.rounds >= 1,
        format!("{} update rounds ran", report.rounds),
    ));
    let mut conv = pick(&checks, "model_convergence");
    conv.push(Check::new(
        "published",
        !report.convergence_rounds.is_empty(),
        format!("{} versions published", report.convergence_rounds.len()),
    ));
    [Outcome::from_checks(&drift), Outcome::from_checks(&conv)]
}

fn churn_resilience() -> Outcome {
    let cfg = ExperimentConfig::default();
    let out = bench_churn(&cfg).unwrap();
    Outcome::from_checks(&out.checks)
}

fn finger_oracle() -> Outcome {
    let cfg = ExperimentConfig {
        nodes: 5,
        vnodes: 10,
        ..ExperimentConfig::default()
    };
    let rig = cfg.rig(Placement::Learned).unwrap();
    let mut net = rig.empty_network().unwrap();
    net.start_node(0, None).unwrap();
    for node in 1..cfg.nodes {
        net.run_for(2 * SECOND);
        let bootstrap = net.random_live_peer();
        net.start_node(node, bootstrap).unwrap();
    }
    net.run_for(120 * SECOND);
    let space = net.config().space;
    let ring: Vec<Vid> = net.live_ring().iter().map(|p| p.vid).collect();
    let mut entries = 0;
    let mut wrong = 0;
    for p in net.peers().iter().filter(|p| p.alive) {
        for (i, slot) in p.fingers.decimal.iter().enumerate() {
            let want = successor_of(&ring, decimal_target(space, p.vid, i)).unwrap();
            entries += 1;
            if slot.map(|r| r.vid) != Some(want) {
                wrong += 1;
            }
        }
    }
    Outcome {
        passed: ring.len() == 50 && wrong == 0,
        detail: format!("{} peers, {wrong} of {entries} decimal fingers differ from the brute-force successor", ring.len()),
    }
}

fn gradient_check() -> Outcome {
    let families = [LeafFamily::Linear, LeafFamily::radix(), LeafFamily::Cubic];
    let mut rng = SplitMix64::new(12);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for family in families {
        for _ in 0..100 {
            let p = family.param_count();
            let mut values: Vec<f64> = (0..p).map(|_| 1000.0 * rng.next_f64() - 500.0).collect();
            if matches!(family, LeafFamily::RadixTable { .. }) {
                values.sort_by(f64::total_cmp);
            }
            if family == LeafFamily::Linear {
                values[0] = values[0].abs();
            }
            let anchor = Anchor {
                offset: 200.0 * rng.next_f64() - 100.0,
                scale: 0.5 + 1.5 * rng.next_f64(),
            };
            let leaf = |vals: &[f64]| LeafModel {
                params: LeafParams::from_slice(family, vals),
                anchor,
                rank_lo: 0,
                rank_hi: 1 << 40,
                stamp: 0,
            };
            let u = rng.next_f64();
            let target = 1000.0 * rng.next_f64();
            let analytic = leaf(&values).loss_gradient(u, target);
            for (j, &g) in analytic.iter().enumerate() {
                // The loss is quadratic in each parameter, so central
                // differences carry no truncation error; a wide step keeps
                // rounding below the tolerance when the gradient is tiny.
                let h = 0.5 * values[j].abs().max(1.0);
                let mut up = values.clone();
                let mut down = values.clone();
                up[j] += h;
                down[j] -= h;
                let fd = (leaf(&up).loss(u, target) - leaf(&down).loss(u, target)) / (2.0 * h);
                let scale = g.abs().max(fd.abs()).max(1e-8);
                worst = worst.max((g - fd).abs() / scale);
            }
            cases += 1;
        }
    }
    Outcome {
        passed: worst <= 1e-5,
        detail: format!("{cases} cases, worst relative gradient error {worst:.2e}"),
    }
}

fn size_error_trend() -> Outcome {
    let cfg = ExperimentConfig {
        dataset: lognormal(),
        branching: 1024,
        ..ExperimentConfig::default()
    };
    let keys = cfg.load_keys().unwrap().keys;
    let rows = train_rows(&cfg, &keys, &[LeafFamily::Linear, LeafFamily::radix(), LeafFamily::Cubic]).unwrap();
    let (lin, rad, cub) = (&rows[0], &rows[1], &rows[2]);
    Outcome {
        passed: cub.avg_log2_error <= rad.avg_log2_error
            && rad.avg_log2_error <= lin.avg_log2_error
            && lin.size_bytes < rad.size_bytes
            && rad.size_bytes < cub.size_bytes,
        detail: format!(
            "avg log2 error cubic {:.3} radix {:.3} linear {:.3}; bytes linear {} radix {} cubic {}",
            cub.avg_log2_error, rad.avg_log2_error, lin.avg_log2_error, lin.size_bytes, rad.size_bytes, cub.size_bytes
        ),
    }
}

fn determinism() -> Outcome {
    let cfg = ExperimentConfig {
        take: Some(200_000),
        ranges: vec![500, 2000],
        queries: 20,
        seeds: 2,
        churn_horizon_min: 5.0,
        churn_lifetimes: vec!["exponential".into()],
        churn_lifetime_mean_min: 2.0,
        ..ExperimentConfig::default()
    };
    let run = |c: &ExperimentConfig| {
        let range = experiments::bench_range(c).unwrap().records_csv();
        let churn = bench_churn(c).unwrap().records_csv();
        (range, churn)
    };
    let first = run(&cfg);
    let second = run(&cfg);
    let replay = run(&ExperimentConfig::from_text(&cfg.snapshot()).unwrap());
    let same = first == second && first == replay;
    Outcome {
        passed: same,
        detail: format!(
            "range records {} bytes, churn records {} bytes; rerun identical {}, snapshot replay identical {}",
            first.0.len(),
            first.1.len(),
            first == second,
            first == replay
        ),
    }
}

type Job = (&'static [(u8, &'static str)], fn() -> Vec<Outcome>);

const JOBS: &[Job] = &[
    (
        &[
            (1, "range-query message reduction"),
            (2, "range-message structure"),
            (3, "latency flatness"),
        ],
        || range_criteria().into(),
    ),
    (&[(4, "single-key parity")], || vec![single_key_parity()]),
    (&[(5, "order preservation")], || vec![order_preservation()]),
    (&[(6, "range-query exactness")], || vec![range_exactness()]),
    (&[(7, "load balance vs virtual nodes")], || vec![load_balance()]),
    (
        &[(8, "drift tolerance and recovery"), (10, "model update convergence")],
        || drift_criteria().into(),
    ),
    (&[(9, "churn resilience")], || vec![churn_resilience()]),
    (&[(11, "finger-table oracle")], || vec![finger_oracle()]),
    (&[(12, "gradient correctness")], || vec![gradient_check()]),
    (&[(13, "model size and error trend")], || vec![size_error_trend()]),
    (&[(14, "determinism")], || vec![determinism()]),
];

fn main() -> ExitCode {
    // Respect a name filter so `cargo test <name>` skips this suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }
    // `ACCEPTANCE_ONLY=8,10` runs the jobs covering those criteria.
    let only: Option<Vec<u8>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let results: Mutex<Vec<(u8, &str, Outcome, f64)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for (labels, job) in JOBS {
            if only.as_ref().is_some_and(|o| !labels.iter().any(|l| o.contains(&l.0))) {
                continue;
            }
            let results = &results;
            s.spawn(move || {
                let t = Instant::now();
                let outs = job();
                let secs = t.elapsed().as_secs_f64();
                let mut r = results.lock().unwrap();
                for (&(id, name), out) in labels.iter().zip(outs) {
                    r.push((id, name, out, secs));
                }
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, name, out, secs) in &results {
        if !out.passed {
            failed += 1;
        }
        println!(
            "criterion {id:2} {name}: {} ({secs:.1}s) {}",
            if out.passed { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
