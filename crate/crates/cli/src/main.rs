use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lead::config::ExperimentConfig;
use lead::experiments::{self, RunOutput};
use log::info;

#[derive(Parser, Debug)]
#[command(name = "lead", version, about = "Learned-hash DHT simulator and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train every leaf family on the dataset; report error and size.
    Train(Common),
    /// Range queries, LEAD against batched Chord.
    BenchRange(Common),
    /// Single-key lookups.
    BenchLookup(Common),
    /// Range workload under node churn.
    BenchChurn(Common),
    /// Per-node load spread against virtual peers per node.
    BenchBalance(Common),
    /// Placement drift and model updates.
    BenchUpdate(Common),
    /// Range and lookup benches with their thresholds.
    Compare(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    vnodes: Option<usize>,
    /// File path, or `gen:<distribution>`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    take: Option<usize>,
    #[arg(long)]
    topology: Option<String>,
    /// Comma-separated range sizes.
    #[arg(long)]
    ranges: Option<String>,
    /// Comma-separated systems: `lead`, `chord100`, ...
    #[arg(long)]
    systems: Option<String>,
    /// Exit 2 when a threshold check fails.
    #[arg(long = "assert")]
    assert: bool,
    /// Results root; `LEAD_RESULTS_DIR` takes precedence.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> lead::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("nodes", self.nodes.map(|v| v.to_string())),
            ("vnodes", self.vnodes.map(|v| v.to_string())),
            ("dataset", self.dataset.clone()),
            ("take", self.take.map(|v| v.to_string())),
            ("topology", self.topology.clone()),
            ("ranges", self.ranges.clone()),
            ("systems", self.systems.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        Ok(cfg)
    }

    fn results_root(&self) -> PathBuf {
        std::env::var_os("LEAD_RESULTS_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| self.out.clone())
    }
}

fn run(name: &str, common: &Common, bench: fn(&ExperimentConfig) -> lead::Result<RunOutput>) -> anyhow::Result<ExitCode> {
    let cfg = common.load()?;
    info!("{name}: seed {}, {} nodes x {} vnodes", cfg.seed, cfg.nodes, cfg.vnodes);
    let out = bench(&cfg).with_context(|| format!("{name} failed"))?;
    let dir = experiments::write_results(&common.results_root(), name, &cfg, &out)
        .context("writing results")?;
    print!("{}", out.summary);
    for c in &out.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("results: {}", dir.display());
    if common.assert && !out.all_passed() {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(c) => run("train", c, experiments::train),
        Command::BenchRange(c) => run("bench-range", c, experiments::bench_range),
        Command::BenchLookup(c) => run("bench-lookup", c, experiments::bench_lookup),
        Command::BenchChurn(c) => run("bench-churn", c, experiments::bench_churn),
        Command::BenchBalance(c) => run("bench-balance", c, experiments::bench_balance),
        Command::BenchUpdate(c) => run("bench-update", c, experiments::bench_update),
        Command::Compare(c) => run("compare", c, experiments::compare),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
