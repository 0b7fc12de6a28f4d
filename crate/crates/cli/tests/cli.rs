use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "keys = 100000\nqueries = 4\nseeds = 1\nlookups = 200\n";

fn lead(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("small.conf");
    if !config.exists() {
        std::fs::write(&config, SMALL).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_lead"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .env_remove("LEAD_RESULTS_DIR")
        .output()
        .unwrap()
}

fn run_dir(root: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

fn text(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn unknown_key_exits_one_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.conf");
    std::fs::write(&config, "seed = 3\nchurn.lifespan = 5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lead"))
        .args(["bench-range", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("churn.lifespan"));
}

#[test]
fn range_bench_writes_one_row_per_system_and_size() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("out");
    let out = lead(
        tmp.path(),
        &["bench-range", "--ranges", "500,1000,2000", "--systems", "lead,chord100", "--out", root.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&root);
    let summary = text(&dir.join("summary.csv"));
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "system,n,queries,success_rate,mean_latency_ms,mean_messages,max_messages,mean_hops");
    assert_eq!(lines.len(), 1 + 3 * 2);
    let records = text(&dir.join("records.csv"));
    assert_eq!(records.lines().count(), 1 + 3 * 2 * 4);
    assert!(dir.join("config.snapshot").exists());
}

#[test]
fn same_seed_same_records_and_snapshot_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["bench-range", "--seed", "1", "--ranges", "700", "--systems", "lead,chord100"];
    let mut first = None;
    for name in ["a", "b"] {
        let root = tmp.path().join(name);
        let mut a = args.to_vec();
        a.extend(["--out", root.to_str().unwrap()]);
        assert!(lead(tmp.path(), &a).status.success());
        let dir = run_dir(&root);
        let records = text(&dir.join("records.csv"));
        match &first {
            None => first = Some((records, dir)),
            Some((r, _)) => assert_eq!(&records, r),
        }
    }
    let (records, dir) = first.unwrap();
    let replay = tmp.path().join("replay");
    let out = Command::new(env!("CARGO_BIN_EXE_lead"))
        .args(["bench-range", "--config"])
        .arg(dir.join("config.snapshot"))
        .arg("--out")
        .arg(&replay)
        .env_remove("LEAD_RESULTS_DIR")
        .output()
        .unwrap();
    assert!(out.status.success());
    let again = run_dir(&replay);
    assert_eq!(again.file_name(), dir.file_name());
    assert_eq!(text(&again.join("records.csv")), records);
}

#[test]
fn results_dir_env_overrides_out() {
    let tmp = tempfile::tempdir().unwrap();
    let env_root = tmp.path().join("env");
    let flag_root = tmp.path().join("flag");
    let config = tmp.path().join("small.conf");
    std::fs::write(&config, SMALL).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lead"))
        .args(["bench-lookup", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&flag_root)
        .env("LEAD_RESULTS_DIR", &env_root)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!flag_root.exists());
    assert!(run_dir(&env_root).join("summary.csv").exists());
}

#[test]
fn failed_threshold_exits_two_only_with_assert() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("out");
    // With 1000 keys both ranges return the whole key set, so chord latency
    // cannot grow fivefold between them.
    let args = [
        "bench-range",
        "--take",
        "1000",
        "--ranges",
        "500,5000",
        "--systems",
        "lead,chord100",
        "--out",
        root.to_str().unwrap(),
    ];
    let plain = lead(tmp.path(), &args);
    assert_eq!(plain.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&plain.stdout);
    assert!(stdout.contains("FAIL latency_ratio_chord100"), "{stdout}");
    let mut strict = args.to_vec();
    strict.push("--assert");
    assert_eq!(lead(tmp.path(), &strict).status.code(), Some(2));
}

#[test]
fn train_reports_every_family() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("out");
    let out = lead(tmp.path(), &["train", "--dataset", "gen:lognormal:0,1", "--out", root.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = text(&run_dir(&root).join("summary.csv"));
    assert!(summary.starts_with("family,branching,avg_log2_error,max_log2_error,size_bytes\n"));
    assert_eq!(summary.lines().count(), 4);
}
