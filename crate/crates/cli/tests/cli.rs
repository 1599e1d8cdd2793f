use std::path::Path;
use std::process::{Command, Output};

use recurpred_cli::config::{load_config, OUT_DIR_ENV};
use recurpred_cli::report::read_report;

fn recurpred(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recurpred"))
        .args(args)
        .current_dir(dir)
        .env_remove(OUT_DIR_ENV)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn evaluate_end_to_end_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = recurpred(&["evaluate", "--process", "markov", "--p", "1", "--T", "200000", "--seeds", "5", "--out", "r.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let rows = read_report(text.as_bytes()).unwrap();
    let seeds: Vec<u64> = rows.iter().filter_map(|r| r.seed).collect();
    assert_eq!(seeds.first(), Some(&1));
    assert_eq!(seeds.last(), Some(&5));
    assert!(rows.iter().any(|r| r.seed.is_none() && r.t == 200_000));
    assert!(rows.iter().all(|r| r.reference_limit.is_some()));
    let out = stdout(&o);
    assert!(out.contains("horizon = 200000") && out.contains("seeds = 5"));
}

#[test]
fn aggregate_rows_are_seed_means() {
    let dir = tempfile::tempdir().unwrap();
    let o = recurpred(&["evaluate", "--process", "iid", "--T", "3000", "--seeds", "4", "--p", "2", "--out", "a.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let rows = read_report(std::fs::read(dir.path().join("a.csv")).unwrap().as_slice()).unwrap();
    for agg in rows.iter().filter(|r| r.seed.is_none()) {
        let at_t: Vec<_> = rows.iter().filter(|r| r.seed.is_some() && r.t == agg.t).collect();
        assert_eq!(at_t.len(), 4);
        let mean = at_t.iter().map(|r| r.err_vs_realized).sum::<f64>() / 4.0;
        assert!((mean - agg.err_vs_realized).abs() <= 1e-12 * mean.abs().max(1.0), "t {}", agg.t);
        let mean = at_t.iter().map(|r| r.err_vs_oracle).sum::<f64>() / 4.0;
        assert!((mean - agg.err_vs_oracle).abs() <= 1e-12 * mean.abs().max(1.0));
    }
}

#[test]
fn identical_config_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["evaluate", "--process", "ar1", "--T", "4000", "--seeds", "3", "--p", "2"];
    let mut first = common.to_vec();
    first.extend(["--out", "one.csv", "--workers", "1"]);
    let mut second = common.to_vec();
    second.extend(["--out", "two.csv", "--workers", "3"]);
    assert_eq!(recurpred(&first, dir.path()).status.code(), Some(0));
    assert_eq!(recurpred(&second, dir.path()).status.code(), Some(0));
    let a = std::fs::read(dir.path().join("one.csv")).unwrap();
    let b = std::fs::read(dir.path().join("two.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn printed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = recurpred(&["evaluate", "--process", "iid", "--bernoulli", "0.3", "--T", "500", "--seeds", "2", "--out", "x.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let block: String = stdout(&o).lines().take_while(|l| l.starts_with('#') || l.contains(" = ")).map(|l| format!("{l}\n")).collect();
    let block = block.replace("out = x.csv", "out = y.csv");
    std::fs::write(dir.path().join("run.cfg"), block).unwrap();
    assert_eq!(recurpred(&["evaluate", "--config", "run.cfg"], dir.path()).status.code(), Some(0));
    assert_eq!(std::fs::read(dir.path().join("x.csv")).unwrap(), std::fs::read(dir.path().join("y.csv")).unwrap());
}

#[test]
fn certify_reports_the_two_ninths_bound() {
    let dir = tempfile::tempdir().unwrap();
    let o = recurpred(&["certify", "--schedule", "5,9,15", "--k", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("[certificate k=3]"));
    assert!(out.contains("(2/9)"), "{out}");
}

#[test]
fn odometer_beyond_the_cap_is_a_capability_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = recurpred(&["evaluate", "--process", "odometer", "--schedule", "5,9,40"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("enumeration cap"));
}

#[test]
fn usage_and_input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["evaluate", "--frobnicate", "1"],
        &[],
        &["evaluate", "--p", "zero"],
        &["certify", "--schedule", "5,6,15"],
        &["evaluate", "--p", "0.5"],
        &["predict"],
        &["evaluate", "--config", "missing.cfg"],
    ] {
        let o = recurpred(args, dir.path());
        let want = if args.contains(&"missing.cfg") { 3 } else { 1 };
        assert_eq!(o.status.code(), Some(want), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("file"), "").unwrap();
    let o = recurpred(&["evaluate", "--process", "iid", "--T", "100", "--seeds", "1", "--out", "file/sub.csv"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_recurpred"))
        .args(["evaluate", "--process", "iid", "--T", "100", "--seeds", "1"])
        .current_dir(dir.path())
        .env(OUT_DIR_ENV, dir.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("runs").join("evaluate.csv").exists());
}

#[test]
fn predict_reads_a_data_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.txt"), "1\n0\n1\n0\n1\n0\n1\n").unwrap();
    let o = recurpred(&["predict", "--data", "d.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("prediction: 0.0000000000000000e0"));
}

#[test]
fn adversary_and_martingale_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = recurpred(&["adversary", "--scheme", "zero"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("schedule: 5,52,523"));
    let o = recurpred(&["martingale", "--martingale", "pareto", "--moment_p", "1.5", "--n_max", "2000", "--seeds", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("martingale.csv")).unwrap();
    assert!(csv.starts_with("n,seed,average,running_sup\n"));
}

#[test]
fn config_file_examples() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.cfg");
    std::fs::write(&path, "# run\np = 2\nschedule = 5,9,15\n").unwrap();
    let c = load_config(&path).unwrap();
    assert_eq!(c.p, 2.0);
    assert_eq!(c.schedule.positions(), [5, 9, 15]);
    std::fs::write(&path, "p = 2\nfrobnicate = 1\n").unwrap();
    let e = load_config(&path).unwrap_err().to_string();
    assert!(e.contains("frobnicate") && e.contains("line 2"), "{e}");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.cfg"), "process = iid\nhorizon = 200\nseeds = 1\np = 2\n").unwrap();
    let o = recurpred(&["evaluate", "--config", "c.cfg", "--p", "1.5", "--out", "o.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("p = 1.5") && out.contains("horizon = 200") && out.contains("process = iid"));
}
