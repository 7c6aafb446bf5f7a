use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lazyfolio"));
    cmd.env_remove("LAZYFOLIO_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn bundled(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .display()
        .to_string()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("structured error")
}

/// Rows of a CSV file, asserting a header and a constant column count.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_owned).collect();
    assert!(!header.is_empty(), "{} has no header", path.display());
    let rows: Vec<Vec<String>> = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_owned).collect())
        .collect();
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), header.len(), "{} row {i}", path.display());
    }
    (header, rows)
}

struct SmallRun {
    _dir: TempDir,
    data: PathBuf,
    out: PathBuf,
}

/// One backtest over a short synthetic market, shared by the output tests.
fn small_run() -> &'static SmallRun {
    static RUN: OnceLock<SmallRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let out = dir.path().join("out");
        let s = run(&[
            "synth",
            "--out",
            data.to_str().unwrap(),
            "--days",
            "220",
            "--seed",
            "11",
        ]);
        assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
        let b = run(&[
            "backtest",
            "--gold",
            data.join("gold.csv").to_str().unwrap(),
            "--btc",
            data.join("btc.csv").to_str().unwrap(),
            "--n",
            "300",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
        SmallRun {
            _dir: dir,
            data,
            out,
        }
    })
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["backtest", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[backtest]\nwarmup = 3\n").unwrap();
    let out = run(&[
        "backtest",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "config");

    let bad_delta = run(&[
        "backtest",
        "--delta",
        "lots",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(bad_delta.status.code(), Some(3));
}

#[test]
fn missing_data_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = run(&[
        "backtest",
        "--gold",
        missing.to_str().unwrap(),
        "--btc",
        &bundled("btc.csv"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let body = stderr_json(&out);
    assert_eq!(body["error"], "data");
    assert!(body["message"].as_str().unwrap().contains("nope.csv"));
}

#[test]
fn seed_env_must_be_numeric() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("LAZYFOLIO_SEED", "seven")
        .args(["backtest", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn frontier_writes_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("frontier.csv");
    let out = run(&[
        "frontier",
        "--gold",
        &bundled("gold.csv"),
        "--btc",
        &bundled("btc.csv"),
        "--date",
        "2018-09-07",
        "--n",
        "10000",
        "--seed",
        "7",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (_, rows) = read_csv(&path);
    assert_eq!(rows.len(), 10_000);
}

#[test]
fn frontier_flags_match_pairwise_domination() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("frontier.csv");
    let out = run(&[
        "frontier",
        "--gold",
        &bundled("gold.csv"),
        "--btc",
        &bundled("btc.csv"),
        "--date",
        "2019-03-01",
        "--n",
        "500",
        "--seed",
        "7",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = read_csv(&path);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (risk, ret, flag) = (col("risk"), col("return"), col("on_frontier"));
    let points: Vec<(f64, f64, bool)> = rows
        .iter()
        .map(|r| {
            (
                r[risk].parse().unwrap(),
                r[ret].parse().unwrap(),
                r[flag] == "true",
            )
        })
        .collect();
    assert_eq!(points.len(), 500);
    for (i, &(s, r, on)) in points.iter().enumerate() {
        let dominated = points
            .iter()
            .any(|&(s2, r2, _)| s2 <= s && r2 >= r && (s2 < s || r2 > r));
        assert_eq!(on, !dominated, "sample {i}");
    }
}

#[test]
fn forecast_prints_order_and_band() {
    let out = run(&[
        "forecast",
        "--series",
        &bundled("gold.csv"),
        "--window",
        "90",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["order", "forecast", "band"] {
        assert!(
            text.lines().any(|l| l.starts_with(key)),
            "{key} missing:\n{text}"
        );
    }
}

#[test]
fn forecast_window_too_long_is_a_data_error() {
    let out = run(&[
        "forecast",
        "--series",
        &bundled("gold.csv"),
        "--window",
        "90",
        "--before",
        "2016-10-01",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn backtest_writes_the_output_layout() {
    let run = small_run();
    for file in [
        "ledger.csv",
        "report.json",
        "manifest.json",
        "forecasts.csv",
    ] {
        assert!(run.out.join(file).is_file(), "{file}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.out.join("report.json")).unwrap())
            .unwrap();
    assert!(report["metrics"]["final_wealth"].as_f64().unwrap() > 0.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.out.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 3);
}

#[test]
fn emitted_csvs_are_well_formed() {
    let run = small_run();
    let mut seen = 0;
    for dir in [run.out.clone(), run.out.join("plots")] {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "csv") {
                read_csv(&path);
                seen += 1;
            }
        }
    }
    assert!(seen >= 8, "only {seen} CSV files");
}

#[test]
fn plot_series_match_the_ledger() {
    let run = small_run();
    let (_, ledger) = read_csv(&run.out.join("ledger.csv"));
    let (header, cumulative) = read_csv(&run.out.join("plots/cumulative_returns.csv"));
    assert_eq!(header, ["date", "cash", "gold", "bitcoin"]);
    assert_eq!(cumulative.len(), ledger.len());

    let (header, sweep) = read_csv(&run.out.join("plots/delta_sweep.csv"));
    assert_eq!(header, ["delta1", "final_wealth"]);
    assert_eq!(sweep.len(), 11);
    for (i, row) in sweep.iter().enumerate() {
        let d: f64 = row[0].parse().unwrap();
        assert!((d - i as f64 / 10.0).abs() < 1e-12);
        assert!(row[1].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let first = small_run();
    let again = first.data.parent().unwrap().join("again");
    let out = run(&[
        "backtest",
        "--manifest",
        first.out.join("manifest.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for file in [
        "ledger.csv",
        "forecasts.csv",
        "plots/delta_sweep.csv",
        "plots/frontier.csv",
    ] {
        let a = std::fs::read(first.out.join(file)).unwrap();
        let b = std::fs::read(again.join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn manifest_rejects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(
        run(&["synth", "--out", data.to_str().unwrap(), "--days", "150"])
            .status
            .success()
    );
    let out = dir.path().join("out");
    let b = run(&[
        "backtest",
        "--gold",
        data.join("gold.csv").to_str().unwrap(),
        "--btc",
        data.join("btc.csv").to_str().unwrap(),
        "--n",
        "100",
        "--no-extras",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    let mut gold = std::fs::read_to_string(data.join("gold.csv")).unwrap();
    gold.push('\n');
    std::fs::write(data.join("gold.csv"), gold).unwrap();
    let rerun = run(&[
        "backtest",
        "--manifest",
        out.join("manifest.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(rerun.status.code(), Some(4));
}
