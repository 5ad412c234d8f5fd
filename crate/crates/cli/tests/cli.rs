use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use manet_cli::{
    cmd_sweep, CliError, SweepArgs, COMPARISON_HEADER, REPORT_HEADER, SUMMARY_HEADER, SWEEP_HEADER,
};
use manet_core::{NodeId, SimError};
use tempfile::TempDir;

const SCENARIO: &str = "\
[general]
node_count = 20
field = 1000, 1000
duration = 40
protocol = tbraodv
seed = 1

[adversary]
mode = fraction(0.2)
behavior = blackhole

[flow]
src = 0
dst = 1
rate = 4
start = 2

[flow]
src = 2
dst = 3
rate = 2
start = 5
stop = 35
";

fn manetsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manetsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.conf");
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `root`, relative path and contents, in sorted order.
fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn run_writes_one_report_per_seed_and_a_summary() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), SCENARIO);
    let out = tmp.path().join("out");
    let o = manetsim(&[
        "run",
        "--scenario",
        s(&sc),
        "--seeds",
        "1,2,3,4,5",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for seed in 1..=5 {
        let dir = out.join(format!("seed_{seed}"));
        let report = csv_rows(&dir.join("report.csv"));
        assert_eq!(report[0].join(","), REPORT_HEADER);
        assert_eq!(report.len(), 2);
        assert_eq!(report[1][0], seed.to_string());
        assert_eq!(report[1][1], "tbraodv");
        assert!(dir.join("trust.csv").exists());
        assert!(!dir.join("trace.txt").exists());
    }
    let summary = csv_rows(&out.join("summary.csv"));
    assert_eq!(summary[0].join(","), SUMMARY_HEADER);
}

#[test]
fn summary_matches_recomputation_from_reports() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), SCENARIO);
    let out = tmp.path().join("out");
    let o = manetsim(&[
        "run",
        "--scenario",
        s(&sc),
        "--seeds",
        "3,1,2",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    let header = REPORT_HEADER.split(',').collect::<Vec<_>>();
    let rows: Vec<Vec<String>> = (1..=3)
        .map(|seed| csv_rows(&out.join(format!("seed_{seed}/report.csv")))[1].clone())
        .collect();
    let summary = csv_rows(&out.join("summary.csv"));
    for metric in [
        "pdr_percent",
        "throughput_bps",
        "sent",
        "delivered",
        "drops_adversary",
    ] {
        let col = header.iter().position(|h| *h == metric).unwrap();
        let xs: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let line = summary.iter().find(|r| r[2] == metric).unwrap();
        assert_eq!(line[0], "tbraodv");
        assert_eq!(line[1], "20");
        assert_eq!(line[3], "3");
        let got_mean: f64 = line[4].parse().unwrap();
        let got_sd: f64 = line[5].parse().unwrap();
        // report and summary fields carry 6 significant digits
        assert!(
            (got_mean - mean).abs() <= 1e-5 * mean.abs().max(1.0),
            "{metric} mean"
        );
        assert!(
            (got_sd - sd).abs() <= 1e-5 * sd.abs().max(1.0),
            "{metric} sd"
        );
    }
}

#[test]
fn repeated_invocations_write_identical_files() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), SCENARIO);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = manetsim(&[
            "compare",
            "--scenario",
            s(&sc),
            "--seeds",
            "1,2",
            "--trace",
            "--out",
            s(out),
        ]);
        assert!(o.status.success());
    }
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert!(sa.iter().any(|(p, _)| p.ends_with("trace.txt")));
    assert_eq!(sa, sb);
}

#[test]
fn protocol_flag_overrides_scenario() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), SCENARIO);
    let out = tmp.path().join("out");
    let o = manetsim(&[
        "run",
        "--scenario",
        s(&sc),
        "--protocol",
        "aodv",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    let report = csv_rows(&out.join("seed_1/report.csv"));
    assert_eq!(report[1][1], "aodv");
    assert!(!out.join("seed_1/trust.csv").exists());
}

#[test]
fn single_seed_comparison_row_equals_mean_row() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), SCENARIO);
    let out = tmp.path().join("out");
    let o = manetsim(&[
        "compare",
        "--scenario",
        s(&sc),
        "--seeds",
        "4",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    let rows = csv_rows(&out.join("comparison.csv"));
    assert_eq!(rows[0].join(","), COMPARISON_HEADER);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][0], "4");
    assert_eq!(rows[2][0], "mean");
    assert_eq!(rows[1][1..], rows[2][1..]);
    assert!(out.join("aodv/seed_4/report.csv").exists());
    assert!(out.join("tbraodv/seed_4/trust.csv").exists());
}

#[test]
fn sweep_emits_one_row_per_size_and_protocol() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), SCENARIO);
    let out = tmp.path().join("out");
    let o = manetsim(&["sweep", "--scenario", s(&sc), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows[0].join(","), SWEEP_HEADER);
    let keys: Vec<(String, String)> = rows[1..]
        .iter()
        .map(|r| (r[0].clone(), r[1].clone()))
        .collect();
    let want: Vec<(String, String)> = ["25", "50", "100"]
        .iter()
        .flat_map(|n| ["aodv", "tbraodv"].map(|p| (n.to_string(), p.to_string())))
        .collect();
    assert_eq!(keys, want);
    assert!(out.join("n100/tbraodv/seed_1/report.csv").exists());

    let out2 = tmp.path().join("out2");
    let o = manetsim(&[
        "sweep",
        "--scenario",
        s(&sc),
        "--sizes",
        "25,50",
        "--out",
        s(&out2),
    ]);
    assert!(o.status.success());
    assert_eq!(csv_rows(&out2.join("sweep.csv")).len(), 5);
}

#[test]
fn malformed_config_exits_2_without_output() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), &SCENARIO.replace("rate = 4", "rate = fast"));
    let out = tmp.path().join("out");
    let o = manetsim(&["run", "--scenario", s(&sc), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("rate"), "{err}");
}

#[test]
fn unsatisfiable_adversary_fraction_exits_2() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(
        tmp.path(),
        &SCENARIO.replace("fraction(0.2)", "fraction(0.9)"),
    );
    let out = tmp.path().join("out");
    let o = manetsim(&["run", "--scenario", s(&sc), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), SCENARIO);
    let out = tmp.path().join("out");
    for args in [
        vec!["run", "--scenario", s(&sc), "--bogus"],
        vec!["run", "--scenario", s(&sc), "--protocol", "dsr"],
        vec![
            "run",
            "--scenario",
            s(&sc),
            "--seeds",
            "1,1",
            "--out",
            s(&out),
        ],
        vec![
            "sweep",
            "--scenario",
            s(&sc),
            "--sizes",
            "1",
            "--out",
            s(&out),
        ],
        vec![
            "sweep",
            "--scenario",
            s(&sc),
            "--sizes",
            "",
            "--out",
            s(&out),
        ],
        vec!["frobnicate"],
    ] {
        let o = manetsim(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    assert!(!out.exists());
}

#[test]
fn empty_size_list_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), SCENARIO);
    let err = cmd_sweep(&SweepArgs {
        scenario: &sc,
        sizes: &[],
        seeds: &[],
        out: &tmp.path().join("out"),
    })
    .unwrap_err();
    assert!(matches!(err, CliError::Usage(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn missing_scenario_file_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let o = manetsim(&[
        "run",
        "--scenario",
        s(&tmp.path().join("nope.conf")),
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn broken_invariants_exit_3() {
    let err = CliError::from(SimError::RoutingLoop {
        dest: NodeId(3),
        time: 1.0,
        path: "n0 -> n1 -> n0".into(),
    });
    assert_eq!(err.exit_code(), 3);
    let err = CliError::from(SimError::BlacklistedNextHop {
        node: NodeId(0),
        next: NodeId(1),
        time: 2.0,
    });
    assert_eq!(err.exit_code(), 3);
}
