//! Batch runner behind the `manetsim` binary: single runs, protocol A/B
//! comparisons and node-count sweeps, written out as CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use manet_core::metrics::{compare_runs, CompareError, ComparisonTable, RunReport};
use manet_core::scenario::{AdversaryMode, ConfigError};
use manet_core::{parse_config, NodeId, Protocol, ScenarioConfig, SimError, SimOptions};
use rayon::prelude::*;
use thiserror::Error;

pub mod format;

use format::{fmt_g, fmt_opt};

pub const REPORT_HEADER: &str = "seed,protocol,node_count,adversary_fraction,pdr_percent,mean_delay_s,throughput_bps,sent,delivered,drops_adversary,drops_no_route,drops_other,detected_adversaries,false_positives";

pub const DEFAULT_SWEEP_SIZES: [usize; 3] = [25, 50, 100];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } | CliError::Scenario(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        if e.is_config_error() {
            CliError::Scenario(e.to_string())
        } else {
            CliError::Invariant(e.to_string())
        }
    }
}

impl From<CompareError> for CliError {
    fn from(e: CompareError) -> Self {
        CliError::Invariant(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text).map_err(|source| CliError::Config {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// One simulation request of a batch.
#[derive(Debug, Clone)]
pub struct Job {
    pub cfg: ScenarioConfig,
    pub trace: bool,
}

#[derive(Debug)]
pub struct JobResult {
    pub report: RunReport,
    pub trace: Option<String>,
}

/// Runs jobs in parallel and returns results sorted by
/// (node count, protocol, seed).
pub fn run_jobs(jobs: Vec<Job>) -> Result<Vec<JobResult>, CliError> {
    let mut results = jobs
        .into_par_iter()
        .map(|job| {
            let opts = SimOptions {
                trace: job.trace,
                ..SimOptions::default()
            };
            let out = manet_core::run(&job.cfg, opts)?;
            Ok(JobResult {
                report: out.report,
                trace: out.trace,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    results.sort_by_key(|r| {
        let m = &r.report.meta;
        (m.node_count, m.protocol, m.seed)
    });
    Ok(results)
}

pub fn report_row(r: &RunReport) -> String {
    let m = &r.meta;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        m.seed,
        m.protocol,
        m.node_count,
        fmt_g(m.adversary_fraction),
        fmt_g(r.pdr),
        fmt_opt(r.mean_delay),
        fmt_g(r.throughput),
        r.sent,
        r.delivered,
        r.drops.adversary,
        r.drops.no_route,
        r.drops.other(),
        r.detection.true_positives,
        r.detection.false_positives,
    )
}

pub fn report_csv(r: &RunReport) -> String {
    format!("{REPORT_HEADER}\n{}\n", report_row(r))
}

pub const TRUST_HEADER: &str = "observer,neighbor,rreq_success,rreq_failure,rrep_success,rrep_failure,data_success,data_failure,trust_level,blacklisted";

/// Final per-neighbor trust tables of all honest observers.
pub fn trust_csv(r: &RunReport) -> String {
    let mut s = format!("{TRUST_HEADER}\n");
    for t in &r.final_trust {
        let rec = &t.record;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            t.observer.0,
            rec.neighbor.0,
            rec.rreq.success,
            rec.rreq.failure,
            rec.rrep.success,
            rec.rrep.failure,
            rec.data.success,
            rec.data.failure,
            fmt_g(t.tl),
            t.blacklisted
        );
    }
    s
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for n < 2).
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

pub const SUMMARY_HEADER: &str = "protocol,node_count,metric,runs,mean,stddev";

type Metric = (&'static str, fn(&RunReport) -> Option<f64>);

const SUMMARY_METRICS: &[Metric] = &[
    ("pdr_percent", |r| Some(r.pdr)),
    ("mean_delay_s", |r| r.mean_delay),
    ("throughput_bps", |r| Some(r.throughput)),
    ("sent", |r| Some(r.sent as f64)),
    ("delivered", |r| Some(r.delivered as f64)),
    ("drops_adversary", |r| Some(r.drops.adversary as f64)),
    ("drops_no_route", |r| Some(r.drops.no_route as f64)),
    ("drops_other", |r| Some(r.drops.other() as f64)),
    ("detected_adversaries", |r| {
        Some(r.detection.true_positives as f64)
    }),
    ("false_positives", |r| {
        Some(r.detection.false_positives as f64)
    }),
];

/// Mean and sample standard deviation of every report column, grouped by
/// protocol and node count. Undefined delays are left out of the mean.
pub fn summary_csv(reports: &[&RunReport]) -> String {
    let mut groups: BTreeMap<(Protocol, usize), Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((r.meta.protocol, r.meta.node_count))
            .or_default()
            .push(r);
    }
    let mut s = format!("{SUMMARY_HEADER}\n");
    for ((protocol, n), rs) in groups {
        for (name, get) in SUMMARY_METRICS {
            let xs: Vec<f64> = rs.iter().filter_map(|r| get(r)).collect();
            let (mean, std) = match mean_std(&xs) {
                Some((m, sd)) => (fmt_g(m), fmt_g(sd)),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(s, "{protocol},{n},{name},{},{mean},{std}", xs.len());
        }
    }
    s
}

pub const COMPARISON_HEADER: &str = "seed,node_count,pdr_aodv,pdr_tbraodv,delta_pdr,delay_aodv,delay_tbraodv,delta_delay,throughput_aodv,throughput_tbraodv,delta_throughput";

pub fn comparison_csv(table: &ComparisonTable) -> String {
    let mut s = format!("{COMPARISON_HEADER}\n");
    for row in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.seed,
            row.node_count,
            fmt_g(row.pdr.0),
            fmt_g(row.pdr.1),
            fmt_g(row.delta_pdr()),
            fmt_opt(row.delay.0),
            fmt_opt(row.delay.1),
            fmt_opt(row.delta_delay()),
            fmt_g(row.throughput.0),
            fmt_g(row.throughput.1),
            fmt_g(row.delta_throughput()),
        );
    }
    let mean = |f: fn(&manet_core::metrics::ComparisonRow) -> Option<f64>| {
        let xs: Vec<f64> = table.rows.iter().filter_map(f).collect();
        fmt_opt(mean_std(&xs).map(|(m, _)| m))
    };
    let node_count = table.rows.first().map_or(0, |r| r.node_count);
    let _ = writeln!(
        s,
        "mean,{node_count},{},{},{},{},{},{},{},{},{}",
        mean(|r| Some(r.pdr.0)),
        mean(|r| Some(r.pdr.1)),
        fmt_g(table.mean_delta_pdr),
        mean(|r| r.delay.0),
        mean(|r| r.delay.1),
        fmt_opt(table.mean_delta_delay),
        mean(|r| Some(r.throughput.0)),
        mean(|r| Some(r.throughput.1)),
        fmt_g(table.mean_delta_throughput),
    );
    s
}

pub const SWEEP_HEADER: &str = "node_count,protocol,pdr_percent,mean_delay_s,throughput_bps";

pub fn sweep_csv(reports: &[&RunReport]) -> String {
    let mut groups: BTreeMap<(usize, Protocol), Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((r.meta.node_count, r.meta.protocol))
            .or_default()
            .push(r);
    }
    let mut s = format!("{SWEEP_HEADER}\n");
    for ((n, protocol), rs) in groups {
        let pdr: Vec<f64> = rs.iter().map(|r| r.pdr).collect();
        let delay: Vec<f64> = rs.iter().filter_map(|r| r.mean_delay).collect();
        let thr: Vec<f64> = rs.iter().map(|r| r.throughput).collect();
        let m = |xs: &[f64]| fmt_opt(mean_std(xs).map(|(m, _)| m));
        let _ = writeln!(s, "{n},{protocol},{},{},{}", m(&pdr), m(&delay), m(&thr));
    }
    s
}

/// Rescales a scenario to `n` nodes: node ids map to `id * n / n_base`,
/// bumping a destination that would land on its source.
pub fn scale_scenario(base: &ScenarioConfig, n: usize) -> ScenarioConfig {
    let n_base = base.node_count as u64;
    let map = |id: NodeId| NodeId((id.0 as u64 * n as u64 / n_base) as u32);
    let mut cfg = base.clone();
    cfg.node_count = n;
    for f in &mut cfg.flows {
        f.src = map(f.src);
        f.dst = map(f.dst);
        if f.dst == f.src {
            f.dst = NodeId((f.dst.0 + 1) % n as u32);
        }
    }
    if let AdversaryMode::Explicit(ids) = &mut cfg.adversary.mode {
        let mut scaled: Vec<NodeId> = ids.iter().map(|&i| map(i)).collect();
        scaled.sort();
        scaled.dedup();
        *ids = scaled;
    }
    cfg
}

fn with(cfg: &ScenarioConfig, protocol: Protocol, seed: u64) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.protocol = protocol;
    c.seed = seed;
    c
}

fn seeds_or_default(seeds: &[u64], cfg: &ScenarioConfig) -> Result<Vec<u64>, CliError> {
    if seeds.is_empty() {
        return Ok(vec![cfg.seed]);
    }
    let mut s = seeds.to_vec();
    s.sort_unstable();
    if s.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Usage("duplicate seed".into()));
    }
    Ok(seeds.to_vec())
}

fn write_run(dir: &Path, r: &JobResult) -> Result<(), CliError> {
    write_file(&dir.join("report.csv"), &report_csv(&r.report))?;
    if r.report.meta.protocol == Protocol::Tbraodv {
        write_file(&dir.join("trust.csv"), &trust_csv(&r.report))?;
    }
    if let Some(trace) = &r.trace {
        write_file(&dir.join("trace.txt"), trace)?;
    }
    Ok(())
}

pub struct RunArgs<'a> {
    pub scenario: &'a Path,
    pub protocol: Option<Protocol>,
    pub seeds: &'a [u64],
    pub out: &'a Path,
    pub trace: bool,
}

/// `run`: one report per seed plus a summary.
pub fn cmd_run(args: &RunArgs) -> Result<Vec<RunReport>, CliError> {
    let cfg = load_scenario(args.scenario)?;
    let protocol = args.protocol.unwrap_or(cfg.protocol);
    let seeds = seeds_or_default(args.seeds, &cfg)?;
    let jobs = seeds
        .iter()
        .map(|&s| Job {
            cfg: with(&cfg, protocol, s),
            trace: args.trace,
        })
        .collect();
    let results = run_jobs(jobs)?;
    for r in &results {
        write_run(&args.out.join(format!("seed_{}", r.report.meta.seed)), r)?;
    }
    let reports: Vec<&RunReport> = results.iter().map(|r| &r.report).collect();
    write_file(&args.out.join("summary.csv"), &summary_csv(&reports))?;
    Ok(results.into_iter().map(|r| r.report).collect())
}

/// `compare`: both protocols on the same seeds.
pub fn cmd_compare(args: &RunArgs) -> Result<ComparisonTable, CliError> {
    let cfg = load_scenario(args.scenario)?;
    let seeds = seeds_or_default(args.seeds, &cfg)?;
    let table = compare_batch(&cfg, &seeds, args.out, args.trace)?;
    write_file(&args.out.join("comparison.csv"), &comparison_csv(&table))?;
    Ok(table)
}

fn compare_batch(
    cfg: &ScenarioConfig,
    seeds: &[u64],
    out: &Path,
    trace: bool,
) -> Result<ComparisonTable, CliError> {
    let jobs = seeds
        .iter()
        .flat_map(|&s| {
            [Protocol::Aodv, Protocol::Tbraodv].map(|p| Job {
                cfg: with(cfg, p, s),
                trace,
            })
        })
        .collect();
    let results = run_jobs(jobs)?;
    for r in &results {
        let m = &r.report.meta;
        write_run(
            &out.join(m.protocol.as_str())
                .join(format!("seed_{}", m.seed)),
            r,
        )?;
    }
    let (a, b): (Vec<RunReport>, Vec<RunReport>) = results
        .iter()
        .map(|r| r.report.clone())
        .partition(|r| r.meta.protocol == Protocol::Aodv);
    let reports: Vec<&RunReport> = results.iter().map(|r| &r.report).collect();
    write_file(&out.join("summary.csv"), &summary_csv(&reports))?;
    Ok(compare_runs(&a, &b)?)
}

pub struct SweepArgs<'a> {
    pub scenario: &'a Path,
    pub sizes: &'a [usize],
    pub seeds: &'a [u64],
    pub out: &'a Path,
}

/// `sweep`: compare at several network sizes.
pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<RunReport>, CliError> {
    if args.sizes.is_empty() {
        return Err(CliError::Usage(
            "--sizes needs at least one node count".into(),
        ));
    }
    if let Some(&bad) = args.sizes.iter().find(|&&n| n < 2) {
        return Err(CliError::Usage(format!("node count {bad} is below 2")));
    }
    let base = load_scenario(args.scenario)?;
    let seeds = seeds_or_default(args.seeds, &base)?;
    let mut jobs = Vec::new();
    for &n in args.sizes {
        let cfg = scale_scenario(&base, n);
        for &s in &seeds {
            for p in [Protocol::Aodv, Protocol::Tbraodv] {
                jobs.push(Job {
                    cfg: with(&cfg, p, s),
                    trace: false,
                });
            }
        }
    }
    let results = run_jobs(jobs)?;
    for r in &results {
        let m = &r.report.meta;
        let dir: PathBuf = args
            .out
            .join(format!("n{}", m.node_count))
            .join(m.protocol.as_str())
            .join(format!("seed_{}", m.seed));
        write_run(&dir, r)?;
    }
    let reports: Vec<&RunReport> = results.iter().map(|r| &r.report).collect();
    write_file(&args.out.join("sweep.csv"), &sweep_csv(&reports))?;
    write_file(&args.out.join("summary.csv"), &summary_csv(&reports))?;
    Ok(results.into_iter().map(|r| r.report).collect())
}
