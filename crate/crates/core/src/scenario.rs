//! Scenario files, traffic schedules and the adversary model.
//!
//! A scenario is a small INI-like text file:
//!
//! ```text
//! [general]
//! field = 1600, 1600
//! node_count = 50
//! duration = 300
//! protocol = tbraodv
//! seed = 7
//!
//! [adversary]
//! mode = fraction(0.2)       # none | fraction(p) | explicit(3, 7)
//! behavior = blackhole       # blackhole | grayhole(q)
//!
//! [flow]
//! src = 0
//! dst = 1
//! rate = 4
//! ```
//!
//! Omitted keys take their defaults; unknown sections or keys are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::aodv::AodvConfig;
use crate::sim::mobility::{Field, MobilityParams};
use crate::sim::radio::RadioModel;
use crate::trust::TrustParams;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Aodv,
    Tbraodv,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Aodv => "aodv",
            Protocol::Tbraodv => "tbraodv",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "aodv" => Ok(Protocol::Aodv),
            "tbraodv" => Ok(Protocol::Tbraodv),
            _ => Err(format!("unknown protocol `{s}` (expected aodv or tbraodv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub src: NodeId,
    pub dst: NodeId,
    /// Packets per second.
    pub rate: f64,
    pub packet_size: u32,
    pub start: f64,
    pub stop: f64,
}

impl FlowSpec {
    pub fn new(src: u32, dst: u32, rate: f64, start: f64, stop: f64) -> Self {
        FlowSpec {
            src: NodeId(src),
            dst: NodeId(dst),
            rate,
            packet_size: DEFAULT_PACKET_SIZE,
            start,
            stop,
        }
    }

    /// CBR send times: `start + k / rate` while before `stop`.
    pub fn send_times(&self) -> impl Iterator<Item = f64> + '_ {
        (0u64..)
            .map(|k| self.start + k as f64 / self.rate)
            .take_while(|&t| t < self.stop)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdversaryMode {
    None,
    Fraction(f64),
    Explicit(Vec<NodeId>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behavior {
    Blackhole,
    Grayhole(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarySpec {
    pub mode: AdversaryMode,
    pub behavior: Behavior,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        AdversarySpec {
            mode: AdversaryMode::None,
            behavior: Behavior::Blackhole,
        }
    }
}

impl AdversarySpec {
    /// Nominal adversary fraction, as reported in result files.
    pub fn fraction(&self, node_count: usize) -> f64 {
        match &self.mode {
            AdversaryMode::None => 0.0,
            AdversaryMode::Fraction(p) => *p,
            AdversaryMode::Explicit(ids) => ids.len() as f64 / node_count as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timers {
    pub hello_interval: f64,
    pub allowed_hello_loss: u32,
    pub active_route_timeout: f64,
    pub rreq_retry_timeout: f64,
    pub rreq_retries: u32,
    pub seen_rreq_lifetime: f64,
    /// How long a watched neighbor has to relay before a failure is recorded.
    pub watch_timeout: f64,
}

impl Default for Timers {
    fn default() -> Self {
        let a = AodvConfig::default();
        Timers {
            hello_interval: a.hello_interval,
            allowed_hello_loss: a.allowed_hello_loss,
            active_route_timeout: a.active_route_timeout,
            rreq_retry_timeout: a.rreq_retry_timeout,
            rreq_retries: a.rreq_retries,
            seen_rreq_lifetime: a.seen_rreq_lifetime,
            watch_timeout: 0.5,
        }
    }
}

impl Timers {
    pub fn aodv_config(&self) -> AodvConfig {
        AodvConfig {
            hello_interval: self.hello_interval,
            allowed_hello_loss: self.allowed_hello_loss,
            active_route_timeout: self.active_route_timeout,
            rreq_retry_timeout: self.rreq_retry_timeout,
            rreq_retries: self.rreq_retries,
            seen_rreq_lifetime: self.seen_rreq_lifetime,
            ..AodvConfig::default()
        }
    }
}

pub const DEFAULT_PACKET_SIZE: u32 = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub field: Field,
    pub node_count: usize,
    pub radio: RadioModel,
    pub duration: f64,
    pub protocol: Protocol,
    pub seed: u64,
    pub flows: Vec<FlowSpec>,
    pub mobility: MobilityParams,
    pub adversary: AdversarySpec,
    pub trust: TrustParams,
    pub timers: Timers,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            field: Field {
                width: 1600.0,
                height: 1600.0,
            },
            node_count: 50,
            radio: RadioModel::default(),
            duration: 300.0,
            protocol: Protocol::Aodv,
            seed: 1,
            flows: Vec::new(),
            mobility: MobilityParams::default(),
            adversary: AdversarySpec::default(),
            trust: TrustParams::default(),
            timers: Timers::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.key, self.message),
            None => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

fn err(line: Option<usize>, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "general",
        &["field", "node_count", "duration", "protocol", "seed"],
    ),
    ("radio", &["range", "per_hop_delay", "loss_prob"]),
    ("mobility", &["v_min", "v_max", "pause_max"]),
    (
        "trust",
        &[
            "weight_rreq",
            "weight_rrep",
            "weight_data",
            "threshold",
            "min_observations",
        ],
    ),
    (
        "timers",
        &[
            "hello_interval",
            "allowed_hello_loss",
            "active_route_timeout",
            "rreq_retry_timeout",
            "rreq_retries",
            "seen_rreq_lifetime",
            "watch_timeout",
        ],
    ),
    ("adversary", &["mode", "behavior"]),
    (
        "flow",
        &["src", "dst", "rate", "packet_size", "start", "stop"],
    ),
];

/// Where each key was read, for error messages raised after parsing.
#[derive(Default)]
struct Lines {
    general: BTreeMap<String, usize>,
    flows: Vec<BTreeMap<String, usize>>,
}

impl Lines {
    fn of(&self, section: &str, key: &str) -> Option<usize> {
        self.general.get(&format!("{section}.{key}")).copied()
    }

    fn flow(&self, i: usize, key: &str) -> Option<usize> {
        self.flows.get(i).and_then(|m| m.get(key).copied())
    }
}

fn num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| err(Some(line), key, format!("malformed value `{v}`")))
}

fn real(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = num(line, key, v)?;
    if x.is_nan() {
        return Err(err(Some(line), key, "value is NaN"));
    }
    Ok(x)
}

fn finite(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    let x = real(line, key, v)?;
    if !x.is_finite() {
        return Err(err(Some(line), key, format!("value `{v}` must be finite")));
    }
    Ok(x)
}

/// Splits `name(args)` into its name and argument text.
fn call(v: &str) -> Option<(&str, &str)> {
    let open = v.find('(')?;
    let inner = v[open + 1..].strip_suffix(')')?;
    Some((v[..open].trim(), inner.trim()))
}

fn parse_mode(line: usize, v: &str) -> Result<AdversaryMode, ConfigError> {
    if v == "none" {
        return Ok(AdversaryMode::None);
    }
    match call(v) {
        Some(("fraction", p)) => Ok(AdversaryMode::Fraction(finite(line, "mode", p)?)),
        Some(("explicit", list)) => {
            let ids = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| num::<u32>(line, "mode", s).map(NodeId))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(AdversaryMode::Explicit(ids))
        }
        _ => Err(err(
            Some(line),
            "mode",
            format!("malformed value `{v}` (expected none, fraction(p) or explicit(ids))"),
        )),
    }
}

fn parse_behavior(line: usize, v: &str) -> Result<Behavior, ConfigError> {
    if v == "blackhole" {
        return Ok(Behavior::Blackhole);
    }
    match call(v) {
        Some(("grayhole", q)) => Ok(Behavior::Grayhole(finite(line, "behavior", q)?)),
        _ => Err(err(
            Some(line),
            "behavior",
            format!("malformed value `{v}` (expected blackhole or grayhole(q))"),
        )),
    }
}

/// Parses and validates a scenario file.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::default();
    let mut lines = Lines::default();
    let mut section: Option<&str> = None;
    let mut seen_sections = BTreeSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(Some(line), content, "malformed section header"))?
                .trim();
            let known = SECTIONS
                .iter()
                .find(|(s, _)| *s == name)
                .ok_or_else(|| err(Some(line), name, "unknown section"))?;
            if known.0 == "flow" {
                cfg.flows
                    .push(FlowSpec::new(u32::MAX, u32::MAX, 1.0, 0.0, f64::NAN));
                lines.flows.push(BTreeMap::new());
            } else if !seen_sections.insert(known.0) {
                return Err(err(Some(line), name, "section given twice"));
            }
            section = Some(known.0);
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(Some(line), content, "expected `key = value`"))?;
        let sec = section.ok_or_else(|| err(Some(line), key, "key outside of any section"))?;
        let keys = SECTIONS.iter().find(|(s, _)| *s == sec).unwrap().1;
        if !keys.contains(&key) {
            return Err(err(Some(line), key, format!("unknown key in [{sec}]")));
        }
        let seen = if sec == "flow" {
            lines
                .flows
                .last_mut()
                .unwrap()
                .insert(key.to_string(), line)
        } else {
            lines.general.insert(format!("{sec}.{key}"), line)
        };
        if seen.is_some() {
            return Err(err(Some(line), key, "key given twice"));
        }
        apply(&mut cfg, sec, key, value, line)?;
    }

    for (i, flow) in cfg.flows.iter_mut().enumerate() {
        for key in ["src", "dst"] {
            if lines.flow(i, key).is_none() {
                return Err(err(None, key, format!("flow #{} lacks `{key}`", i + 1)));
            }
        }
        if flow.stop.is_nan() {
            flow.stop = cfg.duration;
        }
    }
    validate(&cfg, &lines)?;
    Ok(cfg)
}

fn apply(
    cfg: &mut ScenarioConfig,
    sec: &str,
    key: &str,
    v: &str,
    line: usize,
) -> Result<(), ConfigError> {
    match (sec, key) {
        ("general", "field") => {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(err(Some(line), key, "expected `width, height`"));
            }
            cfg.field = Field {
                width: finite(line, key, parts[0])?,
                height: finite(line, key, parts[1])?,
            };
        }
        ("general", "node_count") => cfg.node_count = num(line, key, v)?,
        ("general", "duration") => cfg.duration = finite(line, key, v)?,
        ("general", "protocol") => {
            cfg.protocol = v.parse().map_err(|m: String| err(Some(line), key, m))?
        }
        ("general", "seed") => cfg.seed = num(line, key, v)?,
        ("radio", "range") => cfg.radio.range = finite(line, key, v)?,
        ("radio", "per_hop_delay") => cfg.radio.per_hop_delay = finite(line, key, v)?,
        ("radio", "loss_prob") => cfg.radio.loss_prob = finite(line, key, v)?,
        ("mobility", "v_min") => cfg.mobility.v_min = finite(line, key, v)?,
        ("mobility", "v_max") => cfg.mobility.v_max = finite(line, key, v)?,
        ("mobility", "pause_max") => cfg.mobility.pause_max = finite(line, key, v)?,
        ("trust", "weight_rreq") => cfg.trust.weight_rreq = finite(line, key, v)?,
        ("trust", "weight_rrep") => cfg.trust.weight_rrep = finite(line, key, v)?,
        ("trust", "weight_data") => cfg.trust.weight_data = finite(line, key, v)?,
        ("trust", "threshold") => cfg.trust.threshold = real(line, key, v)?,
        ("trust", "min_observations") => cfg.trust.min_observations = num(line, key, v)?,
        ("timers", "hello_interval") => cfg.timers.hello_interval = finite(line, key, v)?,
        ("timers", "allowed_hello_loss") => cfg.timers.allowed_hello_loss = num(line, key, v)?,
        ("timers", "active_route_timeout") => {
            cfg.timers.active_route_timeout = finite(line, key, v)?
        }
        ("timers", "rreq_retry_timeout") => cfg.timers.rreq_retry_timeout = finite(line, key, v)?,
        ("timers", "rreq_retries") => cfg.timers.rreq_retries = num(line, key, v)?,
        ("timers", "seen_rreq_lifetime") => cfg.timers.seen_rreq_lifetime = finite(line, key, v)?,
        ("timers", "watch_timeout") => cfg.timers.watch_timeout = finite(line, key, v)?,
        ("adversary", "mode") => cfg.adversary.mode = parse_mode(line, v)?,
        ("adversary", "behavior") => cfg.adversary.behavior = parse_behavior(line, v)?,
        ("flow", _) => {
            let flow = cfg.flows.last_mut().unwrap();
            match key {
                "src" => flow.src = NodeId(num(line, key, v)?),
                "dst" => flow.dst = NodeId(num(line, key, v)?),
                "rate" => flow.rate = finite(line, key, v)?,
                "packet_size" => flow.packet_size = num(line, key, v)?,
                "start" => flow.start = finite(line, key, v)?,
                _ => flow.stop = finite(line, key, v)?,
            }
        }
        _ => unreachable!("key table and apply() disagree on {sec}.{key}"),
    }
    Ok(())
}

fn validate(cfg: &ScenarioConfig, lines: &Lines) -> Result<(), ConfigError> {
    let g = |sec: &str, key: &str| lines.of(sec, key);
    let check = |ok: bool, sec: &str, key: &str, msg: &str| {
        if ok {
            Ok(())
        } else {
            Err(err(g(sec, key), key, msg))
        }
    };
    check(
        cfg.field.width > 0.0 && cfg.field.height > 0.0,
        "general",
        "field",
        "field dimensions must be positive",
    )?;
    check(
        cfg.node_count >= 2,
        "general",
        "node_count",
        "at least 2 nodes required",
    )?;
    check(
        cfg.duration > 0.0,
        "general",
        "duration",
        "duration must be positive",
    )?;
    check(
        cfg.radio.range > 0.0,
        "radio",
        "range",
        "range must be positive",
    )?;
    check(
        cfg.radio.per_hop_delay > 0.0,
        "radio",
        "per_hop_delay",
        "per-hop delay must be positive",
    )?;
    check(
        (0.0..=1.0).contains(&cfg.radio.loss_prob),
        "radio",
        "loss_prob",
        "probability must lie in [0, 1]",
    )?;
    let m = &cfg.mobility;
    check(
        m.v_min >= 0.0,
        "mobility",
        "v_min",
        "speed must be non-negative",
    )?;
    check(
        m.v_max >= m.v_min,
        "mobility",
        "v_max",
        "v_max must be at least v_min",
    )?;
    check(
        m.pause_max >= 0.0,
        "mobility",
        "pause_max",
        "pause must be non-negative",
    )?;
    if let Err(msg) = cfg.trust.validate() {
        return Err(err(g("trust", "threshold"), "trust", msg));
    }
    let t = &cfg.timers;
    for (key, v) in [
        ("hello_interval", t.hello_interval),
        ("active_route_timeout", t.active_route_timeout),
        ("rreq_retry_timeout", t.rreq_retry_timeout),
        ("seen_rreq_lifetime", t.seen_rreq_lifetime),
        ("watch_timeout", t.watch_timeout),
    ] {
        check(v > 0.0, "timers", key, "timer must be positive")?;
    }
    check(
        t.allowed_hello_loss >= 1,
        "timers",
        "allowed_hello_loss",
        "must be at least 1",
    )?;

    let n = cfg.node_count as u32;
    match &cfg.adversary.mode {
        AdversaryMode::None => {}
        AdversaryMode::Fraction(p) => check(
            (0.0..=1.0).contains(p),
            "adversary",
            "mode",
            "fraction must lie in [0, 1]",
        )?,
        AdversaryMode::Explicit(ids) => {
            check(
                ids.iter().all(|id| id.0 < n),
                "adversary",
                "mode",
                "node id out of range",
            )?;
            let unique: BTreeSet<_> = ids.iter().collect();
            check(
                unique.len() == ids.len(),
                "adversary",
                "mode",
                "duplicate node id",
            )?;
        }
    }
    if let Behavior::Grayhole(q) = cfg.adversary.behavior {
        check(
            q > 0.0 && q <= 1.0,
            "adversary",
            "behavior",
            "drop probability must lie in (0, 1]",
        )?;
    }

    for (i, f) in cfg.flows.iter().enumerate() {
        let fail = |key: &str, msg: &str| Err(err(lines.flow(i, key), key, msg));
        if f.src.0 >= n {
            return fail("src", "node id out of range");
        }
        if f.dst.0 >= n {
            return fail("dst", "node id out of range");
        }
        if f.src == f.dst {
            return fail("dst", "source and destination coincide");
        }
        if f.rate <= 0.0 {
            return fail("rate", "rate must be positive");
        }
        if f.packet_size == 0 {
            return fail("packet_size", "packet size must be positive");
        }
        if f.start < 0.0 {
            return fail("start", "start must be non-negative");
        }
        if f.start >= f.stop {
            return fail("stop", "stop must come after start");
        }
        if f.stop > cfg.duration {
            return fail("stop", "stop exceeds duration");
        }
    }
    Ok(())
}

/// Renders a config in the file format; [`parse_config`] reads it back to an
/// equal value.
pub fn serialize(cfg: &ScenarioConfig) -> String {
    use fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "[general]");
    let _ = writeln!(s, "field = {}, {}", cfg.field.width, cfg.field.height);
    let _ = writeln!(s, "node_count = {}", cfg.node_count);
    let _ = writeln!(s, "duration = {}", cfg.duration);
    let _ = writeln!(s, "protocol = {}", cfg.protocol);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "\n[radio]");
    let _ = writeln!(s, "range = {}", cfg.radio.range);
    let _ = writeln!(s, "per_hop_delay = {}", cfg.radio.per_hop_delay);
    let _ = writeln!(s, "loss_prob = {}", cfg.radio.loss_prob);
    let _ = writeln!(s, "\n[mobility]");
    let _ = writeln!(s, "v_min = {}", cfg.mobility.v_min);
    let _ = writeln!(s, "v_max = {}", cfg.mobility.v_max);
    let _ = writeln!(s, "pause_max = {}", cfg.mobility.pause_max);
    let _ = writeln!(s, "\n[trust]");
    let _ = writeln!(s, "weight_rreq = {}", cfg.trust.weight_rreq);
    let _ = writeln!(s, "weight_rrep = {}", cfg.trust.weight_rrep);
    let _ = writeln!(s, "weight_data = {}", cfg.trust.weight_data);
    let _ = writeln!(s, "threshold = {}", cfg.trust.threshold);
    let _ = writeln!(s, "min_observations = {}", cfg.trust.min_observations);
    let t = &cfg.timers;
    let _ = writeln!(s, "\n[timers]");
    let _ = writeln!(s, "hello_interval = {}", t.hello_interval);
    let _ = writeln!(s, "allowed_hello_loss = {}", t.allowed_hello_loss);
    let _ = writeln!(s, "active_route_timeout = {}", t.active_route_timeout);
    let _ = writeln!(s, "rreq_retry_timeout = {}", t.rreq_retry_timeout);
    let _ = writeln!(s, "rreq_retries = {}", t.rreq_retries);
    let _ = writeln!(s, "seen_rreq_lifetime = {}", t.seen_rreq_lifetime);
    let _ = writeln!(s, "watch_timeout = {}", t.watch_timeout);
    let _ = writeln!(s, "\n[adversary]");
    let mode = match &cfg.adversary.mode {
        AdversaryMode::None => "none".to_string(),
        AdversaryMode::Fraction(p) => format!("fraction({p})"),
        AdversaryMode::Explicit(ids) => {
            let ids: Vec<String> = ids.iter().map(|i| i.0.to_string()).collect();
            format!("explicit({})", ids.join(", "))
        }
    };
    let _ = writeln!(s, "mode = {mode}");
    let behavior = match cfg.adversary.behavior {
        Behavior::Blackhole => "blackhole".to_string(),
        Behavior::Grayhole(q) => format!("grayhole({q})"),
    };
    let _ = writeln!(s, "behavior = {behavior}");
    for f in &cfg.flows {
        let _ = writeln!(s, "\n[flow]");
        let _ = writeln!(s, "src = {}", f.src.0);
        let _ = writeln!(s, "dst = {}", f.dst.0);
        let _ = writeln!(s, "rate = {}", f.rate);
        let _ = writeln!(s, "packet_size = {}", f.packet_size);
        let _ = writeln!(s, "start = {}", f.start);
        let _ = writeln!(s, "stop = {}", f.stop);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstantiateError {
    #[error("cannot pick {wanted} adversaries: only {available} nodes are not flow endpoints")]
    NotEnoughCandidates { wanted: usize, available: usize },
}

/// Resolves the adversary set. `Fraction(p)` draws `floor(p * n)` distinct
/// nodes that are not flow endpoints.
pub fn select_adversaries(
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BTreeSet<NodeId>, InstantiateError> {
    match &cfg.adversary.mode {
        AdversaryMode::None => Ok(BTreeSet::new()),
        AdversaryMode::Explicit(ids) => Ok(ids.iter().copied().collect()),
        AdversaryMode::Fraction(p) => {
            let wanted = (p * cfg.node_count as f64 + 1e-9).floor() as usize;
            let endpoints: BTreeSet<NodeId> =
                cfg.flows.iter().flat_map(|f| [f.src, f.dst]).collect();
            let candidates: Vec<NodeId> = (0..cfg.node_count as u32)
                .map(NodeId)
                .filter(|n| !endpoints.contains(n))
                .collect();
            if wanted > candidates.len() {
                return Err(InstantiateError::NotEnoughCandidates {
                    wanted,
                    available: candidates.len(),
                });
            }
            Ok(sample(rng, candidates.len(), wanted)
                .into_iter()
                .map(|i| candidates[i])
                .collect())
        }
    }
}

/// One scheduled CBR transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledSend {
    pub time: f64,
    pub flow: u32,
    pub seq: u64,
}

pub fn traffic_schedule(cfg: &ScenarioConfig) -> Vec<ScheduledSend> {
    let mut sends = Vec::new();
    for (i, f) in cfg.flows.iter().enumerate() {
        for (seq, time) in f.send_times().enumerate() {
            sends.push(ScheduledSend {
                time,
                flow: i as u32,
                seq: seq as u64,
            });
        }
    }
    sends
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Forward,
    Drop,
}

/// The misbehaving nodes of a run and what they do.
#[derive(Debug, Clone)]
pub struct AdversaryModel {
    members: BTreeSet<NodeId>,
    behavior: Behavior,
}

impl AdversaryModel {
    pub fn new(members: BTreeSet<NodeId>, behavior: Behavior) -> Self {
        AdversaryModel { members, behavior }
    }

    pub fn members(&self) -> &BTreeSet<NodeId> {
        &self.members
    }

    pub fn is_adversary(&self, n: NodeId) -> bool {
        self.members.contains(&n)
    }

    /// Decision of `node` about a DATA packet it was asked to relay. Control
    /// traffic never reaches this filter; adversaries handle it honestly.
    pub fn filter(&self, node: NodeId, rng: &mut impl Rng) -> Verdict {
        if !self.members.contains(&node) {
            return Verdict::Forward;
        }
        match self.behavior {
            Behavior::Blackhole => Verdict::Drop,
            Behavior::Grayhole(q) => {
                if rng.gen_bool(q) {
                    Verdict::Drop
                } else {
                    Verdict::Forward
                }
            }
        }
    }
}
