//! The event loop tying radio, mobility, routing, trust and metrics together.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::aodv::{Action, NextHopPolicy, NodeRoutingState, OpenPolicy};
use crate::metrics::{finalize, DropReason, MetricsCollector, MetricsError, RunMeta, RunReport};
use crate::packet::{DataKey, DataPacket, Frame, LinkTarget, Message};
use crate::scenario::{
    select_adversaries, traffic_schedule, AdversaryModel, InstantiateError, Protocol,
    ScenarioConfig, Verdict,
};
use crate::sim::event::{EventKind, EventQueue, PastEvent, TimerKind};
use crate::sim::mobility::{mobility_step, MotionState, Point};
use crate::sim::radio::neighbors_of;
use crate::sim::rng::{Prng, Stream};
use crate::tbraodv::TrustState;
use crate::NodeId;

/// Mobility update period in seconds.
pub const MOBILITY_DT: f64 = 0.1;
/// Simulated seconds between full-table loop and conservation checks.
const FULL_CHECK_PERIOD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Record one line per processed event.
    pub trace: bool,
    /// Run loop-freedom and conservation checks while simulating.
    pub check_invariants: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            trace: false,
            check_invariants: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Instantiate(#[from] InstantiateError),
    #[error("placement lists {got} positions for {want} nodes")]
    Placement { got: usize, want: usize },
    #[error(transparent)]
    Schedule(#[from] PastEvent),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("routing loop toward {dest} at t={time}: {path}")]
    RoutingLoop {
        dest: NodeId,
        time: f64,
        path: String,
    },
    #[error("{node} handed data to blacklisted neighbor {next} at t={time}")]
    BlacklistedNextHop {
        node: NodeId,
        next: NodeId,
        time: f64,
    },
}

impl SimError {
    /// Errors caused by the scenario rather than by a broken invariant.
    pub fn is_config_error(&self) -> bool {
        matches!(self, SimError::Instantiate(_) | SimError::Placement { .. })
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub trace: Option<String>,
    pub events: u64,
}

#[derive(Debug)]
struct Node {
    routing: NodeRoutingState,
    trust: Option<TrustState>,
}

impl Node {
    fn split(&mut self) -> (&mut NodeRoutingState, &dyn NextHopPolicy) {
        let policy: &dyn NextHopPolicy = match &self.trust {
            Some(t) => t,
            None => &OpenPolicy,
        };
        (&mut self.routing, policy)
    }
}

pub struct Simulation {
    cfg: ScenarioConfig,
    opts: SimOptions,
    queue: EventQueue,
    nodes: Vec<Node>,
    motion: Vec<MotionState>,
    positions: Vec<Point>,
    rng_mobility: ChaCha8Rng,
    rng_loss: ChaCha8Rng,
    rng_adversary: ChaCha8Rng,
    adversaries: AdversaryModel,
    metrics: MetricsCollector,
    // DATA frames sitting in queued Deliver events, per flow
    on_air: BTreeMap<u32, u64>,
    trace: Option<String>,
    events: u64,
    next_full_check: f64,
    finished: bool,
}

impl Simulation {
    /// Uniform random placement and random-waypoint motion.
    pub fn new(cfg: &ScenarioConfig, opts: SimOptions) -> Result<Self, SimError> {
        let prng = Prng::new(cfg.seed);
        let mut rng_mobility = prng.stream(Stream::Mobility);
        let motion = (0..cfg.node_count)
            .map(|_| MotionState::random(&cfg.field, &cfg.mobility, &mut rng_mobility))
            .collect();
        Self::build(cfg, opts, motion, rng_mobility)
    }

    /// Fixed placement; nodes never move regardless of the mobility section.
    pub fn with_placement(
        cfg: &ScenarioConfig,
        opts: SimOptions,
        positions: &[Point],
    ) -> Result<Self, SimError> {
        if positions.len() != cfg.node_count {
            return Err(SimError::Placement {
                got: positions.len(),
                want: cfg.node_count,
            });
        }
        let mut cfg = cfg.clone();
        cfg.mobility.v_min = 0.0;
        cfg.mobility.v_max = 0.0;
        let motion = positions.iter().map(|&p| MotionState::parked(p)).collect();
        let rng_mobility = Prng::new(cfg.seed).stream(Stream::Mobility);
        Self::build(&cfg, opts, motion, rng_mobility)
    }

    fn build(
        cfg: &ScenarioConfig,
        opts: SimOptions,
        motion: Vec<MotionState>,
        rng_mobility: ChaCha8Rng,
    ) -> Result<Self, SimError> {
        let prng = Prng::new(cfg.seed);
        let mut rng_adversary = prng.stream(Stream::Adversary);
        let members = select_adversaries(cfg, &mut rng_adversary)?;
        let aodv = cfg.timers.aodv_config();
        let nodes = (0..cfg.node_count as u32)
            .map(|i| Node {
                routing: NodeRoutingState::new(NodeId(i), aodv.clone()),
                trust: (cfg.protocol == Protocol::Tbraodv)
                    .then(|| TrustState::new(NodeId(i), cfg.trust, cfg.timers.watch_timeout)),
            })
            .collect();
        let positions = motion.iter().map(|m: &MotionState| m.position).collect();

        let mut queue = EventQueue::new();
        queue.schedule(cfg.duration, EventKind::EndOfRun)?;
        let mut rng_timers = prng.stream(Stream::Timers);
        for i in 0..cfg.node_count as u32 {
            let phase = rng_timers.gen::<f64>() * cfg.timers.hello_interval;
            queue.schedule(
                phase,
                EventKind::Timer {
                    node: NodeId(i),
                    timer: TimerKind::Hello,
                },
            )?;
        }
        if !cfg.mobility.is_static() {
            queue.schedule(MOBILITY_DT, EventKind::MobilityStep)?;
        }
        let mut metrics = MetricsCollector::new();
        for flow in 0..cfg.flows.len() as u32 {
            metrics.register_flow(flow);
        }
        for s in traffic_schedule(cfg) {
            queue.schedule(
                s.time,
                EventKind::TrafficSend {
                    flow: s.flow,
                    seq: s.seq,
                },
            )?;
        }

        Ok(Simulation {
            cfg: cfg.clone(),
            opts,
            queue,
            nodes,
            motion,
            positions,
            rng_mobility,
            rng_loss: prng.stream(Stream::RadioLoss),
            rng_adversary,
            adversaries: AdversaryModel::new(members, cfg.adversary.behavior),
            metrics,
            on_air: BTreeMap::new(),
            trace: opts.trace.then(String::new),
            events: 0,
            next_full_check: FULL_CHECK_PERIOD,
            finished: false,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn now(&self) -> f64 {
        self.queue.now()
    }

    pub fn adversaries(&self) -> &BTreeSet<NodeId> {
        self.adversaries.members()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn routing(&self, n: NodeId) -> &NodeRoutingState {
        &self.nodes[n.0 as usize].routing
    }

    pub fn trust(&self, n: NodeId) -> Option<&TrustState> {
        self.nodes[n.0 as usize].trust.as_ref()
    }

    pub fn metrics(&self) -> &MetricsCollector {
        &self.metrics
    }

    pub fn run(mut self) -> Result<RunOutcome, SimError> {
        while self.step()? {}
        self.finish()
    }

    /// Processes one event. Returns `false` once the run has ended.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if self.finished {
            return Ok(false);
        }
        let Some(ev) = self.queue.pop() else {
            self.finished = true;
            return Ok(false);
        };
        let now = ev.time;
        self.events += 1;
        if let Some(trace) = self.trace.as_mut() {
            trace_line(trace, now, &ev.kind);
        }
        match ev.kind {
            EventKind::Deliver { frame, to } => self.on_deliver(frame, to)?,
            EventKind::Timer { node, timer } => self.on_timer(node, timer)?,
            EventKind::MobilityStep => self.on_mobility()?,
            EventKind::WatchTimeout { observer, entry } => {
                let trust = self.nodes[observer.0 as usize].trust.as_mut();
                if let Some(flagged) = trust.and_then(|t| t.on_watch_timeout(&entry)) {
                    self.react(observer, flagged)?;
                }
            }
            EventKind::TrafficSend { flow, seq } => self.on_traffic(flow, seq)?,
            EventKind::EndOfRun => self.finished = true,
        }
        if self.opts.check_invariants {
            self.check_changed_routes()?;
            if now >= self.next_full_check {
                self.next_full_check += FULL_CHECK_PERIOD;
                self.check_all_routes()?;
                self.check_conservation()?;
            }
        }
        Ok(!self.finished)
    }

    /// Runs the end-of-run checks and builds the report.
    pub fn finish(self) -> Result<RunOutcome, SimError> {
        self.check_conservation()?;
        let meta = RunMeta {
            seed: self.cfg.seed,
            protocol: self.cfg.protocol,
            node_count: self.cfg.node_count,
            adversary_fraction: self.cfg.adversary.fraction(self.cfg.node_count),
            duration: self.cfg.duration,
        };
        // Only honest observers' opinions count toward detection.
        let observers = self.nodes.iter().filter_map(|n| {
            let id = n.routing.id();
            match &n.trust {
                Some(t) if !self.adversaries.is_adversary(id) => Some((id, t)),
                _ => None,
            }
        });
        let report = finalize(meta, &self.metrics, observers, self.adversaries.members());
        Ok(RunOutcome {
            report,
            trace: self.trace,
            events: self.events,
        })
    }

    fn on_deliver(&mut self, frame: Rc<Frame>, to: NodeId) -> Result<(), SimError> {
        let now = self.now();
        let sender = frame.sender;
        if let Message::Data(d) = &frame.msg {
            *self.on_air.get_mut(&d.key.flow).expect("DATA frame on air") -= 1;
        }

        // Link-level acknowledgment back at the sender opens its watches.
        let mut flagged = Vec::new();
        if let Some(trust) = self.nodes[sender.0 as usize].trust.as_mut() {
            let (watches, f) = trust.on_link_delivered(to, &frame.msg, now);
            flagged.extend(f.into_iter().map(|n| (sender, n)));
            for entry in watches {
                self.queue.schedule(
                    entry.deadline,
                    EventKind::WatchTimeout {
                        observer: sender,
                        entry,
                    },
                )?;
            }
        }

        let mut out = Vec::new();
        let (routing, policy) = self.nodes[to.0 as usize].split();
        routing.note_heard(sender, now);
        match &frame.msg {
            Message::Hello(h) => routing.handle_hello(h, sender, now, policy),
            Message::Rreq(r) => {
                routing.handle_rreq(r, sender, now, policy, &mut out);
            }
            Message::Rrep(r) => {
                routing.handle_rrep(r, sender, now, policy, &mut out);
            }
            Message::Rerr(e) => routing.handle_rerr(e, sender, now, &mut out),
            Message::Data(d) => {
                if d.dst != to
                    && self.adversaries.filter(to, &mut self.rng_adversary) == Verdict::Drop
                {
                    out.push(Action::Drop {
                        packet: d.clone(),
                        reason: DropReason::Adversary,
                    });
                } else {
                    routing.handle_data(d.clone(), now, policy, &mut out);
                }
            }
        }
        self.apply(to, out)?;
        for (observer, bad) in flagged {
            self.react(observer, bad)?;
        }
        Ok(())
    }

    fn on_timer(&mut self, node: NodeId, timer: TimerKind) -> Result<(), SimError> {
        let now = self.now();
        let mut out = Vec::new();
        let n = &mut self.nodes[node.0 as usize];
        match timer {
            TimerKind::Hello => {
                n.routing.tick_timers(now, &mut out);
                if let Some(t) = n.trust.as_mut() {
                    t.prune(now, self.cfg.timers.seen_rreq_lifetime);
                }
                let next = now + self.cfg.timers.hello_interval;
                if next < self.cfg.duration {
                    self.queue.schedule(
                        next,
                        EventKind::Timer {
                            node,
                            timer: TimerKind::Hello,
                        },
                    )?;
                }
            }
            TimerKind::RreqRetry { dest, rreq_id } => {
                let (routing, policy) = n.split();
                routing.on_retry_timer(dest, rreq_id, now, policy, &mut out);
            }
        }
        self.apply(node, out)
    }

    fn on_mobility(&mut self) -> Result<(), SimError> {
        let now = self.now();
        for (m, p) in self.motion.iter_mut().zip(self.positions.iter_mut()) {
            mobility_step(
                m,
                &self.cfg.field,
                &self.cfg.mobility,
                &mut self.rng_mobility,
                now - MOBILITY_DT,
                MOBILITY_DT,
            );
            *p = m.position;
        }
        let next = now + MOBILITY_DT;
        if next < self.cfg.duration {
            self.queue.schedule(next, EventKind::MobilityStep)?;
        }
        Ok(())
    }

    fn on_traffic(&mut self, flow: u32, seq: u64) -> Result<(), SimError> {
        let now = self.now();
        let flow_cfg = &self.cfg.flows[flow as usize];
        let packet = DataPacket {
            key: DataKey { flow, seq },
            src: flow_cfg.src,
            dst: flow_cfg.dst,
            size_bytes: flow_cfg.packet_size,
            sent_at: now,
            hops_left: self.nodes[0].routing.config().data_hop_limit,
        };
        self.metrics.record_send(packet.key, packet.size_bytes, now);
        let src = flow_cfg.src;
        let mut out = Vec::new();
        let (routing, policy) = self.nodes[src.0 as usize].split();
        routing.originate_data(packet, now, policy, &mut out);
        self.apply(src, out)
    }

    /// `observer` just classified `bad` as misbehaving.
    fn react(&mut self, observer: NodeId, bad: NodeId) -> Result<(), SimError> {
        let now = self.now();
        let mut out = Vec::new();
        let node = &mut self.nodes[observer.0 as usize];
        if let Some(trust) = &node.trust {
            trust.on_misbehavior_detected(&mut node.routing, bad, now, &mut out);
        }
        self.apply(observer, out)
    }

    fn apply(&mut self, node: NodeId, actions: Vec<Action>) -> Result<(), SimError> {
        let now = self.now();
        for action in actions {
            match action {
                Action::Send { target, msg } => self.transmit(node, target, msg)?,
                Action::Deliver(p) => {
                    self.metrics.record_delivery(p.key, now)?;
                }
                Action::Drop { packet, reason } => self.metrics.record_drop(packet.key, reason)?,
                Action::ScheduleRetry { dest, rreq_id, at } => {
                    self.queue.schedule(
                        at,
                        EventKind::Timer {
                            node,
                            timer: TimerKind::RreqRetry { dest, rreq_id },
                        },
                    )?;
                }
            }
        }
        Ok(())
    }

    fn transmit(
        &mut self,
        sender: NodeId,
        target: LinkTarget,
        msg: Message,
    ) -> Result<(), SimError> {
        let now = self.now();
        if let (LinkTarget::Unicast(next), Message::Data(_)) = (target, &msg) {
            if self.trust(sender).is_some_and(|t| t.is_blacklisted(next)) {
                return Err(SimError::BlacklistedNextHop {
                    node: sender,
                    next,
                    time: now,
                });
            }
        }
        let frame = Rc::new(Frame {
            sender,
            target,
            msg,
        });
        let radio = self.cfg.radio;
        let mut reached_target = false;
        let mut flagged = Vec::new();
        for m in neighbors_of(sender, &self.positions, radio.range) {
            if radio.loss_prob > 0.0 && self.rng_loss.gen::<f64>() < radio.loss_prob {
                continue;
            }
            if let Some(trust) = self.nodes[m.0 as usize].trust.as_mut() {
                flagged.extend(
                    trust
                        .on_overhear(sender, &frame.msg, now)
                        .into_iter()
                        .map(|b| (m, b)),
                );
            }
            if frame.is_addressed_to(m) {
                reached_target = true;
                if let Message::Data(d) = &frame.msg {
                    *self.on_air.entry(d.key.flow).or_default() += 1;
                }
                self.queue.schedule(
                    now + radio.per_hop_delay,
                    EventKind::Deliver {
                        frame: Rc::clone(&frame),
                        to: m,
                    },
                )?;
            }
        }
        if let (LinkTarget::Unicast(_), Message::Data(d), false) =
            (target, &frame.msg, reached_target)
        {
            self.metrics.record_drop(d.key, DropReason::RadioLoss)?;
        }
        for (observer, bad) in flagged {
            self.react(observer, bad)?;
        }
        Ok(())
    }

    fn check_changed_routes(&mut self) -> Result<(), SimError> {
        let mut dests = BTreeSet::new();
        for n in &mut self.nodes {
            dests.extend(n.routing.take_changed());
        }
        for d in dests {
            self.check_loop(d)?;
        }
        Ok(())
    }

    fn check_all_routes(&self) -> Result<(), SimError> {
        (0..self.nodes.len() as u32).try_for_each(|d| self.check_loop(NodeId(d)))
    }

    /// Follows next-hop chains toward `dest` from every node; no chain of
    /// active entries may revisit a node.
    pub fn check_loop(&self, dest: NodeId) -> Result<(), SimError> {
        const FRESH: u8 = 0;
        const ON_PATH: u8 = 1;
        const DONE: u8 = 2;
        let now = self.now();
        let mut mark = vec![FRESH; self.nodes.len()];
        for start in 0..self.nodes.len() {
            let mut path = Vec::new();
            let mut cur = start;
            while cur != dest.0 as usize && mark[cur] != DONE {
                if mark[cur] == ON_PATH {
                    let from = path.iter().position(|&p| p == cur).unwrap_or(0);
                    let cycle: Vec<String> = path[from..]
                        .iter()
                        .chain(std::iter::once(&cur))
                        .map(|&p| NodeId(p as u32).to_string())
                        .collect();
                    return Err(SimError::RoutingLoop {
                        dest,
                        time: now,
                        path: cycle.join(" -> "),
                    });
                }
                mark[cur] = ON_PATH;
                path.push(cur);
                match self.nodes[cur].routing.route(dest) {
                    Some(e) if e.is_active(now) => cur = e.next_hop.0 as usize,
                    _ => break,
                }
            }
            for p in path {
                mark[p] = DONE;
            }
        }
        Ok(())
    }

    /// DATA packets not yet delivered or dropped, per flow: buffered at a
    /// source or travelling in a queued frame.
    pub fn in_flight(&self) -> BTreeMap<u32, u64> {
        let mut counts = self.on_air.clone();
        for n in &self.nodes {
            for p in n.routing.pending_packets() {
                *counts.entry(p.key.flow).or_default() += 1;
            }
        }
        counts
    }

    fn check_conservation(&self) -> Result<(), SimError> {
        Ok(self.metrics.check_conservation(&self.in_flight())?)
    }
}

fn trace_line(out: &mut String, time: f64, kind: &EventKind) {
    let _ = match kind {
        EventKind::Deliver { frame, to } => {
            writeln!(out, "{time} deliver {to} {} {}", frame.sender, frame.msg)
        }
        EventKind::Timer { node, timer } => match timer {
            TimerKind::Hello => writeln!(out, "{time} timer {node} hello"),
            TimerKind::RreqRetry { dest, rreq_id } => {
                writeln!(out, "{time} timer {node} retry:{dest}:{rreq_id}")
            }
        },
        EventKind::MobilityStep => writeln!(out, "{time} mobility - -"),
        // Watchdog bookkeeping is internal to the trust layer; leaving it out
        // keeps traces comparable across protocols.
        EventKind::WatchTimeout { .. } => Ok(()),
        EventKind::TrafficSend { flow, seq } => {
            writeln!(
                out,
                "{time} send - {}",
                DataKey {
                    flow: *flow,
                    seq: *seq
                }
            )
        }
        EventKind::EndOfRun => writeln!(out, "{time} end - -"),
    };
}

/// Runs one scenario to completion.
pub fn run(cfg: &ScenarioConfig, opts: SimOptions) -> Result<RunOutcome, SimError> {
    Simulation::new(cfg, opts)?.run()
}
