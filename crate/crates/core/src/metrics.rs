//! Delivery ratio, delay and throughput accounting plus detection quality.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::packet::DataKey;
use crate::scenario::Protocol;
use crate::tbraodv::TrustState;
use crate::trust::NeighborTrustRecord;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    NoRoute,
    BufferOverflow,
    Adversary,
    RadioLoss,
    HopLimit,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoRoute => "no_route",
            DropReason::BufferOverflow => "buffer_overflow",
            DropReason::Adversary => "adversary",
            DropReason::RadioLoss => "radio_loss",
            DropReason::HopLimit => "hop_limit",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropCounts {
    pub no_route: u64,
    pub buffer_overflow: u64,
    pub adversary: u64,
    pub radio_loss: u64,
    pub hop_limit: u64,
}

impl DropCounts {
    pub fn add(&mut self, reason: DropReason) {
        *self.slot(reason) += 1;
    }

    fn slot(&mut self, reason: DropReason) -> &mut u64 {
        match reason {
            DropReason::NoRoute => &mut self.no_route,
            DropReason::BufferOverflow => &mut self.buffer_overflow,
            DropReason::Adversary => &mut self.adversary,
            DropReason::RadioLoss => &mut self.radio_loss,
            DropReason::HopLimit => &mut self.hop_limit,
        }
    }

    pub fn total(&self) -> u64 {
        self.no_route + self.buffer_overflow + self.adversary + self.radio_loss + self.hop_limit
    }

    /// Everything except adversary and no-route drops.
    pub fn other(&self) -> u64 {
        self.buffer_overflow + self.radio_loss + self.hop_limit
    }

    fn merge(&mut self, o: &DropCounts) {
        self.no_route += o.no_route;
        self.buffer_overflow += o.buffer_overflow;
        self.adversary += o.adversary;
        self.radio_loss += o.radio_loss;
        self.hop_limit += o.hop_limit;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowStats {
    pub flow: u32,
    pub sent: u64,
    pub delivered: u64,
    pub delay_sum: f64,
    pub delivered_bytes: u64,
    pub drops: DropCounts,
}

impl FlowStats {
    pub fn new(flow: u32) -> Self {
        FlowStats {
            flow,
            sent: 0,
            delivered: 0,
            delay_sum: 0.0,
            delivered_bytes: 0,
            drops: DropCounts::default(),
        }
    }

    pub fn in_flight(&self) -> u64 {
        self.sent - self.delivered - self.drops.total()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("packet {0} was never sent")]
    UnknownPacket(DataKey),
    #[error("packet {0} dropped after it was already {1}")]
    AlreadyResolved(DataKey, &'static str),
    #[error("flow {flow}: sent {sent} != delivered {delivered} + dropped {dropped} + in flight {in_flight}")]
    Conservation {
        flow: u32,
        sent: u64,
        delivered: u64,
        dropped: u64,
        in_flight: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Fate {
    InFlight { sent_at: f64, size: u32 },
    Delivered,
    Dropped,
}

/// Per-packet ledger feeding the per-flow statistics.
#[derive(Debug, Clone, Default)]
pub struct MetricsCollector {
    flows: BTreeMap<u32, FlowStats>,
    packets: BTreeMap<DataKey, Fate>,
    duplicate_deliveries: u64,
}

impl MetricsCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_flow(&mut self, flow: u32) {
        self.flows
            .entry(flow)
            .or_insert_with(|| FlowStats::new(flow));
    }

    pub fn record_send(&mut self, key: DataKey, size: u32, now: f64) {
        self.flows
            .entry(key.flow)
            .or_insert_with(|| FlowStats::new(key.flow))
            .sent += 1;
        self.packets
            .insert(key, Fate::InFlight { sent_at: now, size });
    }

    /// Returns `Ok(false)` for a duplicate delivery, which is ignored.
    pub fn record_delivery(&mut self, key: DataKey, now: f64) -> Result<bool, MetricsError> {
        let fate = self
            .packets
            .get_mut(&key)
            .ok_or(MetricsError::UnknownPacket(key))?;
        match *fate {
            Fate::InFlight { sent_at, size } => {
                *fate = Fate::Delivered;
                let stats = self
                    .flows
                    .get_mut(&key.flow)
                    .expect("flow registered on send");
                stats.delivered += 1;
                stats.delay_sum += now - sent_at;
                stats.delivered_bytes += u64::from(size);
                Ok(true)
            }
            Fate::Delivered | Fate::Dropped => {
                self.duplicate_deliveries += 1;
                Ok(false)
            }
        }
    }

    pub fn record_drop(&mut self, key: DataKey, reason: DropReason) -> Result<(), MetricsError> {
        let fate = self
            .packets
            .get_mut(&key)
            .ok_or(MetricsError::UnknownPacket(key))?;
        match *fate {
            Fate::InFlight { .. } => {
                *fate = Fate::Dropped;
                self.flows
                    .get_mut(&key.flow)
                    .expect("flow registered on send")
                    .drops
                    .add(reason);
                Ok(())
            }
            Fate::Delivered => Err(MetricsError::AlreadyResolved(key, "delivered")),
            Fate::Dropped => Err(MetricsError::AlreadyResolved(key, "dropped")),
        }
    }

    pub fn flows(&self) -> impl Iterator<Item = &FlowStats> {
        self.flows.values()
    }

    pub fn duplicate_deliveries(&self) -> u64 {
        self.duplicate_deliveries
    }

    /// Keys of packets not yet delivered or dropped.
    pub fn unresolved(&self) -> impl Iterator<Item = DataKey> + '_ {
        self.packets
            .iter()
            .filter(|(_, f)| matches!(f, Fate::InFlight { .. }))
            .map(|(k, _)| *k)
    }

    /// Checks `sent = delivered + dropped + in_flight` per flow, where
    /// `in_flight` is counted independently from the live simulator state.
    pub fn check_conservation(&self, in_flight: &BTreeMap<u32, u64>) -> Result<(), MetricsError> {
        for s in self.flows.values() {
            let counted = in_flight.get(&s.flow).copied().unwrap_or(0);
            if s.sent != s.delivered + s.drops.total() + counted {
                return Err(MetricsError::Conservation {
                    flow: s.flow,
                    sent: s.sent,
                    delivered: s.delivered,
                    dropped: s.drops.total(),
                    in_flight: counted,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Detection {
    pub true_positives: u64,
    pub false_positives: u64,
    pub undetected_adversaries: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustSnapshot {
    pub observer: NodeId,
    pub record: NeighborTrustRecord,
    pub tl: f64,
    pub blacklisted: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WatchTotals {
    pub registered: u64,
    pub successes: u64,
    pub failures: u64,
    pub live: u64,
}

/// Identity of a run, carried into reports and CSV rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub seed: u64,
    pub protocol: Protocol,
    pub node_count: usize,
    pub adversary_fraction: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub meta: RunMeta,
    /// Percent of sent packets delivered, pooled over all flows.
    pub pdr: f64,
    /// Seconds, over delivered packets only.
    pub mean_delay: Option<f64>,
    /// Delivered payload bits per simulated second.
    pub throughput: f64,
    pub sent: u64,
    pub delivered: u64,
    pub drops: DropCounts,
    pub per_flow: Vec<FlowStats>,
    pub detection: Detection,
    pub adversaries: Vec<NodeId>,
    /// Nodes blacklisted by at least one observer.
    pub blacklisted: Vec<NodeId>,
    pub final_trust: Vec<TrustSnapshot>,
    pub watches: WatchTotals,
}

impl RunReport {
    /// Adversaries whose forwarding was checked at least `min` times in the
    /// data phase, summed over all observers.
    pub fn exercised_adversaries(&self, min: u64) -> Vec<NodeId> {
        let mut observed: BTreeMap<NodeId, u64> = BTreeMap::new();
        for t in &self.final_trust {
            *observed.entry(t.record.neighbor).or_default() += t.record.data.total();
        }
        self.adversaries
            .iter()
            .copied()
            .filter(|a| observed.get(a).copied().unwrap_or(0) >= min)
            .collect()
    }
}

pub fn finalize<'a>(
    meta: RunMeta,
    collector: &MetricsCollector,
    observers: impl IntoIterator<Item = (NodeId, &'a TrustState)>,
    adversaries: &BTreeSet<NodeId>,
) -> RunReport {
    let per_flow: Vec<FlowStats> = collector.flows().cloned().collect();
    let mut drops = DropCounts::default();
    let (mut sent, mut delivered, mut bytes, mut delay_sum) = (0u64, 0u64, 0u64, 0.0f64);
    for f in &per_flow {
        sent += f.sent;
        delivered += f.delivered;
        bytes += f.delivered_bytes;
        delay_sum += f.delay_sum;
        drops.merge(&f.drops);
    }
    let pdr = if sent == 0 {
        0.0
    } else {
        100.0 * delivered as f64 / sent as f64
    };
    let mean_delay = (delivered > 0).then(|| delay_sum / delivered as f64);
    let throughput = 8.0 * bytes as f64 / meta.duration;

    let mut blacklisted = BTreeSet::new();
    let mut final_trust = Vec::new();
    let mut watches = WatchTotals::default();
    for (observer, state) in observers {
        blacklisted.extend(state.blacklist().iter().copied());
        let w = state.watch_totals();
        watches.registered += w.registered;
        watches.successes += w.successes;
        watches.failures += w.failures;
        watches.live += w.live;
        for record in state.ledger().values() {
            final_trust.push(TrustSnapshot {
                observer,
                record: record.clone(),
                tl: crate::trust::trust_level(record, state.params()),
                blacklisted: state.blacklist().contains(&record.neighbor),
            });
        }
    }
    let true_positives = adversaries.intersection(&blacklisted).count() as u64;
    let detection = Detection {
        true_positives,
        false_positives: blacklisted.difference(adversaries).count() as u64,
        undetected_adversaries: adversaries.len() as u64 - true_positives,
    };

    RunReport {
        meta,
        pdr,
        mean_delay,
        throughput,
        sent,
        delivered,
        drops,
        per_flow,
        detection,
        adversaries: adversaries.iter().copied().collect(),
        blacklisted: blacklisted.into_iter().collect(),
        final_trust,
        watches,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("cannot compare runs with different {0}")]
    Mismatch(&'static str),
    #[error("expected {0} runs on each side, got {1}")]
    Count(usize, usize),
}

/// Change from run `a` to run `b` (positive PDR delta means `b` delivered more).
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub seed: u64,
    pub node_count: usize,
    pub pdr: (f64, f64),
    pub delay: (Option<f64>, Option<f64>),
    pub throughput: (f64, f64),
}

impl ComparisonRow {
    pub fn delta_pdr(&self) -> f64 {
        self.pdr.1 - self.pdr.0
    }

    pub fn delta_delay(&self) -> Option<f64> {
        Some(self.delay.1? - self.delay.0?)
    }

    pub fn delta_throughput(&self) -> f64 {
        self.throughput.1 - self.throughput.0
    }
}

pub fn compare(a: &RunReport, b: &RunReport) -> Result<ComparisonRow, CompareError> {
    let (ma, mb) = (&a.meta, &b.meta);
    if ma.seed != mb.seed {
        return Err(CompareError::Mismatch("seeds"));
    }
    if ma.node_count != mb.node_count {
        return Err(CompareError::Mismatch("node counts"));
    }
    if ma.duration != mb.duration {
        return Err(CompareError::Mismatch("durations"));
    }
    if ma.adversary_fraction != mb.adversary_fraction || a.adversaries != b.adversaries {
        return Err(CompareError::Mismatch("adversaries"));
    }
    Ok(ComparisonRow {
        seed: ma.seed,
        node_count: ma.node_count,
        pdr: (a.pdr, b.pdr),
        delay: (a.mean_delay, b.mean_delay),
        throughput: (a.throughput, b.throughput),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub mean_delta_pdr: f64,
    /// Mean over seeds where both sides delivered something.
    pub mean_delta_delay: Option<f64>,
    pub mean_delta_throughput: f64,
    /// Seeds where `b` had strictly higher PDR.
    pub pdr_wins: usize,
    /// Seeds where `b` had strictly lower delay.
    pub delay_wins: usize,
}

pub fn compare_runs(a: &[RunReport], b: &[RunReport]) -> Result<ComparisonTable, CompareError> {
    if a.len() != b.len() {
        return Err(CompareError::Count(a.len(), b.len()));
    }
    let rows = a
        .iter()
        .zip(b)
        .map(|(x, y)| compare(x, y))
        .collect::<Result<Vec<_>, _>>()?;
    let n = rows.len().max(1) as f64;
    let delays: Vec<f64> = rows.iter().filter_map(ComparisonRow::delta_delay).collect();
    Ok(ComparisonTable {
        mean_delta_pdr: rows.iter().map(ComparisonRow::delta_pdr).sum::<f64>() / n,
        mean_delta_delay: (!delays.is_empty())
            .then(|| delays.iter().sum::<f64>() / delays.len() as f64),
        mean_delta_throughput: rows
            .iter()
            .map(ComparisonRow::delta_throughput)
            .sum::<f64>()
            / n,
        pdr_wins: rows.iter().filter(|r| r.delta_pdr() > 0.0).count(),
        delay_wins: rows
            .iter()
            .filter(|r| r.delta_delay().is_some_and(|d| d < 0.0))
            .count(),
        rows,
    })
}

/// Reference figures (PDR %, delay s, throughput bit/s) for baseline AODV and
/// the trust-based variant, by node count, from an NS-2 study of the same
/// comparison. Shown next to sweep output for shape; never asserted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub node_count: usize,
    pub aodv: (f64, f64, f64),
    pub tbraodv: (f64, f64, f64),
}

pub const REFERENCE_RESULTS: [ReferenceRow; 5] = [
    ReferenceRow {
        node_count: 25,
        aodv: (82.98, 0.24615, 75771.43),
        tbraodv: (92.20, 0.22153, 75771.43),
    },
    ReferenceRow {
        node_count: 50,
        aodv: (70.05, 0.84972, 114559.89),
        tbraodv: (91.06, 0.64979, 114559.89),
    },
    ReferenceRow {
        node_count: 100,
        aodv: (64.43, 1.44347, 148339.67),
        tbraodv: (90.03, 0.92683, 148339.67),
    },
    ReferenceRow {
        node_count: 200,
        aodv: (62.36, 1.65589, 150748.56),
        tbraodv: (84.32, 0.93536, 150748.56),
    },
    ReferenceRow {
        node_count: 300,
        aodv: (60.65, 1.78687, 150836.74),
        tbraodv: (81.26, 0.94825, 150836.74),
    },
];
