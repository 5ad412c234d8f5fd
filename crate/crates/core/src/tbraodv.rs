//! Trust layer on top of AODV.
//!
//! Each node watches the neighbors it hands packets to. A watch is opened
//! when the link layer confirms that the neighbor received a packet it is
//! expected to relay, and closes with a success when the neighbor's relay is
//! overheard before `watch_timeout` expires, or with a failure otherwise.
//! Outcomes feed the per-neighbor counters in [`crate::trust`]; neighbors
//! classified as misbehaving are blacklisted for the rest of the run.
//!
//! Blacklisted neighbors are never used as next hop, their route replies are
//! discarded, and the node names them in the avoid list of every RREQ it
//! sends so that their relays of that flood are refused downstream.

use std::collections::{BTreeMap, BTreeSet};

use crate::aodv::{Action, NextHopPolicy, NodeRoutingState};
use crate::metrics::WatchTotals;
use crate::packet::{DataKey, FloodKey, Message, ReplyId};
use crate::trust::{classify, NeighborTrustRecord, Outcome, Phase, TrustParams};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketKey {
    Flood(FloodKey),
    Reply(ReplyId),
    Data(DataKey),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WatchKey {
    pub neighbor: NodeId,
    pub phase: Phase,
    pub packet: PacketKey,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WatchdogEntry {
    pub key: WatchKey,
    pub deadline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Registration {
    /// A timeout must be scheduled at the entry's deadline.
    Scheduled(WatchdogEntry),
    /// The relay had already been overheard; success recorded on the spot.
    AlreadyRelayed,
    Duplicate,
}

#[derive(Debug, Clone, Copy)]
struct LiveWatch {
    deadline: f64,
    data_dest: Option<NodeId>,
}

/// Observer-side trust state of one node.
#[derive(Debug, Clone)]
pub struct TrustState {
    owner: NodeId,
    params: TrustParams,
    watch_timeout: f64,
    ledger: BTreeMap<NodeId, NeighborTrustRecord>,
    blacklist: BTreeSet<NodeId>,
    watches: BTreeMap<WatchKey, LiveWatch>,
    // flood relays already overheard, with the time they were heard
    relayed: BTreeMap<(NodeId, FloodKey), f64>,
    registered: u64,
    successes: u64,
    failures: u64,
}

impl TrustState {
    pub fn new(owner: NodeId, params: TrustParams, watch_timeout: f64) -> Self {
        TrustState {
            owner,
            params,
            watch_timeout,
            ledger: BTreeMap::new(),
            blacklist: BTreeSet::new(),
            watches: BTreeMap::new(),
            relayed: BTreeMap::new(),
            registered: 0,
            successes: 0,
            failures: 0,
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn params(&self) -> &TrustParams {
        &self.params
    }

    pub fn ledger(&self) -> &BTreeMap<NodeId, NeighborTrustRecord> {
        &self.ledger
    }

    pub fn blacklist(&self) -> &BTreeSet<NodeId> {
        &self.blacklist
    }

    pub fn is_blacklisted(&self, n: NodeId) -> bool {
        self.blacklist.contains(&n)
    }

    pub fn live_watches(&self) -> usize {
        self.watches.len()
    }

    pub fn watch_totals(&self) -> WatchTotals {
        WatchTotals {
            registered: self.registered,
            successes: self.successes,
            failures: self.failures,
            live: self.watches.len() as u64,
        }
    }

    /// Opens a watch on `neighbor` for `packet`; the first registration for
    /// a key wins.
    pub fn register_watch(
        &mut self,
        neighbor: NodeId,
        phase: Phase,
        packet: PacketKey,
        data_dest: Option<NodeId>,
        now: f64,
    ) -> (Registration, Option<NodeId>) {
        let key = WatchKey {
            neighbor,
            phase,
            packet,
        };
        if self.watches.contains_key(&key) {
            return (Registration::Duplicate, None);
        }
        self.registered += 1;
        if let PacketKey::Flood(f) = packet {
            if self.relayed.contains_key(&(neighbor, f)) {
                let flagged = self.record(neighbor, phase, Outcome::Success);
                return (Registration::AlreadyRelayed, flagged);
            }
        }
        let deadline = now + self.watch_timeout;
        self.watches.insert(
            key,
            LiveWatch {
                deadline,
                data_dest,
            },
        );
        (
            Registration::Scheduled(WatchdogEntry { key, deadline }),
            None,
        )
    }

    /// Terminal hop: the neighbor is the packet's final recipient, so the
    /// link-level acknowledgment itself counts as success.
    pub fn record_terminal(&mut self, neighbor: NodeId, phase: Phase) -> Option<NodeId> {
        self.registered += 1;
        self.record(neighbor, phase, Outcome::Success)
    }

    /// Link layer confirmed that `receiver` got `msg` from this node. Opens
    /// the watches that transmission calls for.
    pub fn on_link_delivered(
        &mut self,
        receiver: NodeId,
        msg: &Message,
        now: f64,
    ) -> (Vec<WatchdogEntry>, Vec<NodeId>) {
        let mut scheduled = Vec::new();
        let mut flagged = Vec::new();
        let mut push = |(reg, flag): (Registration, Option<NodeId>)| {
            if let Registration::Scheduled(e) = reg {
                scheduled.push(e);
            }
            flagged.extend(flag);
        };
        match msg {
            Message::Rreq(r) => {
                // Our own relay will be refused downstream; nothing to expect.
                if receiver == r.origin || r.avoid.contains(&self.owner) {
                } else if receiver == r.dest {
                    flagged.extend(self.record_terminal(receiver, Phase::Rreq));
                } else {
                    push(self.register_watch(
                        receiver,
                        Phase::Rreq,
                        PacketKey::Flood(r.flood()),
                        None,
                        now,
                    ));
                }
            }
            Message::Rrep(r) => {
                if receiver == r.origin {
                    flagged.extend(self.record_terminal(receiver, Phase::Rrep));
                } else {
                    push(self.register_watch(
                        receiver,
                        Phase::Rrep,
                        PacketKey::Reply(r.reply),
                        None,
                        now,
                    ));
                }
            }
            Message::Data(d) => {
                if receiver == d.dst {
                    flagged.extend(self.record_terminal(receiver, Phase::Data));
                } else {
                    push(self.register_watch(
                        receiver,
                        Phase::Data,
                        PacketKey::Data(d.key),
                        Some(d.dst),
                        now,
                    ));
                }
            }
            Message::Hello(_) | Message::Rerr(_) => {}
        }
        (scheduled, flagged)
    }

    /// Promiscuous observation of a transmission by `transmitter`. Resolves
    /// matching watches as successes; returns newly blacklisted neighbors.
    pub fn on_overhear(&mut self, transmitter: NodeId, msg: &Message, now: f64) -> Vec<NodeId> {
        if transmitter == self.owner {
            return Vec::new();
        }
        let mut keys = Vec::new();
        match msg {
            Message::Rreq(r) => {
                self.relayed.insert((transmitter, r.flood()), now);
                keys.push((Phase::Rreq, PacketKey::Flood(r.flood())));
            }
            Message::Rrep(r) => {
                // Answering a flood from cache also handles the request.
                self.relayed.insert((transmitter, r.flood), now);
                keys.push((Phase::Rreq, PacketKey::Flood(r.flood)));
                keys.push((Phase::Rrep, PacketKey::Reply(r.reply)));
            }
            Message::Data(d) => keys.push((Phase::Data, PacketKey::Data(d.key))),
            Message::Rerr(e) => {
                // A route error for the destination is a protocol-conformant
                // answer to a packet the neighbor could not route.
                let lo = WatchKey {
                    neighbor: transmitter,
                    phase: Phase::Data,
                    packet: PacketKey::Data(DataKey { flow: 0, seq: 0 }),
                };
                for (k, w) in self.watches.range(lo..) {
                    if k.neighbor != transmitter || k.phase != Phase::Data {
                        break;
                    }
                    if w.data_dest
                        .is_some_and(|d| e.unreachable.iter().any(|(u, _)| *u == d))
                    {
                        keys.push((k.phase, k.packet));
                    }
                }
            }
            Message::Hello(_) => {}
        }
        let mut flagged = Vec::new();
        for (phase, packet) in keys {
            let key = WatchKey {
                neighbor: transmitter,
                phase,
                packet,
            };
            if self.watches.get(&key).is_some_and(|w| w.deadline >= now) {
                self.watches.remove(&key);
                flagged.extend(self.record(transmitter, phase, Outcome::Success));
            }
        }
        flagged
    }

    /// Deadline of `entry` reached. Records a failure if the watch is still
    /// open and returns the neighbor if it just became misbehaving.
    pub fn on_watch_timeout(&mut self, entry: &WatchdogEntry) -> Option<NodeId> {
        match self.watches.get(&entry.key) {
            Some(w) if w.deadline == entry.deadline => {
                self.watches.remove(&entry.key);
                self.record(entry.key.neighbor, entry.key.phase, Outcome::Failure)
            }
            _ => None,
        }
    }

    fn record(&mut self, neighbor: NodeId, phase: Phase, outcome: Outcome) -> Option<NodeId> {
        match outcome {
            Outcome::Success => self.successes += 1,
            Outcome::Failure => self.failures += 1,
        }
        let record = self
            .ledger
            .entry(neighbor)
            .or_insert_with(|| NeighborTrustRecord::new(neighbor));
        record.record_observation(phase, outcome);
        if classify(record, &self.params).is_misbehaving() && self.blacklist.insert(neighbor) {
            Some(neighbor)
        } else {
            None
        }
    }

    /// Drops overheard-relay memory older than `horizon` seconds.
    pub fn prune(&mut self, now: f64, horizon: f64) {
        self.relayed.retain(|_, &mut t| now - t <= horizon);
    }

    /// Next hop toward `dest`, or `None` if the route is missing, inactive or
    /// goes through a blacklisted neighbor.
    pub fn filter_next_hop(
        &self,
        routing: &NodeRoutingState,
        dest: NodeId,
        now: f64,
    ) -> Option<NodeId> {
        routing.usable_next_hop(dest, now, self)
    }

    /// Reaction to a neighbor becoming misbehaving: routes through it are
    /// invalidated and reported, and destinations this node is actively
    /// sending to are rediscovered. Returns the rediscovered destinations.
    pub fn on_misbehavior_detected(
        &self,
        routing: &mut NodeRoutingState,
        neighbor: NodeId,
        now: f64,
        out: &mut Vec<Action>,
    ) -> Vec<NodeId> {
        let lost = routing.invalidate_via(neighbor, now);
        let dests: Vec<NodeId> = lost.iter().map(|&(d, _)| d).collect();
        routing.emit_rerr(lost, out);
        let mut rediscovered = Vec::new();
        for dest in dests {
            if routing.has_recent_traffic(dest, now) {
                routing.start_discovery(dest, now, self, out);
                rediscovered.push(dest);
            }
        }
        rediscovered
    }
}

impl NextHopPolicy for TrustState {
    fn excludes(&self, neighbor: NodeId) -> bool {
        self.blacklist.contains(&neighbor)
    }

    fn avoid_list(&self) -> Vec<NodeId> {
        self.blacklist.iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aodv::{AodvConfig, OpenPolicy};
    use crate::packet::{DataPacket, LinkTarget, RerrMsg, RrepMsg, RreqMsg};
    use crate::trust::PhaseCounters;

    const ME: NodeId = NodeId(0);
    const B: NodeId = NodeId(1);
    const C: NodeId = NodeId(2);
    const D: NodeId = NodeId(9);

    fn state() -> TrustState {
        TrustState::new(ME, TrustParams::default(), 0.5)
    }

    fn rreq(origin: NodeId, id: u32) -> RreqMsg {
        RreqMsg {
            origin,
            origin_seq: 1,
            rreq_id: id,
            dest: D,
            dest_seq_known: None,
            hop_count: 0,
            ttl: 32,
            avoid: vec![],
        }
    }

    fn data(seq: u64, dst: NodeId) -> DataPacket {
        DataPacket {
            key: DataKey { flow: 0, seq },
            src: ME,
            dst,
            size_bytes: 512,
            sent_at: 0.0,
            hops_left: 31,
        }
    }

    #[test]
    fn broadcast_opens_one_watch_per_receiver() {
        let mut t = state();
        let m = Message::Rreq(rreq(ME, 1));
        let mut n = 0;
        for r in [NodeId(1), NodeId(2), NodeId(3), NodeId(4)] {
            n += t.on_link_delivered(r, &m, 0.0).0.len();
        }
        assert_eq!(n, 4);
        assert_eq!(t.live_watches(), 4);
    }

    #[test]
    fn unicast_data_opens_single_watch_and_dedups() {
        let mut t = state();
        let m = Message::Data(data(17, D));
        let (w, _) = t.on_link_delivered(B, &m, 1.0);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].deadline, 1.5);
        let (w, _) = t.on_link_delivered(B, &m, 1.1);
        assert!(w.is_empty());
        assert_eq!(t.live_watches(), 1);
        assert_eq!(t.watch_totals().registered, 1);
    }

    #[test]
    fn overheard_relays_resolve_success() {
        let mut t = state();
        t.on_link_delivered(B, &Message::Rreq(rreq(ME, 1)), 0.0);
        t.on_overhear(B, &Message::Rreq(rreq(ME, 1)), 0.002);
        assert_eq!(t.ledger()[&B].rreq, PhaseCounters::new(1, 0));

        t.on_link_delivered(B, &Message::Data(data(17, D)), 1.0);
        t.on_overhear(B, &Message::Data(data(17, D)), 1.0);
        assert_eq!(t.ledger()[&B].data, PhaseCounters::new(1, 0));
        assert_eq!(t.live_watches(), 0);
    }

    #[test]
    fn unrelated_traffic_changes_nothing() {
        let mut t = state();
        t.on_link_delivered(B, &Message::Data(data(17, D)), 1.0);
        t.on_overhear(B, &Message::Data(data(18, D)), 1.0);
        t.on_overhear(C, &Message::Data(data(17, D)), 1.0);
        assert!(t.ledger().is_empty());
        assert_eq!(t.live_watches(), 1);
    }

    #[test]
    fn late_relay_does_not_count() {
        let mut t = state();
        let (w, _) = t.on_link_delivered(B, &Message::Data(data(1, D)), 1.0);
        t.on_overhear(B, &Message::Data(data(1, D)), 1.6);
        assert!(t.ledger().is_empty());
        t.on_watch_timeout(&w[0]);
        assert_eq!(t.ledger()[&B].data, PhaseCounters::new(0, 1));
    }

    #[test]
    fn terminal_hops_succeed_on_ack() {
        let mut t = state();
        let (w, _) = t.on_link_delivered(D, &Message::Data(data(1, D)), 0.0);
        assert!(w.is_empty());
        assert_eq!(t.ledger()[&D].data, PhaseCounters::new(1, 0));
        let (w, _) = t.on_link_delivered(D, &Message::Rreq(rreq(ME, 1)), 0.0);
        assert!(w.is_empty());
        assert_eq!(t.ledger()[&D].rreq, PhaseCounters::new(1, 0));
    }

    #[test]
    fn relay_heard_before_registration_counts() {
        let mut t = state();
        t.on_overhear(B, &Message::Rreq(rreq(C, 4)), 0.0);
        let (w, _) = t.on_link_delivered(B, &Message::Rreq(rreq(C, 4)), 0.004);
        assert!(w.is_empty());
        assert_eq!(t.ledger()[&B].rreq, PhaseCounters::new(1, 0));
    }

    #[test]
    fn route_error_answers_data_watch() {
        let mut t = state();
        t.on_link_delivered(B, &Message::Data(data(1, D)), 0.0);
        t.on_link_delivered(B, &Message::Data(data(2, C)), 0.0);
        t.on_overhear(
            B,
            &Message::Rerr(RerrMsg {
                unreachable: vec![(D, 3)],
            }),
            0.001,
        );
        assert_eq!(t.ledger()[&B].data, PhaseCounters::new(1, 0));
        assert_eq!(t.live_watches(), 1);
    }

    #[test]
    fn blackhole_flagged_after_ten_data_failures() {
        let mut t = state();
        let mut flagged = None;
        for i in 0..10 {
            t.on_link_delivered(B, &Message::Rreq(rreq(ME, i + 1)), i as f64);
            t.on_overhear(B, &Message::Rreq(rreq(ME, i + 1)), i as f64);
        }
        for i in 0..10 {
            t.register_watch(
                B,
                Phase::Rrep,
                PacketKey::Reply(ReplyId {
                    responder: D,
                    counter: i,
                }),
                None,
                0.0,
            );
            t.on_overhear(
                B,
                &Message::Rrep(RrepMsg {
                    origin: ME,
                    dest: D,
                    dest_seq: 1,
                    hop_count: 1,
                    lifetime: 20.0,
                    flood: FloodKey {
                        origin: ME,
                        rreq_id: 1,
                    },
                    reply: ReplyId {
                        responder: D,
                        counter: i,
                    },
                }),
                0.0,
            );
        }
        for seq in 0..10 {
            let (w, _) = t.on_link_delivered(B, &Message::Data(data(seq, D)), 20.0);
            flagged = flagged.or(t.on_watch_timeout(&w[0]));
        }
        let rec = &t.ledger()[&B];
        assert_eq!(
            (rec.rreq, rec.rrep, rec.data),
            (
                PhaseCounters::new(10, 0),
                PhaseCounters::new(10, 0),
                PhaseCounters::new(0, 10)
            )
        );
        assert_eq!(flagged, Some(B));
        assert!(t.is_blacklisted(B));
        assert!(t.excludes(B));
        assert_eq!(t.avoid_list(), vec![B]);
    }

    #[test]
    fn single_late_failure_keeps_honest_neighbor() {
        let mut t = state();
        for i in 0..10 {
            t.record(B, Phase::Rreq, Outcome::Success);
            t.record(B, Phase::Rrep, Outcome::Success);
            let _ = i;
        }
        for _ in 0..99 {
            t.record(B, Phase::Data, Outcome::Success);
        }
        let (w, _) = t.on_link_delivered(B, &Message::Data(data(5, D)), 0.0);
        assert_eq!(t.on_watch_timeout(&w[0]), None);
        assert!(!t.is_blacklisted(B));
    }

    #[test]
    fn cold_neighbor_stays_unclassified() {
        let mut t = state();
        let (w, _) = t.on_link_delivered(B, &Message::Data(data(5, D)), 0.0);
        assert_eq!(t.on_watch_timeout(&w[0]), None);
        assert_eq!(t.ledger()[&B].data.failure, 1);
        assert!(!t.is_blacklisted(B));
    }

    #[test]
    fn watches_resolve_exactly_once() {
        let mut t = state();
        let (w, _) = t.on_link_delivered(B, &Message::Data(data(5, D)), 0.0);
        t.on_overhear(B, &Message::Data(data(5, D)), 0.1);
        assert_eq!(t.on_watch_timeout(&w[0]), None);
        let tot = t.watch_totals();
        assert_eq!(tot.registered, tot.successes + tot.failures + tot.live);
        assert_eq!((tot.successes, tot.failures), (1, 0));
    }

    fn route_via(routing: &mut NodeRoutingState, dest: NodeId, hop: NodeId) {
        let mut out = Vec::new();
        routing.handle_rrep(
            &RrepMsg {
                origin: routing.id(),
                dest,
                dest_seq: 1,
                hop_count: 0,
                lifetime: 20.0,
                flood: FloodKey {
                    origin: routing.id(),
                    rreq_id: 1,
                },
                reply: ReplyId {
                    responder: dest,
                    counter: 1,
                },
            },
            hop,
            0.0,
            &OpenPolicy,
            &mut out,
        );
    }

    fn blacklist(t: &mut TrustState, n: NodeId) {
        for _ in 0..10 {
            t.record(n, Phase::Data, Outcome::Failure);
        }
        assert!(t.is_blacklisted(n));
    }

    #[test]
    fn filter_next_hop_cases() {
        let mut routing = NodeRoutingState::new(ME, AodvConfig::default());
        let mut t = state();
        route_via(&mut routing, D, C);
        route_via(&mut routing, NodeId(7), B);
        blacklist(&mut t, B);
        assert_eq!(t.filter_next_hop(&routing, D, 1.0), Some(C));
        assert_eq!(t.filter_next_hop(&routing, NodeId(7), 1.0), None);
        assert_eq!(t.filter_next_hop(&routing, NodeId(8), 1.0), None);
    }

    #[test]
    fn detection_invalidates_and_rediscovers_active_destinations() {
        let mut routing = NodeRoutingState::new(ME, AodvConfig::default());
        let mut t = state();
        route_via(&mut routing, D, B);
        route_via(&mut routing, C, B);
        let mut out = Vec::new();
        routing.originate_data(data(0, D), 0.5, &t, &mut out);
        routing.originate_data(data(1, C), 0.5, &t, &mut out);
        blacklist(&mut t, B);
        out.clear();
        let re = t.on_misbehavior_detected(&mut routing, B, 1.0, &mut out);
        assert_eq!(re, vec![C, D]);
        let floods: Vec<_> = out
            .iter()
            .filter_map(|a| match a {
                Action::Send {
                    target: LinkTarget::Broadcast,
                    msg: Message::Rreq(r),
                } => Some((r.dest, r.avoid.clone())),
                _ => None,
            })
            .collect();
        assert_eq!(floods, vec![(C, vec![B]), (D, vec![B])]);
        assert!(out.iter().any(|a| matches!(
            a,
            Action::Send {
                msg: Message::Rerr(_),
                ..
            }
        )));
    }

    #[test]
    fn detection_without_routes_only_blacklists() {
        let mut routing = NodeRoutingState::new(ME, AodvConfig::default());
        let mut t = state();
        blacklist(&mut t, B);
        let mut out = Vec::new();
        assert!(t
            .on_misbehavior_detected(&mut routing, B, 1.0, &mut out)
            .is_empty());
        assert!(out.is_empty());
    }

    #[test]
    fn own_avoided_relay_is_not_watched() {
        let mut t = state();
        let mut r = rreq(C, 1);
        r.avoid = vec![ME];
        let (w, _) = t.on_link_delivered(B, &Message::Rreq(r), 0.0);
        assert!(w.is_empty());
        assert_eq!(t.watch_totals().registered, 0);
    }
}
