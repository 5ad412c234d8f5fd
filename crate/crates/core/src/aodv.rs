//! On-demand distance-vector routing state machine.
//!
//! This is a subset of RFC 3561: route discovery by RREQ flooding, RREP
//! replies along reverse paths, RERR on link breaks, and HELLO-based
//! neighbor liveness. There is no gratuitous RREP, no local repair and no
//! expanding-ring search; every RREQ goes out with a fixed TTL.
//!
//! All handlers are pure with respect to the radio: they mutate the node's
//! own state and push [`Action`]s for the simulator to carry out. Exclusion
//! of next hops is delegated to a [`NextHopPolicy`] so the trust layer can
//! reuse the exact same code path as plain AODV.

use std::collections::{BTreeMap, VecDeque};

use crate::metrics::DropReason;
use crate::packet::{
    DataPacket, FloodKey, Hello, LinkTarget, Message, ReplyId, RerrMsg, RrepMsg, RreqMsg,
};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct AodvConfig {
    pub hello_interval: f64,
    pub allowed_hello_loss: u32,
    pub active_route_timeout: f64,
    pub rreq_retry_timeout: f64,
    pub rreq_retries: u32,
    pub seen_rreq_lifetime: f64,
    pub net_diameter: u32,
    pub buffer_cap: usize,
    pub data_hop_limit: u32,
}

impl Default for AodvConfig {
    fn default() -> Self {
        AodvConfig {
            hello_interval: 1.0,
            allowed_hello_loss: 2,
            active_route_timeout: 10.0,
            rreq_retry_timeout: 1.0,
            rreq_retries: 2,
            seen_rreq_lifetime: 5.0,
            net_diameter: 32,
            buffer_cap: 64,
            data_hop_limit: 32,
        }
    }
}

impl AodvConfig {
    fn neighbor_timeout(&self) -> f64 {
        self.allowed_hello_loss as f64 * self.hello_interval
    }

    fn my_route_timeout(&self) -> f64 {
        2.0 * self.active_route_timeout
    }
}

/// Decides which neighbors may serve as next hop.
pub trait NextHopPolicy {
    fn excludes(&self, neighbor: NodeId) -> bool;

    /// Relays this node refuses; appended to every RREQ it sends.
    fn avoid_list(&self) -> Vec<NodeId>;
}

/// Plain AODV: every neighbor is acceptable.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpenPolicy;

impl NextHopPolicy for OpenPolicy {
    fn excludes(&self, _neighbor: NodeId) -> bool {
        false
    }

    fn avoid_list(&self) -> Vec<NodeId> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteState {
    Active,
    Invalid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub dest: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub dest_seq: u64,
    pub seq_valid: bool,
    pub expiry: f64,
    pub state: RouteState,
}

impl RouteEntry {
    pub fn is_active(&self, now: f64) -> bool {
        self.state == RouteState::Active && self.expiry > now
    }
}

/// Side effects requested by a handler.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Send {
        target: LinkTarget,
        msg: Message,
    },
    Deliver(DataPacket),
    Drop {
        packet: DataPacket,
        reason: DropReason,
    },
    ScheduleRetry {
        dest: NodeId,
        rreq_id: u32,
        at: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RreqDisposition {
    /// Arrived from a relay this node or the flood refuses.
    Refused,
    Duplicate,
    Rebroadcast,
    Replied,
    TtlExpired,
    NoReversePath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrepDisposition {
    Discarded,
    Consumed,
    Forwarded,
    NoReverseRoute,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AodvCounters {
    pub rreq_originated: u64,
    pub rreq_forwarded: u64,
    pub rreq_duplicates: u64,
    pub rrep_generated: u64,
    pub rrep_forwarded: u64,
    pub rrep_no_reverse: u64,
    pub rerr_sent: u64,
    pub hello_sent: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Discovery {
    rreq_id: u32,
    retries: u32,
}

#[derive(Debug, Clone)]
pub struct NodeRoutingState {
    id: NodeId,
    cfg: AodvConfig,
    own_seq: u64,
    next_rreq_id: u32,
    next_reply: u32,
    routes: BTreeMap<NodeId, RouteEntry>,
    seen_rreqs: BTreeMap<FloodKey, f64>,
    pending: BTreeMap<NodeId, VecDeque<DataPacket>>,
    discoveries: BTreeMap<NodeId, Discovery>,
    neighbors: BTreeMap<NodeId, f64>,
    originated: BTreeMap<NodeId, f64>,
    changed: Vec<NodeId>,
    pub counters: AodvCounters,
}

impl NodeRoutingState {
    pub fn new(id: NodeId, cfg: AodvConfig) -> Self {
        NodeRoutingState {
            id,
            cfg,
            own_seq: 0,
            next_rreq_id: 0,
            next_reply: 0,
            routes: BTreeMap::new(),
            seen_rreqs: BTreeMap::new(),
            pending: BTreeMap::new(),
            discoveries: BTreeMap::new(),
            neighbors: BTreeMap::new(),
            originated: BTreeMap::new(),
            changed: Vec::new(),
            counters: AodvCounters::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn config(&self) -> &AodvConfig {
        &self.cfg
    }

    pub fn own_seq(&self) -> u64 {
        self.own_seq
    }

    pub fn route(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.routes.get(&dest)
    }

    pub fn routes(&self) -> impl Iterator<Item = &RouteEntry> {
        self.routes.values()
    }

    pub fn neighbors(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.neighbors.iter().map(|(&n, &t)| (n, t))
    }

    pub fn pending_len(&self, dest: NodeId) -> usize {
        self.pending.get(&dest).map_or(0, VecDeque::len)
    }

    pub fn pending_total(&self) -> usize {
        self.pending.values().map(VecDeque::len).sum()
    }

    pub fn pending_packets(&self) -> impl Iterator<Item = &DataPacket> {
        self.pending.values().flatten()
    }

    pub fn is_discovering(&self, dest: NodeId) -> bool {
        self.discoveries.contains_key(&dest)
    }

    /// Destinations whose route was installed or replaced since the last call.
    pub fn take_changed(&mut self) -> Vec<NodeId> {
        std::mem::take(&mut self.changed)
    }

    /// Whether this node originated data for `dest` within the active route timeout.
    pub fn has_recent_traffic(&self, dest: NodeId, now: f64) -> bool {
        self.originated
            .get(&dest)
            .is_some_and(|&t| now - t <= self.cfg.active_route_timeout)
            || self.pending_len(dest) > 0
    }

    /// Active route's next hop unless the policy excludes it.
    pub fn usable_next_hop(
        &self,
        dest: NodeId,
        now: f64,
        policy: &dyn NextHopPolicy,
    ) -> Option<NodeId> {
        self.routes
            .get(&dest)
            .filter(|e| e.is_active(now) && !policy.excludes(e.next_hop))
            .map(|e| e.next_hop)
    }

    /// Invalidates active routes whose lifetime ran out.
    pub fn expire_routes(&mut self, now: f64) {
        for e in self.routes.values_mut() {
            if e.state == RouteState::Active && e.expiry <= now {
                e.state = RouteState::Invalid;
                e.dest_seq += 1;
            }
        }
    }

    /// Records that a frame from `neighbor` was received.
    pub fn note_heard(&mut self, neighbor: NodeId, now: f64) {
        if neighbor != self.id {
            self.neighbors.insert(neighbor, now);
        }
    }

    /// Offers new routing information; returns whether the table changed.
    fn offer_route(
        &mut self,
        dest: NodeId,
        next_hop: NodeId,
        hop_count: u32,
        dest_seq: u64,
        until: f64,
        now: f64,
    ) -> bool {
        if dest == self.id {
            return false;
        }
        let accept = match self.routes.get_mut(&dest) {
            None => true,
            Some(e) => {
                let active = e.is_active(now);
                if active
                    && e.next_hop == next_hop
                    && e.dest_seq == dest_seq
                    && e.hop_count == hop_count
                {
                    e.expiry = e.expiry.max(until);
                    return false;
                }
                !e.seq_valid
                    || dest_seq > e.dest_seq
                    || (dest_seq == e.dest_seq && (!active || hop_count < e.hop_count))
            }
        };
        if accept {
            self.routes.insert(
                dest,
                RouteEntry {
                    dest,
                    next_hop,
                    hop_count,
                    dest_seq,
                    seq_valid: true,
                    expiry: until,
                    state: RouteState::Active,
                },
            );
            self.changed.push(dest);
        }
        accept
    }

    fn refresh(&mut self, dest: NodeId, now: f64) {
        let until = now + self.cfg.active_route_timeout;
        if let Some(e) = self.routes.get_mut(&dest) {
            if e.is_active(now) {
                e.expiry = e.expiry.max(until);
            }
        }
    }

    fn send_data(
        &mut self,
        mut packet: DataPacket,
        next_hop: NodeId,
        now: f64,
        out: &mut Vec<Action>,
    ) {
        if packet.hops_left == 0 {
            out.push(Action::Drop {
                packet,
                reason: DropReason::HopLimit,
            });
            return;
        }
        packet.hops_left -= 1;
        self.refresh(packet.dst, now);
        self.refresh(next_hop, now);
        out.push(Action::Send {
            target: LinkTarget::Unicast(next_hop),
            msg: Message::Data(packet),
        });
    }

    /// Entry point for data generated at this node.
    pub fn originate_data(
        &mut self,
        packet: DataPacket,
        now: f64,
        policy: &dyn NextHopPolicy,
        out: &mut Vec<Action>,
    ) {
        self.expire_routes(now);
        if packet.dst == self.id {
            out.push(Action::Deliver(packet));
            return;
        }
        self.originated.insert(packet.dst, now);
        match self.usable_next_hop(packet.dst, now, policy) {
            Some(hop) if !self.is_discovering(packet.dst) => self.send_data(packet, hop, now, out),
            _ => self.originate_discovery(packet, now, policy, out),
        }
    }

    /// Buffers `packet` and floods an RREQ for its destination unless a
    /// discovery is already running.
    pub fn originate_discovery(
        &mut self,
        packet: DataPacket,
        now: f64,
        policy: &dyn NextHopPolicy,
        out: &mut Vec<Action>,
    ) {
        let dest = packet.dst;
        let queue = self.pending.entry(dest).or_default();
        if queue.len() >= self.cfg.buffer_cap {
            if let Some(oldest) = queue.pop_front() {
                out.push(Action::Drop {
                    packet: oldest,
                    reason: DropReason::BufferOverflow,
                });
            }
        }
        queue.push_back(packet);
        self.start_discovery(dest, now, policy, out);
    }

    /// Floods a fresh RREQ for `dest` if no discovery is in progress.
    pub fn start_discovery(
        &mut self,
        dest: NodeId,
        now: f64,
        policy: &dyn NextHopPolicy,
        out: &mut Vec<Action>,
    ) {
        if self.discoveries.contains_key(&dest) {
            return;
        }
        let rreq_id = self.flood_rreq(dest, now, policy, out);
        self.discoveries.insert(
            dest,
            Discovery {
                rreq_id,
                retries: 0,
            },
        );
    }

    fn flood_rreq(
        &mut self,
        dest: NodeId,
        now: f64,
        policy: &dyn NextHopPolicy,
        out: &mut Vec<Action>,
    ) -> u32 {
        self.own_seq += 1;
        self.next_rreq_id += 1;
        let rreq_id = self.next_rreq_id;
        let flood = FloodKey {
            origin: self.id,
            rreq_id,
        };
        self.seen_rreqs
            .insert(flood, now + self.cfg.seen_rreq_lifetime);
        let dest_seq_known = self.routes.get(&dest).map(|e| e.dest_seq);
        let mut avoid = policy.avoid_list();
        avoid.sort();
        avoid.dedup();
        self.counters.rreq_originated += 1;
        out.push(Action::Send {
            target: LinkTarget::Broadcast,
            msg: Message::Rreq(RreqMsg {
                origin: self.id,
                origin_seq: self.own_seq,
                rreq_id,
                dest,
                dest_seq_known,
                hop_count: 0,
                ttl: self.cfg.net_diameter,
                avoid,
            }),
        });
        out.push(Action::ScheduleRetry {
            dest,
            rreq_id,
            at: now + self.cfg.rreq_retry_timeout,
        });
        rreq_id
    }

    fn flush_pending(
        &mut self,
        dest: NodeId,
        now: f64,
        policy: &dyn NextHopPolicy,
        out: &mut Vec<Action>,
    ) {
        let Some(hop) = self.usable_next_hop(dest, now, policy) else {
            return;
        };
        self.discoveries.remove(&dest);
        if let Some(queue) = self.pending.remove(&dest) {
            for packet in queue {
                self.send_data(packet, hop, now, out);
            }
        }
    }

    /// Retry timer for the discovery identified by `rreq_id`; stale timers
    /// are ignored.
    pub fn on_retry_timer(
        &mut self,
        dest: NodeId,
        rreq_id: u32,
        now: f64,
        policy: &dyn NextHopPolicy,
        out: &mut Vec<Action>,
    ) {
        self.expire_routes(now);
        let Some(disc) = self.discoveries.get(&dest).copied() else {
            return;
        };
        if disc.rreq_id != rreq_id {
            return;
        }
        if self.usable_next_hop(dest, now, policy).is_some() {
            self.flush_pending(dest, now, policy, out);
            return;
        }
        if disc.retries < self.cfg.rreq_retries {
            let rreq_id = self.flood_rreq(dest, now, policy, out);
            self.discoveries.insert(
                dest,
                Discovery {
                    rreq_id,
                    retries: disc.retries + 1,
                },
            );
        } else {
            self.discoveries.remove(&dest);
            for packet in self.pending.remove(&dest).unwrap_or_default() {
                out.push(Action::Drop {
                    packet,
                    reason: DropReason::NoRoute,
                });
            }
        }
    }

    pub fn handle_rreq(
        &mut self,
        rreq: &RreqMsg,
        sender: NodeId,
        now: f64,
        policy: &dyn NextHopPolicy,
        out: &mut Vec<Action>,
    ) -> RreqDisposition {
        self.expire_routes(now);
        if policy.excludes(sender) || rreq.avoid.contains(&sender) {
            return RreqDisposition::Refused;
        }
        let flood = rreq.flood();
        if rreq.origin == self.id || self.seen_rreqs.contains_key(&flood) {
            self.counters.rreq_duplicates += 1;
            return RreqDisposition::Duplicate;
        }
        self.seen_rreqs
            .insert(flood, now + self.cfg.seen_rreq_lifetime);

        let reverse_until = now + self.cfg.active_route_timeout;
        self.offer_route(
            rreq.origin,
            sender,
            rreq.hop_count + 1,
            rreq.origin_seq,
            reverse_until,
            now,
        );

        if rreq.dest == self.id {
            self.own_seq = self.own_seq.max(rreq.dest_seq_known.unwrap_or(0)) + 1;
            let reply = RrepMsg {
                origin: rreq.origin,
                dest: self.id,
                dest_seq: self.own_seq,
                hop_count: 0,
                lifetime: self.cfg.my_route_timeout(),
                flood,
                reply: self.new_reply_id(),
            };
            return self.send_reply(reply, now, policy, out);
        }

        let fresh_enough = self
            .routes
            .get(&rreq.dest)
            .filter(|e| {
                e.is_active(now)
                    && e.seq_valid
                    && e.next_hop != sender
                    && !policy.excludes(e.next_hop)
                    && rreq.dest_seq_known.is_none_or(|known| e.dest_seq >= known)
            })
            .map(|e| (e.dest_seq, e.hop_count, e.expiry));
        if let Some((dest_seq, hop_count, expiry)) = fresh_enough {
            let reply = RrepMsg {
                origin: rreq.origin,
                dest: rreq.dest,
                dest_seq,
                hop_count,
                lifetime: expiry - now,
                flood,
                reply: self.new_reply_id(),
            };
            return self.send_reply(reply, now, policy, out);
        }

        if rreq.ttl <= 1 {
            return RreqDisposition::TtlExpired;
        }
        let mut avoid = rreq.avoid.clone();
        avoid.extend(policy.avoid_list());
        avoid.sort();
        avoid.dedup();
        let dest_seq_known = match (rreq.dest_seq_known, self.routes.get(&rreq.dest)) {
            (Some(k), Some(e)) => Some(k.max(e.dest_seq)),
            (None, Some(e)) => Some(e.dest_seq),
            (k, None) => k,
        };
        self.counters.rreq_forwarded += 1;
        out.push(Action::Send {
            target: LinkTarget::Broadcast,
            msg: Message::Rreq(RreqMsg {
                dest_seq_known,
                hop_count: rreq.hop_count + 1,
                ttl: rreq.ttl - 1,
                avoid,
                ..rreq.clone()
            }),
        });
        RreqDisposition::Rebroadcast
    }

    fn new_reply_id(&mut self) -> ReplyId {
        self.next_reply += 1;
        ReplyId {
            responder: self.id,
            counter: self.next_reply,
        }
    }

    fn send_reply(
        &mut self,
        reply: RrepMsg,
        now: f64,
        policy: &dyn NextHopPolicy,
        out: &mut Vec<Action>,
    ) -> RreqDisposition {
        match self.usable_next_hop(reply.origin, now, policy) {
            Some(hop) => {
                self.counters.rrep_generated += 1;
                out.push(Action::Send {
                    target: LinkTarget::Unicast(hop),
                    msg: Message::Rrep(reply),
                });
                RreqDisposition::Replied
            }
            None => RreqDisposition::NoReversePath,
        }
    }

    pub fn handle_rrep(
        &mut self,
        rrep: &RrepMsg,
        sender: NodeId,
        now: f64,
        policy: &dyn NextHopPolicy,
        out: &mut Vec<Action>,
    ) -> RrepDisposition {
        self.expire_routes(now);
        if policy.excludes(sender) || rrep.dest == self.id {
            return RrepDisposition::Discarded;
        }
        self.offer_route(
            rrep.dest,
            sender,
            rrep.hop_count + 1,
            rrep.dest_seq,
            now + rrep.lifetime,
            now,
        );
        if rrep.origin == self.id {
            self.flush_pending(rrep.dest, now, policy, out);
            return RrepDisposition::Consumed;
        }
        match self.usable_next_hop(rrep.origin, now, policy) {
            Some(hop) => {
                self.refresh(rrep.origin, now);
                self.counters.rrep_forwarded += 1;
                out.push(Action::Send {
                    target: LinkTarget::Unicast(hop),
                    msg: Message::Rrep(RrepMsg {
                        hop_count: rrep.hop_count + 1,
                        ..rrep.clone()
                    }),
                });
                RrepDisposition::Forwarded
            }
            None => {
                self.counters.rrep_no_reverse += 1;
                RrepDisposition::NoReverseRoute
            }
        }
    }

    /// Data received over the radio from `sender`.
    pub fn handle_data(
        &mut self,
        packet: DataPacket,
        now: f64,
        policy: &dyn NextHopPolicy,
        out: &mut Vec<Action>,
    ) {
        self.expire_routes(now);
        self.forward_data(packet, now, policy, out);
    }

    /// Delivers locally, forwards over an active route, starts a discovery
    /// at the originator, or reports the destination unreachable.
    pub fn forward_data(
        &mut self,
        packet: DataPacket,
        now: f64,
        policy: &dyn NextHopPolicy,
        out: &mut Vec<Action>,
    ) {
        if packet.dst == self.id {
            out.push(Action::Deliver(packet));
            return;
        }
        if let Some(hop) = self.usable_next_hop(packet.dst, now, policy) {
            self.send_data(packet, hop, now, out);
            return;
        }
        if packet.src == self.id {
            self.originate_discovery(packet, now, policy, out);
            return;
        }
        let seq = self.routes.get(&packet.dst).map_or(0, |e| e.dest_seq);
        self.counters.rerr_sent += 1;
        out.push(Action::Send {
            target: LinkTarget::Broadcast,
            msg: Message::Rerr(RerrMsg {
                unreachable: vec![(packet.dst, seq)],
            }),
        });
        out.push(Action::Drop {
            packet,
            reason: DropReason::NoRoute,
        });
    }

    pub fn handle_rerr(&mut self, rerr: &RerrMsg, sender: NodeId, now: f64, out: &mut Vec<Action>) {
        self.expire_routes(now);
        let mut lost = Vec::new();
        for &(dest, seq) in &rerr.unreachable {
            if let Some(e) = self.routes.get_mut(&dest) {
                if e.is_active(now) && e.next_hop == sender {
                    e.state = RouteState::Invalid;
                    e.dest_seq = (e.dest_seq + 1).max(seq);
                    lost.push((dest, e.dest_seq));
                }
            }
        }
        self.emit_rerr(lost, out);
    }

    pub fn handle_hello(
        &mut self,
        hello: &Hello,
        sender: NodeId,
        now: f64,
        policy: &dyn NextHopPolicy,
    ) {
        self.expire_routes(now);
        if sender == self.id || policy.excludes(sender) {
            return;
        }
        let until = now + self.cfg.neighbor_timeout();
        let seq = self
            .routes
            .get(&sender)
            .map_or(hello.seq, |e| e.dest_seq.max(hello.seq));
        match self.routes.get_mut(&sender) {
            Some(e) if e.is_active(now) && e.next_hop == sender && e.hop_count == 1 => {
                e.dest_seq = seq;
                e.expiry = e.expiry.max(until);
            }
            _ => {
                self.routes.insert(
                    sender,
                    RouteEntry {
                        dest: sender,
                        next_hop: sender,
                        hop_count: 1,
                        dest_seq: seq,
                        seq_valid: true,
                        expiry: until,
                        state: RouteState::Active,
                    },
                );
                self.changed.push(sender);
            }
        }
    }

    /// Periodic maintenance: route expiry, neighbor loss, cache purge and a
    /// HELLO beacon.
    pub fn tick_timers(&mut self, now: f64, out: &mut Vec<Action>) {
        self.expire_routes(now);
        let timeout = self.cfg.neighbor_timeout();
        let lost: Vec<NodeId> = self
            .neighbors
            .iter()
            .filter(|(_, &heard)| now - heard > timeout)
            .map(|(&n, _)| n)
            .collect();
        for n in lost {
            self.on_link_break(n, now, out);
        }
        self.seen_rreqs.retain(|_, &mut until| until > now);
        self.counters.hello_sent += 1;
        out.push(Action::Send {
            target: LinkTarget::Broadcast,
            msg: Message::Hello(Hello { seq: self.own_seq }),
        });
    }

    /// Drops `neighbor` and invalidates every route through it.
    pub fn on_link_break(&mut self, neighbor: NodeId, now: f64, out: &mut Vec<Action>) {
        self.neighbors.remove(&neighbor);
        let lost = self.invalidate_via(neighbor, now);
        self.emit_rerr(lost, out);
    }

    /// Invalidates active routes whose next hop is `neighbor`, bumping their
    /// sequence numbers. Returns the affected `(dest, seq)` pairs.
    pub fn invalidate_via(&mut self, neighbor: NodeId, now: f64) -> Vec<(NodeId, u64)> {
        let mut lost = Vec::new();
        for e in self.routes.values_mut() {
            if e.is_active(now) && e.next_hop == neighbor {
                e.state = RouteState::Invalid;
                e.dest_seq += 1;
                lost.push((e.dest, e.dest_seq));
            }
        }
        lost
    }

    pub fn emit_rerr(&mut self, unreachable: Vec<(NodeId, u64)>, out: &mut Vec<Action>) {
        if unreachable.is_empty() {
            return;
        }
        self.counters.rerr_sent += 1;
        out.push(Action::Send {
            target: LinkTarget::Broadcast,
            msg: Message::Rerr(RerrMsg { unreachable }),
        });
    }
}
