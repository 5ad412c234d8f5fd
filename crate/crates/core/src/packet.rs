//! Messages carried over the simulated radio.

use std::fmt;

use crate::NodeId;

/// Identifies one route-discovery flood: `(origin, rreq_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FloodKey {
    pub origin: NodeId,
    pub rreq_id: u32,
}

/// Identifies one generated route reply: `(responder, per-responder counter)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReplyId {
    pub responder: NodeId,
    pub counter: u32,
}

/// Identifies one CBR data packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DataKey {
    pub flow: u32,
    pub seq: u64,
}

impl fmt::Display for DataKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "data:{}:{}", self.flow, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hello {
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RreqMsg {
    pub origin: NodeId,
    pub origin_seq: u64,
    pub rreq_id: u32,
    pub dest: NodeId,
    pub dest_seq_known: Option<u64>,
    pub hop_count: u32,
    pub ttl: u32,
    /// Relays named here are not accepted as previous hop of this flood.
    /// Always empty under plain AODV.
    pub avoid: Vec<NodeId>,
}

impl RreqMsg {
    pub fn flood(&self) -> FloodKey {
        FloodKey {
            origin: self.origin,
            rreq_id: self.rreq_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrepMsg {
    /// Originator of the discovery this reply answers.
    pub origin: NodeId,
    pub dest: NodeId,
    pub dest_seq: u64,
    pub hop_count: u32,
    /// Seconds the advertised route stays valid.
    pub lifetime: f64,
    pub flood: FloodKey,
    pub reply: ReplyId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerrMsg {
    pub unreachable: Vec<(NodeId, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub key: DataKey,
    pub src: NodeId,
    pub dst: NodeId,
    pub size_bytes: u32,
    pub sent_at: f64,
    pub hops_left: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(Hello),
    Rreq(RreqMsg),
    Rrep(RrepMsg),
    Rerr(RerrMsg),
    Data(DataPacket),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello(_) => "hello",
            Message::Rreq(_) => "rreq",
            Message::Rrep(_) => "rrep",
            Message::Rerr(_) => "rerr",
            Message::Data(_) => "data",
        }
    }

    pub fn is_control(&self) -> bool {
        !matches!(self, Message::Data(_))
    }
}

/// Short stable key used in event traces.
impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Hello(h) => write!(f, "hello:{}", h.seq),
            Message::Rreq(r) => write!(
                f,
                "rreq:{}:{}:{}:h{}",
                r.origin, r.rreq_id, r.dest, r.hop_count
            ),
            Message::Rrep(r) => write!(
                f,
                "rrep:{}:{}:{}:s{}:h{}",
                r.origin, r.dest, r.reply.responder, r.dest_seq, r.hop_count
            ),
            Message::Rerr(r) => {
                f.write_str("rerr")?;
                for (d, s) in &r.unreachable {
                    write!(f, ":{d}/{s}")?;
                }
                Ok(())
            }
            Message::Data(d) => write!(f, "{}", d.key),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkTarget {
    Broadcast,
    Unicast(NodeId),
}

/// A single radio transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub sender: NodeId,
    pub target: LinkTarget,
    pub msg: Message,
}

impl Frame {
    pub fn is_addressed_to(&self, node: NodeId) -> bool {
        match self.target {
            LinkTarget::Broadcast => true,
            LinkTarget::Unicast(t) => t == node,
        }
    }
}
