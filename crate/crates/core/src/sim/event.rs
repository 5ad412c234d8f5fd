use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use thiserror::Error;

use crate::packet::Frame;
use crate::tbraodv::WatchdogEntry;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    Hello,
    RreqRetry { dest: NodeId, rreq_id: u32 },
}

#[derive(Debug, Clone)]
pub enum EventKind {
    Deliver {
        frame: Rc<Frame>,
        to: NodeId,
    },
    Timer {
        node: NodeId,
        timer: TimerKind,
    },
    MobilityStep,
    WatchTimeout {
        observer: NodeId,
        entry: WatchdogEntry,
    },
    TrafficSend {
        flow: u32,
        seq: u64,
    },
    EndOfRun,
}

#[derive(Debug, Clone)]
pub struct Event {
    pub time: f64,
    pub tie_seq: u64,
    pub kind: EventKind,
}

// BinaryHeap is a max-heap; invert so the earliest (time, tie_seq) is on top.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.tie_seq.cmp(&self.tie_seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("event scheduled at t={at} but the clock is already at t={now}")]
pub struct PastEvent {
    pub at: f64,
    pub now: f64,
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
    now: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind) -> Result<u64, PastEvent> {
        // also rejects NaN
        if time.is_nan() || time < self.now {
            return Err(PastEvent {
                at: time,
                now: self.now,
            });
        }
        let tie_seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event {
            time,
            tie_seq,
            kind,
        });
        Ok(tie_seq)
    }

    /// Same as [`schedule`](Self::schedule) with an explicit tie sequence.
    /// Used to test ordering; sequence numbers must stay unique.
    pub fn schedule_with_seq(
        &mut self,
        time: f64,
        tie_seq: u64,
        kind: EventKind,
    ) -> Result<(), PastEvent> {
        // also rejects NaN
        if time.is_nan() || time < self.now {
            return Err(PastEvent {
                at: time,
                now: self.now,
            });
        }
        self.next_seq = self.next_seq.max(tie_seq + 1);
        self.heap.push(Event {
            time,
            tie_seq,
            kind,
        });
        Ok(())
    }

    /// Removes the earliest event and advances the clock to it. `None` means
    /// the run is over.
    pub fn pop(&mut self) -> Option<Event> {
        let ev = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }
}
