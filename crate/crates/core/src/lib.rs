//! Deterministic MANET simulator comparing plain AODV routing with a
//! trust-based variant that detects and routes around data-dropping nodes.
//!
//! The crate is layered bottom-up:
//!
//! * [`trust`]: per-neighbor success/failure counters and the trust level.
//! * [`aodv`]: the routing state machine of a single node.
//! * [`tbraodv`]: watchdog observation and blacklisting on top of [`aodv`].
//! * [`sim`]: event queue, radio, mobility and the run loop.
//! * [`scenario`]: scenario files, traffic and adversaries.
//! * [`metrics`]: delivery ratio, delay, throughput and detection counts.

use std::fmt;

pub mod aodv;
pub mod metrics;
pub mod packet;
pub mod scenario;
pub mod sim;
pub mod tbraodv;
pub mod trust;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

pub use metrics::RunReport;
pub use scenario::{parse_config, serialize, Protocol, ScenarioConfig};
pub use sim::{run, RunOutcome, SimError, SimOptions, Simulation};
