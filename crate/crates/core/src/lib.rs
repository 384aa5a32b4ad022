//! Two-way RTT ranging between low-cost sub-GHz transceivers: channel and node
//! simulation, the round-trip protocol, statistics and position estimation.

pub mod estimation;
pub mod localization;
pub mod node_sim;
pub mod ranging_protocol;
pub mod rf_channel;
pub mod scenario;
