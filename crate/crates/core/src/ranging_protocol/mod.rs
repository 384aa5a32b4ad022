//! Master/slave round-trip protocol.
//!
//! The master latches t0 on its request's TX sync flag and t3 on the reply's
//! RX sync flag. The slave latches t1 and t2 the same way and piggy-backs
//! `t2 - t1` in its reply, so the master can remove the slave turnaround.

mod packet;
mod session;

use thiserror::Error;

pub use packet::{
    crc16_ccitt_false, decode_packet, encode_packet, FrameError, RangingPacket, HEADER_LEN,
    PACKET_LEN, PREAMBLE,
};
pub use session::{
    corrected_rtt, run_campaign, run_round_trip, Campaign, CampaignCommand, Channel,
    ProtocolConfig, RoundTrip,
};

use crate::node_sim::NodeError;
use crate::rf_channel::ChannelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("round trip lost {attempts} times in a row; last: {last}")]
    RetryLimit { attempts: u32, last: Box<ProtocolError> },
    #[error("reconfiguration handshake failed: {0}")]
    HandshakeFailed(Box<ProtocolError>),
    #[error("invalid campaign command: {0}")]
    InvalidCommand(&'static str),
    #[error("master and slave disagree on settings or sync word")]
    Mismatched,
    #[error("round trip ended without a complete interval")]
    Incomplete,
}
