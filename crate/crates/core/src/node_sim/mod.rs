//! One simulated transceiver: counter clock, capture counter, analog-domain
//! delay and RSSI register.

mod clock;
mod delay;
mod node;
mod settings;

use thiserror::Error;

pub use clock::{
    advance_clock, capture_on_sync, CaptureCounter, ClockModel, Environment, CAPTURES_PER_ROUND,
    CRYSTAL_PPM, NOMINAL_HZ,
};
pub use delay::{
    analog_delay_sample, AnalogDelayModel, ExpCurve, GFSK_DELAY_FACTOR, GFSK_NOISE_FACTOR,
    MAX_ATTENUATION_DB, MIN_ATTENUATION_DB,
};
pub use node::{flag_timeline, Capture, Node, Role, RssiModel, SyncEvent, DEFAULT_SYNC_WORD};
pub use settings::{DataRate, Frequency, Modulation, RfSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NodeError {
    #[error("packet lost: attenuation {attenuation} dB outside the operating window")]
    PacketLost { attenuation: f64 },
    #[error("more than four captures in one round")]
    TooManyCaptures,
    #[error("negative elapsed time {0} s")]
    NegativeElapsed(f64),
    #[error("clock frequency {0} Hz is not positive")]
    ClockStopped(f64),
    #[error("no delay table entry for {0}")]
    MissingTableEntry(RfSettings),
    #[error("invalid jitter sigma {0} s")]
    BadNoise(f64),
    #[error("{role:?} cannot handle {event:?} in its current state")]
    WrongState { role: Role, event: SyncEvent },
    #[error("time reversal: node at {now} s, asked for {requested} s")]
    TimeReversal { now: f64, requested: f64 },
}
