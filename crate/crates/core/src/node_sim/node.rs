use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::clock::{CaptureCounter, ClockModel, Environment};
use super::delay::AnalogDelayModel;
use super::settings::RfSettings;
use super::NodeError;

/// Default sync word: the transceiver's 0xD391 pattern, doubled to 4 bytes.
pub const DEFAULT_SYNC_WORD: [u8; 4] = [0xD3, 0x91, 0xD3, 0x91];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Anchor: may initiate, times t0 -> t3.
    Master,
    /// Tag: answers, times t1 -> t2.
    Slave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncEvent {
    TxSync,
    RxSync,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Idle,
    /// Master after its request went out.
    AwaitingReply { sent: u32 },
    /// Slave after a request arrived.
    Replying { received: u32 },
}

/// One counter capture and, when it closes the node's timed interval, that interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capture {
    pub stamp: u32,
    pub interval: Option<u32>,
}

/// Behaviour of the RSSI register.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RssiModel {
    pub noise_sigma_db: f64,
    /// Readings after a reconfiguration that carry no information.
    pub warmup: usize,
    pub spike_probability: f64,
    pub spike_db: f64,
}

impl Default for RssiModel {
    fn default() -> Self {
        Self { noise_sigma_db: 0.7, warmup: 60, spike_probability: 0.002, spike_db: 20.0 }
    }
}

impl RssiModel {
    pub fn sample<R: Rng + ?Sized>(&self, rx_dbm: f64, index: usize, rng: &mut R) -> i8 {
        let value = if index < self.warmup {
            rx_dbm + rng.random_range(-30.0..30.0)
        } else if rng.random_bool(self.spike_probability.clamp(0.0, 1.0)) {
            let magnitude = rng.random_range(self.spike_db / 2.0..=self.spike_db);
            if rng.random_bool(0.5) {
                rx_dbm + magnitude
            } else {
                rx_dbm - magnitude
            }
        } else if self.noise_sigma_db > 0.0 {
            Normal::new(rx_dbm, self.noise_sigma_db).map(|n| n.sample(rng)).unwrap_or(rx_dbm)
        } else {
            rx_dbm
        };
        value.round().clamp(-128.0, 127.0) as i8
    }
}

/// A simulated transceiver. Master and slave run the same machine; the role
/// only decides who may initiate and which pair of captures forms the
/// interval the node reports.
#[derive(Debug, Clone)]
pub struct Node {
    pub role: Role,
    pub address: u16,
    pub clock: ClockModel,
    pub delay: AnalogDelayModel,
    pub rssi: RssiModel,
    pub env: Environment,
    pub settings: RfSettings,
    pub sync_word: [u8; 4],
    counter: CaptureCounter,
    /// True time up to which the counter has run.
    now: f64,
    state: State,
    rssi_index: usize,
    rng: ChaCha8Rng,
}

impl Node {
    pub fn new(role: Role, address: u16, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase = rng.random::<f64>();
        Self {
            role,
            address,
            clock: ClockModel::default(),
            delay: AnalogDelayModel::default(),
            rssi: RssiModel::default(),
            env: Environment::default(),
            settings: RfSettings::reference(),
            sync_word: DEFAULT_SYNC_WORD,
            counter: CaptureCounter::with_phase(phase),
            now: 0.0,
            state: State::Idle,
            rssi_index: 0,
            rng,
        }
    }

    pub fn master(seed: u64) -> Self {
        Self::new(Role::Master, 0x0001, seed)
    }

    pub fn slave(seed: u64) -> Self {
        Self::new(Role::Slave, 0x0002, seed)
    }

    pub fn with_counter_phase(mut self, phase: f64) -> Self {
        self.counter.phase = phase.rem_euclid(1.0);
        self
    }

    /// Presets the composed counter, e.g. to start just short of a wrap.
    pub fn with_counter_value(mut self, value: u32) -> Self {
        self.counter.low = (value & 0xFFFF) as u16;
        self.counter.high = (value >> 16) as u16;
        self
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn counter(&self) -> &CaptureCounter {
        &self.counter
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Applies new RF settings; the RSSI register starts its warm-up again.
    pub fn configure(&mut self, settings: RfSettings) {
        self.settings = settings;
        self.rssi_index = 0;
        self.state = State::Idle;
    }

    pub fn advance_to(&mut self, t: f64) -> Result<(), NodeError> {
        if t < self.now {
            return Err(NodeError::TimeReversal { now: self.now, requested: t });
        }
        self.counter.advance(&self.clock, t - self.now, &self.env)?;
        self.now = t;
        Ok(())
    }

    /// True time of the first counter edge at least `min_elapsed` after `from`.
    /// The counter is left sitting on that edge.
    pub fn edge_after(&mut self, from: f64, min_elapsed: f64) -> Result<f64, NodeError> {
        self.advance_to(from)?;
        let edges = self.counter.edges_after(&self.clock, min_elapsed, &self.env)?;
        let dt = self.counter.advance_to_edge(&self.clock, edges, &self.env)?;
        self.now += dt;
        Ok(self.now)
    }

    /// Maps a physical event to the instant the node's sync flag rises.
    ///
    /// For `TxSync`, `true_time` is when the node commits the sync word to the
    /// modem and the flag trails it by the transmit share of the base delay.
    /// For `RxSync`, `true_time` is the arrival of the sync word at the
    /// antenna and the flag trails it by one full draw of the hop delay.
    pub fn flag_timeline(
        &mut self,
        event: SyncEvent,
        true_time: f64,
        attenuation: f64,
    ) -> Result<f64, NodeError> {
        match event {
            SyncEvent::TxSync => Ok(true_time + self.delay.tx_lag(&self.settings)?),
            SyncEvent::RxSync => {
                let d = self.delay.sample(&self.settings, attenuation, &self.env, &mut self.rng)?;
                Ok(true_time + d)
            }
        }
    }

    pub fn begin_round(&mut self) {
        self.counter.begin_round();
        self.state = State::Idle;
    }

    pub fn abort_round(&mut self) {
        self.state = State::Idle;
    }

    /// TX sync flag at `flag_time`: latch the counter.
    pub fn on_tx_sync(&mut self, flag_time: f64) -> Result<Capture, NodeError> {
        let next = match (self.role, self.state) {
            (Role::Master, State::Idle) => None,
            (Role::Slave, State::Replying { received }) => Some(received),
            (role, _) => return Err(NodeError::WrongState { role, event: SyncEvent::TxSync }),
        };
        self.advance_to(flag_time)?;
        let stamp = self.counter.capture_on_sync()?;
        Ok(match next {
            None => {
                self.state = State::AwaitingReply { sent: stamp };
                Capture { stamp, interval: None }
            }
            Some(received) => {
                self.state = State::Idle;
                Capture { stamp, interval: Some(stamp.wrapping_sub(received)) }
            }
        })
    }

    /// RX sync flag at `flag_time`: latch the counter.
    pub fn on_rx_sync(&mut self, flag_time: f64) -> Result<Capture, NodeError> {
        let sent = match (self.role, self.state) {
            (Role::Slave, State::Idle) => None,
            (Role::Master, State::AwaitingReply { sent }) => Some(sent),
            (role, _) => return Err(NodeError::WrongState { role, event: SyncEvent::RxSync }),
        };
        self.advance_to(flag_time)?;
        let stamp = self.counter.capture_on_sync()?;
        Ok(match sent {
            None => {
                self.state = State::Replying { received: stamp };
                Capture { stamp, interval: None }
            }
            Some(sent) => {
                self.state = State::Idle;
                Capture { stamp, interval: Some(stamp.wrapping_sub(sent)) }
            }
        })
    }

    /// Reads the RSSI register for a packet arriving at `rx_dbm`.
    pub fn read_rssi(&mut self, rx_dbm: f64) -> i8 {
        let idx = self.rssi_index;
        self.rssi_index += 1;
        self.rssi.sample(rx_dbm, idx, &mut self.rng)
    }
}

/// Free-function form of [`Node::flag_timeline`].
pub fn flag_timeline(
    node: &mut Node,
    event: SyncEvent,
    true_time: f64,
    attenuation: f64,
) -> Result<f64, NodeError> {
    node.flag_timeline(event, true_time, attenuation)
}
