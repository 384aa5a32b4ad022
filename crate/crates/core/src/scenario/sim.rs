//! Runs one cell: a master/slave pair over a fixed channel for a number of
//! back-to-back rounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::CampaignConfig;
use crate::node_sim::{AnalogDelayModel, ClockModel, Environment, Node, RfSettings, RssiModel};
use crate::ranging_protocol::{
    corrected_rtt, run_campaign, CampaignCommand, Channel, ProtocolConfig, ProtocolError, RoundTrip,
};

/// Independent seed for `stream` under the campaign seed.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.random()
}

/// Everything about the two boards that a cell needs.
#[derive(Debug, Clone)]
pub struct Bench {
    pub master_clock: ClockModel,
    pub slave_clock: ClockModel,
    pub delay: AnalogDelayModel,
    pub rssi: RssiModel,
    pub env: Environment,
    pub protocol: ProtocolConfig,
    pub corruption_probability: f64,
}

impl Default for Bench {
    fn default() -> Self {
        Self {
            master_clock: ClockModel::default(),
            slave_clock: ClockModel::default(),
            delay: AnalogDelayModel::default(),
            rssi: RssiModel::default(),
            env: Environment::default(),
            protocol: ProtocolConfig::default(),
            corruption_probability: 0.0,
        }
    }
}

impl Bench {
    pub fn from_config(cfg: &CampaignConfig) -> Self {
        Self {
            master_clock: cfg.model.master_clock,
            slave_clock: cfg.model.slave_clock,
            delay: cfg.delay_model(),
            rssi: cfg.model.rssi,
            env: cfg.model.environment,
            protocol: cfg.protocol,
            corruption_probability: cfg.model.corruption_probability,
        }
    }

    /// A master/slave pair whose random state derives from `seed`.
    pub fn pair(&self, seed: u64) -> (Node, Node) {
        let build = |mut n: Node, clock: ClockModel| {
            n.clock = clock;
            n.delay = self.delay.clone();
            n.rssi = self.rssi;
            n.env = self.env;
            n
        };
        (
            build(Node::master(stream_seed(seed, 1)), self.master_clock),
            build(Node::slave(stream_seed(seed, 2)), self.slave_clock),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellData {
    /// Corrected RTT of every round trip, cycles.
    pub corrected: Vec<i64>,
    /// Master-side RSSI, one vector per round.
    pub rssi_rounds: Vec<Vec<i8>>,
    /// Kept only when asked for.
    pub records: Vec<RoundTrip>,
    /// Simulated time, s.
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpec {
    pub settings: RfSettings,
    pub channel: Channel,
    pub rounds: usize,
    pub round_size: usize,
    /// Measurements in the last round when fewer than `round_size` are needed.
    pub last_round: Option<usize>,
    pub keep_records: bool,
}

impl CellSpec {
    pub fn new(settings: RfSettings, channel: Channel, rounds: usize, round_size: usize) -> Self {
        Self { settings, channel, rounds, round_size, last_round: None, keep_records: false }
    }

    /// `total` measurements in rounds of `round_size`.
    pub fn samples(settings: RfSettings, channel: Channel, total: usize, round_size: usize) -> Self {
        let rounds = total.div_ceil(round_size);
        let rest = total - (rounds.saturating_sub(1)) * round_size;
        Self { last_round: (rest != round_size).then_some(rest), ..Self::new(settings, channel, rounds, round_size) }
    }
}

pub fn simulate(bench: &Bench, spec: &CellSpec, seed: u64) -> Result<CellData, ProtocolError> {
    let (mut master, mut slave) = bench.pair(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 3));
    let channel = Channel { corruption_probability: bench.corruption_probability, ..spec.channel };
    let mut out = CellData::default();
    for round in 0..spec.rounds {
        let count = match spec.last_round {
            Some(n) if round + 1 == spec.rounds => n,
            _ => spec.round_size,
        };
        let cmd = CampaignCommand { count, settings: spec.settings };
        let camp = run_campaign(&cmd, &mut master, &mut slave, &channel, &bench.protocol, &mut rng)?;
        out.corrected.extend(camp.records.iter().map(corrected_rtt));
        out.rssi_rounds.push(camp.records.iter().map(|r| r.master_rssi).collect());
        out.duration += camp.duration;
        if spec.keep_records {
            out.records.extend(camp.records);
        }
    }
    Ok(out)
}
