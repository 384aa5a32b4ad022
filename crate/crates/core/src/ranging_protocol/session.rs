//! Round trips and campaigns between one master and one slave.

use rand::Rng;

use super::packet::{FrameError, RangingPacket, HEADER_LEN, PACKET_LEN};
use super::ProtocolError;
use crate::node_sim::{Node, NodeError, RfSettings, SyncEvent};
use crate::rf_channel::{link_attenuation, propagation_delay, LinkBudget, Medium};

/// The path between the two nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub medium: Medium,
    /// m
    pub distance: f64,
    /// Attenuator array, dB.
    pub fixed_attenuation: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    /// Probability that a frame arrives with a flipped bit.
    pub corruption_probability: f64,
}

impl Channel {
    pub fn cable(distance: f64, fixed_attenuation: f64) -> Self {
        Self {
            medium: Medium::coax(),
            distance,
            fixed_attenuation,
            tx_gain: 0.0,
            rx_gain: 0.0,
            corruption_probability: 0.0,
        }
    }

    /// Cable of `distance` with the attenuator set so the whole path loses `total_db`.
    pub fn cable_at(distance: f64, total_db: f64) -> Self {
        let medium = Medium::coax();
        Self::cable(distance, total_db - medium.attenuation_per_meter() * distance)
    }

    pub fn air(distance: f64, fixed_attenuation: f64) -> Self {
        Self { medium: Medium::air(), ..Self::cable(distance, fixed_attenuation) }
    }

    pub fn budget(&self, settings: &RfSettings) -> LinkBudget {
        LinkBudget {
            tx_power: settings.tx_power,
            tx_gain: self.tx_gain,
            rx_gain: self.rx_gain,
            fixed_attenuation: self.fixed_attenuation,
            distance: self.distance,
            wavelength: crate::rf_channel::wavelength(settings.frequency.hz()),
        }
    }

    pub fn attenuation(&self, settings: &RfSettings) -> Result<f64, ProtocolError> {
        Ok(link_attenuation(&self.budget(settings), &self.medium)?)
    }

    pub fn rx_power(&self, settings: &RfSettings) -> Result<f64, ProtocolError> {
        Ok(settings.tx_power - self.attenuation(settings)?)
    }

    pub fn delay(&self) -> f64 {
        propagation_delay(self.distance, &self.medium)
    }

    /// Puts a frame on the wire; with the configured probability one bit flips.
    pub fn carry<R: Rng + ?Sized>(&self, mut frame: [u8; PACKET_LEN], rng: &mut R) -> [u8; PACKET_LEN] {
        if self.corruption_probability > 0.0 && rng.random_bool(self.corruption_probability.min(1.0)) {
            let bit = rng.random_range(0..PACKET_LEN * 8);
            frame[bit / 8] ^= 1 << (bit % 8);
        }
        frame
    }
}

/// Timing knobs of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Slave turnaround between its RX flag and its reply's TX flag, s.
    pub processing_time: f64,
    /// Retries of a lost round trip (and of the reconfiguration handshake).
    pub retry_limit: u32,
    /// Spacing of round starts; `None` uses the bench duration of the data rate.
    pub round_period: Option<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { processing_time: 100e-6, retry_limit: 10, round_period: None }
    }
}

impl ProtocolConfig {
    pub fn period(&self, settings: &RfSettings) -> f64 {
        self.round_period.unwrap_or_else(|| settings.data_rate.measurement_duration())
    }
}

/// One completed measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrip {
    pub t0: u32,
    pub t1: u32,
    pub t2: u32,
    pub t3: u32,
    /// Latency as received over the air.
    pub latency_cycles: u32,
    pub master_rssi: i8,
    pub slave_rssi: i8,
    pub settings: RfSettings,
    /// True time at which the master committed the request, s.
    pub started: f64,
    /// True time of the master's RX flag, s.
    pub finished: f64,
}

impl RoundTrip {
    pub fn rtt(&self) -> u32 {
        self.t3.wrapping_sub(self.t0)
    }

    pub fn latency(&self) -> u32 {
        self.t2.wrapping_sub(self.t1)
    }
}

/// `(t3 - t0) - (t2 - t1)` with both intervals unwrapped modulo 2^32.
/// Negative results are passed through for the spike filter to drop.
pub fn corrected_rtt(rt: &RoundTrip) -> i64 {
    i64::from(rt.rtt()) - i64::from(rt.latency())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CampaignCommand {
    pub count: usize,
    pub settings: RfSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub records: Vec<RoundTrip>,
    /// Simulated wall time from the start command to the last reply, s.
    pub duration: f64,
}

fn lost(e: &ProtocolError) -> bool {
    matches!(
        e,
        ProtocolError::Node(NodeError::PacketLost { .. })
            | ProtocolError::Frame(FrameError::SyncMismatch)
            | ProtocolError::Frame(FrameError::CrcFailure { .. })
            | ProtocolError::Frame(FrameError::Preamble)
    )
}

fn attempt<R: Rng + ?Sized>(
    master: &mut Node,
    slave: &mut Node,
    channel: &Channel,
    cfg: &ProtocolConfig,
    start: f64,
    rng: &mut R,
) -> Result<RoundTrip, ProtocolError> {
    let settings = master.settings;
    if slave.settings != settings || slave.sync_word != master.sync_word {
        return Err(ProtocolError::Mismatched);
    }
    master.begin_round();
    slave.begin_round();
    let attenuation = channel.attenuation(&settings)?;
    let rx_power = settings.tx_power - attenuation;
    let header = settings.data_rate.airtime(HEADER_LEN);
    let prop = channel.delay();

    // master request
    let commit = master.edge_after(start, 0.0)?;
    let flag0 = master.flag_timeline(SyncEvent::TxSync, commit + header, attenuation)?;
    let c0 = master.on_tx_sync(flag0)?;
    let request = RangingPacket {
        sync_word: master.sync_word,
        latency_cycles: 0,
        rssi: 0,
        address: master.address,
    };
    let frame = channel.carry(request.encode(), rng);

    // slave receive
    let flag1 = slave.flag_timeline(SyncEvent::RxSync, flag0 + prop, attenuation)?;
    let c1 = slave.on_rx_sync(flag1)?;
    RangingPacket::decode(&frame, slave.sync_word)?;
    let slave_rssi = slave.read_rssi(rx_power);

    // slave reply, launched on a slave clock edge
    let flag2 = slave.edge_after(flag1, cfg.processing_time)?;
    let c2 = slave.on_tx_sync(flag2)?;
    let latency = c2.interval.ok_or(ProtocolError::Incomplete)?;
    let reply = RangingPacket {
        sync_word: slave.sync_word,
        latency_cycles: latency,
        rssi: slave_rssi,
        address: slave.address,
    };
    let frame = channel.carry(reply.encode(), rng);

    // master receive
    let flag3 = master.flag_timeline(SyncEvent::RxSync, flag2 + prop, attenuation)?;
    let c3 = master.on_rx_sync(flag3)?;
    let reply = RangingPacket::decode(&frame, master.sync_word)?;
    let master_rssi = master.read_rssi(rx_power);

    Ok(RoundTrip {
        t0: c0.stamp,
        t1: c1.stamp,
        t2: c2.stamp,
        t3: c3.stamp,
        latency_cycles: reply.latency_cycles,
        master_rssi,
        slave_rssi: reply.rssi,
        settings,
        started: commit,
        finished: flag3,
    })
}

/// One request/reply exchange starting no earlier than `start`.
///
/// Lost frames discard the round; it is retried one round period later, up to
/// `cfg.retry_limit` times.
pub fn run_round_trip<R: Rng + ?Sized>(
    master: &mut Node,
    slave: &mut Node,
    channel: &Channel,
    cfg: &ProtocolConfig,
    start: f64,
    rng: &mut R,
) -> Result<RoundTrip, ProtocolError> {
    let period = cfg.period(&master.settings);
    let mut at = start.max(master.now()).max(slave.now());
    let mut last = None;
    for _ in 0..=cfg.retry_limit {
        match attempt(master, slave, channel, cfg, at, rng) {
            Ok(rt) => return Ok(rt),
            Err(e) if lost(&e) => {
                master.abort_round();
                slave.abort_round();
                at = (at + period).max(master.now()).max(slave.now());
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(ProtocolError::RetryLimit {
        attempts: cfg.retry_limit + 1,
        last: Box::new(last.expect("at least one attempt")),
    })
}

/// Start command: reconfigure the slave, then take `cmd.count` measurements
/// back to back. Any failure discards the whole campaign.
pub fn run_campaign<R: Rng + ?Sized>(
    cmd: &CampaignCommand,
    master: &mut Node,
    slave: &mut Node,
    channel: &Channel,
    cfg: &ProtocolConfig,
    rng: &mut R,
) -> Result<Campaign, ProtocolError> {
    if cmd.count == 0 {
        return Err(ProtocolError::InvalidCommand("count must be at least 1"));
    }
    let begin = master.now().max(slave.now());
    handshake(cmd, master, slave, channel, cfg, rng)?;

    let period = cfg.period(&cmd.settings);
    let mut records = Vec::with_capacity(cmd.count);
    let mut start = master.now().max(slave.now());
    for _ in 0..cmd.count {
        let rt = run_round_trip(master, slave, channel, cfg, start, rng)?;
        start = (rt.started + period).max(rt.finished);
        records.push(rt);
    }
    let end = records.last().map_or(start, |r| r.started + period);
    Ok(Campaign { records, duration: end - begin })
}

fn handshake<R: Rng + ?Sized>(
    cmd: &CampaignCommand,
    master: &mut Node,
    slave: &mut Node,
    channel: &Channel,
    cfg: &ProtocolConfig,
    rng: &mut R,
) -> Result<(), ProtocolError> {
    let mut tries = 0;
    loop {
        let outcome = channel
            .attenuation(&master.settings)
            .and_then(|a| Ok(crate::node_sim::AnalogDelayModel::check_window(a)?))
            .and_then(|_| {
                let frame = channel.carry(
                    RangingPacket {
                        sync_word: master.sync_word,
                        latency_cycles: 0,
                        rssi: 0,
                        address: master.address,
                    }
                    .encode(),
                    rng,
                );
                RangingPacket::decode(&frame, slave.sync_word)?;
                Ok(())
            });
        match outcome {
            Ok(()) => break,
            Err(e) if lost(&e) && tries < cfg.retry_limit => tries += 1,
            Err(e) => return Err(ProtocolError::HandshakeFailed(Box::new(e))),
        }
    }
    master.configure(cmd.settings);
    slave.configure(cmd.settings);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node_sim::{AnalogDelayModel, ClockModel, DataRate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(seed: u64) -> (Node, Node) {
        (Node::master(seed), Node::slave(seed + 1))
    }

    #[test]
    fn corrected_rtt_arithmetic() {
        let mut rt = RoundTrip {
            t0: 0,
            t1: 100,
            t2: 36_300,
            t3: 36_400,
            latency_cycles: 36_200,
            master_rssi: 0,
            slave_rssi: 0,
            settings: RfSettings::reference(),
            started: 0.0,
            finished: 0.0,
        };
        assert_eq!(corrected_rtt(&rt), 200);
        rt.t3 = 36_200;
        rt.t0 = 0;
        rt.t1 = 0;
        rt.t2 = 36_200;
        assert_eq!(corrected_rtt(&rt), 0);
        rt.t0 = u32::MAX - 9;
        rt.t3 = 30;
        rt.t1 = 5;
        rt.t2 = 5;
        assert_eq!(rt.rtt(), 40);
        assert_eq!(corrected_rtt(&rt), 40);
        rt.t1 = 0;
        rt.t2 = 50;
        assert_eq!(corrected_rtt(&rt), -10);
    }

    #[test]
    fn ideal_world_cancels_everything() {
        let (mut m, mut s) = pair(1);
        m = m.with_counter_phase(0.0);
        s = s.with_counter_phase(0.0);
        m.delay = AnalogDelayModel::ideal();
        s.delay = AnalogDelayModel::ideal();
        let mut ch = Channel::cable_at(0.0, 60.0);
        ch.distance = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rt = run_round_trip(&mut m, &mut s, &ch, &ProtocolConfig::default(), 0.0, &mut rng)
            .unwrap();
        assert_eq!(rt.rtt(), rt.latency());
        assert_eq!(corrected_rtt(&rt), 0);
    }

    #[test]
    fn eighteen_meters_deterministic() {
        // Jitter off. The slave runs 1 ppm fast so its phase against the
        // master walks across the cycle; the master's edge-aligned t0 then
        // makes the quantized correction average exactly one cycle low.
        let (mut m, mut s) = pair(2);
        for n in [&mut m, &mut s] {
            n.delay.noise_sigma.values_mut().for_each(|v| *v = 0.0);
        }
        s.clock = ClockModel::crystal(1.0);
        let ch = Channel::cable_at(18.0, 60.0);
        let settings = RfSettings::reference();
        let offset = 2.0 * m.delay.mean_delay(&settings, 60.0, &m.env).unwrap() * 26e6;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cmd = CampaignCommand { count: 2000, settings };
        let camp =
            run_campaign(&cmd, &mut m, &mut s, &ch, &ProtocolConfig::default(), &mut rng).unwrap();
        let mean = camp.records.iter().map(|r| corrected_rtt(r) as f64).sum::<f64>()
            / camp.records.len() as f64;
        let signal = mean + 1.0 - offset;
        assert!((signal - 2.0 * 18.0 / 9.2244).abs() < 0.02, "{signal}");
        assert!((2.0 * 18.0 / 9.2244 - 3.90_f64).abs() < 0.01);
    }

    #[test]
    fn wire_latency_matches_slave_captures() {
        let (mut m, mut s) = pair(3);
        let ch = Channel::cable_at(18.0, 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let camp = run_campaign(
            &CampaignCommand { count: 500, settings: RfSettings::reference() },
            &mut m,
            &mut s,
            &ch,
            &ProtocolConfig::default(),
            &mut rng,
        )
        .unwrap();
        for rt in &camp.records {
            assert_eq!(rt.latency_cycles, rt.t2.wrapping_sub(rt.t1));
            // physics lower bound minus one cycle of quantization
            assert!(corrected_rtt(rt) as f64 >= 2.0 * 18.0 / 9.2244 - 1.0);
        }
    }

    #[test]
    fn campaign_timing_and_count() {
        let (mut m, mut s) = pair(4);
        let ch = Channel::cable_at(18.0, 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cmd = CampaignCommand { count: 1000, settings: RfSettings::reference() };
        let camp = run_campaign(&cmd, &mut m, &mut s, &ch, &ProtocolConfig::default(), &mut rng)
            .unwrap();
        assert_eq!(camp.records.len(), 1000);
        assert!((camp.duration - 1.4).abs() < 0.01, "{}", camp.duration);
        let bad = CampaignCommand { count: 0, ..cmd };
        assert!(matches!(
            run_campaign(&bad, &mut m, &mut s, &ch, &ProtocolConfig::default(), &mut rng),
            Err(ProtocolError::InvalidCommand(_))
        ));
    }

    #[test]
    fn twenty_five_rounds() {
        let (mut m, mut s) = pair(5);
        let ch = Channel::cable_at(2.0, 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cmd = CampaignCommand { count: 1000, settings: RfSettings::reference() };
        let total: usize = (0..25)
            .map(|_| {
                run_campaign(&cmd, &mut m, &mut s, &ch, &ProtocolConfig::default(), &mut rng)
                    .unwrap()
                    .records
                    .len()
            })
            .sum();
        assert_eq!(total, 25_000);
    }

    #[test]
    fn dead_link_aborts_campaign() {
        let (mut m, mut s) = pair(6);
        let ch = Channel::cable_at(18.0, 85.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cmd = CampaignCommand { count: 10, settings: RfSettings::reference() };
        let r = run_campaign(&cmd, &mut m, &mut s, &ch, &ProtocolConfig::default(), &mut rng);
        assert!(matches!(r, Err(ProtocolError::HandshakeFailed(_))));
    }

    #[test]
    fn corrupted_frames_are_retried() {
        let (mut m, mut s) = pair(7);
        let mut ch = Channel::cable_at(18.0, 60.0);
        ch.corruption_probability = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cmd = CampaignCommand { count: 200, settings: RfSettings::reference() };
        let camp = run_campaign(&cmd, &mut m, &mut s, &ch, &ProtocolConfig::default(), &mut rng)
            .unwrap();
        assert_eq!(camp.records.len(), 200);
        // retries stretch the campaign beyond 200 nominal periods
        assert!(camp.duration > 200.0 * 1.4e-3 * 1.1);

        ch.corruption_probability = 1.0;
        let err = run_round_trip(&mut m, &mut s, &ch, &ProtocolConfig::default(), 10.0, &mut rng);
        assert!(matches!(err, Err(ProtocolError::RetryLimit { attempts: 11, .. })));
    }

    #[test]
    fn mismatched_settings_refused() {
        let (mut m, mut s) = pair(8);
        s.configure(RfSettings { data_rate: DataRate::Kbps38_4, ..RfSettings::reference() });
        let ch = Channel::cable_at(2.0, 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r = run_round_trip(&mut m, &mut s, &ch, &ProtocolConfig::default(), 0.0, &mut rng);
        assert!(matches!(r, Err(ProtocolError::Mismatched)));
    }

    #[test]
    fn campaigns_are_deterministic() {
        let run = || {
            let (mut m, mut s) = pair(9);
            m.clock = ClockModel::crystal(12.0);
            let ch = Channel::cable_at(18.0, 60.0);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let cmd = CampaignCommand { count: 300, settings: RfSettings::reference() };
            run_campaign(&cmd, &mut m, &mut s, &ch, &ProtocolConfig::default(), &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }
}
