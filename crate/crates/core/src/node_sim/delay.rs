//! Analog-domain delay between a physical sync-word edge and the flag that
//! latches the counter.
//!
//! The delay has a per-setting base, an attenuation-dependent exponential
//! term, optional linear temperature / supply terms, and Gaussian jitter.
//! The default tables keep GFSK at 1.4x the FSK base delay at every data rate.
//! Jitter defaults are sized so that one corrected round trip over the 18 m
//! reference cable (two hops of jitter plus counter quantization on both
//! nodes) scatters by 6.09 m at 250 kb/s and 30.10 m at 38.4 kb/s with FSK,
//! twice that with GFSK, and by 1741 m at 1.2 kb/s with GFSK. Since the
//! quantization share is fixed, the per-hop GFSK jitter is slightly more than
//! twice the FSK value at the fast rates.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::clock::Environment;
use super::settings::{DataRate, Frequency, Modulation, RfSettings};
use super::NodeError;

/// Lower edge of the attenuation window in which the boards hold a link, dB.
pub const MIN_ATTENUATION_DB: f64 = 36.0;
/// Upper edge of the attenuation window, dB.
pub const MAX_ATTENUATION_DB: f64 = 81.0;

/// GFSK delay relative to FSK at the same data rate.
pub const GFSK_DELAY_FACTOR: f64 = 1.4;
/// Scatter of a GFSK round trip relative to FSK at the same data rate.
pub const GFSK_NOISE_FACTOR: f64 = 2.0;

const CYCLE: f64 = 1.0 / 26e6;

/// `a + b * exp(k * (A - a_ref))`, the attenuation dependence of the offset.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpCurve {
    pub a: f64,
    pub b: f64,
    /// per dB
    pub k: f64,
    /// dB
    pub a_ref: f64,
}

impl ExpCurve {
    pub fn eval(&self, attenuation: f64) -> f64 {
        self.a + self.b * (self.k * (attenuation - self.a_ref)).exp()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { a: self.a * factor, b: self.b * factor, ..*self }
    }
}

fn fsk_base(rate: DataRate) -> f64 {
    match rate {
        DataRate::Kbps250 => 7e-6,
        DataRate::Kbps38_4 => 30e-6,
        DataRate::Kbps1_2 => 480e-6,
    }
}

fn fsk_noise(rate: DataRate) -> f64 {
    match rate {
        DataRate::Kbps250 => 34.151e-9,
        DataRate::Kbps38_4 => 177.141e-9,
        DataRate::Kbps1_2 => 5_133.99e-9,
    }
}

fn gfsk_noise(rate: DataRate) -> f64 {
    match rate {
        DataRate::Kbps250 => 70.9576e-9,
        DataRate::Kbps38_4 => 354.804e-9,
        DataRate::Kbps1_2 => 10_267.98e-9,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogDelayModel {
    /// Seconds, per (frequency, modulation, data rate).
    pub base_delay: BTreeMap<(Frequency, Modulation, DataRate), f64>,
    /// Curve in seconds over attenuation in dB.
    pub atten: ExpCurve,
    /// One-sigma jitter in seconds, per (modulation, data rate).
    pub noise_sigma: BTreeMap<(Modulation, DataRate), f64>,
    /// s/°C relative to `env_reference`.
    pub temp_slope: f64,
    /// s/V relative to `env_reference`.
    pub voltage_slope: f64,
    pub env_reference: Environment,
    /// Share of the base delay that sits on the transmit side.
    pub tx_split: f64,
}

impl Default for AnalogDelayModel {
    fn default() -> Self {
        let mut base_delay = BTreeMap::new();
        let mut noise_sigma = BTreeMap::new();
        for rate in DataRate::ALL {
            for frequency in Frequency::ALL {
                base_delay.insert((frequency, Modulation::Fsk2, rate), fsk_base(rate));
                base_delay
                    .insert((frequency, Modulation::Gfsk2, rate), GFSK_DELAY_FACTOR * fsk_base(rate));
            }
            noise_sigma.insert((Modulation::Fsk2, rate), fsk_noise(rate));
            noise_sigma.insert((Modulation::Gfsk2, rate), gfsk_noise(rate));
        }
        Self {
            base_delay,
            atten: ExpCurve { a: 0.0, b: 2.0 * CYCLE, k: 0.08, a_ref: MIN_ATTENUATION_DB },
            noise_sigma,
            temp_slope: 0.0,
            voltage_slope: 0.0,
            env_reference: Environment::default(),
            tx_split: 0.5,
        }
    }
}

impl AnalogDelayModel {
    /// Model with every delay and all jitter removed.
    pub fn ideal() -> Self {
        let mut m = Self::default();
        m.base_delay.values_mut().for_each(|v| *v = 0.0);
        m.noise_sigma.values_mut().for_each(|v| *v = 0.0);
        m.atten = ExpCurve { a: 0.0, b: 0.0, k: 0.0, a_ref: MIN_ATTENUATION_DB };
        m
    }

    pub fn base(&self, s: &RfSettings) -> Result<f64, NodeError> {
        self.base_delay
            .get(&(s.frequency, s.modulation, s.data_rate))
            .copied()
            .ok_or(NodeError::MissingTableEntry(*s))
    }

    pub fn sigma(&self, s: &RfSettings) -> Result<f64, NodeError> {
        self.noise_sigma
            .get(&(s.modulation, s.data_rate))
            .copied()
            .ok_or(NodeError::MissingTableEntry(*s))
    }

    pub fn check_window(attenuation: f64) -> Result<(), NodeError> {
        if (MIN_ATTENUATION_DB..=MAX_ATTENUATION_DB).contains(&attenuation) {
            Ok(())
        } else {
            Err(NodeError::PacketLost { attenuation })
        }
    }

    /// Jitter-free part of one hop's delay.
    pub fn mean_delay(
        &self,
        settings: &RfSettings,
        attenuation: f64,
        env: &Environment,
    ) -> Result<f64, NodeError> {
        Self::check_window(attenuation)?;
        Ok(self.base(settings)?
            + self.atten.eval(attenuation)
            + self.temp_slope * (env.temperature - self.env_reference.temperature)
            + self.voltage_slope * (env.voltage - self.env_reference.voltage))
    }

    /// Transmit-side share of the base delay.
    pub fn tx_lag(&self, settings: &RfSettings) -> Result<f64, NodeError> {
        Ok(self.tx_split * self.base(settings)?)
    }

    /// One draw of the hop delay; always strictly positive.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        settings: &RfSettings,
        attenuation: f64,
        env: &Environment,
        rng: &mut R,
    ) -> Result<f64, NodeError> {
        let mean = self.mean_delay(settings, attenuation, env)?;
        let sigma = self.sigma(settings)?;
        if sigma == 0.0 {
            return Ok(mean.max(0.0));
        }
        let normal = Normal::new(mean, sigma).map_err(|_| NodeError::BadNoise(sigma))?;
        // Truncate at zero; with the default tables the mean sits hundreds of
        // sigmas above it.
        for _ in 0..64 {
            let d = normal.sample(rng);
            if d > 0.0 {
                return Ok(d);
            }
        }
        Err(NodeError::BadNoise(sigma))
    }
}

/// Free-function form of [`AnalogDelayModel::sample`].
pub fn analog_delay_sample<R: Rng + ?Sized>(
    model: &AnalogDelayModel,
    settings: &RfSettings,
    attenuation: f64,
    env: &Environment,
    rng: &mut R,
) -> Result<f64, NodeError> {
    model.sample(settings, attenuation, env, rng)
}
