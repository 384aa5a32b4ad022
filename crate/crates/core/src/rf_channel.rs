//! Physical link model between two nodes.
//!
//! Everything here works in the dB / dBm domain; linear power only appears
//! inside the free-space expressions. Propagation delay, the Fresnel zone
//! radius and the Bragg reflector spacing round out the link geometry.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default loss of the low-loss coaxial cable, dB/m (14 dB per 100 m).
pub const CABLE_ATTENUATION_DB_PER_M: f64 = 0.14;

/// Velocity factor of the coaxial cable used for wired campaigns.
pub const CABLE_VELOCITY_FACTOR: f64 = 0.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("{quantity} must be positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },
    #[error("received power {rx_dbm} dBm exceeds the effective transmitted power {eirp_dbm} dBm")]
    AboveTransmitted { rx_dbm: f64, eirp_dbm: f64 },
    #[error("zone / order index must be >= 1, got {0}")]
    BadOrder(u32),
    #[error("grazing angle {0} rad outside (0, pi/2]")]
    BadAngle(f64),
    #[error("velocity factor {0} outside (0, 1]")]
    BadVelocityFactor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediumKind {
    Air,
    Cable,
}

/// Propagation medium. Air always has a velocity factor of exactly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medium {
    kind: MediumKind,
    velocity_factor: f64,
    attenuation_per_meter: f64,
}

impl Medium {
    pub fn air() -> Self {
        Self { kind: MediumKind::Air, velocity_factor: 1.0, attenuation_per_meter: 0.0 }
    }

    /// The LL335-style coax: v_p = 0.8, 0.14 dB/m.
    pub fn coax() -> Self {
        Self {
            kind: MediumKind::Cable,
            velocity_factor: CABLE_VELOCITY_FACTOR,
            attenuation_per_meter: CABLE_ATTENUATION_DB_PER_M,
        }
    }

    pub fn cable(velocity_factor: f64, attenuation_per_meter: f64) -> Result<Self, ChannelError> {
        if !(velocity_factor > 0.0 && velocity_factor <= 1.0) {
            return Err(ChannelError::BadVelocityFactor(velocity_factor));
        }
        Ok(Self { kind: MediumKind::Cable, velocity_factor, attenuation_per_meter })
    }

    pub fn kind(&self) -> MediumKind {
        self.kind
    }

    pub fn velocity_factor(&self) -> f64 {
        self.velocity_factor
    }

    pub fn attenuation_per_meter(&self) -> f64 {
        self.attenuation_per_meter
    }

    /// Signal velocity in the medium, m/s.
    pub fn velocity(&self) -> f64 {
        SPEED_OF_LIGHT * self.velocity_factor
    }
}

/// Free-space wavelength for a carrier frequency in Hz.
pub fn wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

/// Parameters of one radio hop. Powers in dBm, gains in dBi, losses in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub tx_power: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    /// Attenuator array inserted in the path.
    pub fixed_attenuation: f64,
    pub distance: f64,
    pub wavelength: f64,
}

impl LinkBudget {
    pub fn new(tx_power: f64, carrier_hz: f64, distance: f64) -> Self {
        Self {
            tx_power,
            tx_gain: 0.0,
            rx_gain: 0.0,
            fixed_attenuation: 0.0,
            distance,
            wavelength: wavelength(carrier_hz),
        }
    }

    /// Effective isotropic transmitted power seen by the receive antenna.
    pub fn eirp(&self) -> f64 {
        self.tx_power + self.tx_gain + self.rx_gain
    }
}

fn positive(quantity: &'static str, value: f64) -> Result<f64, ChannelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ChannelError::NonPositive { quantity, value })
    }
}

/// Free-space received power in dBm (dB form of the Friis equation).
pub fn friis_rx_power(budget: &LinkBudget) -> Result<f64, ChannelError> {
    let r = positive("distance", budget.distance)?;
    let lambda = positive("wavelength", budget.wavelength)?;
    Ok(budget.eirp() + 20.0 * (lambda / (4.0 * PI * r)).log10())
}

/// Inverse of [`friis_rx_power`]: the distance at which `rx_power` would be received.
pub fn friis_distance(rx_power: f64, budget: &LinkBudget) -> Result<f64, ChannelError> {
    let lambda = positive("wavelength", budget.wavelength)?;
    let eirp = budget.eirp();
    if rx_power > eirp {
        return Err(ChannelError::AboveTransmitted { rx_dbm: rx_power, eirp_dbm: eirp });
    }
    Ok(lambda / (4.0 * PI) * 10f64.powf((eirp - rx_power) / 20.0))
}

/// One-way propagation delay in seconds.
pub fn propagation_delay(distance: f64, medium: &Medium) -> f64 {
    debug_assert!(distance >= 0.0);
    distance / medium.velocity()
}

/// Radius of the n-th Fresnel zone at a point `d1` from one antenna and `d2` from the other.
pub fn fresnel_radius(n: u32, wavelength: f64, d1: f64, d2: f64) -> Result<f64, ChannelError> {
    if n < 1 {
        return Err(ChannelError::BadOrder(n));
    }
    let d1 = positive("d1", d1)?;
    let d2 = positive("d2", d2)?;
    let lambda = positive("wavelength", wavelength)?;
    Ok((f64::from(n) * lambda * d1 * d2 / (d1 + d2)).sqrt())
}

/// Reflector spacing giving constructive interference of order `n` at grazing angle `theta`.
pub fn bragg_spacing(n: u32, wavelength: f64, theta: f64) -> Result<f64, ChannelError> {
    if n < 1 {
        return Err(ChannelError::BadOrder(n));
    }
    if !(theta > 0.0 && theta <= PI / 2.0) {
        return Err(ChannelError::BadAngle(theta));
    }
    let lambda = positive("wavelength", wavelength)?;
    Ok(f64::from(n) * lambda / (2.0 * theta.sin()))
}

/// Total path attenuation in dB: the single "attenuation" knob of a campaign.
///
/// Air links use the free-space loss (net of antenna gains); cables use their
/// per-meter loss. The attenuator array is added in both cases.
pub fn link_attenuation(budget: &LinkBudget, medium: &Medium) -> Result<f64, ChannelError> {
    match medium.kind {
        MediumKind::Air => {
            let rx = friis_rx_power(budget)?;
            Ok(budget.eirp() - rx + budget.fixed_attenuation - budget.tx_gain - budget.rx_gain)
        }
        MediumKind::Cable => {
            Ok(medium.attenuation_per_meter * budget.distance + budget.fixed_attenuation)
        }
    }
}
