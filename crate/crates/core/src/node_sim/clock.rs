//! Counter clock of a node: a 26 MHz (nominal) time base feeding a 16-bit
//! hardware counter that firmware extends with a 16-bit overflow register.

use serde::{Deserialize, Serialize};

use super::NodeError;

/// Nominal counter clock, Hz.
pub const NOMINAL_HZ: f64 = 26e6;

/// Stated accuracy of the on-board crystal.
pub const CRYSTAL_PPM: f64 = 80.0;

/// Captures available per measurement round (t0..t3).
pub const CAPTURES_PER_ROUND: usize = 4;

// Guard, in cycles, so that an advance landing on an edge counts it. Node
// times are absolute seconds; after an hour of simulated time one ulp is
// about 1e-5 cycles.
const EDGE_EPS: f64 = 1e-4;

/// Operating point of a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Environment {
    /// °C
    pub temperature: f64,
    /// V
    pub voltage: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self { temperature: 20.0, voltage: 3.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClockModel {
    pub nominal_hz: f64,
    pub ppm_error: f64,
    /// Fractional frequency change per °C.
    pub temp_coeff: f64,
    /// Fractional frequency change per V.
    pub voltage_coeff: f64,
    pub reference_temp: f64,
    pub reference_voltage: f64,
}

impl Default for ClockModel {
    fn default() -> Self {
        Self::crystal(0.0)
    }
}

impl ClockModel {
    pub fn crystal(ppm_error: f64) -> Self {
        Self {
            nominal_hz: NOMINAL_HZ,
            ppm_error,
            temp_coeff: 0.0,
            voltage_coeff: 0.0,
            reference_temp: 20.0,
            reference_voltage: 3.3,
        }
    }

    /// Internal RC oscillator: 0.1 %/°C and 1.9 %/V.
    pub fn rc_oscillator(nominal_hz: f64) -> Self {
        Self { nominal_hz, temp_coeff: 0.001, voltage_coeff: 0.019, ..Self::crystal(0.0) }
    }

    pub fn effective_hz(&self, env: &Environment) -> f64 {
        self.nominal_hz
            * (1.0
                + self.ppm_error * 1e-6
                + self.temp_coeff * (env.temperature - self.reference_temp)
                + self.voltage_coeff * (env.voltage - self.reference_voltage))
    }

    pub(crate) fn checked_hz(&self, env: &Environment) -> Result<f64, NodeError> {
        let hz = self.effective_hz(env);
        if hz > 0.0 && hz.is_finite() {
            Ok(hz)
        } else {
            Err(NodeError::ClockStopped(hz))
        }
    }
}

/// 16+16-bit capture counter with fractional phase carried between advances.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaptureCounter {
    pub low: u16,
    pub high: u16,
    /// Fraction of a cycle elapsed since the last edge, in [0, 1).
    pub phase: f64,
    pub captures: Vec<u32>,
}

impl CaptureCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counter whose last edge lies `phase` of a cycle in the past.
    pub fn with_phase(phase: f64) -> Self {
        Self { phase: phase.rem_euclid(1.0), ..Self::default() }
    }

    pub fn value(&self) -> u32 {
        (u32::from(self.high) << 16) | u32::from(self.low)
    }

    fn set_value(&mut self, v: u32) {
        self.low = (v & 0xFFFF) as u16;
        self.high = (v >> 16) as u16;
    }

    /// Adds whole cycles; the overflow register absorbs low-word wraps.
    pub fn add_cycles(&mut self, cycles: u64) {
        self.set_value(self.value().wrapping_add(cycles as u32));
    }

    /// Runs the counter for `elapsed` seconds of true time.
    pub fn advance(
        &mut self,
        clock: &ClockModel,
        elapsed: f64,
        env: &Environment,
    ) -> Result<u64, NodeError> {
        if elapsed < 0.0 {
            return Err(NodeError::NegativeElapsed(elapsed));
        }
        let hz = clock.checked_hz(env)?;
        let total = self.phase + elapsed * hz;
        let whole = (total + EDGE_EPS).floor();
        self.phase = (total - whole).max(0.0);
        let whole = whole as u64;
        self.add_cycles(whole);
        Ok(whole)
    }

    /// Runs the counter forward to the `cycles`-th edge from now and returns the
    /// true time that took. Leaves the phase exactly on the edge.
    pub fn advance_to_edge(
        &mut self,
        clock: &ClockModel,
        cycles: u64,
        env: &Environment,
    ) -> Result<f64, NodeError> {
        let hz = clock.checked_hz(env)?;
        let elapsed = (cycles as f64 - self.phase).max(0.0) / hz;
        self.phase = 0.0;
        self.add_cycles(cycles);
        Ok(elapsed)
    }

    /// Edges needed so that at least `min_elapsed` seconds pass.
    pub fn edges_after(
        &self,
        clock: &ClockModel,
        min_elapsed: f64,
        env: &Environment,
    ) -> Result<u64, NodeError> {
        let hz = clock.checked_hz(env)?;
        Ok((min_elapsed * hz + self.phase - EDGE_EPS).ceil().max(0.0) as u64)
    }

    /// Latches the composed counter on a sync-word flag edge.
    pub fn capture_on_sync(&mut self) -> Result<u32, NodeError> {
        if self.captures.len() >= CAPTURES_PER_ROUND {
            return Err(NodeError::TooManyCaptures);
        }
        let stamp = self.value();
        self.captures.push(stamp);
        Ok(stamp)
    }

    pub fn begin_round(&mut self) {
        self.captures.clear();
    }
}

/// Functional form of [`CaptureCounter::advance`].
pub fn advance_clock(
    clock: &ClockModel,
    counter: &CaptureCounter,
    true_elapsed: f64,
    temp: f64,
    voltage: f64,
) -> Result<CaptureCounter, NodeError> {
    let mut next = counter.clone();
    next.advance(clock, true_elapsed, &Environment { temperature: temp, voltage })?;
    Ok(next)
}

/// Functional form of [`CaptureCounter::capture_on_sync`].
pub fn capture_on_sync(counter: &mut CaptureCounter) -> Result<u32, NodeError> {
    counter.capture_on_sync()
}
