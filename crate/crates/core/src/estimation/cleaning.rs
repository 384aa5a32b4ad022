use serde::{Deserialize, Serialize};

use super::EstimationError;

/// Threshold rules applied to raw campaign output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CleaningPolicy {
    /// Corrected RTTs at or below this are spikes, cycles.
    pub rtt_min: i64,
    /// Corrected RTTs above this are spikes, cycles.
    pub rtt_max: i64,
    /// RSSI readings dropped at the start of every round.
    pub rssi_warmup_discard: usize,
    /// Half-width of the accepted RSSI band around the round mean, dB.
    /// With the register's ~0.7 dB noise this is a bit over 4 sigma.
    pub rssi_band: f64,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        Self { rtt_min: 0, rtt_max: 42_000, rssi_warmup_discard: 60, rssi_band: 3.0 }
    }
}

impl CleaningPolicy {
    pub fn validate(&self) -> Result<(), EstimationError> {
        if self.rtt_min >= self.rtt_max {
            return Err(EstimationError::Domain("rtt_min must be below rtt_max"));
        }
        if !(self.rssi_band > 0.0) {
            return Err(EstimationError::Domain("rssi_band must be positive"));
        }
        Ok(())
    }

    pub fn accepts_rtt(&self, v: i64) -> bool {
        v > self.rtt_min && v <= self.rtt_max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cleaned<T> {
    pub values: Vec<T>,
    pub rejected: usize,
}

/// Drops spikes: keeps corrected RTTs in `(rtt_min, rtt_max]`.
pub fn clean_rtt(records: &[i64], policy: &CleaningPolicy) -> Result<Cleaned<i64>, EstimationError> {
    policy.validate()?;
    let values: Vec<i64> = records.iter().copied().filter(|&v| policy.accepts_rtt(v)).collect();
    if values.is_empty() {
        return Err(EstimationError::EmptyAfterCleaning);
    }
    Ok(Cleaned { rejected: records.len() - values.len(), values })
}

/// Per round: drops the warm-up readings, then everything further than
/// `rssi_band` from the mean of what is left (one pass).
pub fn clean_rssi<T: Copy + Into<f64>, R: AsRef<[T]>>(
    rounds: &[R],
    policy: &CleaningPolicy,
) -> Result<Cleaned<f64>, EstimationError> {
    policy.validate()?;
    let mut values = Vec::new();
    let mut rejected = 0;
    for round in rounds {
        let round = round.as_ref();
        let skip = policy.rssi_warmup_discard.min(round.len());
        rejected += skip;
        let kept = &round[skip..];
        if kept.is_empty() {
            continue;
        }
        let mean = kept.iter().map(|&v| v.into()).sum::<f64>() / kept.len() as f64;
        for &v in kept {
            let v: f64 = v.into();
            if (v - mean).abs() <= policy.rssi_band {
                values.push(v);
            } else {
                rejected += 1;
            }
        }
    }
    if values.is_empty() {
        return Err(EstimationError::EmptyAfterCleaning);
    }
    Ok(Cleaned { values, rejected })
}
