//! Statistics from raw round trips to distances: spike and RSSI cleaning,
//! batch statistics, sample-size planning, offset calibration and the
//! attenuation-offset fit.

mod cleaning;
mod offset;
mod stats;

use thiserror::Error;

pub use cleaning::{clean_rssi, clean_rtt, Cleaned, CleaningPolicy};
pub use offset::{
    calibrate_offset, cycles_to_distance, distance_to_cycles, estimate_distance,
    fit_attenuation_offset, meters_per_cycle, DistanceEstimate, ExpFit, OffsetModel, FIT_A_REF,
};
pub use stats::{batch_stats, corrected_std, required_samples, sigma_correction, BatchStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("no records left after cleaning")]
    EmptyAfterCleaning,
    #[error("{0}")]
    Domain(&'static str),
    #[error("fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("fit did not converge in {iterations} iterations")]
    FitDiverged { iterations: usize },
}
