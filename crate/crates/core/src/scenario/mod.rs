//! Campaign runner: the distance sweep, attenuation sweep, batch-size study
//! and trilateration Monte-Carlo, plus their CSV outputs.

mod config;
mod runs;
mod sim;

use thiserror::Error;

pub use config::{
    AttenuationSweepParams, BaseDelayEntry, BatchStudyParams, CampaignConfig, DelayOverrides,
    DistanceSweepParams, ModelConfig, NoiseEntry, OneOrMany, OutputConfig, ScenarioKind,
    TrilaterationParams,
};
pub use runs::{
    linear_fit, run_attenuation_sweep, run_batch_study, run_distance_sweep, run_scenario,
    run_trilateration, AttenuationPoint, AttenuationSweep, BatchRow, BatchStudy, BudgetRow,
    DistancePoint, DistanceSweep, MeasurementRecord, RunReport, Trial, Trilateration,
};
pub use sim::{simulate, stream_seed, Bench, CellData, CellSpec};

use crate::estimation::EstimationError;
use crate::localization::LocalizationError;
use crate::ranging_protocol::ProtocolError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{context}: {source}")]
    Protocol { context: String, source: ProtocolError },
    #[error("{context}: {source}")]
    Estimation { context: String, source: EstimationError },
    #[error("{context}: {source}")]
    Localization { context: String, source: LocalizationError },
}

impl ScenarioError {
    pub(crate) fn protocol(context: impl Into<String>) -> impl FnOnce(ProtocolError) -> Self {
        let context = context.into();
        move |source| Self::Protocol { context, source }
    }

    pub(crate) fn estimation(context: impl Into<String>) -> impl FnOnce(EstimationError) -> Self {
        let context = context.into();
        move |source| Self::Estimation { context, source }
    }

    pub(crate) fn localization(context: impl Into<String>) -> impl FnOnce(LocalizationError) -> Self {
        let context = context.into();
        move |source| Self::Localization { context, source }
    }
}

impl From<csv::Error> for ScenarioError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<std::io::Error> for ScenarioError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
