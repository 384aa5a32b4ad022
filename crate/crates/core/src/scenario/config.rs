//! Campaign configuration file (TOML). Unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::estimation::CleaningPolicy;
use crate::localization::Anchor;
use crate::node_sim::{
    AnalogDelayModel, ClockModel, DataRate, Environment, ExpCurve, Frequency, Modulation,
    RfSettings, RssiModel,
};
use crate::ranging_protocol::ProtocolConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    DistanceSweep,
    AttenuationSweep,
    BatchSizeStudy,
    Trilateration,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::DistanceSweep => "distance_sweep",
            Self::AttenuationSweep => "attenuation_sweep",
            Self::BatchSizeStudy => "batch_size_study",
            Self::Trilateration => "trilateration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(ScenarioKind),
    Many(Vec<ScenarioKind>),
}

impl OneOrMany {
    pub fn to_vec(&self) -> Vec<ScenarioKind> {
        match self {
            Self::One(k) => vec![*k],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    #[serde(alias = "scenarios")]
    pub scenario: OneOrMany,
    /// Paper-scale sample counts instead of the desk-scale defaults.
    #[serde(default)]
    pub full_scale: bool,
    /// RF settings to run; each scenario has its own default when absent.
    #[serde(default)]
    pub settings: Option<Vec<RfSettings>>,
    #[serde(default)]
    pub distance_sweep: DistanceSweepParams,
    #[serde(default)]
    pub attenuation_sweep: AttenuationSweepParams,
    #[serde(default)]
    pub batch_size_study: BatchStudyParams,
    #[serde(default)]
    pub trilateration: TrilaterationParams,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub cleaning: CleaningPolicy,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceSweepParams {
    /// Cable lengths, m.
    pub distances: Vec<f64>,
    pub calibration_distance: f64,
    /// Total path attenuation, held constant by the attenuator array, dB.
    pub attenuation_db: f64,
    pub rounds: usize,
    /// Measurements per round; defaults to 100 (desk) or 1000 (full).
    pub round_size: Option<usize>,
}

impl Default for DistanceSweepParams {
    fn default() -> Self {
        Self {
            distances: vec![2.0, 13.0, 23.0, 33.0, 43.0],
            calibration_distance: 2.0,
            attenuation_db: 60.0,
            rounds: 25,
            round_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttenuationSweepParams {
    pub start_db: f64,
    pub stop_db: f64,
    pub step_db: f64,
    /// Cable length, m.
    pub distance: f64,
    pub rounds: usize,
    pub round_size: Option<usize>,
}

impl Default for AttenuationSweepParams {
    fn default() -> Self {
        Self { start_db: 36.0, stop_db: 81.0, step_db: 1.0, distance: 18.0, rounds: 25, round_size: None }
    }
}

impl AttenuationSweepParams {
    pub fn points(&self) -> Vec<f64> {
        let steps = ((self.stop_db - self.start_db) / self.step_db + 1e-9).floor() as usize;
        (0..=steps).map(|i| self.start_db + i as f64 * self.step_db).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchStudyParams {
    pub batch_sizes: Vec<usize>,
    pub distance: f64,
    pub attenuation_db: f64,
    /// Samples per setting at 250 and 38.4 kb/s; 30 000 desk, 300 000 full.
    pub samples: Option<usize>,
    /// Samples per setting at 1.2 kb/s; 5 000 desk, 50 000 full.
    pub slow_samples: Option<usize>,
    pub round_size: usize,
}

impl Default for BatchStudyParams {
    fn default() -> Self {
        Self {
            batch_sizes: vec![1, 20, 50, 100, 200, 500, 1000, 2000, 5000],
            distance: 18.0,
            attenuation_db: 60.0,
            samples: None,
            slow_samples: None,
            round_size: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrilaterationParams {
    pub anchors: Vec<Anchor>,
    /// Monte-Carlo trials; 100 desk, 1000 full.
    pub trials: Option<usize>,
    /// Round trips per anchor and trial.
    pub batch_size: usize,
    pub attenuation_db: f64,
    pub calibration_distance: f64,
    pub calibration_samples: usize,
    /// Targets are drawn this far inside the anchors' bounding box, m.
    pub margin: f64,
    /// Single-shot scatter for the budget table, m.
    pub budget_sigma_1: f64,
    /// Accuracy goals for the budget table, m.
    pub budget_targets: Vec<f64>,
}

impl Default for TrilaterationParams {
    fn default() -> Self {
        let square = [[0.0, 0.0], [20.0, 0.0], [20.0, 20.0], [0.0, 20.0]];
        Self {
            anchors: square
                .iter()
                .enumerate()
                .map(|(i, p)| Anchor { id: 0x10 + i as u16, position: [p[0], p[1], 0.0] })
                .collect(),
            trials: None,
            batch_size: 200,
            attenuation_db: 60.0,
            calibration_distance: 2.0,
            calibration_samples: 20_000,
            margin: 2.0,
            budget_sigma_1: 6.09,
            budget_targets: vec![0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseDelayEntry {
    pub frequency: Frequency,
    pub modulation: Modulation,
    pub data_rate: DataRate,
    /// s
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEntry {
    pub modulation: Modulation,
    pub data_rate: DataRate,
    /// One-sigma hop jitter, s.
    pub seconds: f64,
}

/// Changes applied on top of the default delay tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayOverrides {
    pub base: Vec<BaseDelayEntry>,
    pub noise: Vec<NoiseEntry>,
    pub atten: Option<ExpCurve>,
    pub temp_slope: Option<f64>,
    pub voltage_slope: Option<f64>,
    pub tx_split: Option<f64>,
}

impl DelayOverrides {
    pub fn apply(&self, mut m: AnalogDelayModel) -> AnalogDelayModel {
        for e in &self.base {
            m.base_delay.insert((e.frequency, e.modulation, e.data_rate), e.seconds);
        }
        for e in &self.noise {
            m.noise_sigma.insert((e.modulation, e.data_rate), e.seconds);
        }
        if let Some(c) = self.atten {
            m.atten = c;
        }
        if let Some(v) = self.temp_slope {
            m.temp_slope = v;
        }
        if let Some(v) = self.voltage_slope {
            m.voltage_slope = v;
        }
        if let Some(v) = self.tx_split {
            m.tx_split = v;
        }
        m
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub master_clock: ClockModel,
    pub slave_clock: ClockModel,
    pub delay: DelayOverrides,
    pub rssi: RssiModel,
    pub environment: Environment,
    /// Probability that a frame is corrupted in transit.
    pub corruption_probability: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Also write every round trip of the distance sweep to `records.csv`.
    pub records: bool,
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Config(format!("{field}: {}", message.into()))
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            ScenarioError::Config(m) => ScenarioError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Minimal config running one scenario with all defaults.
    pub fn preset(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            seed,
            scenario: OneOrMany::One(kind),
            full_scale: false,
            settings: None,
            distance_sweep: DistanceSweepParams::default(),
            attenuation_sweep: AttenuationSweepParams::default(),
            batch_size_study: BatchStudyParams::default(),
            trilateration: TrilaterationParams::default(),
            protocol: ProtocolConfig::default(),
            cleaning: CleaningPolicy::default(),
            model: ModelConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn scenarios(&self) -> Vec<ScenarioKind> {
        self.scenario.to_vec()
    }

    pub fn delay_model(&self) -> AnalogDelayModel {
        self.model.delay.apply(AnalogDelayModel::default())
    }

    /// Settings for a scenario: the configured list, or its default.
    pub fn settings_for(&self, kind: ScenarioKind) -> Vec<RfSettings> {
        match (&self.settings, kind) {
            (Some(s), _) => s.clone(),
            (None, ScenarioKind::BatchSizeStudy) => RfSettings::table_rows(),
            (None, _) => vec![RfSettings::reference()],
        }
    }

    pub fn sweep_round_size(&self, configured: Option<usize>) -> usize {
        configured.unwrap_or(if self.full_scale { 1000 } else { 100 })
    }

    pub fn batch_samples(&self, rate: DataRate) -> usize {
        let p = &self.batch_size_study;
        match rate {
            DataRate::Kbps1_2 => p.slow_samples.unwrap_or(if self.full_scale { 50_000 } else { 5_000 }),
            _ => p.samples.unwrap_or(if self.full_scale { 300_000 } else { 30_000 }),
        }
    }

    pub fn trilateration_trials(&self) -> usize {
        self.trilateration.trials.unwrap_or(if self.full_scale { 1000 } else { 100 })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.scenarios().is_empty() {
            return Err(invalid("scenario", "at least one scenario is required"));
        }
        self.cleaning
            .validate()
            .map_err(|e| invalid("cleaning", e.to_string()))?;
        let delay = self.delay_model();
        for kind in self.scenarios() {
            for s in self.settings_for(kind) {
                delay.base(&s).map_err(|e| invalid("settings", e.to_string()))?;
                delay.sigma(&s).map_err(|e| invalid("settings", e.to_string()))?;
            }
        }
        for (i, e) in self.model.delay.base.iter().enumerate() {
            if !(e.seconds >= 0.0) {
                return Err(invalid(&format!("model.delay.base[{i}].seconds"), "must be >= 0"));
            }
        }
        for (i, e) in self.model.delay.noise.iter().enumerate() {
            if !(e.seconds >= 0.0) {
                return Err(invalid(&format!("model.delay.noise[{i}].seconds"), "must be >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.model.corruption_probability) {
            return Err(invalid("model.corruption_probability", "must lie in [0, 1]"));
        }
        if !(self.protocol.processing_time >= 0.0) {
            return Err(invalid("protocol.processing_time", "must be >= 0"));
        }
        let ds = &self.distance_sweep;
        if ds.distances.is_empty() || ds.distances.iter().any(|d| !(*d >= 0.0)) {
            return Err(invalid("distance_sweep.distances", "need non-negative distances"));
        }
        if ds.rounds == 0 || ds.round_size == Some(0) {
            return Err(invalid("distance_sweep.rounds", "must be at least 1"));
        }
        let at = &self.attenuation_sweep;
        if !(at.step_db > 0.0) || at.stop_db < at.start_db {
            return Err(invalid("attenuation_sweep", "need start_db <= stop_db and step_db > 0"));
        }
        if at.rounds == 0 || at.round_size == Some(0) {
            return Err(invalid("attenuation_sweep.rounds", "must be at least 1"));
        }
        let bs = &self.batch_size_study;
        if bs.batch_sizes.is_empty() || bs.batch_sizes.contains(&0) {
            return Err(invalid("batch_size_study.batch_sizes", "need sizes >= 1"));
        }
        if bs.round_size == 0 {
            return Err(invalid("batch_size_study.round_size", "must be at least 1"));
        }
        let max_batch = *bs.batch_sizes.iter().max().unwrap_or(&1);
        for rate in DataRate::ALL {
            if self.batch_samples(rate) < max_batch {
                return Err(invalid(
                    "batch_size_study.samples",
                    format!("fewer samples than the largest batch ({max_batch})"),
                ));
            }
        }
        let tr = &self.trilateration;
        if tr.anchors.len() < 3 {
            return Err(invalid("trilateration.anchors", "need at least 3 anchors"));
        }
        if tr.batch_size == 0 || tr.calibration_samples == 0 || tr.trials == Some(0) {
            return Err(invalid("trilateration", "batch_size, calibration_samples and trials must be >= 1"));
        }
        if tr.budget_targets.iter().any(|t| !(*t > 0.0)) || !(tr.budget_sigma_1 > 0.0) {
            return Err(invalid("trilateration.budget_targets", "must be positive"));
        }
        Ok(())
    }
}
