use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{CampaignConfig, ScenarioKind};
use super::sim::{simulate, stream_seed, Bench, CellData, CellSpec};
use super::ScenarioError;
use crate::estimation::{
    batch_stats, calibrate_offset, clean_rtt, distance_to_cycles, estimate_distance,
    fit_attenuation_offset, meters_per_cycle, ExpFit, OffsetModel,
};
use crate::localization::{gdop, plan_budget, trilaterate, Anchor, Dimension, RangeObservation};
use crate::node_sim::{DataRate, RfSettings};
use crate::ranging_protocol::{corrected_rtt, Channel, RoundTrip};
use crate::rf_channel::Medium;

// Stream bases keep the scenarios' random streams apart.
const BATCH_STREAM: u64 = 0x1000;
const DISTANCE_STREAM: u64 = 0x2000;
const ATTENUATION_STREAM: u64 = 0x3000;
const TRILAT_STREAM: u64 = 0x4000;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

fn cleaned_cycles(cfg: &CampaignConfig, data: &CellData, context: &str) -> Result<Vec<f64>, ScenarioError> {
    let c = clean_rtt(&data.corrected, &cfg.cleaning).map_err(ScenarioError::estimation(context))?;
    Ok(c.values.into_iter().map(|v| v as f64).collect())
}

fn rate_index(rate: DataRate) -> u64 {
    DataRate::ALL.iter().position(|r| *r == rate).unwrap_or(0) as u64
}

fn label(settings: &RfSettings) -> String {
    settings.to_string()
}

// ---------------------------------------------------------------- batch size

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub settings: RfSettings,
    pub samples: usize,
    pub rejected: usize,
    /// Corrected single-shot scatter, m.
    pub sigma_1_m: f64,
    /// (batch size, σ_N in m)
    pub cells: Vec<(usize, f64)>,
}

impl BatchRow {
    pub fn sigma_at(&self, n: usize) -> Option<f64> {
        self.cells.iter().find(|c| c.0 == n).map(|c| c.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStudy {
    pub rows: Vec<BatchRow>,
}

impl BatchStudy {
    pub fn row(&self, settings: &RfSettings) -> Option<&BatchRow> {
        self.rows.iter().find(|r| r.settings == *settings)
    }
}

/// Table of batch-mean scatter per setting and batch size, in metres of
/// cable. Settings with the same data rate share one random stream, so rows
/// differ only through the model.
pub fn run_batch_study(cfg: &CampaignConfig) -> Result<BatchStudy, ScenarioError> {
    let bench = Bench::from_config(cfg);
    let p = &cfg.batch_size_study;
    let channel = Channel::cable_at(p.distance, p.attenuation_db);
    let mpc = meters_per_cycle(&Medium::coax(), &bench.master_clock);
    let rows = cfg
        .settings_for(ScenarioKind::BatchSizeStudy)
        .into_par_iter()
        .map(|settings| {
            let context = format!("batch_size_study {settings}");
            let total = cfg.batch_samples(settings.data_rate);
            let spec = CellSpec::samples(settings, channel, total, p.round_size);
            let seed = stream_seed(cfg.seed, BATCH_STREAM + rate_index(settings.data_rate));
            let data = simulate(&bench, &spec, seed).map_err(ScenarioError::protocol(&context))?;
            let cleaned = clean_rtt(&data.corrected, &cfg.cleaning)
                .map_err(ScenarioError::estimation(&context))?;
            let meters: Vec<f64> = cleaned.values.iter().map(|&c| c as f64 * mpc / 2.0).collect();
            let mut cells = Vec::new();
            let mut sigma_1_m = 0.0;
            for &n in &p.batch_sizes {
                if n > meters.len() {
                    continue;
                }
                let s = batch_stats(&meters, n).map_err(ScenarioError::estimation(&context))?;
                sigma_1_m = s.std_dev;
                cells.push((n, s.std_of_means));
            }
            Ok(BatchRow { settings, samples: total, rejected: cleaned.rejected, sigma_1_m, cells })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    Ok(BatchStudy { rows })
}

#[derive(Serialize)]
struct Table1Line {
    setting: String,
    modulation: &'static str,
    frequency_mhz: u32,
    data_rate_kbps: f64,
    batch_size: usize,
    sigma_means_m: f64,
    duration_ms: f64,
}

fn write_table1(study: &BatchStudy, path: &Path) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &study.rows {
        let single_ms = row.settings.data_rate.measurement_duration() * 1e3;
        for &(n, sigma) in &row.cells {
            w.serialize(Table1Line {
                setting: label(&row.settings),
                modulation: row.settings.modulation.label(),
                frequency_mhz: row.settings.frequency.mhz(),
                data_rate_kbps: row.settings.data_rate.kbps(),
                batch_size: n,
                sigma_means_m: sigma,
                duration_ms: n as f64 * single_ms,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

// ------------------------------------------------------------ distance sweep

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistancePoint {
    /// m
    pub distance: f64,
    /// Mean corrected RTT minus the calibrated offset, cycles.
    pub mean_cycles_normalized: f64,
    /// Scatter of round means, cycles.
    pub sigma_means_cycles: f64,
    /// Distance estimated from the normalized mean, m.
    pub estimate: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSweep {
    pub settings: RfSettings,
    pub model: OffsetModel,
    pub points: Vec<DistancePoint>,
    /// cycles per metre
    pub slope: f64,
    /// cycles
    pub intercept: f64,
    pub records: Vec<MeasurementRecord>,
}

/// One round trip as written to `records.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementRecord {
    pub setting: String,
    pub distance_m: f64,
    pub attenuation_db: f64,
    pub index: usize,
    pub t0: u32,
    pub t1: u32,
    pub t2: u32,
    pub t3: u32,
    pub latency_cycles: u32,
    pub corrected_rtt: i64,
    pub master_rssi: i8,
    pub slave_rssi: i8,
}

impl MeasurementRecord {
    pub fn new(rt: &RoundTrip, distance_m: f64, attenuation_db: f64, index: usize) -> Self {
        Self {
            setting: label(&rt.settings),
            distance_m,
            attenuation_db,
            index,
            t0: rt.t0,
            t1: rt.t1,
            t2: rt.t2,
            t3: rt.t3,
            latency_cycles: rt.latency_cycles,
            corrected_rtt: corrected_rtt(rt),
            master_rssi: rt.master_rssi,
            slave_rssi: rt.slave_rssi,
        }
    }
}

pub fn run_distance_sweep(cfg: &CampaignConfig) -> Result<Vec<DistanceSweep>, ScenarioError> {
    let bench = Bench::from_config(cfg);
    let p = &cfg.distance_sweep;
    let round_size = cfg.sweep_round_size(p.round_size);
    let medium = Medium::coax();
    let mut distances = p.distances.clone();
    if !distances.contains(&p.calibration_distance) {
        distances.push(p.calibration_distance);
    }
    cfg.settings_for(ScenarioKind::DistanceSweep)
        .into_iter()
        .enumerate()
        .map(|(si, settings)| {
            let cells = distances
                .par_iter()
                .enumerate()
                .map(|(di, &d)| {
                    let context = format!("distance_sweep {settings} at {d} m");
                    let spec = CellSpec {
                        keep_records: cfg.output.records,
                        ..CellSpec::new(settings, Channel::cable_at(d, p.attenuation_db), p.rounds, round_size)
                    };
                    let seed = stream_seed(cfg.seed, DISTANCE_STREAM + (si as u64) * 256 + di as u64);
                    let data = simulate(&bench, &spec, seed).map_err(ScenarioError::protocol(&context))?;
                    let values = cleaned_cycles(cfg, &data, &context)?;
                    Ok((d, values, data.records))
                })
                .collect::<Result<Vec<_>, ScenarioError>>()?;

            let reference = cells
                .iter()
                .find(|c| c.0 == p.calibration_distance)
                .expect("calibration cell present");
            let model = calibrate_offset(&reference.1, p.calibration_distance, &medium, &bench.master_clock)
                .map_err(ScenarioError::estimation(format!("distance_sweep {settings} calibration")))?;

            let mut points = Vec::new();
            let mut records = Vec::new();
            for (d, values, recs) in cells.iter().take(p.distances.len()) {
                let context = format!("distance_sweep {settings} at {d} m");
                let stats = batch_stats(values, round_size.min(values.len()))
                    .map_err(ScenarioError::estimation(&context))?;
                let normalized = model.t_signal(mean(values), p.attenuation_db);
                points.push(DistancePoint {
                    distance: *d,
                    mean_cycles_normalized: normalized,
                    sigma_means_cycles: stats.std_of_means,
                    estimate: model.distance(mean(values), p.attenuation_db),
                    samples: values.len(),
                });
                records.extend(
                    recs.iter().enumerate().map(|(i, rt)| MeasurementRecord::new(rt, *d, p.attenuation_db, i)),
                );
            }
            let xy: Vec<(f64, f64)> = points.iter().map(|pt| (pt.distance, pt.mean_cycles_normalized)).collect();
            let (slope, intercept) = linear_fit(&xy);
            Ok(DistanceSweep { settings, model, points, slope, intercept, records })
        })
        .collect()
}

#[derive(Serialize)]
struct DistanceLine {
    distance_m: f64,
    mean_cycles_normalized: f64,
    sigma_means_cycles: f64,
}

fn write_distance_sweep(sweep: &DistanceSweep, path: &Path) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    for p in &sweep.points {
        w.serialize(DistanceLine {
            distance_m: p.distance,
            mean_cycles_normalized: p.mean_cycles_normalized,
            sigma_means_cycles: p.sigma_means_cycles,
        })?;
    }
    w.flush()?;
    Ok(())
}

// --------------------------------------------------------- attenuation sweep

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationPoint {
    /// dB
    pub attenuation: f64,
    /// Mean corrected RTT minus the cable's flight time, cycles.
    pub offset_cycles: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationSweep {
    pub settings: RfSettings,
    pub points: Vec<AttenuationPoint>,
    pub fit: ExpFit,
}

pub fn run_attenuation_sweep(cfg: &CampaignConfig) -> Result<Vec<AttenuationSweep>, ScenarioError> {
    let bench = Bench::from_config(cfg);
    let p = &cfg.attenuation_sweep;
    let round_size = cfg.sweep_round_size(p.round_size);
    let flight = distance_to_cycles(p.distance, &Medium::coax(), &bench.master_clock);
    cfg.settings_for(ScenarioKind::AttenuationSweep)
        .into_iter()
        .enumerate()
        .map(|(si, settings)| {
            let points = p
                .points()
                .into_par_iter()
                .enumerate()
                .map(|(ai, a)| {
                    let context = format!("attenuation_sweep {settings} at {a} dB");
                    let spec = CellSpec::new(settings, Channel::cable_at(p.distance, a), p.rounds, round_size);
                    let seed = stream_seed(cfg.seed, ATTENUATION_STREAM + (si as u64) * 256 + ai as u64);
                    let data = simulate(&bench, &spec, seed).map_err(ScenarioError::protocol(&context))?;
                    let values = cleaned_cycles(cfg, &data, &context)?;
                    Ok(AttenuationPoint { attenuation: a, offset_cycles: mean(&values) - flight, samples: values.len() })
                })
                .collect::<Result<Vec<_>, ScenarioError>>()?;
            let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.attenuation, p.offset_cycles)).collect();
            let fit = fit_attenuation_offset(&xy)
                .map_err(ScenarioError::estimation(format!("attenuation_sweep {settings} fit")))?;
            Ok(AttenuationSweep { settings, points, fit })
        })
        .collect()
}

#[derive(Serialize)]
struct AttenuationLine {
    attenuation_db: f64,
    offset_cycles: f64,
    fit_a: Option<f64>,
    fit_b: Option<f64>,
    fit_k: Option<f64>,
}

fn write_attenuation_sweep(sweep: &AttenuationSweep, path: &Path) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    let last = sweep.points.len().saturating_sub(1);
    for (i, p) in sweep.points.iter().enumerate() {
        let c = (i == last).then_some(sweep.fit.curve);
        w.serialize(AttenuationLine {
            attenuation_db: p.attenuation,
            offset_cycles: p.offset_cycles,
            fit_a: c.map(|c| c.a),
            fit_b: c.map(|c| c.b),
            fit_k: c.map(|c| c.k),
        })?;
    }
    w.flush()?;
    Ok(())
}

// ------------------------------------------------------------- trilateration

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trial {
    pub trial: usize,
    pub true_x: f64,
    pub true_y: f64,
    pub true_z: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_z: f64,
    pub error_m: f64,
    pub gdop: f64,
    /// RMS of the per-anchor batch-mean scatter, m.
    pub sigma_m: f64,
    /// 3 * gdop * sigma_m
    pub bound_m: f64,
    pub within: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetRow {
    pub sigma_1_m: f64,
    pub target_m: f64,
    pub anchors: usize,
    pub single_ms: f64,
    pub samples_per_anchor: usize,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trilateration {
    pub settings: RfSettings,
    pub model: OffsetModel,
    pub trials: Vec<Trial>,
    pub budgets: Vec<BudgetRow>,
}

impl Trilateration {
    pub fn pass_fraction(&self) -> f64 {
        self.trials.iter().filter(|t| t.within).count() as f64 / self.trials.len() as f64
    }
}

/// Over-the-air link of `distance` whose attenuator tops the free-space loss
/// up to `total_db` (or adds nothing when free space alone exceeds it).
fn air_link(distance: f64, total_db: f64, settings: &RfSettings) -> Result<Channel, ScenarioError> {
    let bare = Channel::air(distance, 0.0);
    let fspl = bare
        .attenuation(settings)
        .map_err(ScenarioError::protocol(format!("air link at {distance} m")))?;
    Ok(Channel::air(distance, (total_db - fspl).max(0.0)))
}

fn dimension(anchors: &[Anchor]) -> Dimension {
    let z = anchors[0].position[2];
    if anchors.iter().all(|a| (a.position[2] - z).abs() < 1e-9) {
        Dimension::Planar
    } else {
        Dimension::Spatial
    }
}

pub fn run_trilateration(cfg: &CampaignConfig) -> Result<Trilateration, ScenarioError> {
    let bench = Bench::from_config(cfg);
    let p = &cfg.trilateration;
    let settings = cfg.settings_for(ScenarioKind::Trilateration)[0];
    let medium = Medium::air();
    let a = p.attenuation_db;

    let cal_spec = CellSpec::samples(settings, air_link(p.calibration_distance, a, &settings)?, p.calibration_samples, 1000);
    let cal = simulate(&bench, &cal_spec, stream_seed(cfg.seed, TRILAT_STREAM))
        .map_err(ScenarioError::protocol("trilateration calibration"))?;
    let cal_values = cleaned_cycles(cfg, &cal, "trilateration calibration")?;
    let model = calibrate_offset(&cal_values, p.calibration_distance, &medium, &bench.master_clock)
        .map_err(ScenarioError::estimation("trilateration calibration"))?;

    let dim = dimension(&p.anchors);
    let lo = |axis: usize| p.anchors.iter().map(|an| an.position[axis]).fold(f64::INFINITY, f64::min);
    let hi = |axis: usize| p.anchors.iter().map(|an| an.position[axis]).fold(f64::NEG_INFINITY, f64::max);
    let span = |axis: usize| {
        let (l, h) = (lo(axis) + p.margin, hi(axis) - p.margin);
        if l < h { (l, h) } else { ((lo(axis) + hi(axis)) / 2.0, (lo(axis) + hi(axis)) / 2.0) }
    };
    let ranges = [span(0), span(1), span(2)];

    let trials = (0..cfg.trilateration_trials())
        .into_par_iter()
        .map(|trial| {
            let context = format!("trilateration trial {trial}");
            let trial_seed = stream_seed(cfg.seed, TRILAT_STREAM + 1 + trial as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            let mut truth = [0.0; 3];
            for (axis, (l, h)) in ranges.iter().enumerate() {
                truth[axis] = if h > l { rng.random_range(*l..*h) } else { *l };
            }
            if dim == Dimension::Planar {
                truth[2] = p.anchors[0].position[2];
            }
            let mut obs = Vec::with_capacity(p.anchors.len());
            for (j, anchor) in p.anchors.iter().enumerate() {
                let d = (0..3).map(|i| (truth[i] - anchor.position[i]).powi(2)).sum::<f64>().sqrt();
                let spec = CellSpec::new(settings, air_link(d, a, &settings)?, 1, p.batch_size);
                let data = simulate(&bench, &spec, stream_seed(trial_seed, j as u64))
                    .map_err(ScenarioError::protocol(&context))?;
                let values = cleaned_cycles(cfg, &data, &context)?;
                let est = estimate_distance(&values, &model, a).map_err(ScenarioError::estimation(&context))?;
                obs.push(RangeObservation {
                    anchor_id: anchor.id,
                    distance: est.distance.max(0.0),
                    sigma: est.sigma.max(1e-6),
                    n_samples: est.n,
                });
            }
            let fix = trilaterate(&obs, &p.anchors, dim).map_err(ScenarioError::localization(&context))?;
            let g = gdop(truth, &p.anchors, dim).map_err(ScenarioError::localization(&context))?;
            let sigma_m = (obs.iter().map(|o| o.sigma * o.sigma).sum::<f64>() / obs.len() as f64).sqrt();
            let error_m = fix.error_to(truth);
            let bound_m = 3.0 * g * sigma_m;
            Ok(Trial {
                trial,
                true_x: truth[0],
                true_y: truth[1],
                true_z: truth[2],
                est_x: fix.position[0],
                est_y: fix.position[1],
                est_z: fix.position[2],
                error_m,
                gdop: g,
                sigma_m,
                bound_m,
                within: error_m < bound_m,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;

    let single_ms = settings.data_rate.measurement_duration() * 1e3;
    let budgets = p
        .budget_targets
        .iter()
        .map(|&t| {
            let b = plan_budget(p.budget_sigma_1, t, single_ms, p.anchors.len())
                .map_err(ScenarioError::localization("trilateration budget"))?;
            Ok(BudgetRow {
                sigma_1_m: p.budget_sigma_1,
                target_m: t,
                anchors: p.anchors.len(),
                single_ms,
                samples_per_anchor: b.n,
                total_ms: b.total_ms,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;

    Ok(Trilateration { settings, model, trials, budgets })
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

// ------------------------------------------------------------------- driver

#[derive(Debug, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    /// One human-readable line per scenario outcome.
    pub summary: Vec<String>,
    pub errors: Vec<(ScenarioKind, ScenarioError)>,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

fn file_name(stem: &str, settings: &RfSettings, many: bool) -> String {
    if many {
        format!("{stem}-{}.csv", label(settings))
    } else {
        format!("{stem}.csv")
    }
}

fn run_one(cfg: &CampaignConfig, kind: ScenarioKind, out: &Path, report: &mut RunReport) -> Result<(), ScenarioError> {
    match kind {
        ScenarioKind::BatchSizeStudy => {
            let study = run_batch_study(cfg)?;
            let path = out.join("table1.csv");
            write_table1(&study, &path)?;
            report.files.push(path);
            for row in &study.rows {
                report.summary.push(format!(
                    "batch_size_study {}: sigma_1 = {:.2} m over {} samples",
                    row.settings, row.sigma_1_m, row.samples
                ));
            }
        }
        ScenarioKind::DistanceSweep => {
            let sweeps = run_distance_sweep(cfg)?;
            let many = sweeps.len() > 1;
            let mut records = Vec::new();
            for s in &sweeps {
                let path = out.join(file_name("distance_sweep", &s.settings, many));
                write_distance_sweep(s, &path)?;
                report.files.push(path);
                report.summary.push(format!(
                    "distance_sweep {}: slope {:.4} cycles/m, intercept {:.4} cycles",
                    s.settings, s.slope, s.intercept
                ));
                records.extend(s.records.iter().cloned());
            }
            if cfg.output.records {
                let path = out.join("records.csv");
                write_rows(&records, &path)?;
                report.files.push(path);
            }
        }
        ScenarioKind::AttenuationSweep => {
            let sweeps = run_attenuation_sweep(cfg)?;
            let many = sweeps.len() > 1;
            for s in &sweeps {
                let path = out.join(file_name("attenuation_sweep", &s.settings, many));
                write_attenuation_sweep(s, &path)?;
                report.files.push(path);
                let c = s.fit.curve;
                report.summary.push(format!(
                    "attenuation_sweep {}: offset = {:.3} + {:.3} exp({:.4} (A - {})) cycles, rms {:.3}",
                    s.settings, c.a, c.b, c.k, c.a_ref, s.fit.rms
                ));
            }
        }
        ScenarioKind::Trilateration => {
            let t = run_trilateration(cfg)?;
            let path = out.join("trilateration.csv");
            write_rows(&t.trials, &path)?;
            report.files.push(path);
            let path = out.join("budget.csv");
            write_rows(&t.budgets, &path)?;
            report.files.push(path);
            report.summary.push(format!(
                "trilateration {}: {:.1} % of {} fixes within 3 GDOP sigma",
                t.settings,
                100.0 * t.pass_fraction(),
                t.trials.len()
            ));
        }
    }
    Ok(())
}

/// Runs every configured scenario and writes its CSVs into `out`. Scenario
/// failures are collected, not fatal to the others.
pub fn run_scenario(cfg: &CampaignConfig, out: &Path) -> Result<RunReport, ScenarioError> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| ScenarioError::Io(format!("{}: {e}", out.display())))?;
    let mut report = RunReport::default();
    for kind in cfg.scenarios() {
        if let Err(e) = run_one(cfg, kind, out, &mut report) {
            report.errors.push((kind, e));
        }
    }
    Ok(report)
}
