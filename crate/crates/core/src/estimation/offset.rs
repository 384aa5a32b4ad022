use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use super::stats::corrected_std;
use super::EstimationError;
use crate::node_sim::{ClockModel, Environment, ExpCurve, MIN_ATTENUATION_DB};
use crate::rf_channel::Medium;

/// Reference attenuation of fitted offset curves, dB.
pub const FIT_A_REF: f64 = MIN_ATTENUATION_DB;

const MAX_FIT_ITERATIONS: usize = 200;

/// Round-trip metres represented by one counter cycle, at the reference
/// environment of `clock`.
pub fn meters_per_cycle(medium: &Medium, clock: &ClockModel) -> f64 {
    let env = Environment { temperature: clock.reference_temp, voltage: clock.reference_voltage };
    medium.velocity() / clock.effective_hz(&env)
}

/// One-way distance covered by a round-trip signal time of `t_signal` cycles.
pub fn cycles_to_distance(t_signal: f64, medium: &Medium, clock: &ClockModel) -> f64 {
    t_signal * meters_per_cycle(medium, clock) / 2.0
}

pub fn distance_to_cycles(distance: f64, medium: &Medium, clock: &ClockModel) -> f64 {
    2.0 * distance / meters_per_cycle(medium, clock)
}

/// Result of fitting `a + b * exp(k * (A - a_ref))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFit {
    pub curve: ExpCurve,
    /// Root-mean-square residual, cycles.
    pub rms: f64,
    pub iterations: usize,
}

impl ExpFit {
    pub fn eval(&self, attenuation: f64) -> f64 {
        self.curve.eval(attenuation)
    }

    pub fn is_increasing(&self) -> bool {
        self.curve.b * self.curve.k > 0.0
    }
}

/// Constant delay the pipeline subtracts from corrected round trips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetModel {
    /// cycles
    pub reference_offset: f64,
    pub atten_fit: Option<ExpFit>,
    /// m
    pub calibration_distance: f64,
    /// dB
    pub calibration_attenuation: f64,
    pub meters_per_cycle: f64,
}

impl OffsetModel {
    /// Offset at `attenuation`: the reference value, moved along the fitted
    /// curve when one is attached.
    pub fn offset_at(&self, attenuation: f64) -> f64 {
        match &self.atten_fit {
            Some(f) => self.reference_offset + f.eval(attenuation) - f.eval(self.calibration_attenuation),
            None => self.reference_offset,
        }
    }

    pub fn with_fit(self, fit: ExpFit, calibration_attenuation: f64) -> Self {
        Self { atten_fit: Some(fit), calibration_attenuation, ..self }
    }

    pub fn t_signal(&self, corrected_rtt: f64, attenuation: f64) -> f64 {
        corrected_rtt - self.offset_at(attenuation)
    }

    pub fn distance(&self, corrected_rtt: f64, attenuation: f64) -> f64 {
        self.t_signal(corrected_rtt, attenuation) * self.meters_per_cycle / 2.0
    }
}

/// Offset from cleaned records taken at a known distance.
pub fn calibrate_offset(
    reference_records: &[f64],
    reference_distance: f64,
    medium: &Medium,
    clock: &ClockModel,
) -> Result<OffsetModel, EstimationError> {
    if reference_records.is_empty() {
        return Err(EstimationError::EmptyAfterCleaning);
    }
    let mean = reference_records.iter().sum::<f64>() / reference_records.len() as f64;
    Ok(OffsetModel {
        reference_offset: mean - distance_to_cycles(reference_distance, medium, clock),
        atten_fit: None,
        calibration_distance: reference_distance,
        calibration_attenuation: FIT_A_REF,
        meters_per_cycle: meters_per_cycle(medium, clock),
    })
}

/// Distance estimate from one batch of cleaned corrected round trips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceEstimate {
    /// m
    pub distance: f64,
    /// Scatter of the batch mean, m.
    pub sigma: f64,
    pub n: usize,
}

pub fn estimate_distance(
    records: &[f64],
    model: &OffsetModel,
    attenuation: f64,
) -> Result<DistanceEstimate, EstimationError> {
    if records.is_empty() {
        return Err(EstimationError::EmptyAfterCleaning);
    }
    let n = records.len();
    let mean = records.iter().sum::<f64>() / n as f64;
    let sigma_cycles = corrected_std(records) / (n as f64).sqrt();
    Ok(DistanceEstimate {
        distance: model.distance(mean, attenuation),
        sigma: sigma_cycles * model.meters_per_cycle / 2.0,
        n,
    })
}

fn residual_sum(points: &[(f64, f64)], p: &Vector3<f64>) -> f64 {
    points
        .iter()
        .map(|&(x, y)| {
            let r = p[0] + p[1] * (p[2] * (x - FIT_A_REF)).exp() - y;
            r * r
        })
        .sum()
}

/// Best (a, b) for fixed k, with its residual sum of squares.
fn linear_part(points: &[(f64, f64)], k: f64) -> Option<(Vector3<f64>, f64)> {
    let mut ata = Matrix2::zeros();
    let mut aty = Vector2::zeros();
    for &(x, y) in points {
        let e = (k * (x - FIT_A_REF)).exp();
        let row = Vector2::new(1.0, e);
        ata += row * row.transpose();
        aty += row * y;
    }
    let ab = ata.try_inverse()? * aty;
    let p = Vector3::new(ab[0], ab[1], k);
    Some((p, residual_sum(points, &p)))
}

/// Least-squares fit of `offset(A) = a + b * exp(k * (A - 36 dB))`.
///
/// k is seeded from a coarse scan (a and b are linear for fixed k), then all
/// three parameters are refined by Gauss-Newton with Levenberg damping.
pub fn fit_attenuation_offset(points: &[(f64, f64)]) -> Result<ExpFit, EstimationError> {
    if points.len() < 4 {
        return Err(EstimationError::TooFewPoints(points.len()));
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)));
    if hi - lo < 20.0 {
        return Err(EstimationError::Domain("attenuation points must span at least 20 dB"));
    }
    let n = points.len() as f64;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let y_spread = points.iter().map(|p| (p.1 - y_mean).abs()).fold(0.0, f64::max);
    let flat = |iterations| ExpFit {
        curve: ExpCurve { a: y_mean, b: 0.0, k: 0.0, a_ref: FIT_A_REF },
        rms: (points.iter().map(|p| (p.1 - y_mean).powi(2)).sum::<f64>() / n).sqrt(),
        iterations,
    };
    if y_spread <= 1e-12 * (1.0 + y_mean.abs()) {
        return Ok(flat(0));
    }

    // k range that keeps exp() finite over the span
    let k_max = (300.0 / (hi - FIT_A_REF).abs().max((lo - FIT_A_REF).abs())).min(2.0);
    let steps = 400;
    let mut best: Option<(Vector3<f64>, f64)> = None;
    for i in 0..=steps {
        let k = -k_max + 2.0 * k_max * i as f64 / steps as f64;
        if k == 0.0 {
            continue;
        }
        if let Some(c) = linear_part(points, k) {
            if best.as_ref().is_none_or(|b| c.1 < b.1) {
                best = Some(c);
            }
        }
    }
    let Some((mut p, mut rss)) = best else {
        return Ok(flat(0));
    };

    let mut lambda = 1e-3;
    for iteration in 1..=MAX_FIT_ITERATIONS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for &(x, y) in points {
            let e = (p[2] * (x - FIT_A_REF)).exp();
            let r = p[0] + p[1] * e - y;
            let j = Vector3::new(1.0, e, p[1] * (x - FIT_A_REF) * e);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        if jtr.norm() <= 1e-14 * (1.0 + rss.sqrt()) * jtj.diagonal().norm().sqrt() {
            return Ok(finish(p, rss, n, iteration));
        }
        loop {
            let mut damped = jtj;
            for d in 0..3 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let step = damped.lu().solve(&(-jtr));
            let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    return Ok(finish(p, rss, n, iteration));
                }
                continue;
            };
            let candidate = p + step;
            let new_rss = residual_sum(points, &candidate);
            if new_rss.is_finite() && new_rss <= rss {
                let converged = step.norm() <= 1e-12 * (p.norm() + 1e-12)
                    || rss - new_rss <= 1e-15 * rss.max(f64::MIN_POSITIVE);
                p = candidate;
                rss = new_rss;
                lambda = (lambda / 10.0).max(1e-12);
                if converged {
                    return Ok(finish(p, rss, n, iteration));
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // no downhill step left: at the minimum to working precision
                return Ok(finish(p, rss, n, iteration));
            }
        }
    }
    Err(EstimationError::FitDiverged { iterations: MAX_FIT_ITERATIONS })
}

fn finish(p: Vector3<f64>, rss: f64, n: f64, iterations: usize) -> ExpFit {
    ExpFit {
        curve: ExpCurve { a: p[0], b: p[1], k: p[2], a_ref: FIT_A_REF },
        rms: (rss / n).sqrt(),
        iterations,
    }
}
