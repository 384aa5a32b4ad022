//! Position from per-anchor ranges, and measurement budgets per accuracy goal.

use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

use crate::estimation::{required_samples, EstimationError};
use crate::rf_channel::{friis_distance, ChannelError, LinkBudget};

/// Default one-sigma accuracy of an RSSI range, m.
pub const RSSI_SIGMA_M: f64 = 1.5;

const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizationError {
    #[error("anchor geometry is degenerate")]
    DegenerateGeometry,
    #[error("solver did not converge in {0} iterations")]
    NonConvergence(usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("no anchor with id {0}")]
    UnknownAnchor(u16),
    #[error("invalid observation: {0}")]
    BadObservation(&'static str),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub id: u16,
    /// m
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeObservation {
    pub anchor_id: u16,
    /// m
    pub distance: f64,
    /// m
    pub sigma: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Solve for x and y; z is taken from the anchors' plane.
    Planar,
    Spatial,
}

impl Dimension {
    fn dof(self) -> usize {
        match self {
            Self::Planar => 2,
            Self::Spatial => 3,
        }
    }

    pub fn min_anchors(self) -> usize {
        self.dof() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fix {
    pub position: [f64; 3],
    /// dof x dof, m².
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
}

impl Fix {
    pub fn error_to(&self, truth: [f64; 3]) -> f64 {
        (Vector3::from(self.position) - Vector3::from(truth)).norm()
    }
}

fn pos(a: &Anchor) -> Vector3<f64> {
    Vector3::from(a.position)
}

struct Row {
    anchor: Vector3<f64>,
    distance: f64,
    weight: f64,
}

fn rows(obs: &[RangeObservation], anchors: &[Anchor]) -> Result<Vec<Row>, LocalizationError> {
    obs.iter()
        .map(|o| {
            if !(o.sigma > 0.0) {
                return Err(LocalizationError::BadObservation("sigma must be positive"));
            }
            if !(o.distance >= 0.0) {
                return Err(LocalizationError::BadObservation("distance must be non-negative"));
            }
            let a = anchors
                .iter()
                .find(|a| a.id == o.anchor_id)
                .ok_or(LocalizationError::UnknownAnchor(o.anchor_id))?;
            Ok(Row { anchor: pos(a), distance: o.distance, weight: 1.0 / (o.sigma * o.sigma) })
        })
        .collect()
}

/// Rank check on the distinct anchor positions: at least a line (planar)
/// or a plane (spatial) must be spanned.
fn check_geometry(points: &[Vector3<f64>], dim: Dimension) -> Result<(), LocalizationError> {
    let mut distinct: Vec<Vector3<f64>> = Vec::new();
    for p in points {
        if distinct.iter().all(|q| (q - p).norm() > 1e-9) {
            distinct.push(*p);
        }
    }
    if distinct.len() < dim.min_anchors() {
        return Err(LocalizationError::DegenerateGeometry);
    }
    let origin = distinct[0];
    let m = DMatrix::from_fn(distinct.len() - 1, 3, |r, c| distinct[r + 1][c] - origin[c]);
    let sv = m.singular_values();
    let scale = sv.max().max(1e-12);
    let rank = sv.iter().filter(|&&s| s > 1e-9 * scale).count();
    if rank < dim.dof() {
        return Err(LocalizationError::DegenerateGeometry);
    }
    if dim == Dimension::Planar && distinct.iter().any(|p| (p.z - origin.z).abs() > 1e-9 * scale) {
        // planar solve assumes the anchors share one horizontal plane
        return Err(LocalizationError::DegenerateGeometry);
    }
    Ok(())
}

/// Weighted least-squares position from ranges: minimises
/// `Σ (‖x - a_i‖ - d_i)² / σ_i²` by Gauss-Newton with Levenberg damping,
/// starting from the anchor centroid.
pub fn trilaterate(
    observations: &[RangeObservation],
    anchors: &[Anchor],
    dim: Dimension,
) -> Result<Fix, LocalizationError> {
    if observations.len() < dim.min_anchors() {
        return Err(LocalizationError::TooFewObservations {
            needed: dim.min_anchors(),
            got: observations.len(),
        });
    }
    let rows = rows(observations, anchors)?;
    let points: Vec<Vector3<f64>> = rows.iter().map(|r| r.anchor).collect();
    check_geometry(&points, dim)?;

    let k = dim.dof();
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let z_plane = centroid.z;
    let mut x = DVector::from_fn(k, |i, _| centroid[i]);
    // nudge off the centroid so no residual starts at a zero-length gradient
    x[0] += 1e-3;

    let full = |x: &DVector<f64>| -> Vector3<f64> {
        match dim {
            Dimension::Planar => Vector3::new(x[0], x[1], z_plane),
            Dimension::Spatial => Vector3::new(x[0], x[1], x[2]),
        }
    };
    let cost = |x: &DVector<f64>| -> f64 {
        let p = full(x);
        rows.iter().map(|r| r.weight * ((p - r.anchor).norm() - r.distance).powi(2)).sum()
    };
    let normal = |x: &DVector<f64>| -> (DMatrix<f64>, DVector<f64>) {
        let p = full(x);
        let mut jtwj = DMatrix::zeros(k, k);
        let mut jtwr = DVector::zeros(k);
        for r in &rows {
            let diff = p - r.anchor;
            let range = diff.norm().max(1e-12);
            let res = range - r.distance;
            let j = DVector::from_fn(k, |i, _| diff[i] / range);
            jtwj += &j * j.transpose() * r.weight;
            jtwr += &j * (res * r.weight);
        }
        (jtwj, jtwr)
    };

    let mut lambda = 1e-3;
    let mut f = cost(&x);
    for iteration in 1..=MAX_ITERATIONS {
        let (jtwj, jtwr) = normal(&x);
        let mut step = None;
        while lambda <= 1e12 {
            let mut damped = jtwj.clone();
            for d in 0..k {
                damped[(d, d)] += lambda * jtwj[(d, d)].max(1e-12);
            }
            if let Some(s) = damped.lu().solve(&(-&jtwr)) {
                let candidate = &x + &s;
                let fc = cost(&candidate);
                if fc <= f {
                    step = Some((s, candidate, fc));
                    lambda = (lambda / 10.0).max(1e-12);
                    break;
                }
            }
            lambda *= 10.0;
        }
        let done = match step {
            Some((s, candidate, fc)) => {
                x = candidate;
                f = fc;
                s.norm() < 1e-6
            }
            // no downhill step at any damping: stationary point
            None => true,
        };
        if done {
            let (jtwj, _) = normal(&x);
            let covariance =
                jtwj.try_inverse().ok_or(LocalizationError::DegenerateGeometry)?;
            let p = full(&x);
            return Ok(Fix { position: [p.x, p.y, p.z], covariance, iterations: iteration });
        }
    }
    Err(LocalizationError::NonConvergence(MAX_ITERATIONS))
}

/// Geometric dilution of precision at `position`: sqrt(trace((HᵀH)⁻¹)) with
/// unit-vector rows H.
pub fn gdop(position: [f64; 3], anchors: &[Anchor], dim: Dimension) -> Result<f64, LocalizationError> {
    let k = dim.dof();
    let p = Vector3::from(position);
    let mut hth = DMatrix::zeros(k, k);
    for a in anchors {
        let d = p - pos(a);
        let n = d.norm();
        if n < 1e-12 {
            continue;
        }
        let u = DVector::from_fn(k, |i, _| d[i] / n);
        hth += &u * u.transpose();
    }
    let inv = hth.try_inverse().ok_or(LocalizationError::DegenerateGeometry)?;
    Ok(inv.trace().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    /// Samples per anchor.
    pub n: usize,
    /// Total time for all anchors, measured one after another, ms.
    pub total_ms: f64,
}

pub fn plan_budget(
    sigma_1: f64,
    sigma_target: f64,
    single_duration_ms: f64,
    n_anchors: usize,
) -> Result<Budget, LocalizationError> {
    if !(single_duration_ms > 0.0) || n_anchors == 0 {
        return Err(LocalizationError::BadObservation("duration and anchor count must be positive"));
    }
    let n = required_samples(sigma_1, sigma_target)?;
    Ok(Budget { n, total_ms: n_anchors as f64 * n as f64 * single_duration_ms })
}

/// Range from a received power reading through the free-space model.
pub fn rssi_range(
    anchor_id: u16,
    rx_power: f64,
    budget: &LinkBudget,
    sigma: f64,
) -> Result<RangeObservation, LocalizationError> {
    let distance = friis_distance(rx_power, budget)?;
    Ok(RangeObservation { anchor_id, distance, sigma, n_samples: 1 })
}
