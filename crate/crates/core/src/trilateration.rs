//! Least-squares trilateration from ground-station range spheres.
//!
//! Each constraint puts the UAV on a sphere around a station. Subtracting
//! the reference sphere (the last constraint) from every other sphere
//! cancels the quadratic terms and leaves a linear system `A·w = b` with
//! one row per non-reference station:
//!
//! ```text
//! 2(x_ref − x_i)x + 2(y_ref − y_i)y + 2(z_ref − z_i)z
//!     = r_i² − r_ref² − |p_i|² + |p_ref|²
//! ```
//!
//! which is solved in closed form, `w = (AᵀA)⁻¹Aᵀb`. When every station
//! sits at the same height the z column vanishes; the reduced system then
//! gives `(x, y)` and the height comes back from the reference sphere,
//! taking the root above the station plane.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use thiserror::Error;

use crate::geometry::Position3D;

/// Minimum number of stations for a 3-D fix.
pub const MIN_STATIONS: usize = 4;

/// Relative singular-value floor below which `A` is treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-9;

/// Relative height spread under which stations count as coplanar.
const COPLANAR_TOLERANCE: f64 = 1e-6;

/// Radicands within this fraction of `r_ref²` of zero are clamped and flagged.
const RADICAND_TOLERANCE: f64 = 1e-9;
const AMBIGUOUS_HEIGHT_FRACTION: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrilaterationError {
    #[error("at least {MIN_STATIONS} stations are required for a 3-D fix, got {0}")]
    TooFewStations(usize),
    #[error("stations {0} and {1} share a position")]
    DuplicateStation(String, String),
    #[error("radius for station {0} must be finite and non-negative")]
    InvalidRadius(String),
    #[error("station geometry is degenerate (rank {rank} < {needed})")]
    SingularSystem { rank: usize, needed: usize },
    #[error("spheres do not meet above the station plane (radicand {radicand:.3} m²)")]
    ImaginaryHeight { radicand: f64 },
    #[error("station heights differ; the reduced system only applies to one common height")]
    NotCoplanar,
}

/// A station position and the estimated range to the UAV.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereConstraint {
    pub station_id: String,
    pub station: Position3D,
    pub radius_m: f64,
}

impl SphereConstraint {
    pub fn new(
        station_id: impl Into<String>,
        station: Position3D,
        radius_m: f64,
    ) -> Result<Self, TrilaterationError> {
        let station_id = station_id.into();
        if !radius_m.is_finite() || radius_m < 0.0 || !station.is_finite() {
            return Err(TrilaterationError::InvalidRadius(station_id));
        }
        Ok(Self {
            station_id,
            station,
            radius_m,
        })
    }
}

/// Linearized sphere-difference system; row `i` pairs station `i` with the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearSystem {
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePath {
    Full3D,
    CoplanarReduced,
}

impl SolvePath {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Full3D => "full-3d",
            Self::CoplanarReduced => "coplanar-reduced",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocateOutcome {
    pub position: Position3D,
    /// RMS of `|w − station_i| − r_i` over every constraint.
    pub residual_norm_m: f64,
    pub path: SolvePath,
    pub stations_used: Vec<String>,
    /// Coplanar path only: the above/below-plane roots nearly coincide.
    pub height_ambiguous: bool,
}

fn geometry_scale(constraints: &[SphereConstraint]) -> f64 {
    constraints
        .iter()
        .flat_map(|c| {
            [
                c.station.x.abs(),
                c.station.y.abs(),
                c.station.z.abs(),
                c.radius_m,
            ]
        })
        .fold(1.0, f64::max)
}

pub fn build_linear_system(
    constraints: &[SphereConstraint],
) -> Result<LinearSystem, TrilaterationError> {
    if constraints.len() < MIN_STATIONS {
        return Err(TrilaterationError::TooFewStations(constraints.len()));
    }
    let scale = geometry_scale(constraints);
    for (i, a) in constraints.iter().enumerate() {
        for b in &constraints[i + 1..] {
            if a.station.distance_to(&b.station) <= 1e-12 * scale {
                return Err(TrilaterationError::DuplicateStation(
                    a.station_id.clone(),
                    b.station_id.clone(),
                ));
            }
        }
    }

    let (reference, others) = constraints.split_last().expect("non-empty");
    let p_ref = reference.station;
    let rows = others.len();
    let mut a = DMatrix::zeros(rows, 3);
    let mut b = DVector::zeros(rows);
    for (row, c) in others.iter().enumerate() {
        let p = c.station;
        a[(row, 0)] = 2.0 * (p_ref.x - p.x);
        a[(row, 1)] = 2.0 * (p_ref.y - p.y);
        a[(row, 2)] = 2.0 * (p_ref.z - p.z);
        b[row] = c.radius_m.powi(2) - reference.radius_m.powi(2) - p.norm_squared()
            + p_ref.norm_squared();
    }
    Ok(LinearSystem { a, b })
}

fn numeric_rank(a: &DMatrix<f64>) -> usize {
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOLERANCE * max).count()
}

/// Closed-form least squares over all three coordinates.
pub fn solve_full(system: &LinearSystem) -> Result<Position3D, TrilaterationError> {
    let rank = numeric_rank(&system.a);
    if rank < 3 {
        return Err(TrilaterationError::SingularSystem { rank, needed: 3 });
    }
    let at = system.a.transpose();
    let ata_inv = (&at * &system.a)
        .try_inverse()
        .ok_or(TrilaterationError::SingularSystem { rank, needed: 3 })?;
    let w = ata_inv * (at * &system.b);
    Ok(Position3D::new(w[0], w[1], w[2]))
}

fn z_column_vanishes(a: &DMatrix<f64>) -> bool {
    let planar = a.columns(0, 2).amax();
    a.column(2).amax() <= COPLANAR_TOLERANCE * planar.max(1.0)
}

/// Reduced solve for equal-height stations; the height comes from `reference`.
pub fn solve_coplanar(
    system: &LinearSystem,
    reference: &SphereConstraint,
) -> Result<Position3D, TrilaterationError> {
    solve_coplanar_flagged(system, reference).map(|(p, _)| p)
}

fn solve_coplanar_flagged(
    system: &LinearSystem,
    reference: &SphereConstraint,
) -> Result<(Position3D, bool), TrilaterationError> {
    if system.rows() + 1 < MIN_STATIONS {
        return Err(TrilaterationError::TooFewStations(system.rows() + 1));
    }
    if !z_column_vanishes(&system.a) {
        return Err(TrilaterationError::NotCoplanar);
    }
    let planar = system.a.columns(0, 2).into_owned();
    let rank = numeric_rank(&planar);
    if rank < 2 {
        return Err(TrilaterationError::SingularSystem { rank, needed: 2 });
    }
    let at = planar.transpose();
    let ata = &at * &planar;
    let atb = &at * &system.b;
    let ata = Matrix2::new(ata[(0, 0)], ata[(0, 1)], ata[(1, 0)], ata[(1, 1)]);
    let xy = ata
        .try_inverse()
        .ok_or(TrilaterationError::SingularSystem { rank, needed: 2 })?
        * Vector2::new(atb[0], atb[1]);

    let p_ref = reference.station;
    let r2 = reference.radius_m.powi(2);
    let radicand = r2 - (xy[0] - p_ref.x).powi(2) - (xy[1] - p_ref.y).powi(2);
    let slack = RADICAND_TOLERANCE * r2.max(1.0);
    if radicand < -slack {
        return Err(TrilaterationError::ImaginaryHeight { radicand });
    }
    let ambiguous = radicand <= AMBIGUOUS_HEIGHT_FRACTION * r2.max(1.0);
    let z = p_ref.z + radicand.max(0.0).sqrt();
    Ok((Position3D::new(xy[0], xy[1], z), ambiguous))
}

fn stations_coplanar(constraints: &[SphereConstraint]) -> bool {
    let (lo, hi) = constraints
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            (lo.min(c.station.z), hi.max(c.station.z))
        });
    hi - lo <= COPLANAR_TOLERANCE * geometry_scale(constraints)
}

pub fn rms_residual(position: &Position3D, constraints: &[SphereConstraint]) -> f64 {
    if constraints.is_empty() {
        return 0.0;
    }
    let sum: f64 = constraints
        .iter()
        .map(|c| (position.distance_to(&c.station) - c.radius_m).powi(2))
        .sum();
    (sum / constraints.len() as f64).sqrt()
}

/// Builds the system and picks the full or coplanar solve.
pub fn locate(constraints: &[SphereConstraint]) -> Result<LocateOutcome, TrilaterationError> {
    let system = build_linear_system(constraints)?;
    let reference = constraints.last().expect("checked by build_linear_system");

    let (position, path, height_ambiguous) = if stations_coplanar(constraints) {
        let (p, amb) = solve_coplanar_flagged(&system, reference)?;
        (p, SolvePath::CoplanarReduced, amb)
    } else {
        match solve_full(&system) {
            Ok(p) => (p, SolvePath::Full3D, false),
            Err(TrilaterationError::SingularSystem { .. }) if z_column_vanishes(&system.a) => {
                let (p, amb) = solve_coplanar_flagged(&system, reference)?;
                (p, SolvePath::CoplanarReduced, amb)
            }
            Err(e) => return Err(e),
        }
    };

    Ok(LocateOutcome {
        position,
        residual_norm_m: rms_residual(&position, constraints),
        path,
        stations_used: constraints.iter().map(|c| c.station_id.clone()).collect(),
        height_ambiguous,
    })
}
