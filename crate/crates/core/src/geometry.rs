//! Slant-distance geometry and local Cartesian helpers.
//!
//! All positions are meters in a local east-north-up frame. Angles are
//! taken in degrees and converted internally.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("angle {0}° is outside the allowed range")]
    AngleOutOfRange(f64),
    #[error("{0} must be non-negative and finite")]
    NegativeInput(&'static str),
    #[error("reference distance must be positive, got {0}")]
    ZeroReference(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub const ORIGIN: Self = Self::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance_to(&self, other: &Position3D) -> f64 {
        euclidean_distance(self, other)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Position3D {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Self { x, y, z }
    }
}

impl From<Position3D> for [f64; 3] {
    fn from(p: Position3D) -> Self {
        [p.x, p.y, p.z]
    }
}

impl Add for Position3D {
    type Output = Position3D;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Position3D {
    type Output = Position3D;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

/// Field measurement of one calibration position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlantGeometry {
    /// Ground distance from the station to the point under the UAV.
    pub gd_m: f64,
    pub h_m: f64,
    /// Elevation angle of the ground point seen from the station.
    pub alpha_deg: f64,
    /// Angle between the station and the UAV, `90 - alpha`.
    pub beta_deg: f64,
}

impl SlantGeometry {
    pub fn from_alpha(gd_m: f64, h_m: f64, alpha_deg: f64) -> Result<Self, GeometryError> {
        let beta_deg = beta_from_alpha(alpha_deg)?;
        check_non_negative(gd_m, "ground distance")?;
        check_non_negative(h_m, "height")?;
        Ok(Self {
            gd_m,
            h_m,
            alpha_deg,
            beta_deg,
        })
    }

    pub fn slant_distance(&self) -> Result<f64, GeometryError> {
        slant_distance(self.gd_m, self.h_m, self.beta_deg)
    }
}

pub fn beta_from_alpha(alpha_deg: f64) -> Result<f64, GeometryError> {
    if !(0.0..=90.0).contains(&alpha_deg) {
        return Err(GeometryError::AngleOutOfRange(alpha_deg));
    }
    Ok(90.0 - alpha_deg)
}

fn check_non_negative(v: f64, what: &'static str) -> Result<(), GeometryError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(GeometryError::NegativeInput(what))
    }
}

/// Law of cosines: `sqrt(gd² + h² - 2·gd·h·cos β)`.
pub fn slant_distance(gd_m: f64, h_m: f64, beta_deg: f64) -> Result<f64, GeometryError> {
    check_non_negative(gd_m, "ground distance")?;
    check_non_negative(h_m, "height")?;
    if !(beta_deg > 0.0 && beta_deg <= 180.0) {
        return Err(GeometryError::AngleOutOfRange(beta_deg));
    }
    let sq = gd_m * gd_m + h_m * h_m - 2.0 * gd_m * h_m * beta_deg.to_radians().cos();
    // Rounding can push a collapsed triangle a hair below zero.
    Ok(sq.max(0.0).sqrt())
}

pub fn euclidean_distance(a: &Position3D, b: &Position3D) -> f64 {
    (*a - *b).norm()
}

/// `100 · |estimated − real| / real`.
pub fn distance_error_pct(estimated_m: f64, real_m: f64) -> Result<f64, GeometryError> {
    if !(real_m > 0.0) {
        return Err(GeometryError::ZeroReference(real_m));
    }
    Ok(100.0 * (estimated_m - real_m).abs() / real_m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn beta_complements_alpha() {
        assert!((beta_from_alpha(10.9).unwrap() - 79.1).abs() < 1e-12);
        assert_eq!(beta_from_alpha(0.0).unwrap(), 90.0);
        assert_eq!(beta_from_alpha(45.0).unwrap(), 45.0);
        assert!(beta_from_alpha(-1.0).is_err());
        assert!(beta_from_alpha(90.5).is_err());
    }

    #[test]
    fn slant_distance_field_rows() {
        let sd = slant_distance(100.0, 50.0, 79.1).unwrap();
        assert!((sd - 102.97).abs() < 0.05, "{sd}");
        let sd = slant_distance(600.7, 50.0, 84.9).unwrap();
        assert!((sd - 598.29).abs() < 0.05, "{sd}");
    }

    #[test]
    fn slant_distance_degenerate_cases() {
        let sd = slant_distance(120.0, 35.0, 90.0).unwrap();
        assert!((sd - (120.0f64.powi(2) + 35.0f64.powi(2)).sqrt()).abs() < 1e-12);
        assert_eq!(slant_distance(77.0, 0.0, 33.0).unwrap(), 77.0);
        assert!(matches!(
            slant_distance(-1.0, 50.0, 80.0),
            Err(GeometryError::NegativeInput(_))
        ));
        assert!(matches!(
            slant_distance(1.0, -50.0, 80.0),
            Err(GeometryError::NegativeInput(_))
        ));
        assert!(slant_distance(1.0, 50.0, 0.0).is_err());
        assert!(slant_distance(1.0, 50.0, 181.0).is_err());
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(
            euclidean_distance(&Position3D::ORIGIN, &Position3D::ORIGIN),
            0.0
        );
        assert_eq!(
            euclidean_distance(&Position3D::ORIGIN, &Position3D::new(3.0, 4.0, 0.0)),
            5.0
        );
        assert_eq!(
            Position3D::new(100.0, 100.0, 50.0).distance_to(&Position3D::new(200.0, 200.0, 0.0)),
            150.0
        );
    }

    #[test]
    fn distance_error_examples() {
        assert!((distance_error_pct(112.0, 146.0).unwrap() - 23.0).abs() < 0.5);
        assert!((distance_error_pct(366.0, 161.0).unwrap() - 127.0).abs() < 0.5);
        assert_eq!(distance_error_pct(42.0, 42.0).unwrap(), 0.0);
        assert_eq!(
            distance_error_pct(1.0, 0.0),
            Err(GeometryError::ZeroReference(0.0))
        );
    }

    proptest! {
        #[test]
        fn triangle_inequality(gd in 0.0f64..1e4, h in 0.0f64..1e3, beta in 0.01f64..=180.0) {
            let sd = slant_distance(gd, h, beta).unwrap();
            let slack = 1e-9 * (gd + h + 1.0);
            prop_assert!(sd >= (gd - h).abs() - slack);
            prop_assert!(sd <= gd + h + slack);
        }

        #[test]
        fn symmetric_in_sides(gd in 0.0f64..1e4, h in 0.0f64..1e3, beta in 0.01f64..=180.0) {
            let a = slant_distance(gd, h, beta).unwrap();
            let b = slant_distance(h, gd, beta).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (a + 1.0));
        }

        #[test]
        fn agrees_with_cartesian_triangle(gd in 1.0f64..1e4, h in 1.0f64..1e3, theta in 0.05f64..3.1) {
            // Station at origin, UAV above a ground point: the angle at the
            // ground point between the station and the UAV is `theta`.
            let gs = Position3D::ORIGIN;
            let gp = Position3D::new(gd, 0.0, 0.0);
            let uav = Position3D::new(gd - h * theta.cos(), 0.0, h * theta.sin());
            let beta = theta.to_degrees();
            let sd = slant_distance(gd, h, beta).unwrap();
            let truth = euclidean_distance(&gs, &uav);
            prop_assert!((gp.distance_to(&uav) - h).abs() < 1e-9 * h);
            prop_assert!((sd - truth).abs() <= 1e-6 * truth);
        }
    }
}
