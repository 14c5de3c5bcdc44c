//! Initial conditions and forcing for the standard experiments.
//!
//! Time is in days and angles in radians; latitude is measured from the
//! equator.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::geometry::UnitVector3;

/// Earth's rotation rate in radians per day.
pub const OMEGA: f64 = 2.0 * PI;

/// Planetary vorticity `2 Omega z`.
pub fn coriolis(p: &UnitVector3) -> f64 {
    2.0 * OMEGA * p.z()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestCaseId {
    Rh4,
    GaussianVortex,
    PolarVortex { k: u32 },
}

impl fmt::Display for TestCaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestCaseId::Rh4 => write!(f, "rh4"),
            TestCaseId::GaussianVortex => write!(f, "gaussian_vortex"),
            TestCaseId::PolarVortex { k } => write!(f, "polar_vortex{k}"),
        }
    }
}

impl FromStr for TestCaseId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rh4" => Ok(TestCaseId::Rh4),
            "gaussian_vortex" | "gaussian" => Ok(TestCaseId::GaussianVortex),
            "polar_vortex1" => Ok(TestCaseId::PolarVortex { k: 1 }),
            "polar_vortex2" => Ok(TestCaseId::PolarVortex { k: 2 }),
            other => Err(format!(
                "unknown test case '{other}' (expected rh4, gaussian_vortex, polar_vortex1 or polar_vortex2)"
            )),
        }
    }
}

/// Rossby-Haurwitz wave speed for wavenumber `k` and solid-body rate `w`.
pub fn rh_wave_speed(k: u32, w: f64) -> f64 {
    let k = k as f64;
    (k * (3.0 + k) * w - 2.0 * OMEGA) / ((1.0 + k) * (2.0 + k))
}

/// Rossby-Haurwitz vorticity `2w sin(lat) + 30 sin(lat) cos^k(lat) cos(k lon)`
/// shifted in longitude by `v t`.
pub fn rh_vorticity(k: u32, w: f64, lat: f64, lon: f64, t: f64) -> f64 {
    let v = rh_wave_speed(k, w);
    let k = k as i32;
    2.0 * w * lat.sin() + 30.0 * lat.sin() * lat.cos().powi(k) * (k as f64 * (lon - v * t)).cos()
}

/// The stationary wavenumber-4 wave.
pub fn rh4_vorticity(lat: f64, lon: f64) -> f64 {
    (2.0 * PI / 7.0) * lat.sin() + 30.0 * lat.sin() * lat.cos().powi(4) * (4.0 * lon).cos()
}

pub const GAUSSIAN_AMPLITUDE: f64 = 4.0 * PI;
pub const GAUSSIAN_SHARPNESS: f64 = 16.0;

pub fn gaussian_center() -> UnitVector3 {
    crate::geometry::latlon_to_unit(crate::geometry::LatLon::new(PI / 20.0, 0.0))
}

fn gaussian_bump(p: &UnitVector3, center: &UnitVector3) -> f64 {
    GAUSSIAN_AMPLITUDE * (-GAUSSIAN_SHARPNESS * (p.as_vector() - center.as_vector()).norm_squared()).exp()
}

/// The offset making the area-weighted total of the Gaussian vortex zero.
pub fn gaussian_offset(positions: &[UnitVector3], areas: &[f64]) -> f64 {
    let c = gaussian_center();
    let total: f64 = positions.iter().zip(areas).map(|(p, a)| gaussian_bump(p, &c) * a).sum();
    -total / areas.iter().sum::<f64>()
}

/// Gaussian vortex vorticity with the quadrature-defined offset for these particles.
pub fn gaussian_vorticity(positions: &[UnitVector3], areas: &[f64]) -> Vec<f64> {
    let offset = gaussian_offset(positions, areas);
    gaussian_vorticity_with_offset(positions, offset)
}

pub fn gaussian_vorticity_with_offset(positions: &[UnitVector3], offset: f64) -> Vec<f64> {
    let c = gaussian_center();
    positions.iter().map(|p| gaussian_bump(p, &c) + offset).collect()
}

pub const POLAR_BETA: f64 = 1.5;
pub const POLAR_THETA0: f64 = 15.0 * PI / 32.0;

pub fn polar_vorticity(lat: f64) -> f64 {
    let b2 = POLAR_BETA * POLAR_BETA;
    let d = POLAR_THETA0 - lat;
    PI * (-2.0 * b2 * (1.0 - d.cos())).exp() * (2.0 * b2 * lat.cos() * d.sin() + lat.sin())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingConfig {
    pub k: u32,
    pub tp: f64,
    pub tf: f64,
    pub theta1: f64,
}

impl ForcingConfig {
    pub fn new(k: u32) -> Self {
        Self { k, tp: 4.0, tf: 15.0, theta1: PI / 3.0 }
    }

    /// `(3/5) Omega k^2`, the peak forcing magnitude.
    pub fn amplitude(&self) -> f64 {
        0.6 * OMEGA * (self.k * self.k) as f64
    }
}

/// Time envelope: cosine ramp up over `[0, tp)`, plateau, cosine ramp down
/// over `[tf - tp, tf)`, then zero.
pub fn forcing_amplitude_a(t: f64, tp: f64, tf: f64) -> f64 {
    if t < 0.0 {
        0.0
    } else if t < tp {
        (1.0 - (PI * t / tp).cos()) / 2.0
    } else if t < tf - tp {
        1.0
    } else if t < tf {
        (1.0 - (PI + PI * (t - tf + tp) / tp).cos()) / 2.0
    } else {
        0.0
    }
}

/// Latitude profile `u e^(1-u)` with `u = tan^2(theta1) / tan^2(lat)`,
/// zero in the southern hemisphere and at the pole.
pub fn forcing_shape_b(lat: f64, theta1: f64) -> f64 {
    if lat <= 0.0 {
        return 0.0;
    }
    let t1 = theta1.tan();
    // tan^2(theta1) / tan^2(lat) written with cos/sin so the pole gives u = 0
    let ratio = t1 * lat.cos() / lat.sin();
    let u = ratio * ratio;
    u * (1.0 - u).exp()
}

pub fn forcing_f(lat: f64, lon: f64, t: f64, cfg: &ForcingConfig) -> f64 {
    let a = forcing_amplitude_a(t, cfg.tp, cfg.tf);
    if a == 0.0 {
        return 0.0;
    }
    cfg.amplitude() * a * forcing_shape_b(lat, cfg.theta1) * (cfg.k as f64 * lon).cos()
}
