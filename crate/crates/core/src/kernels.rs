//! Interaction kernels on the unit sphere.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::UnitVector3;
use crate::test_cases::{forcing_f, ForcingConfig};

/// Pairs with `1 - x.y` at or below this are treated as coincident.
pub const DELTA_SING: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel is singular for coincident points (1 - x.y = {0:e})")]
    Singular(f64),
}

/// A kernel mapping a (target, source) pair to `D` reals.
///
/// Implementations must be deterministic. The unchecked [`Kernel::eval`]
/// returns zeros for coincident points; self-pairs are excluded by index
/// before it is called.
pub trait Kernel<const D: usize>: Sync {
    fn eval(&self, target: &UnitVector3, source: &UnitVector3) -> [f64; D];
}

/// `-log(1 - x.y) / 4pi`, the Green's function of the spherical Laplacian.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogKernel;

impl Kernel<1> for LogKernel {
    #[inline]
    fn eval(&self, target: &UnitVector3, source: &UnitVector3) -> [f64; 1] {
        let denom = 1.0 - target.dot(source);
        if denom <= DELTA_SING {
            return [0.0];
        }
        [-denom.ln() / (4.0 * PI)]
    }
}

/// `(x cross y) / (1 - x.y)`; the `-1/4pi` factor is applied by the caller.
#[derive(Debug, Clone, Copy, Default)]
pub struct VelocityKernel;

impl Kernel<3> for VelocityKernel {
    #[inline]
    fn eval(&self, target: &UnitVector3, source: &UnitVector3) -> [f64; 3] {
        let (x, y) = (target.as_vector(), source.as_vector());
        let denom = 1.0 - (x.x * y.x + x.y * y.y + x.z * y.z);
        if denom <= DELTA_SING {
            return [0.0; 3];
        }
        let inv = 1.0 / denom;
        [
            (x.y * y.z - x.z * y.y) * inv,
            (x.z * y.x - x.x * y.z) * inv,
            (x.x * y.y - x.y * y.x) * inv,
        ]
    }
}

/// Returns the same value for every pair.
#[derive(Debug, Clone, Copy)]
pub struct ConstantKernel<const D: usize>(pub [f64; D]);

impl<const D: usize> Kernel<D> for ConstantKernel<D> {
    fn eval(&self, _: &UnitVector3, _: &UnitVector3) -> [f64; D] {
        self.0
    }
}

/// Wraps a closure as a kernel.
pub struct FnKernel<F>(pub F);

impl<const D: usize, F> Kernel<D> for FnKernel<F>
where
    F: Fn(&UnitVector3, &UnitVector3) -> [f64; D] + Sync,
{
    fn eval(&self, target: &UnitVector3, source: &UnitVector3) -> [f64; D] {
        (self.0)(target, source)
    }
}

fn separation(x: &UnitVector3, y: &UnitVector3) -> Result<f64, KernelError> {
    let denom = 1.0 - x.dot(y);
    if denom <= DELTA_SING {
        return Err(KernelError::Singular(denom));
    }
    Ok(denom)
}

pub fn greens_log(x: &UnitVector3, y: &UnitVector3) -> Result<f64, KernelError> {
    Ok(-separation(x, y)?.ln() / (4.0 * PI))
}

pub fn bve_velocity_kernel(x: &UnitVector3, y: &UnitVector3) -> Result<[f64; 3], KernelError> {
    let denom = separation(x, y)?;
    let c = x.cross(y) / denom;
    Ok([c.x, c.y, c.z])
}

/// `(zeta - F_R(y, t)) * A`, or `zeta * A` without forcing.
pub fn effective_source_strength(
    vorticity: f64,
    area: f64,
    position: &UnitVector3,
    t: f64,
    forcing: Option<&ForcingConfig>,
) -> f64 {
    match forcing {
        Some(cfg) => {
            let ll = crate::geometry::unit_to_latlon(position);
            (vorticity - forcing_f(ll.lat, ll.lon, t, cfg)) * area
        }
        None => vorticity * area,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{latlon_to_unit, LatLon};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> UnitVector3 {
        loop {
            let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0f64)];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 0.1 && n < 1.0 {
                return UnitVector3::new(v[0], v[1], v[2]).unwrap();
            }
        }
    }

    #[test]
    fn greens_function_values() {
        let x = UnitVector3::new(1.0, 0.0, 0.0).unwrap();
        let y = UnitVector3::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(greens_log(&x, &y).unwrap(), 0.0);
        assert_abs_diff_eq!(greens_log(&x, &x.antipode()).unwrap(), -(2f64.ln()) / (4.0 * PI), epsilon = 1e-15);
        assert!(matches!(greens_log(&x, &x), Err(KernelError::Singular(_))));
    }

    #[test]
    fn chord_form_of_the_denominator_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (x, y) = (random_unit(&mut rng), random_unit(&mut rng));
            let chord = 0.5 * (x.as_vector() - y.as_vector()).norm_squared();
            assert_abs_diff_eq!(1.0 - x.dot(&y), chord, epsilon = 1e-12);
            let g = greens_log(&x, &y).unwrap();
            assert!((g - (-chord.ln() / (4.0 * PI))).abs() < 1e-12 * g.abs().max(1.0));
        }
    }

    #[test]
    fn velocity_kernel_values() {
        let x = UnitVector3::new(1.0, 0.0, 0.0).unwrap();
        let y = UnitVector3::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(bve_velocity_kernel(&x, &y).unwrap(), [0.0, 0.0, 1.0]);
        assert_eq!(VelocityKernel.eval(&x, &y), [0.0, 0.0, 1.0]);
        assert!(bve_velocity_kernel(&x, &x).is_err());
        assert_eq!(VelocityKernel.eval(&x, &x), [0.0; 3]);
    }

    #[test]
    fn velocity_kernel_is_antisymmetric_and_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (x, y) = (random_unit(&mut rng), random_unit(&mut rng));
            let a = VelocityKernel.eval(&x, &y);
            let b = VelocityKernel.eval(&y, &x);
            let checked = bve_velocity_kernel(&x, &y).unwrap();
            for d in 0..3 {
                assert_eq!(a[d], -b[d]);
                assert_abs_diff_eq!(a[d], checked[d], epsilon = 1e-12 * checked[d].abs().max(1.0));
            }
            let v = nalgebra::Vector3::from(a);
            assert!(v.dot(x.as_vector()).abs() < 1e-12 * v.norm().max(1.0));
            assert!(v.dot(y.as_vector()).abs() < 1e-12 * v.norm().max(1.0));
        }
    }

    #[test]
    fn unforced_and_expired_forcing_strengths() {
        let p = latlon_to_unit(LatLon::new(0.4, 1.0));
        assert_eq!(effective_source_strength(2.0, 0.5, &p, 0.0, None), 1.0);
        let cfg = ForcingConfig::new(1);
        assert_eq!(effective_source_strength(2.0, 0.5, &p, cfg.tf, Some(&cfg)), 1.0);
        assert_eq!(effective_source_strength(2.0, 0.5, &p, cfg.tf + 3.0, Some(&cfg)), 1.0);
    }

    #[test]
    fn peak_forcing_strength() {
        let cfg = ForcingConfig::new(1);
        let p = latlon_to_unit(LatLon::new(cfg.theta1, 0.0));
        let got = effective_source_strength(1.0, 0.25, &p, cfg.tp, Some(&cfg));
        assert_abs_diff_eq!(got, 0.25 - 6.0 * PI / 5.0 * 0.25, epsilon = 1e-12);
    }
}
