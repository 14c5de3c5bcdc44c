//! Spherical Bernstein-Bezier interpolation on spherical triangles.
//!
//! Basis functions are monomials `b1^i b2^j b3^k` (i + j + k = d) in the
//! normalized barycentric coordinates of a point. Proxy points default to the
//! projected barycentric lattice; since their normalized coordinates are the
//! lattice itself, the Vandermonde matrix depends only on the degree and is
//! factored once and shared.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::geometry::{spherical_barycentric, BarycentricCoords, GeometryError, SphericalTriangle, UnitVector3};

/// Largest accepted Vandermonde condition estimate.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SbbError {
    #[error("interpolation degree must be at least 1, got {0}")]
    InvalidDegree(usize),
    #[error("proxy-point system is ill conditioned (estimate {cond:e})")]
    IllConditioned { cond: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Number of basis functions of degree `d`.
pub fn basis_len(d: usize) -> usize {
    (d + 1) * (d + 2) / 2
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SbbBasis {
    degree: usize,
    indices: Vec<[u32; 3]>,
}

impl SbbBasis {
    pub fn new(degree: usize) -> Result<Self, SbbError> {
        if degree == 0 {
            return Err(SbbError::InvalidDegree(degree));
        }
        let mut indices = Vec::with_capacity(basis_len(degree));
        for k in 0..=degree {
            for j in 0..=degree - k {
                indices.push([(degree - j - k) as u32, j as u32, k as u32]);
            }
        }
        Ok(Self { degree, indices })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Exponent triples `(i, j, k)` in basis order.
    pub fn indices(&self) -> &[[u32; 3]] {
        &self.indices
    }

    /// Writes all basis values at `b` into `out` (length `self.len()`).
    #[inline]
    pub fn eval_into(&self, b: &BarycentricCoords, out: &mut [f64]) {
        let d = self.degree;
        let mut pw = [[1.0f64; 32]; 3];
        for (c, beta) in b.as_array().into_iter().enumerate() {
            for e in 1..=d {
                pw[c][e] = pw[c][e - 1] * beta;
            }
        }
        let mut m = 0;
        for k in 0..=d {
            for j in 0..=d - k {
                out[m] = pw[0][d - j - k] * pw[1][j] * pw[2][k];
                m += 1;
            }
        }
    }

    pub fn eval(&self, b: &BarycentricCoords) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(b, &mut out);
        out
    }
}

pub fn basis_eval(basis: &SbbBasis, b: &BarycentricCoords) -> Vec<f64> {
    basis.eval(b)
}

/// Normalized barycentric coordinates of the degree-`d` lattice in basis order.
pub fn lattice_barycentric(d: usize) -> Vec<BarycentricCoords> {
    let n = d as f64;
    let mut out = Vec::with_capacity(basis_len(d));
    for k in 0..=d {
        for j in 0..=d - k {
            let i = d - j - k;
            out.push(BarycentricCoords::new(i as f64 / n, j as f64 / n, k as f64 / n));
        }
    }
    out
}

/// LU-factored Vandermonde matrix `V[n][m] = B_m(point_n)` with its explicit
/// inverse, for applying many right-hand sides cheaply.
#[derive(Debug, Clone)]
pub struct VandermondeFactor {
    basis: SbbBasis,
    vandermonde: DMatrix<f64>,
    inverse: DMatrix<f64>,
    condition: f64,
}

impl VandermondeFactor {
    pub fn new(basis: SbbBasis, points: &[BarycentricCoords]) -> Result<Self, SbbError> {
        let n = basis.len();
        if points.len() != n {
            return Err(SbbError::LengthMismatch { expected: n, got: points.len() });
        }
        let mut v = DMatrix::zeros(n, n);
        let mut row = vec![0.0; n];
        for (r, p) in points.iter().enumerate() {
            basis.eval_into(p, &mut row);
            for (c, &x) in row.iter().enumerate() {
                v[(r, c)] = x;
            }
        }
        let inverse = v.clone().lu().try_inverse().ok_or(SbbError::IllConditioned { cond: f64::INFINITY })?;
        let condition = one_norm(&v) * one_norm(&inverse);
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(SbbError::IllConditioned { cond: condition });
        }
        Ok(Self { basis, vandermonde: v, inverse, condition })
    }

    /// Shared factor for the projected lattice of degree `d`.
    pub fn lattice(d: usize) -> Result<Arc<Self>, SbbError> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<VandermondeFactor>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(f) = cache.lock().expect("factor cache poisoned").get(&d) {
            return Ok(f.clone());
        }
        let f = Arc::new(Self::new(SbbBasis::new(d)?, &lattice_barycentric(d))?);
        cache.lock().expect("factor cache poisoned").insert(d, f.clone());
        Ok(f)
    }

    pub fn basis(&self) -> &SbbBasis {
        &self.basis
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn vandermonde(&self) -> &DMatrix<f64> {
        &self.vandermonde
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Coefficients `V^{-1} values` for each of `D` components.
    pub fn solve<const D: usize>(&self, values: &[[f64; D]]) -> Result<Vec<[f64; D]>, SbbError> {
        let n = self.basis.len();
        if values.len() != n {
            return Err(SbbError::LengthMismatch { expected: n, got: values.len() });
        }
        let mut out = vec![[0.0; D]; n];
        for (r, o) in out.iter_mut().enumerate() {
            for (c, v) in values.iter().enumerate() {
                let w = self.inverse[(r, c)];
                for d in 0..D {
                    o[d] += w * v[d];
                }
            }
        }
        Ok(out)
    }

    /// Applies `V^{-T}`: maps basis-weighted sums to charges at proxy points.
    pub fn solve_transpose<const D: usize>(&self, weights: &[[f64; D]]) -> Vec<[f64; D]> {
        let n = self.basis.len();
        let mut out = vec![[0.0; D]; n];
        for (r, o) in out.iter_mut().enumerate() {
            for (c, w) in weights.iter().enumerate() {
                let a = self.inverse[(c, r)];
                for d in 0..D {
                    o[d] += a * w[d];
                }
            }
        }
        out
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Interpolation nodes inside a triangle together with the factored system.
#[derive(Debug, Clone)]
pub struct ProxyPointSet {
    pub triangle: SphericalTriangle,
    pub points: Vec<UnitVector3>,
    pub barycentric: Vec<BarycentricCoords>,
    factor: Arc<VandermondeFactor>,
}

impl ProxyPointSet {
    /// Proxy points from tabulated barycentric coordinates, e.g. a Fekete set.
    pub fn from_barycentric(
        triangle: SphericalTriangle,
        degree: usize,
        barycentric: Vec<BarycentricCoords>,
    ) -> Result<Self, SbbError> {
        let points = barycentric.iter().map(|b| triangle.point_at(b)).collect::<Result<Vec<_>, _>>()?;
        let normalized = points.iter().map(|p| spherical_barycentric(&triangle, p)).collect::<Result<Vec<_>, _>>()?;
        let factor = Arc::new(VandermondeFactor::new(SbbBasis::new(degree)?, &normalized)?);
        Ok(Self { triangle, points, barycentric: normalized, factor })
    }

    pub fn degree(&self) -> usize {
        self.factor.basis.degree
    }

    pub fn factor(&self) -> &VandermondeFactor {
        &self.factor
    }
}

/// Default proxy points: the degree-`d` barycentric lattice projected onto the sphere.
pub fn proxy_points(t: &SphericalTriangle, d: usize) -> Result<ProxyPointSet, SbbError> {
    let factor = VandermondeFactor::lattice(d)?;
    let barycentric = lattice_barycentric(d);
    let points = barycentric.iter().map(|b| t.point_at(b)).collect::<Result<Vec<_>, _>>()?;
    Ok(ProxyPointSet { triangle: *t, points, barycentric, factor })
}

#[derive(Debug, Clone)]
pub struct SbbInterpolant<const D: usize> {
    pub triangle: SphericalTriangle,
    pub basis: SbbBasis,
    pub coefficients: Vec<[f64; D]>,
}

pub fn fit_coefficients<const D: usize>(pts: &ProxyPointSet, values: &[[f64; D]]) -> Result<SbbInterpolant<D>, SbbError> {
    let n = pts.factor.basis.len();
    if values.len() != n {
        return Err(SbbError::LengthMismatch { expected: n, got: values.len() });
    }
    let lu = pts.factor.vandermonde.clone().lu();
    let mut coefficients = vec![[0.0; D]; n];
    for d in 0..D {
        let rhs = nalgebra::DVector::from_iterator(n, values.iter().map(|v| v[d]));
        let sol = lu.solve(&rhs).ok_or(SbbError::IllConditioned { cond: f64::INFINITY })?;
        for (c, s) in coefficients.iter_mut().zip(sol.iter()) {
            c[d] = *s;
        }
    }
    Ok(SbbInterpolant { triangle: pts.triangle, basis: pts.factor.basis.clone(), coefficients })
}

impl<const D: usize> SbbInterpolant<D> {
    pub fn eval_barycentric(&self, b: &BarycentricCoords) -> [f64; D] {
        let values = self.basis.eval(b);
        let mut out = [0.0; D];
        for (v, c) in values.iter().zip(&self.coefficients) {
            for d in 0..D {
                out[d] += v * c[d];
            }
        }
        out
    }
}

pub fn interpolant_eval<const D: usize>(f: &SbbInterpolant<D>, p: &UnitVector3) -> Result<[f64; D], SbbError> {
    let b = spherical_barycentric(&f.triangle, p)?;
    Ok(f.eval_barycentric(&b))
}
