//! Exact geometric primitives on the unit sphere.
//!
//! Every position in the crate is a [`UnitVector3`]. Spherical triangles are
//! described by three counterclockwise vertices, and barycentric coordinates
//! are the coefficients of a point in the vertex basis, rescaled to sum to one
//! (radial projection onto the planar triangle through the vertices).

use std::f64::consts::PI;

use nalgebra::Vector3;
use thiserror::Error;

/// Slack applied to barycentric coordinates when testing containment, so
/// points on shared edges resolve to at least one triangle.
pub const CONTAINMENT_TOL: f64 = 1e-10;

/// Vertices closer than this (in radians) make a triangle degenerate.
pub const DEGENERATE_SEPARATION: f64 = 1e-12;

const SINGULAR_DET: f64 = 1e-300;
const HEMISPHERE_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("cannot project a zero or non-finite vector onto the sphere")]
    ZeroVector,
    #[error("degenerate spherical triangle (closest vertices {separation:e} rad apart)")]
    DegenerateTriangle { separation: f64 },
    #[error("triangle vertices are not counterclockwise (det = {det:e})")]
    Clockwise { det: f64 },
    #[error("singular barycentric system (det = {det:e})")]
    SingularSystem { det: f64 },
    #[error("point is not in the hemisphere spanned by the triangle")]
    OppositeHemisphere,
    #[error("spherical polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
}

/// A point on the unit sphere embedded in 3-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector3(Vector3<f64>);

impl UnitVector3 {
    /// Normalizes `(x, y, z)` onto the sphere.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self, GeometryError> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(GeometryError::ZeroVector);
        }
        Ok(Self(v / n))
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    #[inline]
    pub fn dot(&self, other: &UnitVector3) -> f64 {
        self.0.dot(&other.0)
    }

    #[inline]
    pub fn cross(&self, other: &UnitVector3) -> Vector3<f64> {
        self.0.cross(&other.0)
    }

    pub fn antipode(&self) -> Self {
        Self(-self.0)
    }

    /// Unit vector along the great-circle midpoint of `self` and `other`.
    pub fn midpoint(&self, other: &UnitVector3) -> Result<Self, GeometryError> {
        Self::from_vector(self.0 + other.0)
    }
}

/// Latitude/longitude in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

pub fn latlon_to_unit(p: LatLon) -> UnitVector3 {
    let (slat, clat) = p.lat.sin_cos();
    let (slon, clon) = p.lon.sin_cos();
    UnitVector3::from_vector(Vector3::new(clat * clon, clat * slon, slat))
        .expect("trigonometric embedding is never zero")
}

/// Inverse of [`latlon_to_unit`]; longitude lies in `[-π, π)` and is 0 at the poles.
pub fn unit_to_latlon(v: &UnitVector3) -> LatLon {
    let (x, y, z) = (v.x(), v.y(), v.z());
    let rho = x.hypot(y);
    let lat = z.atan2(rho);
    let mut lon = if x == 0.0 && y == 0.0 { 0.0 } else { y.atan2(x) };
    if lon >= PI {
        lon -= 2.0 * PI;
    }
    LatLon { lat, lon }
}

/// Arc length between two points, accurate near 0 and π.
pub fn great_circle_distance(a: &UnitVector3, b: &UnitVector3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Barycentric coordinates normalized to `b1 + b2 + b3 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycentricCoords {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl BarycentricCoords {
    pub fn new(b1: f64, b2: f64, b3: f64) -> Self {
        Self { b1, b2, b3 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.b1, self.b2, self.b3]
    }

    pub fn min(&self) -> f64 {
        self.b1.min(self.b2).min(self.b3)
    }
}

/// A spherical triangle with counterclockwise vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalTriangle {
    v: [UnitVector3; 3],
}

impl SphericalTriangle {
    /// Validates distinctness and counterclockwise orientation.
    pub fn new(v1: UnitVector3, v2: UnitVector3, v3: UnitVector3) -> Result<Self, GeometryError> {
        let separation = great_circle_distance(&v1, &v2)
            .min(great_circle_distance(&v2, &v3))
            .min(great_circle_distance(&v3, &v1));
        if separation <= DEGENERATE_SEPARATION {
            return Err(GeometryError::DegenerateTriangle { separation });
        }
        let det = v1.as_vector().dot(&v2.cross(&v3));
        if det <= 0.0 {
            return Err(GeometryError::Clockwise { det });
        }
        Ok(Self { v: [v1, v2, v3] })
    }

    /// Builds a triangle without orientation or separation checks. Used for
    /// triangles whose vertices are advected particles and may be folded.
    pub fn from_vertices_unchecked(v1: UnitVector3, v2: UnitVector3, v3: UnitVector3) -> Self {
        Self { v: [v1, v2, v3] }
    }

    pub fn vertices(&self) -> &[UnitVector3; 3] {
        &self.v
    }

    pub fn v1(&self) -> &UnitVector3 {
        &self.v[0]
    }

    pub fn v2(&self) -> &UnitVector3 {
        &self.v[1]
    }

    pub fn v3(&self) -> &UnitVector3 {
        &self.v[2]
    }

    /// Unit point with normalized barycentric coordinates `b`.
    pub fn point_at(&self, b: &BarycentricCoords) -> Result<UnitVector3, GeometryError> {
        UnitVector3::from_vector(
            self.v[0].as_vector() * b.b1 + self.v[1].as_vector() * b.b2 + self.v[2].as_vector() * b.b3,
        )
    }

    /// Normalized centroid of the three vertices.
    pub fn centroid(&self) -> Result<UnitVector3, GeometryError> {
        UnitVector3::from_vector(self.v[0].as_vector() + self.v[1].as_vector() + self.v[2].as_vector())
    }
}

/// Coefficients `c` of `p = c1 v1 + c2 v2 + c3 v3`, by Cramer's rule.
pub(crate) fn raw_barycentric(v: &[UnitVector3; 3], p: &UnitVector3) -> Result<[f64; 3], GeometryError> {
    let n1 = v[1].cross(&v[2]);
    let det = v[0].as_vector().dot(&n1);
    if det.abs() < SINGULAR_DET || !det.is_finite() {
        return Err(GeometryError::SingularSystem { det });
    }
    let n2 = v[2].cross(&v[0]);
    let n3 = v[0].cross(&v[1]);
    let pv = p.as_vector();
    Ok([pv.dot(&n1) / det, pv.dot(&n2) / det, pv.dot(&n3) / det])
}

pub fn spherical_barycentric(t: &SphericalTriangle, p: &UnitVector3) -> Result<BarycentricCoords, GeometryError> {
    let c = raw_barycentric(&t.v, p)?;
    let s = c[0] + c[1] + c[2];
    if s <= HEMISPHERE_EPS {
        return Err(GeometryError::OppositeHemisphere);
    }
    Ok(BarycentricCoords::new(c[0] / s, c[1] / s, c[2] / s))
}

/// Smallest normalized barycentric coordinate of `p`, or `-inf` when `p`
/// cannot be expressed relative to the triangle (opposite hemisphere, folded
/// or degenerate vertices).
pub fn min_barycentric(t: &SphericalTriangle, p: &UnitVector3) -> f64 {
    match spherical_barycentric(t, p) {
        Ok(b) => b.min(),
        Err(_) => f64::NEG_INFINITY,
    }
}

pub fn triangle_circumcenter(t: &SphericalTriangle) -> Result<UnitVector3, GeometryError> {
    let [a, b, c] = &t.v;
    let n = (b.as_vector() - a.as_vector()).cross(&(c.as_vector() - a.as_vector()));
    let mut center = UnitVector3::from_vector(n).map_err(|_| GeometryError::DegenerateTriangle { separation: 0.0 })?;
    let sum = a.as_vector() + b.as_vector() + c.as_vector();
    if center.as_vector().dot(&sum) < 0.0 {
        center = center.antipode();
    }
    Ok(center)
}

/// Great-circle radius of the circumscribing cap.
pub fn triangle_radius(t: &SphericalTriangle) -> Result<f64, GeometryError> {
    let separation = great_circle_distance(t.v1(), t.v2())
        .min(great_circle_distance(t.v2(), t.v3()))
        .min(great_circle_distance(t.v3(), t.v1()));
    if separation <= DEGENERATE_SEPARATION {
        return Err(GeometryError::DegenerateTriangle { separation });
    }
    let c = triangle_circumcenter(t)?;
    Ok(great_circle_distance(&c, t.v1()))
}

/// True iff every barycentric coordinate is at least `-CONTAINMENT_TOL`.
pub fn triangle_contains(t: &SphericalTriangle, p: &UnitVector3) -> bool {
    min_barycentric(t, p) >= -CONTAINMENT_TOL
}

/// Signed area of the spherical triangle `(a, b, c)`; positive for
/// counterclockwise vertices.
pub fn signed_triangle_area(a: &UnitVector3, b: &UnitVector3, c: &UnitVector3) -> f64 {
    let det = a.as_vector().dot(&b.cross(c));
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * det.atan2(denom)
}

pub fn triangle_area(t: &SphericalTriangle) -> f64 {
    signed_triangle_area(t.v1(), t.v2(), t.v3())
}

/// Interior angle at `b` of the polygon path `a -> b -> c`, in `(0, 2π)` for
/// counterclockwise traversal.
fn interior_angle(a: &UnitVector3, b: &UnitVector3, c: &UnitVector3) -> f64 {
    let bv = b.as_vector();
    let ta = a.as_vector() - bv * a.dot(b);
    let tc = c.as_vector() - bv * c.dot(b);
    let angle = bv.dot(&tc.cross(&ta)).atan2(tc.dot(&ta));
    if angle < 0.0 {
        angle + 2.0 * PI
    } else {
        angle
    }
}

/// Area of a simple counterclockwise spherical polygon from its spherical excess.
pub fn spherical_polygon_area(vs: &[UnitVector3]) -> Result<f64, GeometryError> {
    let n = vs.len();
    if n < 3 {
        return Err(GeometryError::TooFewVertices(n));
    }
    let angle_sum: f64 = (0..n)
        .map(|k| interior_angle(&vs[(k + n - 1) % n], &vs[k], &vs[(k + 1) % n]))
        .sum();
    Ok(angle_sum - (n as f64 - 2.0) * PI)
}
