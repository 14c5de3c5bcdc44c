//! Stencil interpolation shared by remeshing and refinement.

use crate::geometry::{spherical_barycentric, SphericalTriangle, UnitVector3};
use crate::mesh::{locate_deformed_triangle, TriTree};
use crate::sbb::{SbbBasis, VandermondeFactor};

/// Interpolation weights over a set of particles.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub particles: Vec<u32>,
    pub weights: Vec<f64>,
    /// True when the quadratic fit was unusable and linear weights were used.
    pub linear_fallback: bool,
}

impl Stencil {
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.particles.iter().zip(&self.weights).map(|(&p, w)| w * values[p as usize]).sum()
    }

    pub fn apply_vector(&self, values: &[UnitVector3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (&p, w) in self.particles.iter().zip(&self.weights) {
            let v = values[p as usize];
            out[0] += w * v.x();
            out[1] += w * v.y();
            out[2] += w * v.z();
        }
        out
    }
}

/// Quadratic weights for `p` from the six particles (vertices and edge
/// midpoints) of `leaf`'s parent, using `coords` for their locations. Falls
/// back to linear weights on the leaf when there is no parent or the
/// six-point system is singular.
pub fn stencil_weights(tree: &TriTree, leaf: u32, coords: &[UnitVector3], p: &UnitVector3) -> Stencil {
    let node = tree.node(leaf);
    if let Some(parent) = node.parent {
        let pn = tree.node(parent);
        let mids = pn.midpoints.expect("parents of leaves are split");
        let particles = vec![pn.vertices[0], pn.vertices[1], pn.vertices[2], mids[0], mids[1], mids[2]];
        if let Some(weights) = quadratic_weights(&particles, coords, p) {
            return Stencil { particles, weights, linear_fallback: false };
        }
    }
    let v = node.vertices;
    let tri = SphericalTriangle::from_vertices_unchecked(coords[v[0] as usize], coords[v[1] as usize], coords[v[2] as usize]);
    let weights = match spherical_barycentric(&tri, p) {
        Ok(b) => b.as_array().to_vec(),
        Err(_) => vec![1.0 / 3.0; 3],
    };
    Stencil { particles: v.to_vec(), weights, linear_fallback: true }
}

fn quadratic_weights(particles: &[u32], coords: &[UnitVector3], p: &UnitVector3) -> Option<Vec<f64>> {
    let tri = SphericalTriangle::from_vertices_unchecked(
        coords[particles[0] as usize],
        coords[particles[1] as usize],
        coords[particles[2] as usize],
    );
    let nodes = particles.iter().map(|&i| spherical_barycentric(&tri, &coords[i as usize]).ok()).collect::<Option<Vec<_>>>()?;
    let basis = SbbBasis::new(2).ok()?;
    let factor = VandermondeFactor::new(basis.clone(), &nodes).ok()?;
    let bp = basis.eval(&spherical_barycentric(&tri, p).ok()?);
    // Lagrange weights: row B(p) times V^{-1}
    let inv = factor.inverse();
    Some((0..6).map(|m| (0..6).map(|k| bp[k] * inv[(k, m)]).sum()).collect())
}

/// Locates `p` among the deformed faces and returns its interpolation stencil.
pub fn deformed_stencil(tree: &TriTree, positions: &[UnitVector3], p: &UnitVector3) -> Stencil {
    let leaf = locate_deformed_triangle(tree, positions, p);
    stencil_weights(tree, leaf, positions, p)
}
