//! Adaptive refinement and coarsening of the Lagrangian triangulation.

use std::collections::BTreeMap;

use crate::geometry::{triangle_area, GeometryError, SphericalTriangle, UnitVector3};
use crate::mesh::edge_key;
use crate::test_cases::coriolis;

use super::remesh::stencil_weights;
use super::ParticleField;

/// Merged faces must clear the thresholds by this factor.
pub const COARSEN_MARGIN: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmrConfig {
    /// Circulation threshold (steradian/day).
    pub eps1: f64,
    /// Vorticity variation threshold (1/day).
    pub eps2: f64,
    /// Levels allowed below the initial mesh.
    pub max_extra_levels: u32,
}

impl AmrConfig {
    pub fn new(eps1: f64, eps2: f64) -> Self {
        Self { eps1, eps2, max_extra_levels: 3 }
    }
}

/// Large circulation `A * mean(zeta) >= eps1` or large variation `max - min >= eps2`.
pub fn needs_refinement(area: f64, zeta: [f64; 3], cfg: &AmrConfig) -> bool {
    let circulation = area * (zeta[0] + zeta[1] + zeta[2]) / 3.0;
    circulation >= cfg.eps1 || variation(zeta) >= cfg.eps2
}

fn can_merge(area: f64, zeta: [f64; 3], cfg: &AmrConfig) -> bool {
    let circulation = area * (zeta[0] + zeta[1] + zeta[2]) / 3.0;
    circulation < COARSEN_MARGIN * cfg.eps1 && variation(zeta) < COARSEN_MARGIN * cfg.eps2
}

fn variation(z: [f64; 3]) -> f64 {
    z[0].max(z[1]).max(z[2]) - z[0].min(z[1]).min(z[2])
}

fn label_area(field: &ParticleField, v: [u32; 3]) -> f64 {
    let [a, b, c] = v.map(|i| field.labels[i as usize]);
    triangle_area(&SphericalTriangle::from_vertices_unchecked(a, b, c))
}

fn leaf_test(field: &ParticleField, v: [u32; 3], cfg: &AmrConfig) -> bool {
    needs_refinement(label_area(field, v), v.map(|i| field.vorticity[i as usize]), cfg)
}

/// Values for a particle inserted at a label point: absolute vorticity and
/// initial absolute vorticity.
pub type Sampler<'a> = &'a (dyn Fn(&UnitVector3) -> (f64, f64) + Sync);

struct NewParticle {
    position: UnitVector3,
    label: UnitVector3,
    vorticity: f64,
    initial_absolute: f64,
}

/// Splits every leaf that meets a refinement criterion and is above the depth
/// limit. New particles take values from `sample` when given (placed at their
/// label), otherwise from the quadratic label-space stencil of the split
/// face's parent. Returns the number of faces split.
pub fn refine_pass(field: &mut ParticleField, cfg: &AmrConfig, sample: Option<Sampler<'_>>) -> Result<usize, GeometryError> {
    let max_depth = field.mesh.base_level() + cfg.max_extra_levels;
    let tree = field.mesh.tree();
    let selected: Vec<u32> = tree
        .leaves()
        .into_iter()
        .filter(|&leaf| {
            let node = tree.node(leaf);
            node.depth < max_depth && leaf_test(field, node.vertices, cfg)
        })
        .collect();
    if selected.is_empty() {
        return Ok(0);
    }

    let mut pending: BTreeMap<(u32, u32), NewParticle> = BTreeMap::new();
    for &leaf in &selected {
        let v = tree.node(leaf).vertices;
        for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
            let key = edge_key(a, b);
            if field.mesh.midpoint_of(a, b).is_some() || pending.contains_key(&key) {
                continue;
            }
            let label = field.labels[a as usize].midpoint(&field.labels[b as usize])?;
            let particle = match sample {
                Some(f) => {
                    let (abs, init) = f(&label);
                    NewParticle { position: label, label, vorticity: abs - coriolis(&label), initial_absolute: init }
                }
                None => {
                    let st = stencil_weights(tree, leaf, &field.labels, &label);
                    let position = UnitVector3::from_vector(st.apply_vector(&field.positions).into())?;
                    let absolute: Vec<f64> = st
                        .particles
                        .iter()
                        .map(|&p| field.vorticity[p as usize] + coriolis(&field.positions[p as usize]))
                        .collect();
                    let abs: f64 = absolute.iter().zip(&st.weights).map(|(a, w)| a * w).sum();
                    let init = st.apply(&field.initial_absolute_vorticity);
                    NewParticle { position, label, vorticity: abs - coriolis(&position), initial_absolute: init }
                }
            };
            pending.insert(key, particle);
        }
    }

    let ParticleField { mesh, positions, vorticity, labels, initial_absolute_vorticity, .. } = field;
    for &leaf in &selected {
        mesh.split(leaf, |a, b| {
            let p = pending.remove(&edge_key(a, b)).expect("new edges were prepared");
            positions.push(p.position);
            labels.push(p.label);
            vorticity.push(p.vorticity);
            initial_absolute_vorticity.push(p.initial_absolute);
            (positions.len() - 1) as u32
        });
    }
    field.areas = field.mesh.label_areas(&field.labels)?;
    Ok(selected.len())
}

/// Merges sibling quads when no child meets a refinement criterion and the
/// merged face clears both thresholds with margin. Never coarsens past the
/// initial level. Returns the number of merges.
pub fn coarsen_pass(field: &mut ParticleField, cfg: &AmrConfig) -> Result<usize, GeometryError> {
    let tree = field.mesh.tree();
    let base = field.mesh.base_level();
    let candidates: Vec<u32> = tree
        .nodes_depth_first()
        .into_iter()
        .filter(|&id| {
            let node = tree.node(id);
            let Some(children) = node.children else { return false };
            node.depth >= base
                && children.iter().all(|&c| tree.node(c).is_leaf())
                && !children.iter().any(|&c| leaf_test(field, tree.node(c).vertices, cfg))
                && can_merge(label_area(field, node.vertices), node.vertices.map(|i| field.vorticity[i as usize]), cfg)
        })
        .collect();
    if candidates.is_empty() {
        return Ok(0);
    }
    let mut removed = Vec::new();
    for &id in &candidates {
        removed.extend(field.mesh.merge(id));
    }
    field.remove_particles(&removed);
    field.areas = field.mesh.label_areas(&field.labels)?;
    Ok(candidates.len())
}

/// One adaptive step: a refinement pass followed by a coarsening pass.
pub fn amr_step(field: &mut ParticleField, cfg: &AmrConfig) -> Result<(usize, usize), GeometryError> {
    let refined = refine_pass(field, cfg, None)?;
    let coarsened = coarsen_pass(field, cfg)?;
    Ok((refined, coarsened))
}
