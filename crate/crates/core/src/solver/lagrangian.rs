use std::collections::BTreeMap;

use crate::geometry::{GeometryError, UnitVector3};
use crate::mesh::{circumcentric_shares, edge_key, IcosaMesh, TriTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Midpoint {
    particle: u32,
    // number of split faces that use this edge
    refs: u32,
}

/// Face hierarchy over particle indices. Particles are the vertices; they
/// move with the flow while their labels stay at the reference positions.
#[derive(Debug, Clone)]
pub struct LagrangianMesh {
    tree: TriTree,
    midpoints: BTreeMap<(u32, u32), Midpoint>,
    base_level: u32,
}

impl LagrangianMesh {
    pub fn from_icosa(mesh: &IcosaMesh) -> Self {
        let tree = mesh.tree().clone();
        let mut midpoints = BTreeMap::new();
        for id in tree.nodes_depth_first() {
            let node = tree.node(id);
            if let Some(m) = node.midpoints {
                let v = node.vertices;
                for (k, (a, b)) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])].into_iter().enumerate() {
                    midpoints.entry(edge_key(a, b)).or_insert(Midpoint { particle: m[k], refs: 0 }).refs += 1;
                }
            }
        }
        Self { tree, midpoints, base_level: mesh.level() }
    }

    pub fn tree(&self) -> &TriTree {
        &self.tree
    }

    pub fn base_level(&self) -> u32 {
        self.base_level
    }

    pub fn midpoint_of(&self, a: u32, b: u32) -> Option<u32> {
        self.midpoints.get(&edge_key(a, b)).map(|m| m.particle)
    }

    /// Quadrature areas from circumcentric splits of the leaves in label space.
    pub fn label_areas(&self, labels: &[UnitVector3]) -> Result<Vec<f64>, GeometryError> {
        let mut areas = vec![0.0; labels.len()];
        for leaf in self.tree.leaves() {
            let v = self.tree.node(leaf).vertices;
            let shares = circumcentric_shares(v.map(|i| labels[i as usize]))?;
            for k in 0..3 {
                areas[v[k] as usize] += shares[k];
            }
        }
        Ok(areas)
    }

    /// Splits a leaf; `create(a, b)` must return a new particle for edge
    /// `(a, b)` when no neighbor has split it yet.
    pub fn split(&mut self, leaf: u32, mut create: impl FnMut(u32, u32) -> u32) -> [u32; 4] {
        let v = self.tree.node(leaf).vertices;
        let mut mids = [0u32; 3];
        for (k, (a, b)) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])].into_iter().enumerate() {
            let entry = self.midpoints.entry(edge_key(a, b)).or_insert_with(|| Midpoint { particle: create(a, b), refs: 0 });
            entry.refs += 1;
            mids[k] = entry.particle;
        }
        self.tree.split(leaf, mids)
    }

    /// Merges the leaf children of `node`, returning particles that no face uses any more.
    pub fn merge(&mut self, node: u32) -> Vec<u32> {
        let v = self.tree.node(node).vertices;
        self.tree.merge(node);
        let mut removed = Vec::new();
        for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
            let key = edge_key(a, b);
            let m = self.midpoints.get_mut(&key).expect("split edges are registered");
            m.refs -= 1;
            if m.refs == 0 {
                removed.push(m.particle);
                self.midpoints.remove(&key);
            }
        }
        removed
    }

    /// Renumbers particles after removals; `map[old]` is the new index.
    pub fn remap(&mut self, map: &[u32]) {
        self.tree.remap_vertices(|i| map[i as usize]);
        let old = std::mem::take(&mut self.midpoints);
        self.midpoints = old
            .into_iter()
            .map(|((a, b), m)| (edge_key(map[a as usize], map[b as usize]), Midpoint { particle: map[m.particle as usize], refs: m.refs }))
            .collect();
    }
}
