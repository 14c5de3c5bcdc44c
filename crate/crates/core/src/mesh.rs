//! Icosahedral meshes and the triangle trees built on them.
//!
//! Two trees live here. [`TriTree`] is the topological face hierarchy over
//! vertex indices; it backs [`IcosaMesh`] and the solver's Lagrangian
//! triangulation, where vertices are particles that move. [`FaceTree`] is the
//! static geometric hierarchy used by the tree code, with particles binned by
//! their current position.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{
    great_circle_distance, min_barycentric, signed_triangle_area, spherical_polygon_area, triangle_circumcenter,
    triangle_radius, BarycentricCoords, GeometryError, LatLon, SphericalTriangle, UnitVector3, CONTAINMENT_TOL,
};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("particle {particle} is not contained in any root face")]
    Unbinned { particle: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("failed to write mesh export: {0}")]
    Io(#[from] std::io::Error),
}

/// Children of a split face, in fixed order. With vertices `(v1, v2, v3)` and
/// edge midpoints `(m12, m23, m31)` the children are `(v1, m12, m31)`,
/// `(m12, v2, m23)`, `(m31, m23, v3)` and the center `(m12, m23, m31)`.
pub fn child_vertex_layout<T: Copy>(v: [T; 3], m: [T; 3]) -> [[T; 3]; 4] {
    [[v[0], m[0], m[2]], [m[0], v[1], m[1]], [m[2], m[1], v[2]], [m[0], m[1], m[2]]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriNode {
    pub vertices: [u32; 3],
    /// Edge-midpoint vertices `(m12, m23, m31)`, present once the face is split.
    pub midpoints: Option<[u32; 3]>,
    pub children: Option<[u32; 4]>,
    pub parent: Option<u32>,
    pub depth: u32,
}

impl TriNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Topological face hierarchy with 4-way splits. Node slots freed by
/// [`TriTree::merge`] are recycled.
#[derive(Debug, Clone, Default)]
pub struct TriTree {
    nodes: Vec<TriNode>,
    roots: Vec<u32>,
    free: Vec<u32>,
}

impl TriTree {
    pub fn from_roots(faces: &[[u32; 3]]) -> Self {
        let nodes: Vec<TriNode> = faces
            .iter()
            .map(|&vertices| TriNode { vertices, midpoints: None, children: None, parent: None, depth: 0 })
            .collect();
        let roots = (0..nodes.len() as u32).collect();
        Self { nodes, roots, free: Vec::new() }
    }

    pub fn roots(&self) -> &[u32] {
        &self.roots
    }

    pub fn node(&self, id: u32) -> &TriNode {
        &self.nodes[id as usize]
    }

    /// Number of live nodes.
    pub fn len(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn alloc(&mut self, node: TriNode) -> u32 {
        match self.free.pop() {
            Some(id) => {
                self.nodes[id as usize] = node;
                id
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    /// Splits a leaf into four children using the given edge-midpoint vertices.
    pub fn split(&mut self, id: u32, midpoints: [u32; 3]) -> [u32; 4] {
        let parent = self.nodes[id as usize].clone();
        assert!(parent.is_leaf(), "only leaves can be split");
        let layout = child_vertex_layout(parent.vertices, midpoints);
        let children = layout.map(|vertices| {
            self.alloc(TriNode { vertices, midpoints: None, children: None, parent: Some(id), depth: parent.depth + 1 })
        });
        let node = &mut self.nodes[id as usize];
        node.midpoints = Some(midpoints);
        node.children = Some(children);
        children
    }

    /// Removes the four leaf children of `id`, returning its former midpoints.
    pub fn merge(&mut self, id: u32) -> [u32; 3] {
        let node = &mut self.nodes[id as usize];
        let children = node.children.take().expect("merge requires children");
        let mids = node.midpoints.take().expect("split nodes carry midpoints");
        for c in children {
            assert!(self.nodes[c as usize].is_leaf(), "merge requires leaf children");
            self.free.push(c);
        }
        mids
    }

    /// Leaves in depth-first order (roots in order, children in layout order).
    pub fn leaves(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack: Vec<u32> = self.roots.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            match self.nodes[id as usize].children {
                Some(ch) => stack.extend(ch.iter().rev()),
                None => out.push(id),
            }
        }
        out
    }

    /// All live nodes in depth-first order.
    pub fn nodes_depth_first(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack: Vec<u32> = self.roots.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            out.push(id);
            if let Some(ch) = self.nodes[id as usize].children {
                stack.extend(ch.iter().rev());
            }
        }
        out
    }

    /// Applies `f` to every vertex index stored in live nodes.
    pub fn remap_vertices(&mut self, f: impl Fn(u32) -> u32) {
        let free: std::collections::HashSet<u32> = self.free.iter().copied().collect();
        for (id, node) in self.nodes.iter_mut().enumerate() {
            if free.contains(&(id as u32)) {
                continue;
            }
            node.vertices = node.vertices.map(&f);
            if let Some(m) = node.midpoints.as_mut() {
                *m = m.map(&f);
            }
        }
    }

    fn deformed_triangle(&self, id: u32, positions: &[UnitVector3]) -> SphericalTriangle {
        let v = self.nodes[id as usize].vertices;
        SphericalTriangle::from_vertices_unchecked(
            positions[v[0] as usize],
            positions[v[1] as usize],
            positions[v[2] as usize],
        )
    }
}

/// Unordered edge key.
pub fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A refined icosahedron: vertices on the unit sphere plus the full face
/// hierarchy from the 20 base faces down to `level`.
#[derive(Debug, Clone)]
pub struct IcosaMesh {
    vertices: Vec<UnitVector3>,
    tree: TriTree,
    level: u32,
    edge_midpoints: BTreeMap<(u32, u32), u32>,
}

impl IcosaMesh {
    pub fn vertices(&self) -> &[UnitVector3] {
        &self.vertices
    }

    pub fn tree(&self) -> &TriTree {
        &self.tree
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Midpoint vertex of every split edge.
    pub fn edge_midpoints(&self) -> &BTreeMap<(u32, u32), u32> {
        &self.edge_midpoints
    }

    /// Finest-level faces as vertex-index triples.
    pub fn faces(&self) -> Vec<[u32; 3]> {
        self.tree.leaves().into_iter().map(|id| self.tree.node(id).vertices).collect()
    }

    pub fn face_triangle(&self, face: [u32; 3]) -> SphericalTriangle {
        SphericalTriangle::from_vertices_unchecked(
            self.vertices[face[0] as usize],
            self.vertices[face[1] as usize],
            self.vertices[face[2] as usize],
        )
    }
}

/// Expected vertex count of a level-`level` refinement.
pub fn vertex_count(level: u32) -> usize {
    10 * 4usize.pow(level) + 2
}

pub fn face_count(level: u32) -> usize {
    20 * 4usize.pow(level)
}

fn base_vertices() -> Vec<UnitVector3> {
    let ring_lat = 0.5f64.atan();
    let mut v = vec![UnitVector3::new(0.0, 0.0, 1.0).unwrap()];
    for k in 0..5 {
        let lon = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
        v.push(crate::geometry::latlon_to_unit(LatLon::new(ring_lat, lon)));
    }
    for k in 0..5 {
        let lon = 2.0 * std::f64::consts::PI * k as f64 / 5.0 + std::f64::consts::PI / 5.0;
        v.push(crate::geometry::latlon_to_unit(LatLon::new(-ring_lat, lon)));
    }
    v.push(UnitVector3::new(0.0, 0.0, -1.0).unwrap());
    v
}

fn base_faces(vertices: &[UnitVector3]) -> Vec<[u32; 3]> {
    let up = |k: u32| 1 + k % 5;
    let lo = |k: u32| 6 + k % 5;
    let mut faces = Vec::with_capacity(20);
    for k in 0..5 {
        faces.push([0, up(k), up(k + 1)]);
    }
    for k in 0..5 {
        faces.push([up(k), lo(k), up(k + 1)]);
        faces.push([up(k + 1), lo(k), lo(k + 1)]);
    }
    for k in 0..5 {
        faces.push([11, lo(k + 1), lo(k)]);
    }
    for f in faces.iter_mut() {
        let [a, b, c] = f.map(|i| vertices[i as usize]);
        if a.as_vector().dot(&b.cross(&c)) < 0.0 {
            f.swap(1, 2);
        }
    }
    faces
}

/// The regular icosahedron with vertices at both poles.
pub fn build_base_icosahedron() -> IcosaMesh {
    let vertices = base_vertices();
    let faces = base_faces(&vertices);
    IcosaMesh { tree: TriTree::from_roots(&faces), vertices, level: 0, edge_midpoints: BTreeMap::new() }
}

/// Splits every finest face `levels` more times, projecting edge midpoints
/// radially onto the sphere.
pub fn refine_mesh(m: &IcosaMesh, levels: u32) -> IcosaMesh {
    let mut mesh = m.clone();
    for _ in 0..levels {
        for leaf in mesh.tree.leaves() {
            let v = mesh.tree.node(leaf).vertices;
            let mut mids = [0u32; 3];
            for (k, (a, b)) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])].into_iter().enumerate() {
                let vertices = &mut mesh.vertices;
                mids[k] = *mesh.edge_midpoints.entry(edge_key(a, b)).or_insert_with(|| {
                    let mid = vertices[a as usize].midpoint(&vertices[b as usize]).expect("adjacent vertices are never antipodal");
                    vertices.push(mid);
                    (vertices.len() - 1) as u32
                });
            }
            mesh.tree.split(leaf, mids);
        }
        mesh.level += 1;
    }
    mesh
}

/// Icosahedral mesh at the given refinement level.
pub fn icosahedral_mesh(level: u32) -> IcosaMesh {
    refine_mesh(&build_base_icosahedron(), level)
}

/// Per-vertex quadrature areas (node patches).
#[derive(Debug, Clone, PartialEq)]
pub struct NodePatchAreas {
    pub areas: Vec<f64>,
}

impl NodePatchAreas {
    pub fn total(&self) -> f64 {
        self.areas.iter().sum()
    }
}

/// Area of the dual cell around each vertex: the spherical polygon through
/// the circumcenters of the incident faces, ordered counterclockwise.
pub fn node_patch_areas(m: &IcosaMesh) -> Result<NodePatchAreas, MeshError> {
    let faces = m.faces();
    let centers = faces
        .iter()
        .map(|&f| triangle_circumcenter(&m.face_triangle(f)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut incident: Vec<Vec<u32>> = vec![Vec::with_capacity(6); m.vertices.len()];
    for (fi, f) in faces.iter().enumerate() {
        for &v in f {
            incident[v as usize].push(fi as u32);
        }
    }
    let mut areas = Vec::with_capacity(m.vertices.len());
    for (vi, faces_here) in incident.iter().enumerate() {
        let v = m.vertices[vi].as_vector();
        let seed = if v.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = (seed - v * v.dot(&seed)).normalize();
        let e2 = v.cross(&e1);
        let mut ring: Vec<(f64, UnitVector3)> = faces_here
            .iter()
            .map(|&fi| {
                let c = centers[fi as usize];
                (c.as_vector().dot(&e2).atan2(c.as_vector().dot(&e1)), c)
            })
            .collect();
        ring.sort_by(|a, b| a.0.total_cmp(&b.0));
        let polygon: Vec<UnitVector3> = ring.into_iter().map(|(_, c)| c).collect();
        areas.push(spherical_polygon_area(&polygon)?);
    }
    Ok(NodePatchAreas { areas })
}

/// Splits a triangle's area among its vertices along the perpendicular
/// bisectors: vertex `k` receives the (signed) quadrilateral spanned by the
/// vertex, its two adjacent edge midpoints and the circumcenter. Summing the
/// shares over all faces of a conforming mesh reproduces the node patches.
pub fn circumcentric_shares(v: [UnitVector3; 3]) -> Result<[f64; 3], GeometryError> {
    let t = SphericalTriangle::from_vertices_unchecked(v[0], v[1], v[2]);
    let c = triangle_circumcenter(&t)?;
    let m12 = v[0].midpoint(&v[1])?;
    let m23 = v[1].midpoint(&v[2])?;
    let m31 = v[2].midpoint(&v[0])?;
    let quad = |a: &UnitVector3, ma: &UnitVector3, mb: &UnitVector3| {
        signed_triangle_area(a, ma, &c) + signed_triangle_area(a, &c, mb)
    };
    Ok([quad(&v[0], &m12, &m31), quad(&v[1], &m23, &m12), quad(&v[2], &m31, &m23)])
}

/// Writes `id,x,y,z,area` rows for debugging.
pub fn write_vertices_csv<W: Write>(m: &IcosaMesh, areas: &NodePatchAreas, out: W) -> Result<(), MeshError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "x", "y", "z", "area"]).map_err(csv_io)?;
    for (i, (v, a)) in m.vertices.iter().zip(&areas.areas).enumerate() {
        w.write_record([
            i.to_string(),
            format!("{:.16e}", v.x()),
            format!("{:.16e}", v.y()),
            format!("{:.16e}", v.z()),
            format!("{:.16e}", a),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

const LOCATE_SEARCH_MARGIN: f64 = 0.25;

/// Finds the leaf of `tree` whose triangle, with vertices at the (possibly
/// deformed) `positions`, contains `p`.
///
/// The first path tried descends through the first child that contains `p`,
/// or the child with the least-negative minimum barycentric coordinate when
/// none does. If that leaf does not contain `p` (coarse deformed faces only
/// approximate the union of their children), siblings within a margin are
/// searched; the best leaf seen is returned when nothing contains `p`.
pub fn locate_deformed_triangle(tree: &TriTree, positions: &[UnitVector3], p: &UnitVector3) -> u32 {
    let mut best = (f64::NEG_INFINITY, u32::MAX);
    let roots = tree.roots().to_vec();
    if let Some(found) = locate_among(tree, positions, p, &roots, &mut best) {
        return found;
    }
    if best.1 == u32::MAX {
        // every explored leaf was degenerate; fall back to the first leaf
        return tree.leaves()[0];
    }
    best.1
}

fn locate_among(
    tree: &TriTree,
    positions: &[UnitVector3],
    p: &UnitVector3,
    candidates: &[u32],
    best: &mut (f64, u32),
) -> Option<u32> {
    let scored: Vec<(f64, u32)> =
        candidates.iter().map(|&c| (min_barycentric(&tree.deformed_triangle(c, positions), p), c)).collect();
    let mut order: Vec<(f64, u32)> = scored.iter().copied().filter(|s| s.0 >= -CONTAINMENT_TOL).collect();
    let mut rest: Vec<(f64, u32)> = scored.iter().copied().filter(|s| s.0 < -CONTAINMENT_TOL).collect();
    rest.sort_by(|a, b| b.0.total_cmp(&a.0));
    order.extend(rest);
    for (k, &(score, id)) in order.iter().enumerate() {
        if k > 0 && score < -LOCATE_SEARCH_MARGIN {
            break;
        }
        let node = tree.node(id);
        match node.children {
            None => {
                if score > best.0 || best.1 == u32::MAX {
                    *best = (score, id);
                }
                if score >= -CONTAINMENT_TOL {
                    return Some(id);
                }
            }
            Some(children) => {
                if let Some(found) = locate_among(tree, positions, p, &children, best) {
                    return Some(found);
                }
            }
        }
    }
    None
}

/// A node of the binned geometric face tree.
#[derive(Debug, Clone)]
pub struct TriangleNode {
    pub triangle: SphericalTriangle,
    pub level: u32,
    pub children: Option<[u32; 4]>,
    pub parent: Option<u32>,
    pub circumcenter: UnitVector3,
    pub radius: f64,
    bin_start: u32,
    bin_end: u32,
    // (v2 x v3, v3 x v1, v1 x v2) / det, so p . normal[k] is the raw coordinate
    scaled_normals: [Vector3<f64>; 3],
}

impl TriangleNode {
    fn new(triangle: SphericalTriangle, level: u32, parent: Option<u32>) -> Result<Self, GeometryError> {
        let [a, b, c] = triangle.vertices();
        let det = a.as_vector().dot(&b.cross(c));
        let scaled_normals = [b.cross(c) / det, c.cross(a) / det, a.cross(b) / det];
        Ok(Self {
            circumcenter: triangle_circumcenter(&triangle)?,
            radius: triangle_radius(&triangle)?,
            triangle,
            level,
            children: None,
            parent,
            bin_start: 0,
            bin_end: 0,
            scaled_normals,
        })
    }

    pub fn bin_len(&self) -> usize {
        (self.bin_end - self.bin_start) as usize
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Normalized barycentric coordinates of `p`; `None` in the opposite hemisphere.
    #[inline]
    pub fn barycentric(&self, p: &UnitVector3) -> Option<BarycentricCoords> {
        let pv = p.as_vector();
        let c = [pv.dot(&self.scaled_normals[0]), pv.dot(&self.scaled_normals[1]), pv.dot(&self.scaled_normals[2])];
        let s = c[0] + c[1] + c[2];
        (s > 1e-14).then(|| BarycentricCoords::new(c[0] / s, c[1] / s, c[2] / s))
    }

    #[inline]
    fn min_barycentric(&self, p: &UnitVector3) -> f64 {
        self.barycentric(p).map_or(f64::NEG_INFINITY, |b| b.min())
    }

    fn split_geometry(&self) -> Result<[SphericalTriangle; 4], GeometryError> {
        let v = *self.triangle.vertices();
        let m = [v[0].midpoint(&v[1])?, v[1].midpoint(&v[2])?, v[2].midpoint(&v[0])?];
        let layout = child_vertex_layout(v, m);
        let mut out = [self.triangle; 4];
        for (o, [a, b, c]) in out.iter_mut().zip(layout) {
            *o = SphericalTriangle::new(a, b, c)?;
        }
        Ok(out)
    }
}

/// Geometric icosahedral face tree with particles binned by position.
///
/// Bins are contiguous ranges of a particle permutation, so a parent's bin
/// is exactly the concatenation of its children's bins. Within a bin,
/// particles keep ascending index order.
#[derive(Debug, Clone)]
pub struct FaceTree {
    nodes: Vec<TriangleNode>,
    roots: Vec<u32>,
    order: Vec<u32>,
}

impl FaceTree {
    pub fn nodes(&self) -> &[TriangleNode] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> &TriangleNode {
        &self.nodes[id as usize]
    }

    pub fn roots(&self) -> &[u32] {
        &self.roots
    }

    /// Particle indices binned in node `id`.
    pub fn bin(&self, id: u32) -> &[u32] {
        let n = &self.nodes[id as usize];
        &self.order[n.bin_start as usize..n.bin_end as usize]
    }

    pub fn n_particles(&self) -> usize {
        self.order.len()
    }

    pub fn max_level(&self) -> u32 {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }
}

fn base_root_nodes() -> Result<Vec<TriangleNode>, GeometryError> {
    let base = build_base_icosahedron();
    base.faces()
        .into_iter()
        .map(|f| {
            let t = base.face_triangle(f);
            TriangleNode::new(SphericalTriangle::new(*t.v1(), *t.v2(), *t.v3())?, 0, None)
        })
        .collect()
}

/// Bins `positions` into the icosahedral face tree. A node is split while it
/// holds more than `split_threshold` particles and its level is below
/// `max_depth`; each particle follows the first child that contains it.
pub fn bin_particles(positions: &[UnitVector3], split_threshold: usize, max_depth: u32) -> Result<FaceTree, MeshError> {
    let mut nodes = base_root_nodes()?;
    let n_roots = nodes.len();
    let mut root_of = Vec::with_capacity(positions.len());
    for (i, p) in positions.iter().enumerate() {
        let r = nodes
            .iter()
            .position(|node| node.min_barycentric(p) >= -CONTAINMENT_TOL)
            .ok_or(MeshError::Unbinned { particle: i })?;
        root_of.push(r);
    }
    let mut order: Vec<u32> = Vec::with_capacity(positions.len());
    for (r, node) in nodes.iter_mut().enumerate() {
        node.bin_start = order.len() as u32;
        order.extend((0..positions.len() as u32).filter(|&i| root_of[i as usize] == r));
        node.bin_end = order.len() as u32;
    }

    let mut id = 0;
    while id < nodes.len() {
        let node = &nodes[id];
        if node.bin_len() > split_threshold && node.level < max_depth {
            let tris = node.split_geometry()?;
            let level = node.level + 1;
            let (start, end) = (node.bin_start as usize, node.bin_end as usize);
            let mut children = tris
                .into_iter()
                .map(|t| TriangleNode::new(t, level, Some(id as u32)))
                .collect::<Result<Vec<_>, _>>()?;
            let mut groups: [Vec<u32>; 4] = Default::default();
            for &pi in &order[start..end] {
                let p = &positions[pi as usize];
                let k = children.iter().position(|c| c.min_barycentric(p) >= -CONTAINMENT_TOL).unwrap_or_else(|| {
                    let scores = children.iter().map(|c| c.min_barycentric(p));
                    scores.enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).map(|(k, _)| k).unwrap_or(0)
                });
                groups[k].push(pi);
            }
            let mut cursor = start;
            let mut ids = [0u32; 4];
            for (k, (child, group)) in children.iter_mut().zip(&groups).enumerate() {
                child.bin_start = cursor as u32;
                order[cursor..cursor + group.len()].copy_from_slice(group);
                cursor += group.len();
                child.bin_end = cursor as u32;
                ids[k] = (nodes.len() + k) as u32;
            }
            nodes[id].children = Some(ids);
            nodes.extend(children);
        }
        id += 1;
    }
    Ok(FaceTree { nodes, roots: (0..n_roots as u32).collect(), order })
}

/// Arc distance between two face-tree node circumcenters.
pub fn center_distance(a: &TriangleNode, b: &TriangleNode) -> f64 {
    great_circle_distance(&a.circumcenter, &b.circumcenter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{triangle_area, triangle_contains};
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;
    use std::f64::consts::PI;

    #[test]
    fn base_icosahedron_is_regular() {
        let m = build_base_icosahedron();
        assert_eq!(m.vertices().len(), 12);
        assert_eq!(m.faces().len(), 20);
        let faces = m.faces();
        let edge0 = great_circle_distance(&m.vertices()[faces[0][0] as usize], &m.vertices()[faces[0][1] as usize]);
        for f in &faces {
            for k in 0..3 {
                let d = great_circle_distance(&m.vertices()[f[k] as usize], &m.vertices()[f[(k + 1) % 3] as usize]);
                assert_abs_diff_eq!(d, edge0, epsilon = 1e-12);
            }
            let t = m.face_triangle(*f);
            assert_abs_diff_eq!(triangle_area(&t), 4.0 * PI / 20.0, epsilon = 1e-10);
            // circumcenter of a regular face is its normalized centroid
            let c = triangle_circumcenter(&t).unwrap();
            assert!((c.as_vector() - t.centroid().unwrap().as_vector()).norm() < 1e-12);
        }
        assert_eq!(m.vertices()[0].z(), 1.0);
        assert_eq!(m.vertices()[11].z(), -1.0);
    }

    #[test]
    fn counts_follow_refinement_formula() {
        let mut m = build_base_icosahedron();
        for level in 0..=7 {
            if level > 0 {
                m = refine_mesh(&m, 1);
            }
            assert_eq!(m.vertices().len(), vertex_count(level));
            assert_eq!(m.faces().len(), face_count(level));
        }
        assert_eq!(vertex_count(3), 642);
        assert_eq!(m.vertices().len(), 163842);
    }

    #[test]
    fn zero_refinements_is_identity() {
        let m = build_base_icosahedron();
        let r = refine_mesh(&m, 0);
        assert_eq!(r.vertices(), m.vertices());
        assert_eq!(r.faces(), m.faces());
    }

    #[test]
    fn children_partition_parent_area() {
        let m = icosahedral_mesh(5);
        let tree = m.tree();
        for id in tree.nodes_depth_first() {
            let node = tree.node(id);
            let Some(ch) = node.children else { continue };
            if node.depth > 4 {
                continue;
            }
            let parent_area = triangle_area(&m.face_triangle(node.vertices));
            let sum: f64 = ch.iter().map(|&c| triangle_area(&m.face_triangle(tree.node(c).vertices))).sum();
            assert_abs_diff_eq!(parent_area, sum, epsilon = 1e-12);
            let pr = triangle_radius(&m.face_triangle(node.vertices)).unwrap();
            for &c in &ch {
                assert!(triangle_radius(&m.face_triangle(tree.node(c).vertices)).unwrap() < pr);
            }
        }
        let total: f64 = m.faces().iter().map(|&f| triangle_area(&m.face_triangle(f))).sum();
        assert_abs_diff_eq!(total, 4.0 * PI, epsilon = 1e-10);
    }

    #[test]
    fn node_patches_partition_the_sphere() {
        for level in 0..=5 {
            let m = icosahedral_mesh(level);
            let a = node_patch_areas(&m).unwrap();
            assert!(a.areas.iter().all(|&x| x > 0.0));
            assert_abs_diff_eq!(a.total(), 4.0 * PI, epsilon = 1e-10);
            if level == 0 {
                for &x in &a.areas {
                    assert_abs_diff_eq!(x, 4.0 * PI / 12.0, epsilon = 1e-10);
                }
            }
            if level == 3 {
                let max = a.areas.iter().cloned().fold(f64::MIN, f64::max);
                let min = a.areas.iter().cloned().fold(f64::MAX, f64::min);
                assert!(max / min < 2.0, "ratio {}", max / min);
            }
        }
    }

    #[test]
    fn circumcentric_shares_reproduce_node_patches() {
        let m = icosahedral_mesh(3);
        let patches = node_patch_areas(&m).unwrap();
        let mut shares = vec![0.0; m.vertices().len()];
        for f in m.faces() {
            let s = circumcentric_shares(f.map(|i| m.vertices()[i as usize])).unwrap();
            for k in 0..3 {
                shares[f[k] as usize] += s[k];
            }
        }
        for (a, b) in patches.areas.iter().zip(&shares) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn every_vertex_lies_in_some_leaf() {
        let m = icosahedral_mesh(3);
        let faces = m.faces();
        for v in m.vertices() {
            assert!(faces.iter().any(|&f| triangle_contains(&m.face_triangle(f), v)));
        }
    }

    #[test]
    fn binning_partitions_particles() {
        let m = icosahedral_mesh(3);
        let tree = bin_particles(m.vertices(), 0, 3).unwrap();
        let n = m.vertices().len();
        for level in 0..=3 {
            let total: usize = tree.nodes().iter().filter(|nd| nd.level == level).map(|nd| nd.bin_len()).sum();
            assert_eq!(total, n);
        }
        for &r in tree.roots() {
            assert!(tree.node(r).bin_len() > 0);
        }
        for (id, node) in tree.nodes().iter().enumerate() {
            if let Some(ch) = node.children {
                let mut union: Vec<u32> = ch.iter().flat_map(|&c| tree.bin(c).to_vec()).collect();
                union.sort_unstable();
                let mut own = tree.bin(id as u32).to_vec();
                own.sort_unstable();
                assert_eq!(union, own);
            }
            for &p in tree.bin(id as u32) {
                assert!(node.min_barycentric(&m.vertices()[p as usize]) >= -1e-10);
            }
        }
    }

    #[test]
    fn single_particle_has_one_bin_per_level() {
        let p = [UnitVector3::new(0.3, -0.2, 0.9).unwrap()];
        let tree = bin_particles(&p, 0, 4).unwrap();
        for level in 0..=4 {
            let bins: Vec<usize> =
                tree.nodes().iter().filter(|n| n.level == level && n.bin_len() > 0).map(|n| n.bin_len()).collect();
            assert_eq!(bins, vec![1]);
        }
    }

    #[test]
    fn binning_is_order_independent() {
        let m = icosahedral_mesh(2);
        let pts = m.vertices().to_vec();
        let tree = bin_particles(&pts, 4, 4).unwrap();
        let perm: Vec<usize> = (0..pts.len()).rev().collect();
        let shuffled: Vec<UnitVector3> = perm.iter().map(|&i| pts[i]).collect();
        let tree2 = bin_particles(&shuffled, 4, 4).unwrap();
        assert_eq!(tree.nodes().len(), tree2.nodes().len());
        for id in 0..tree.nodes().len() as u32 {
            let mut a: Vec<usize> = tree.bin(id).iter().map(|&i| i as usize).collect();
            let mut b: Vec<usize> = tree2.bin(id).iter().map(|&i| perm[i as usize]).collect();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
        }
        let again = bin_particles(&pts, 4, 4).unwrap();
        assert_eq!(again.order, tree.order);
    }

    #[test]
    fn locate_in_undeformed_mesh() {
        let m = icosahedral_mesh(3);
        let tree = m.tree();
        for leaf in tree.leaves().into_iter().step_by(7) {
            let c = m.face_triangle(tree.node(leaf).vertices).centroid().unwrap();
            assert_eq!(locate_deformed_triangle(tree, m.vertices(), &c), leaf);
        }
        // a shared edge midpoint resolves deterministically to one adjacent face
        let leaf = tree.leaves()[10];
        let v = tree.node(leaf).vertices;
        let mid = m.vertices()[v[0] as usize].midpoint(&m.vertices()[v[1] as usize]).unwrap();
        let found = locate_deformed_triangle(tree, m.vertices(), &mid);
        assert_eq!(found, locate_deformed_triangle(tree, m.vertices(), &mid));
        let fv = tree.node(found).vertices;
        assert!(fv.contains(&v[0]) && fv.contains(&v[1]));
    }

    #[test]
    fn locate_is_rotation_equivariant() {
        let m = icosahedral_mesh(3);
        let tree = m.tree();
        let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), 0.4) * Rotation3::from_axis_angle(&Vector3::z_axis(), 1.1);
        let moved: Vec<UnitVector3> =
            m.vertices().iter().map(|v| UnitVector3::from_vector(rot * v.as_vector()).unwrap()).collect();
        for leaf in tree.leaves().into_iter().step_by(5) {
            let c = m.face_triangle(tree.node(leaf).vertices).centroid().unwrap();
            let rc = UnitVector3::from_vector(rot * c.as_vector()).unwrap();
            assert_eq!(locate_deformed_triangle(tree, &moved, &rc), leaf);
        }
    }

    #[test]
    fn split_and_merge_recycle_nodes() {
        let mut t = TriTree::from_roots(&[[0, 1, 2]]);
        let ch = t.split(0, [3, 4, 5]);
        assert_eq!(t.node(ch[3]).vertices, [3, 4, 5]);
        assert_eq!(t.node(ch[0]).vertices, [0, 3, 5]);
        assert_eq!(t.leaves().len(), 4);
        assert_eq!(t.merge(0), [3, 4, 5]);
        assert_eq!(t.leaves(), vec![0]);
        assert_eq!(t.len(), 1);
        t.split(0, [3, 4, 5]);
        assert_eq!(t.len(), 5);
    }

    #[test]
    fn export_has_header() {
        let m = build_base_icosahedron();
        let a = node_patch_areas(&m).unwrap();
        let mut buf = Vec::new();
        write_vertices_csv(&m, &a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,x,y,z,area\n"));
        assert_eq!(text.lines().count(), 13);
    }
}
