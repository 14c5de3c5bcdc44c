//! Dual tree traversal and fast kernel summation.
//!
//! [`treecode_sum`] bins the particles into the icosahedral face tree,
//! builds the interaction list, and evaluates it in three batched phases:
//! source proxy charges, target proxy potentials and their interpolation
//! coefficients, then a parallel pass over target leaves. Per-particle
//! accumulation order is fixed by the tree, so results do not depend on the
//! number of worker threads. The `eval_*` functions evaluate one interaction
//! at a time exactly as written and serve as a slow reference.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{BarycentricCoords, UnitVector3};
use crate::kernels::Kernel;
use crate::mesh::{bin_particles, center_distance, FaceTree, MeshError, TriangleNode};
use crate::sbb::{proxy_points, SbbBasis, SbbError, VandermondeFactor};

/// Per-particle accumulator of `D` reals.
pub type PotentialField<const D: usize> = Vec<[f64; D]>;

#[derive(Debug, Error)]
pub enum TreecodeError {
    #[error("invalid tree-code configuration: {0}")]
    InvalidConfig(String),
    #[error("{positions} positions but {strengths} strengths")]
    LengthMismatch { positions: usize, strengths: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Sbb(#[from] SbbError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraversalConfig {
    /// Multipole acceptance parameter in (0, 1].
    pub theta: f64,
    /// Largest bin that is never split or interpolated.
    pub n_threshold: usize,
    pub degree: usize,
    pub max_depth: u32,
}

impl TraversalConfig {
    pub fn new(theta: f64, n_threshold: usize, degree: usize, max_depth: u32) -> Result<Self, TreecodeError> {
        let cfg = Self { theta, n_threshold, degree, max_depth };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TreecodeError> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(TreecodeError::InvalidConfig(format!("theta must be in (0, 1], got {}", self.theta)));
        }
        if self.n_threshold == 0 {
            return Err(TreecodeError::InvalidConfig("n_threshold must be at least 1".into()));
        }
        if self.degree == 0 {
            return Err(TreecodeError::InvalidConfig("degree must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(TreecodeError::InvalidConfig("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InteractionKind {
    PP,
    PC,
    CP,
    CC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub target: u32,
    pub source: u32,
    pub kind: InteractionKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionList {
    pub interactions: Vec<Interaction>,
}

impl InteractionList {
    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn count(&self, kind: InteractionKind) -> usize {
        self.interactions.iter().filter(|i| i.kind == kind).count()
    }
}

/// `(r_t + r_s) / R < theta` with `R` the arc between circumcenters.
pub fn mac_well_separated(tn: &TriangleNode, sn: &TriangleNode, theta: f64) -> bool {
    mac_test(tn.radius, sn.radius, center_distance(tn, sn), theta)
}

pub fn mac_test(r_t: f64, r_s: f64, distance: f64, theta: f64) -> bool {
    distance > 0.0 && (r_t + r_s) / distance < theta
}

/// Pairs all root faces and descends, emitting one interaction per covered
/// node pair.
pub fn dual_traversal(target_tree: &FaceTree, source_tree: &FaceTree, cfg: &TraversalConfig) -> InteractionList {
    let mut list = InteractionList::default();
    for &t in target_tree.roots() {
        for &s in source_tree.roots() {
            visit(target_tree, source_tree, t, s, cfg, &mut list);
        }
    }
    list
}

fn visit(tt: &FaceTree, st: &FaceTree, t: u32, s: u32, cfg: &TraversalConfig, out: &mut InteractionList) {
    let (tn, sn) = (tt.node(t), st.node(s));
    let (nt, ns) = (tn.bin_len(), sn.bin_len());
    if nt == 0 || ns == 0 {
        return;
    }
    let big_t = nt > cfg.n_threshold;
    let big_s = ns > cfg.n_threshold;
    let mut emit = |kind| out.interactions.push(Interaction { target: t, source: s, kind });
    if mac_well_separated(tn, sn, cfg.theta) {
        emit(match (big_t, big_s) {
            (false, false) => InteractionKind::PP,
            (false, true) => InteractionKind::PC,
            (true, false) => InteractionKind::CP,
            (true, true) => InteractionKind::CC,
        });
        return;
    }
    if !big_t && !big_s {
        emit(InteractionKind::PP);
        return;
    }
    let refine_source = ns >= nt;
    let node = if refine_source { sn } else { tn };
    match node.children {
        Some(children) if node.level < cfg.max_depth => {
            for c in children {
                if refine_source {
                    visit(tt, st, t, c, cfg, out);
                } else {
                    visit(tt, st, c, s, cfg, out);
                }
            }
        }
        _ => emit(InteractionKind::PP),
    }
}

/// Exact `O(N^2)` sum over `j != i`, accumulated in ascending `j`.
pub fn direct_sum<const D: usize, K: Kernel<D>>(
    positions: &[UnitVector3],
    strengths: &[f64],
    kernel: &K,
) -> PotentialField<D> {
    (0..positions.len())
        .into_par_iter()
        .map(|i| {
            let x = &positions[i];
            let mut acc = [0.0; D];
            for (j, (y, &q)) in positions.iter().zip(strengths).enumerate() {
                if j != i {
                    let k = kernel.eval(x, y);
                    for d in 0..D {
                        acc[d] += k[d] * q;
                    }
                }
            }
            acc
        })
        .collect()
}

/// Wall-clock seconds spent in each tree-code phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TreecodeTimings {
    pub binning: f64,
    pub traversal: f64,
    pub evaluation: f64,
}

impl TreecodeTimings {
    pub fn add(&mut self, other: &TreecodeTimings) {
        self.binning += other.binning;
        self.traversal += other.traversal;
        self.evaluation += other.evaluation;
    }
}

pub fn treecode_sum<const D: usize, K: Kernel<D>>(
    positions: &[UnitVector3],
    strengths: &[f64],
    kernel: &K,
    cfg: &TraversalConfig,
) -> Result<PotentialField<D>, TreecodeError> {
    Ok(treecode_sum_timed(positions, strengths, kernel, cfg)?.0)
}

pub fn treecode_sum_timed<const D: usize, K: Kernel<D>>(
    positions: &[UnitVector3],
    strengths: &[f64],
    kernel: &K,
    cfg: &TraversalConfig,
) -> Result<(PotentialField<D>, TreecodeTimings), TreecodeError> {
    cfg.validate()?;
    if positions.len() != strengths.len() {
        return Err(TreecodeError::LengthMismatch { positions: positions.len(), strengths: strengths.len() });
    }
    let mut timings = TreecodeTimings::default();
    let clock = Instant::now();
    let tree = bin_particles(positions, cfg.n_threshold, cfg.max_depth)?;
    timings.binning = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let list = dual_traversal(&tree, &tree, cfg);
    timings.traversal = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let field = evaluate_batched(&tree, &list, positions, strengths, kernel, cfg)?;
    timings.evaluation = clock.elapsed().as_secs_f64();
    Ok((field, timings))
}

#[inline]
fn node_barycentric(node: &TriangleNode, p: &UnitVector3) -> BarycentricCoords {
    node.barycentric(p).expect("binned particles lie in their node's hemisphere")
}

#[inline]
fn add_scaled<const D: usize>(acc: &mut [f64; D], k: &[f64; D], q: f64) {
    for d in 0..D {
        acc[d] += k[d] * q;
    }
}

struct NodeLists {
    pp: Vec<Vec<u32>>,
    pc: Vec<Vec<u32>>,
    far: Vec<Vec<(u32, InteractionKind)>>,
}

fn group_by_target(n_nodes: usize, list: &InteractionList) -> NodeLists {
    let mut lists = NodeLists { pp: vec![Vec::new(); n_nodes], pc: vec![Vec::new(); n_nodes], far: vec![Vec::new(); n_nodes] };
    for it in &list.interactions {
        let t = it.target as usize;
        match it.kind {
            InteractionKind::PP => lists.pp[t].push(it.source),
            InteractionKind::PC => lists.pc[t].push(it.source),
            InteractionKind::CP | InteractionKind::CC => lists.far[t].push((it.source, it.kind)),
        }
    }
    lists
}

fn evaluate_batched<const D: usize, K: Kernel<D>>(
    tree: &FaceTree,
    list: &InteractionList,
    positions: &[UnitVector3],
    strengths: &[f64],
    kernel: &K,
    cfg: &TraversalConfig,
) -> Result<PotentialField<D>, TreecodeError> {
    let n_nodes = tree.nodes().len();
    let factor = VandermondeFactor::lattice(cfg.degree)?;
    let basis = factor.basis().clone();
    let nb = basis.len();
    let lists = group_by_target(n_nodes, list);

    let mut source_cluster = vec![false; n_nodes];
    let mut target_cluster = vec![false; n_nodes];
    for it in &list.interactions {
        match it.kind {
            InteractionKind::PC => source_cluster[it.source as usize] = true,
            InteractionKind::CP => target_cluster[it.target as usize] = true,
            InteractionKind::CC => {
                source_cluster[it.source as usize] = true;
                target_cluster[it.target as usize] = true;
            }
            InteractionKind::PP => {}
        }
    }

    // proxy points for every node used as a cluster on either side
    let proxies: Vec<Option<Vec<UnitVector3>>> = (0..n_nodes)
        .into_par_iter()
        .map(|id| {
            if source_cluster[id] || target_cluster[id] {
                proxy_points(&tree.node(id as u32).triangle, cfg.degree).map(|p| Some(p.points))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_, _>>()?;

    // source proxy charges q~ = V^{-T} w, with w_k = sum_j B_k(y_j) q_j
    let charges: Vec<Option<Vec<f64>>> = (0..n_nodes)
        .into_par_iter()
        .map(|id| {
            source_cluster[id].then(|| {
                let node = tree.node(id as u32);
                let mut w = vec![[0.0f64; 1]; nb];
                let mut b = vec![0.0; nb];
                for &j in tree.bin(id as u32) {
                    basis.eval_into(&node_barycentric(node, &positions[j as usize]), &mut b);
                    let q = strengths[j as usize];
                    for (wk, bk) in w.iter_mut().zip(&b) {
                        wk[0] += bk * q;
                    }
                }
                factor.solve_transpose(&w).into_iter().map(|c| c[0]).collect()
            })
        })
        .collect();

    // target proxy potentials from CP and CC partners, then coefficients V^{-1} phi~
    let coefficients: Vec<Option<Vec<[f64; D]>>> = (0..n_nodes)
        .into_par_iter()
        .map(|id| -> Result<Option<Vec<[f64; D]>>, TreecodeError> {
            if !target_cluster[id] {
                return Ok(None);
            }
            let targets = proxies[id].as_ref().expect("cluster targets have proxy points");
            let mut phi = vec![[0.0; D]; nb];
            for (n, x) in targets.iter().enumerate() {
                let acc = &mut phi[n];
                for &(s, kind) in &lists.far[id] {
                    match kind {
                        InteractionKind::CP => {
                            for &j in tree.bin(s) {
                                add_scaled(acc, &kernel.eval(x, &positions[j as usize]), strengths[j as usize]);
                            }
                        }
                        _ => {
                            let ys = proxies[s as usize].as_ref().expect("cluster sources have proxy points");
                            let qs = charges[s as usize].as_ref().expect("cluster sources have charges");
                            for (y, &q) in ys.iter().zip(qs) {
                                add_scaled(acc, &kernel.eval(x, y), q);
                            }
                        }
                    }
                }
            }
            Ok(Some(factor.solve(&phi)?))
        })
        .collect::<Result<_, _>>()?;

    let leaves: Vec<u32> =
        (0..n_nodes as u32).filter(|&id| tree.node(id).is_leaf() && tree.node(id).bin_len() > 0).collect();
    let per_leaf: Vec<Vec<(u32, [f64; D])>> = leaves
        .par_iter()
        .map(|&leaf| {
            let mut path = vec![leaf];
            while let Some(p) = tree.node(*path.last().unwrap()).parent {
                path.push(p);
            }
            path.reverse();
            let mut pp_sources: Vec<u32> =
                path.iter().flat_map(|&n| lists.pp[n as usize].iter().flat_map(|&s| tree.bin(s).iter().copied())).collect();
            pp_sources.sort_unstable();
            let pc_sources: Vec<u32> = path.iter().flat_map(|&n| lists.pc[n as usize].iter().copied()).collect();
            let interp: Vec<u32> = path.iter().copied().filter(|&n| coefficients[n as usize].is_some()).collect();
            let mut b = vec![0.0; nb];
            tree.bin(leaf)
                .iter()
                .map(|&i| {
                    let x = &positions[i as usize];
                    let mut acc = [0.0; D];
                    for &j in &pp_sources {
                        if j != i {
                            add_scaled(&mut acc, &kernel.eval(x, &positions[j as usize]), strengths[j as usize]);
                        }
                    }
                    for &s in &pc_sources {
                        let ys = proxies[s as usize].as_ref().expect("cluster sources have proxy points");
                        let qs = charges[s as usize].as_ref().expect("cluster sources have charges");
                        for (y, &q) in ys.iter().zip(qs) {
                            add_scaled(&mut acc, &kernel.eval(x, y), q);
                        }
                    }
                    for &n in &interp {
                        let c = coefficients[n as usize].as_ref().unwrap();
                        basis.eval_into(&node_barycentric(tree.node(n), x), &mut b);
                        for (bk, ck) in b.iter().zip(c) {
                            add_scaled(&mut acc, ck, *bk);
                        }
                    }
                    (i, acc)
                })
                .collect()
        })
        .collect();

    let mut field = vec![[0.0; D]; positions.len()];
    for (i, v) in per_leaf.into_iter().flatten() {
        field[i as usize] = v;
    }
    Ok(field)
}

/// `w_k = sum_j B_k(y_j) q_j` over the particles of source node `sn`.
pub fn compute_proxy_weights(
    tree: &FaceTree,
    sn: u32,
    basis: &SbbBasis,
    positions: &[UnitVector3],
    strengths: &[f64],
) -> Vec<f64> {
    let node = tree.node(sn);
    let mut w = vec![0.0; basis.len()];
    let mut b = vec![0.0; basis.len()];
    for &j in tree.bin(sn) {
        basis.eval_into(&node_barycentric(node, &positions[j as usize]), &mut b);
        for (wk, bk) in w.iter_mut().zip(&b) {
            *wk += bk * strengths[j as usize];
        }
    }
    w
}

/// Borrowed inputs shared by the single-interaction evaluators.
pub struct InteractionContext<'a, const D: usize, K: Kernel<D>> {
    pub tree: &'a FaceTree,
    pub positions: &'a [UnitVector3],
    pub strengths: &'a [f64],
    pub kernel: &'a K,
    pub degree: usize,
}

pub fn eval_pp<const D: usize, K: Kernel<D>>(it: &Interaction, ctx: &InteractionContext<'_, D, K>, field: &mut [[f64; D]]) {
    for &i in ctx.tree.bin(it.target) {
        let x = &ctx.positions[i as usize];
        for &j in ctx.tree.bin(it.source) {
            if j != i {
                add_scaled(&mut field[i as usize], &ctx.kernel.eval(x, &ctx.positions[j as usize]), ctx.strengths[j as usize]);
            }
        }
    }
}

/// Interpolates the kernel over the source triangle for each target separately.
pub fn eval_pc<const D: usize, K: Kernel<D>>(
    it: &Interaction,
    ctx: &InteractionContext<'_, D, K>,
    field: &mut [[f64; D]],
) -> Result<(), TreecodeError> {
    let sn = ctx.tree.node(it.source);
    let proxy = proxy_points(&sn.triangle, ctx.degree)?;
    let basis = SbbBasis::new(ctx.degree)?;
    let omega = compute_proxy_weights(ctx.tree, it.source, &basis, ctx.positions, ctx.strengths);
    for &i in ctx.tree.bin(it.target) {
        let x = &ctx.positions[i as usize];
        let values: Vec<[f64; D]> = proxy.points.iter().map(|y| ctx.kernel.eval(x, y)).collect();
        let alpha = crate::sbb::fit_coefficients(&proxy, &values)?;
        for (a, w) in alpha.coefficients.iter().zip(&omega) {
            add_scaled(&mut field[i as usize], a, *w);
        }
    }
    Ok(())
}

/// Interpolates the exact potential from the target triangle's proxy points.
pub fn eval_cp<const D: usize, K: Kernel<D>>(
    it: &Interaction,
    ctx: &InteractionContext<'_, D, K>,
    field: &mut [[f64; D]],
) -> Result<(), TreecodeError> {
    let tn = ctx.tree.node(it.target);
    let proxy = proxy_points(&tn.triangle, ctx.degree)?;
    let values: Vec<[f64; D]> = proxy
        .points
        .iter()
        .map(|x| {
            let mut acc = [0.0; D];
            for &j in ctx.tree.bin(it.source) {
                add_scaled(&mut acc, &ctx.kernel.eval(x, &ctx.positions[j as usize]), ctx.strengths[j as usize]);
            }
            acc
        })
        .collect();
    interpolate_to_targets(it.target, ctx, &proxy, &values, field)
}

/// Source proxy weights and kernel fits at the target proxy points, then
/// interpolation of the resulting potential to the target particles.
pub fn eval_cc<const D: usize, K: Kernel<D>>(
    it: &Interaction,
    ctx: &InteractionContext<'_, D, K>,
    field: &mut [[f64; D]],
) -> Result<(), TreecodeError> {
    let tn = ctx.tree.node(it.target);
    let sn = ctx.tree.node(it.source);
    let target_proxy = proxy_points(&tn.triangle, ctx.degree)?;
    let source_proxy = proxy_points(&sn.triangle, ctx.degree)?;
    let basis = SbbBasis::new(ctx.degree)?;
    let omega = compute_proxy_weights(ctx.tree, it.source, &basis, ctx.positions, ctx.strengths);
    let mut values = Vec::with_capacity(target_proxy.points.len());
    for x in &target_proxy.points {
        let rows: Vec<[f64; D]> = source_proxy.points.iter().map(|y| ctx.kernel.eval(x, y)).collect();
        let alpha = crate::sbb::fit_coefficients(&source_proxy, &rows)?;
        let mut acc = [0.0; D];
        for (a, w) in alpha.coefficients.iter().zip(&omega) {
            add_scaled(&mut acc, a, *w);
        }
        values.push(acc);
    }
    interpolate_to_targets(it.target, ctx, &target_proxy, &values, field)
}

fn interpolate_to_targets<const D: usize, K: Kernel<D>>(
    target: u32,
    ctx: &InteractionContext<'_, D, K>,
    proxy: &crate::sbb::ProxyPointSet,
    values: &[[f64; D]],
    field: &mut [[f64; D]],
) -> Result<(), TreecodeError> {
    let f = crate::sbb::fit_coefficients(proxy, values)?;
    let node = ctx.tree.node(target);
    for &i in ctx.tree.bin(target) {
        let v = f.eval_barycentric(&node_barycentric(node, &ctx.positions[i as usize]));
        for d in 0..D {
            field[i as usize][d] += v[d];
        }
    }
    Ok(())
}

/// Evaluates an interaction list one interaction at a time, in order.
pub fn interaction_list_sum<const D: usize, K: Kernel<D>>(
    list: &InteractionList,
    ctx: &InteractionContext<'_, D, K>,
) -> Result<PotentialField<D>, TreecodeError> {
    let mut field = vec![[0.0; D]; ctx.positions.len()];
    for it in &list.interactions {
        match it.kind {
            InteractionKind::PP => eval_pp(it, ctx, &mut field),
            InteractionKind::PC => eval_pc(it, ctx, &mut field)?,
            InteractionKind::CP => eval_cp(it, ctx, &mut field)?,
            InteractionKind::CC => eval_cc(it, ctx, &mut field)?,
        }
    }
    Ok(field)
}
