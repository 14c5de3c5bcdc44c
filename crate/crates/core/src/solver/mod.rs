//! Lagrangian particle solver for the barotropic vorticity equation.
//!
//! Particles carry position, relative vorticity and a quadrature area. The
//! velocity is the Biot-Savart sum of the velocity kernel with prefactor
//! `-1/4pi`, and vorticity evolves by `dzeta/dt = -2 Omega u_z`. Time stepping
//! is classical RK4 with positions projected back to the sphere after every
//! stage. Optional periodic remeshing and adaptive refinement keep the
//! particle distribution regular.

pub mod amr;
pub mod lagrangian;
pub mod remesh;

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{unit_to_latlon, GeometryError, UnitVector3};
use crate::kernels::{effective_source_strength, VelocityKernel};
use crate::mesh::{icosahedral_mesh, node_patch_areas, IcosaMesh, MeshError};
use crate::test_cases::{
    coriolis, gaussian_offset, gaussian_vorticity_with_offset, polar_vorticity, rh4_vorticity, ForcingConfig,
    TestCaseId, OMEGA,
};
use crate::treecode::{direct_sum, treecode_sum_timed, TraversalConfig, TreecodeError, TreecodeTimings};

pub use amr::AmrConfig;
pub use lagrangian::LagrangianMesh;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Treecode(#[from] TreecodeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("failed to start worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Summation {
    Direct,
    Fast(TraversalConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Time step in days.
    pub dt: f64,
    pub t_final: f64,
    /// Steps between remeshes; 0 disables remeshing.
    pub remesh_interval: u32,
    pub amr: Option<AmrConfig>,
    pub forcing: Option<ForcingConfig>,
    pub summation: Summation,
    /// Worker threads for summation; 0 uses all cores.
    pub workers: usize,
}

impl SolverConfig {
    pub fn new(dt: f64, t_final: f64, summation: Summation) -> Self {
        Self { dt, t_final, remesh_interval: 10, amr: None, forcing: None, summation, workers: 0 }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("t_final must be non-negative, got {}", self.t_final)));
        }
        if let Summation::Fast(cfg) = &self.summation {
            cfg.validate()?;
        }
        if let Some(a) = &self.amr {
            if !(a.eps1 > 0.0 && a.eps2 > 0.0) {
                return Err(SolverError::InvalidConfig("AMR thresholds must be positive".into()));
            }
        }
        if let Some(f) = &self.forcing {
            if !(f.tp > 0.0 && f.tp < f.tf / 2.0) {
                return Err(SolverError::InvalidConfig(format!("forcing needs 0 < Tp < Tf/2, got Tp={} Tf={}", f.tp, f.tf)));
            }
        }
        Ok(())
    }

    /// Number of steps to reach `t_final`.
    pub fn n_steps(&self) -> u64 {
        (self.t_final / self.dt).round() as u64
    }
}

/// Wall-clock seconds per phase, accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub binning: f64,
    pub traversal: f64,
    pub evaluation: f64,
    pub remesh: f64,
    pub amr: f64,
}

impl PhaseTimings {
    fn add_treecode(&mut self, t: &TreecodeTimings) {
        self.binning += t.binning;
        self.traversal += t.traversal;
        self.evaluation += t.evaluation;
    }

    pub fn rows(&self) -> [(&'static str, f64); 5] {
        [
            ("binning", self.binning),
            ("traversal", self.traversal),
            ("evaluation", self.evaluation),
            ("remesh", self.remesh),
            ("amr", self.amr),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct ParticleField {
    pub positions: Vec<UnitVector3>,
    /// Relative vorticity (1/day).
    pub vorticity: Vec<f64>,
    /// Quadrature areas (steradians).
    pub areas: Vec<f64>,
    pub initial_absolute_vorticity: Vec<f64>,
    /// Reference positions fixed at the last remesh.
    pub labels: Vec<UnitVector3>,
    pub mesh: LagrangianMesh,
}

impl ParticleField {
    /// Particles at the mesh vertices with the given vorticity.
    pub fn from_mesh(mesh: &IcosaMesh, areas: Vec<f64>, vorticity: Vec<f64>) -> Self {
        let positions = mesh.vertices().to_vec();
        let initial_absolute_vorticity = positions.iter().zip(&vorticity).map(|(p, z)| z + coriolis(p)).collect();
        Self {
            labels: positions.clone(),
            positions,
            vorticity,
            areas,
            initial_absolute_vorticity,
            mesh: LagrangianMesh::from_icosa(mesh),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn absolute_vorticity(&self) -> Vec<f64> {
        self.positions.iter().zip(&self.vorticity).map(|(p, z)| z + coriolis(p)).collect()
    }

    pub(crate) fn remove_particles(&mut self, removed: &[u32]) {
        if removed.is_empty() {
            return;
        }
        let mut keep = vec![true; self.len()];
        for &r in removed {
            keep[r as usize] = false;
        }
        let mut map = vec![u32::MAX; self.len()];
        let mut next = 0u32;
        for (i, k) in keep.iter().enumerate() {
            if *k {
                map[i] = next;
                next += 1;
            }
        }
        fn retain<T: Copy>(v: &mut Vec<T>, keep: &[bool]) {
            let mut i = 0;
            v.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        }
        retain(&mut self.positions, &keep);
        retain(&mut self.vorticity, &keep);
        retain(&mut self.areas, &keep);
        retain(&mut self.initial_absolute_vorticity, &keep);
        retain(&mut self.labels, &keep);
        self.mesh.remap(&map);
    }
}

/// Initial vorticity for a test case on the given particles.
pub fn initial_vorticity(case: TestCaseId, positions: &[UnitVector3], areas: &[f64]) -> Vec<f64> {
    match case {
        TestCaseId::Rh4 => positions
            .iter()
            .map(|p| {
                let ll = unit_to_latlon(p);
                rh4_vorticity(ll.lat, ll.lon)
            })
            .collect(),
        TestCaseId::PolarVortex { .. } => positions.iter().map(|p| polar_vorticity(unit_to_latlon(p).lat)).collect(),
        TestCaseId::GaussianVortex => gaussian_vorticity_with_offset(positions, gaussian_offset(positions, areas)),
    }
}

/// Builds the initial particle field, refining adaptively with exact initial
/// values when `amr` is given.
pub fn initial_field(case: TestCaseId, level: u32, amr: Option<&AmrConfig>) -> Result<ParticleField, SolverError> {
    let mesh = icosahedral_mesh(level);
    let areas = node_patch_areas(&mesh)?.areas;
    let vorticity = initial_vorticity(case, mesh.vertices(), &areas);
    let mut field = ParticleField::from_mesh(&mesh, areas, vorticity);
    if let Some(cfg) = amr {
        for _ in 0..cfg.max_extra_levels {
            let offset = match case {
                TestCaseId::GaussianVortex => gaussian_offset(&field.positions, &field.areas),
                _ => 0.0,
            };
            let sample = move |p: &UnitVector3| {
                let z = match case {
                    TestCaseId::GaussianVortex => gaussian_vorticity_with_offset(&[*p], offset)[0],
                    _ => initial_vorticity(case, &[*p], &[1.0])[0],
                };
                let abs = z + coriolis(p);
                (abs, abs)
            };
            if amr::refine_pass(&mut field, cfg, Some(&sample))? == 0 {
                break;
            }
        }
        field.vorticity = initial_vorticity(case, &field.positions, &field.areas);
        field.initial_absolute_vorticity = field.absolute_vorticity();
    }
    Ok(field)
}

/// Velocities (radians/day) and vorticity tendencies (1/day^2) at time `t`.
pub fn rhs(
    positions: &[UnitVector3],
    vorticity: &[f64],
    areas: &[f64],
    t: f64,
    summation: &Summation,
    forcing: Option<&ForcingConfig>,
    timings: &mut PhaseTimings,
) -> Result<(Vec<[f64; 3]>, Vec<f64>), SolverError> {
    let strengths: Vec<f64> = positions
        .iter()
        .zip(vorticity.iter().zip(areas))
        .map(|(p, (z, a))| effective_source_strength(*z, *a, p, t, forcing))
        .collect();
    let mut u = match summation {
        Summation::Direct => {
            let clock = Instant::now();
            let u = direct_sum(positions, &strengths, &VelocityKernel);
            timings.evaluation += clock.elapsed().as_secs_f64();
            u
        }
        Summation::Fast(cfg) => {
            let (u, t) = treecode_sum_timed(positions, &strengths, &VelocityKernel, cfg)?;
            timings.add_treecode(&t);
            u
        }
    };
    // interpolation leaves a small radial part in the fast sum; keeping it
    // would let renormalization change z without a matching change in zeta
    let scale = -1.0 / (4.0 * PI);
    for (v, p) in u.iter_mut().zip(positions) {
        let radial = v[0] * p.x() + v[1] * p.y() + v[2] * p.z();
        v[0] = scale * (v[0] - radial * p.x());
        v[1] = scale * (v[1] - radial * p.y());
        v[2] = scale * (v[2] - radial * p.z());
    }
    let dzeta = u.iter().map(|v| -2.0 * OMEGA * v[2]).collect();
    Ok((u, dzeta))
}

fn stage(positions: &[UnitVector3], vorticity: &[f64], k: &(Vec<[f64; 3]>, Vec<f64>), h: f64) -> Result<(Vec<UnitVector3>, Vec<f64>), GeometryError> {
    let x = positions
        .iter()
        .zip(&k.0)
        .map(|(p, u)| UnitVector3::new(p.x() + h * u[0], p.y() + h * u[1], p.z() + h * u[2]))
        .collect::<Result<Vec<_>, _>>()?;
    let z = vorticity.iter().zip(&k.1).map(|(z, dz)| z + h * dz).collect();
    Ok((x, z))
}

/// One classical RK4 step of positions and vorticity.
pub fn rk4_step(
    field: &ParticleField,
    t: f64,
    dt: f64,
    summation: &Summation,
    forcing: Option<&ForcingConfig>,
    timings: &mut PhaseTimings,
) -> Result<(Vec<UnitVector3>, Vec<f64>), SolverError> {
    let (x0, z0, a) = (&field.positions, &field.vorticity, &field.areas);
    let k1 = rhs(x0, z0, a, t, summation, forcing, timings)?;
    let (x, z) = stage(x0, z0, &k1, dt / 2.0)?;
    let k2 = rhs(&x, &z, a, t + dt / 2.0, summation, forcing, timings)?;
    let (x, z) = stage(x0, z0, &k2, dt / 2.0)?;
    let k3 = rhs(&x, &z, a, t + dt / 2.0, summation, forcing, timings)?;
    let (x, z) = stage(x0, z0, &k3, dt)?;
    let k4 = rhs(&x, &z, a, t + dt, summation, forcing, timings)?;
    let combined = (
        (0..x0.len())
            .map(|i| std::array::from_fn(|d| (k1.0[i][d] + 2.0 * k2.0[i][d] + 2.0 * k3.0[i][d] + k4.0[i][d]) / 6.0))
            .collect::<Vec<_>>(),
        (0..x0.len()).map(|i| (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]) / 6.0).collect::<Vec<_>>(),
    );
    Ok(stage(x0, z0, &combined, dt)?)
}

/// Interpolates the field onto a fresh mesh. Returns the new field and the
/// number of points that needed the linear fallback.
pub fn remesh(field: &ParticleField, fresh: &IcosaMesh, fresh_areas: &[f64]) -> (ParticleField, usize) {
    let tree = field.mesh.tree();
    let absolute = field.absolute_vorticity();
    let values: Vec<(f64, f64, bool)> = fresh
        .vertices()
        .par_iter()
        .map(|p| {
            let st = remesh::deformed_stencil(tree, &field.positions, p);
            (st.apply(&absolute), st.apply(&field.initial_absolute_vorticity), st.linear_fallback)
        })
        .collect();
    let fallbacks = values.iter().filter(|v| v.2).count();
    let positions = fresh.vertices().to_vec();
    let vorticity = positions.iter().zip(&values).map(|(p, v)| v.0 - coriolis(p)).collect();
    let out = ParticleField {
        labels: positions.clone(),
        positions,
        vorticity,
        areas: fresh_areas.to_vec(),
        initial_absolute_vorticity: values.iter().map(|v| v.1).collect(),
        mesh: LagrangianMesh::from_icosa(fresh),
    };
    (out, fallbacks)
}

/// Remeshes onto the fresh base mesh, then refines adaptively with values
/// interpolated from the old field.
pub fn remesh_adaptive(
    field: &ParticleField,
    fresh: &IcosaMesh,
    fresh_areas: &[f64],
    cfg: &AmrConfig,
) -> Result<(ParticleField, usize), SolverError> {
    let (mut out, fallbacks) = remesh(field, fresh, fresh_areas);
    let absolute = field.absolute_vorticity();
    let sample = |p: &UnitVector3| {
        let st = remesh::deformed_stencil(field.mesh.tree(), &field.positions, p);
        (st.apply(&absolute), st.apply(&field.initial_absolute_vorticity))
    };
    for _ in 0..cfg.max_extra_levels {
        if amr::refine_pass(&mut out, cfg, Some(&sample))? == 0 {
            break;
        }
    }
    Ok((out, fallbacks))
}

/// Time stepper owning the particle field and the worker pool.
pub struct Solver {
    cfg: SolverConfig,
    pool: rayon::ThreadPool,
    field: ParticleField,
    step: u64,
    fresh: IcosaMesh,
    fresh_areas: Vec<f64>,
    timings: PhaseTimings,
}

impl Solver {
    pub fn new(field: ParticleField, cfg: SolverConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| SolverError::ThreadPool(e.to_string()))?;
        let fresh = icosahedral_mesh(field.mesh.base_level());
        let fresh_areas = node_patch_areas(&fresh)?.areas;
        Ok(Self { cfg, pool, field, step: 0, fresh, fresh_areas, timings: PhaseTimings::default() })
    }

    pub fn field(&self) -> &ParticleField {
        &self.field
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    pub fn timings(&self) -> &PhaseTimings {
        &self.timings
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.cfg.n_steps()
    }

    /// Runs `f` inside this solver's worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// Velocities of the current field.
    pub fn velocities(&mut self) -> Result<Vec<[f64; 3]>, SolverError> {
        let t = self.time();
        let (field, cfg, timings) = (&self.field, &self.cfg, &mut self.timings);
        let (u, _) = self.pool.install(|| {
            rhs(&field.positions, &field.vorticity, &field.areas, t, &cfg.summation, cfg.forcing.as_ref(), timings)
        })?;
        Ok(u)
    }

    /// Advances one time step: RK4, then adaptive refinement, then remeshing
    /// when due.
    pub fn advance(&mut self) -> Result<(), SolverError> {
        let t = self.time();
        let dt = self.cfg.dt;
        let (field, cfg, timings) = (&self.field, &self.cfg, &mut self.timings);
        let (x, z) = self.pool.install(|| rk4_step(field, t, dt, &cfg.summation, cfg.forcing.as_ref(), timings))?;
        self.field.positions = x;
        self.field.vorticity = z;
        self.step += 1;

        if let Some(amr_cfg) = self.cfg.amr {
            let clock = Instant::now();
            amr::amr_step(&mut self.field, &amr_cfg)?;
            self.timings.amr += clock.elapsed().as_secs_f64();
        }
        if self.cfg.remesh_interval > 0 && self.step.is_multiple_of(self.cfg.remesh_interval as u64) {
            let clock = Instant::now();
            let (field, fresh, areas) = (&self.field, &self.fresh, &self.fresh_areas);
            let (next, fallbacks) = match self.cfg.amr {
                Some(amr_cfg) => self.pool.install(|| remesh_adaptive(field, fresh, areas, &amr_cfg))?,
                None => self.pool.install(|| remesh(field, fresh, areas)),
            };
            if fallbacks > 0 {
                log::warn!("remesh at step {}: {fallbacks} points used linear interpolation", self.step);
            }
            self.field = next;
            self.timings.remesh += clock.elapsed().as_secs_f64();
        }
        Ok(())
    }
}
