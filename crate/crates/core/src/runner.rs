//! Run orchestration: simulations with their output files, and the
//! single-convolution timing harness.

use std::time::Instant;

use thiserror::Error;

use crate::config::{RunConfig, SummationMode};
use crate::diagnostics::{
    absolute_vorticity_drift, rel_l2_velocity_error, total_vorticity, velocity_report, vorticity_report,
    DiagnosticsError, ErrorReport,
};
use crate::geometry::unit_to_latlon;
use crate::kernels::VelocityKernel;
use crate::mesh::{icosahedral_mesh, node_patch_areas, MeshError};
use crate::output::{self, ErrorRow, OutputError, RunLogRow, TimingRow};
use crate::solver::{initial_field, initial_vorticity, PhaseTimings, Solver, SolverError};
use crate::test_cases::{rh4_vorticity, TestCaseId};
use crate::treecode::{direct_sum, treecode_sum, TreecodeError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("step {step} failed: {source}")]
    Step { step: u64, source: SolverError },
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Treecode(#[from] TreecodeError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("failed to start worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Also run with direct summation and compare against it.
    pub compare_direct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub n_particles: usize,
    pub initial_total_vorticity: f64,
    pub final_total_vorticity: f64,
    pub absolute_vorticity_drift: f64,
    /// Error against the exact solution, when one exists.
    pub exact_error: Option<ErrorReport>,
    pub direct_errors: Vec<ErrorReport>,
    pub timings: PhaseTimings,
    pub wall_seconds: f64,
}

fn exact_reference(case: TestCaseId, field: &crate::solver::ParticleField) -> Option<Vec<f64>> {
    match case {
        TestCaseId::Rh4 => Some(
            field
                .positions
                .iter()
                .map(|p| {
                    let ll = unit_to_latlon(p);
                    rh4_vorticity(ll.lat, ll.lon)
                })
                .collect(),
        ),
        _ => None,
    }
}

/// Runs a simulation, writing snapshots, `run_log.csv`, `phase_timings.csv`,
/// `errors.csv` (stationary RH wave only) and, with `compare_direct`,
/// `errors_vs_direct.csv` into the configured output directory.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let dir = cfg.output_dir.clone();
    output::ensure_dir(&dir)?;
    output::write_text(&dir.join("config.txt"), &cfg.serialize())?;

    let field = initial_field(cfg.test_case, cfg.mesh_level, cfg.amr_config().as_ref())?;
    let initial_total = total_vorticity(&field);
    let compare = opts.compare_direct && cfg.summation == SummationMode::Fast;
    let mut direct = if compare { Some(Solver::new(field.clone(), cfg.solver_config(SummationMode::Direct))?) } else { None };
    let mut solver = Solver::new(field, cfg.solver_config(cfg.summation))?;
    log::info!(
        "{}: {} particles, {} steps of {} days",
        cfg.test_case,
        solver.field().len(),
        solver.config().n_steps(),
        cfg.dt
    );

    let mut direct_rows = Vec::new();
    if let Some(d) = direct.as_mut() {
        let clock = Instant::now();
        let fast_u = solver.velocities()?;
        let fast_secs = clock.elapsed().as_secs_f64();
        let direct_u = d.velocities()?;
        let report = velocity_report("velocity_initial", &fast_u, &direct_u, &solver.field().areas)?;
        direct_rows.push(ErrorRow { report, theta: cfg.theta, degree: cfg.degree, wall_seconds: fast_secs });
    }

    let clock = Instant::now();
    let mut log_rows = vec![RunLogRow {
        step: 0,
        time_days: 0.0,
        n_particles: solver.field().len(),
        total_vorticity: initial_total,
        wall_seconds: 0.0,
    }];
    output::write_snapshot(&output::snapshot_path(&dir, 0), solver.field())?;
    while !solver.is_finished() {
        solver.advance().map_err(|source| RunError::Step { step: solver.step() + 1, source })?;
        let step = solver.step();
        log_rows.push(RunLogRow {
            step,
            time_days: solver.time(),
            n_particles: solver.field().len(),
            total_vorticity: total_vorticity(solver.field()),
            wall_seconds: clock.elapsed().as_secs_f64(),
        });
        let due = cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0;
        if due || solver.is_finished() {
            output::write_snapshot(&output::snapshot_path(&dir, step), solver.field())?;
        }
        log::debug!("step {step}: {} particles", solver.field().len());
    }
    let wall_seconds = clock.elapsed().as_secs_f64();
    output::write_run_log(&dir.join("run_log.csv"), &log_rows)?;
    output::write_phase_timings(&dir.join("phase_timings.csv"), solver.timings())?;

    let field = solver.field();
    let exact_error = match exact_reference(cfg.test_case, field) {
        Some(reference) => {
            let report = vorticity_report("vorticity", &field.vorticity, &reference, &field.areas)?;
            let row = ErrorRow { report: report.clone(), theta: cfg.theta, degree: cfg.degree, wall_seconds };
            output::write_errors(&dir.join("errors.csv"), &[row])?;
            Some(report)
        }
        None => None,
    };

    if let Some(mut d) = direct {
        let clock = Instant::now();
        while !d.is_finished() {
            d.advance().map_err(|source| RunError::Step { step: d.step() + 1, source })?;
        }
        let direct_secs = clock.elapsed().as_secs_f64();
        if d.field().len() == field.len() {
            let report = vorticity_report("vorticity_final", &field.vorticity, &d.field().vorticity, &field.areas)?;
            direct_rows.push(ErrorRow { report, theta: cfg.theta, degree: cfg.degree, wall_seconds });
        } else {
            log::warn!(
                "particle counts differ (fast {}, direct {}); final vorticity not compared",
                field.len(),
                d.field().len()
            );
        }
        log::info!("direct run took {direct_secs:.3} s, fast run {wall_seconds:.3} s");
        output::write_errors_vs_direct(&dir.join("errors_vs_direct.csv"), &direct_rows)?;
    }

    Ok(RunSummary {
        steps: solver.step(),
        n_particles: field.len(),
        initial_total_vorticity: initial_total,
        final_total_vorticity: total_vorticity(field),
        absolute_vorticity_drift: absolute_vorticity_drift(field),
        exact_error,
        direct_errors: direct_rows.into_iter().map(|r| r.report).collect(),
        timings: *solver.timings(),
        wall_seconds,
    })
}

/// Times one velocity convolution, direct and fast, at each mesh level.
/// Each time is the fastest of `repeats` evaluations.
pub fn bench_convolution(cfg: &RunConfig, levels: &[u32], repeats: usize) -> Result<Vec<TimingRow>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| RunError::ThreadPool(e.to_string()))?;
    let workers = pool.current_num_threads();
    let repeats = repeats.max(1);
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let mesh = icosahedral_mesh(level);
        let areas = node_patch_areas(&mesh)?.areas;
        let zeta = initial_vorticity(cfg.test_case, mesh.vertices(), &areas);
        let strengths: Vec<f64> = zeta.iter().zip(&areas).map(|(z, a)| z * a).collect();
        let tc = cfg.traversal_config(level);
        tc.validate()?;
        let pts = mesh.vertices();
        let (mut direct_secs, mut fast_secs) = (f64::INFINITY, f64::INFINITY);
        let (mut direct_u, mut fast_u) = (Vec::new(), Vec::new());
        for _ in 0..repeats {
            let clock = Instant::now();
            direct_u = pool.install(|| direct_sum(pts, &strengths, &VelocityKernel));
            direct_secs = direct_secs.min(clock.elapsed().as_secs_f64());
            let clock = Instant::now();
            fast_u = pool.install(|| treecode_sum(pts, &strengths, &VelocityKernel, &tc))?;
            fast_secs = fast_secs.min(clock.elapsed().as_secs_f64());
        }
        let rel_l2 = rel_l2_velocity_error(&fast_u, &direct_u, &areas)?;
        log::info!("level {level}: direct {direct_secs:.4} s, fast {fast_secs:.4} s, error {rel_l2:.3e}");
        rows.push(TimingRow {
            n_particles: pts.len(),
            mesh_level: level,
            theta: cfg.theta,
            degree: cfg.degree,
            workers,
            direct_seconds: direct_secs,
            fast_seconds: fast_secs,
            speedup: direct_secs / fast_secs,
            rel_l2,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `log(seconds)` against `log(n)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 40.0, 160.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(1.5))).collect();
        assert!((loglog_slope(&pts) - 1.5).abs() < 1e-12);
    }
}
