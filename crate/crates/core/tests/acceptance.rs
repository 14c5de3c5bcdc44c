//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
//! test fails if any check fails.
//!
//! The slow adaptive-refinement particle count check is ignored by default:
//! `cargo test --release -p fastbve --test acceptance -- --ignored --nocapture`

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::time::Instant;

use fastbve::config::RunConfig;
use fastbve::diagnostics::{absolute_vorticity_drift, rel_l2_velocity_error, total_vorticity};
use fastbve::geometry::{unit_to_latlon, UnitVector3};
use fastbve::kernels::VelocityKernel;
use fastbve::mesh::{bin_particles, icosahedral_mesh, node_patch_areas, vertex_count};
use fastbve::runner::{bench_convolution, loglog_slope, run, RunOptions};
use fastbve::solver::{initial_field, initial_vorticity, AmrConfig, Solver, SolverConfig, Summation};
use fastbve::test_cases::{
    forcing_amplitude_a, forcing_f, forcing_shape_b, rh4_vorticity, ForcingConfig, TestCaseId,
};
use fastbve::treecode::{direct_sum, dual_traversal, treecode_sum, TraversalConfig};

struct Report {
    failures: Vec<String>,
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

impl Report {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        // bypasses libtest capture so the lines show up in plain `cargo test` output
        let _ = writeln!(std::io::stderr(), "[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures.push(name.to_string());
        }
    }
}

fn rh4_strengths(level: u32) -> (Vec<UnitVector3>, Vec<f64>, Vec<f64>) {
    let mesh = icosahedral_mesh(level);
    let areas = node_patch_areas(&mesh).unwrap().areas;
    let zeta = initial_vorticity(TestCaseId::Rh4, mesh.vertices(), &areas);
    let q = zeta.iter().zip(&areas).map(|(z, a)| z * a).collect();
    (mesh.vertices().to_vec(), q, areas)
}

fn fast_error(level: u32, degree: usize) -> f64 {
    let (pts, q, areas) = rh4_strengths(level);
    let cfg = RunConfig { degree, ..RunConfig::new(TestCaseId::Rh4, level) }.traversal_config(level);
    let fast = treecode_sum(&pts, &q, &VelocityKernel, &cfg).unwrap();
    let direct = direct_sum(&pts, &q, &VelocityKernel);
    rel_l2_velocity_error(&fast, &direct, &areas).unwrap()
}

fn accuracy(r: &mut Report) {
    let e = fast_error(5, 6);
    r.check("fast summation accuracy (level 5, theta 0.7, d 6)", e <= 1e-3, format!("E = {e:.3e} (limit 1e-3)"));
}

fn degree_sweep(r: &mut Report) {
    let errs: Vec<f64> = [2, 4, 6, 8].iter().map(|&d| fast_error(5, d)).collect();
    let monotone = errs.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let ok = monotone && errs[3] < errs[0] / 10.0;
    r.check("degree sweep (level 5, d = 2,4,6,8)", ok, format!("E = {}", list(&errs)));
}

fn scaling(r: &mut Report) {
    let cfg = RunConfig { workers: 1, ..RunConfig::new(TestCaseId::Rh4, 6) };
    let rows = bench_convolution(&cfg, &[4, 5, 6], 3).unwrap();
    let fast: Vec<_> = rows.iter().map(|r| (r.n_particles as f64, r.fast_seconds)).collect();
    let direct: Vec<_> = rows.iter().map(|r| (r.n_particles as f64, r.direct_seconds)).collect();
    let (sf, sd) = (loglog_slope(&fast), loglog_slope(&direct));
    let speedup = rows[2].speedup;
    let ok = sf < 1.35 && (sd - 2.0).abs() <= 0.2 && speedup > 3.0;
    r.check(
        "scaling (levels 4-6, one worker)",
        ok,
        format!("fast slope {sf:.3} (< 1.35), direct slope {sd:.3} (2.0 +- 0.2), level-6 speedup {speedup:.1} (> 3)"),
    );
}

fn mac_disabled(r: &mut Report) {
    let (pts, q, _) = rh4_strengths(4);
    let cfg = TraversalConfig::new(1e-9, 32, 6, 6).unwrap();
    let fast = treecode_sum(&pts, &q, &VelocityKernel, &cfg).unwrap();
    let direct = direct_sum(&pts, &q, &VelocityKernel);
    let mismatches = fast.iter().zip(&direct).filter(|(a, b)| a != b).count();
    r.check("disabled MAC equals direct sum bitwise (level 4)", mismatches == 0, format!("{mismatches} differing particles"));
}

fn pair_coverage(r: &mut Report) {
    let pts = icosahedral_mesh(3).vertices().to_vec();
    let n = pts.len();
    let cfg = TraversalConfig::new(0.7, 8, 6, 5).unwrap();
    let tree = bin_particles(&pts, cfg.n_threshold, cfg.max_depth).unwrap();
    let list = dual_traversal(&tree, &tree, &cfg);
    let mut hits = vec![0u8; n * n];
    for it in &list.interactions {
        for &i in tree.bin(it.target) {
            for &j in tree.bin(it.source) {
                let h = &mut hits[i as usize * n + j as usize];
                *h = h.saturating_add(1);
            }
        }
    }
    let missing = hits.iter().filter(|&&h| h == 0).count();
    let repeated = hits.iter().filter(|&&h| h > 1).count();
    r.check(
        "pair coverage (level 3, N_T 8)",
        missing == 0 && repeated == 0,
        format!("{} interactions, {missing} missing and {repeated} repeated of {} pairs", list.len(), n * n),
    );
}

struct RhRun {
    error: f64,
    max_drift: f64,
    max_total_change: f64,
    seconds: f64,
}

fn rh_run(level: u32) -> RhRun {
    let cfg = RunConfig::new(TestCaseId::Rh4, level);
    let field = initial_field(TestCaseId::Rh4, level, None).unwrap();
    let total0 = total_vorticity(&field);
    let mut s = Solver::new(field, cfg.solver_config(cfg.summation)).unwrap();
    let clock = Instant::now();
    let (mut max_drift, mut max_total_change) = (0.0f64, 0.0f64);
    while !s.is_finished() {
        s.advance().unwrap();
        max_drift = max_drift.max(absolute_vorticity_drift(s.field()));
        max_total_change = max_total_change.max((total_vorticity(s.field()) - total0).abs());
    }
    let f = s.field();
    let exact: Vec<f64> = f
        .positions
        .iter()
        .map(|p| {
            let ll = unit_to_latlon(p);
            rh4_vorticity(ll.lat, ll.lon)
        })
        .collect();
    let (mut num, mut den) = (0.0, 0.0);
    for ((z, e), a) in f.vorticity.iter().zip(&exact).zip(&f.areas) {
        num += (z - e).powi(2) * a;
        den += e * e * a;
    }
    RhRun { error: (num / den).sqrt(), max_drift, max_total_change, seconds: clock.elapsed().as_secs_f64() }
}

fn rh_convergence_and_conservation(r: &mut Report) {
    let runs: Vec<RhRun> = [3, 4, 5].iter().map(|&l| rh_run(l)).collect();
    let errs: Vec<f64> = runs.iter().map(|x| x.error).collect();
    let secs: f64 = runs.iter().map(|x| x.seconds).sum();
    r.check(
        "RH wave convergence (levels 3, 4, 5; 1 day; fast)",
        errs[0] > errs[1] && errs[1] > errs[2],
        format!("E_N = {} in {secs:.0} s", list(&errs)),
    );
    // 1 day at dt 0.01 is 100 steps
    let drift = runs.iter().map(|x| x.max_drift).fold(0.0, f64::max);
    let total = runs.iter().map(|x| x.max_total_change).fold(0.0, f64::max);
    r.check("absolute vorticity drift (100 steps)", drift < 1e-6, format!("max relative drift {drift:.3e} (limit 1e-6)"));
    r.check("total vorticity (100 steps)", total < 1e-4, format!("max change {total:.3e} (limit 1e-4)"));
}

fn rk4_order(r: &mut Report) {
    let horizon = 0.16;
    let solve = |dt: f64| {
        let field = initial_field(TestCaseId::Rh4, 3, None).unwrap();
        let mut cfg = SolverConfig::new(dt, horizon, Summation::Direct);
        cfg.remesh_interval = 0;
        let mut s = Solver::new(field, cfg).unwrap();
        while !s.is_finished() {
            s.advance().unwrap();
        }
        s.field().positions.clone()
    };
    let reference = solve(0.0025);
    let mut pts = Vec::new();
    for dt in [0.04, 0.02, 0.01] {
        let x = solve(dt);
        let err = x
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a.x() - b.x()).powi(2) + (a.y() - b.y()).powi(2) + (a.z() - b.z()).powi(2))
            .sum::<f64>()
            .sqrt();
        pts.push((dt, err));
    }
    let order = loglog_slope(&pts);
    r.check(
        "RK4 order (dt 0.04, 0.02, 0.01)",
        (order - 4.0).abs() <= 0.3,
        format!("fitted order {order:.3}, errors {}", list(&pts.iter().map(|p| p.1).collect::<Vec<_>>())),
    );
}

fn mesh_invariants(r: &mut Report) {
    let mut worst = 0.0f64;
    let mut ok = true;
    for level in 0..=5 {
        let mesh = icosahedral_mesh(level);
        let areas = node_patch_areas(&mesh).unwrap();
        ok &= areas.areas.iter().all(|&a| a > 0.0);
        ok &= mesh.vertices().len() == 10 * 4usize.pow(level) + 2 && vertex_count(level) == mesh.vertices().len();
        worst = worst.max((areas.total() - 4.0 * PI).abs());
    }
    r.check("mesh areas and counts (levels 0-5)", ok && worst < 1e-10, format!("max |sum A - 4 pi| = {worst:.2e}"));
}

fn forcing_units(r: &mut Report) {
    let f1 = ForcingConfig::new(1);
    let (tp, tf, th1) = (f1.tp, f1.tf, f1.theta1);
    let mut ok = forcing_amplitude_a(0.0, tp, tf) == 0.0
        && (forcing_amplitude_a(tp, tp, tf) - 1.0).abs() < 1e-14
        && forcing_amplitude_a(tf, tp, tf) == 0.0
        && forcing_amplitude_a(tf + 3.0, tp, tf) == 0.0;
    ok &= (forcing_shape_b(th1, th1) - 1.0).abs() < 1e-14 && forcing_shape_b(0.0, th1) == 0.0 && forcing_shape_b(-0.4, th1) == 0.0;
    let peak = forcing_f(th1, 0.0, tp, &f1);
    ok &= (peak - 6.0 * PI / 5.0).abs() < 1e-12;
    let ratio = ForcingConfig::new(2).amplitude() / f1.amplitude();
    ok &= (ratio - 4.0).abs() < 1e-14;
    r.check(
        "forcing units",
        ok,
        format!("F_R(theta1, 0, Tp) = {peak:.12} (6 pi / 5 = {:.12}), k ratio {ratio}", 6.0 * PI / 5.0),
    );
}

fn determinism(r: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = |workers: usize, name: &str| {
        let cfg = RunConfig {
            workers,
            t_final: 0.1,
            output_dir: dir.path().join(name),
            ..RunConfig::new(TestCaseId::GaussianVortex, 3)
        };
        run(&cfg, &RunOptions::default()).unwrap();
        fs::read(cfg.output_dir.join("snapshot_000010.csv")).unwrap()
    };
    let (a, b) = (snapshot(1, "one"), snapshot(8, "eight"));
    r.check("determinism (1 vs 8 workers)", a == b, format!("{} snapshot bytes, identical: {}", a.len(), a == b));
}

#[test]
fn acceptance() {
    let mut r = Report { failures: Vec::new() };
    mesh_invariants(&mut r);
    forcing_units(&mut r);
    mac_disabled(&mut r);
    pair_coverage(&mut r);
    accuracy(&mut r);
    degree_sweep(&mut r);
    scaling(&mut r);
    determinism(&mut r);
    rk4_order(&mut r);
    rh_convergence_and_conservation(&mut r);
    assert!(r.failures.is_empty(), "failed: {:?}", r.failures);
}

#[test]
#[ignore = "tens of minutes"]
fn amr_particle_count() {
    let mut r = Report { failures: Vec::new() };
    let amr = AmrConfig::new(0.0025, 0.2);
    let field = initial_field(TestCaseId::GaussianVortex, 5, Some(&amr)).unwrap();
    let cfg = RunConfig { amr: true, t_final: 3.0, ..RunConfig::new(TestCaseId::GaussianVortex, 5) };
    let initial = field.len();
    let mut s = Solver::new(field, cfg.solver_config(cfg.summation)).unwrap();
    while !s.is_finished() {
        s.advance().unwrap();
    }
    let n = s.field().len();
    r.check(
        "adaptive refinement particle count (Gaussian vortex, 3 days)",
        (25000..=47000).contains(&n),
        format!("{n} particles at day 3 ({initial} after initial refinement of 10242)"),
    );
    assert!(r.failures.is_empty());
}
