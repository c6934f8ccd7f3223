//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use deltamass::inequalities::{sample_deficits, DeficitSummary};
use deltamass::mean_field::MassMinimization;
use deltamass::mesh::{flat_torus_mesh, icosphere, voxel_genus1, voxel_genus2};
use deltamass::sphere::{sphere_kernel_finite_part, sphere_robin, sphere_spectral_robin};
use deltamass::torus::{flat_robin, EwaldGreen};
use deltamass::{
    delta_mass, djlw_hypothesis, functional_j, gradient_j, integrate, minimize_mass, trace_conformal, ConformalMetric,
    Field, MeanFieldOptions, MeanFieldProblem, MeshSurface, SphereGrid, Surface, TorusGrid, TorusModulus,
};

const ROUND: f64 = -0.17067218146492423;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn sphere_constants() -> Outcome {
    let t = Instant::now();
    let closed = sphere_robin();
    let grid = SphereGrid::<f64>::with_order(64).unwrap();
    let node_wise = grid.constant(sphere_kernel_finite_part());
    let quadrature = integrate(&node_wise, grid.quadrature()).unwrap() / grid.area();
    let spectral = sphere_spectral_robin();
    let err = [closed, quadrature, spectral].iter().map(|v| (v - ROUND).abs()).fold(0.0, f64::max);
    let elapsed = secs(t.elapsed());
    outcome(err < 1e-8 && elapsed < 1.0, format!("max error {err:.2e}, {elapsed:.3} s"))
}

fn dual_robin() -> Outcome {
    let t = Instant::now();
    let mut worst_pair = 0.0f64;
    let mut worst_modular = 0.0f64;
    for tau in [TorusModulus::square(), TorusModulus::hexagonal(), TorusModulus::new(0.0, 3.0).unwrap()] {
        let pair = match flat_robin(tau) {
            Ok(p) => p,
            Err(e) => return outcome(false, e.to_string()),
        };
        worst_pair = worst_pair.max(pair.discrepancy());
        for image in [tau.translated(), tau.inverted()] {
            worst_modular = worst_modular.max((EwaldGreen::new(image).robin() - pair.ewald).abs());
        }
    }
    let elapsed = secs(t.elapsed());
    outcome(
        worst_pair < 1e-5 && worst_modular < 1e-10 && elapsed < 30.0,
        format!("O1/O2 gap {worst_pair:.2e}, modular gap {worst_modular:.2e}, {elapsed:.1} s"),
    )
}

struct Run {
    grid: TorusGrid<f64>,
    robin: Field<f64>,
}

fn prepare(tau: TorusModulus, n: usize) -> Run {
    let grid = TorusGrid::<f64>::square(tau, n).unwrap();
    let robin = grid.constant(EwaldGreen::new(tau).robin());
    Run { grid, robin }
}

type Minimized<'a> = Result<MassMinimization<'a, f64, TorusGrid<f64>>, String>;

fn minimize(run: &Run) -> (Minimized<'_>, f64) {
    let t = Instant::now();
    let out = minimize_mass(&run.grid, &run.robin, &MeanFieldOptions::default()).map_err(|e| e.to_string());
    (out, secs(t.elapsed()))
}

fn negative_mass(runs: &[(&str, Run)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, run) in runs {
        let (result, elapsed) = minimize(run);
        match result {
            Ok(m) => {
                let (mass, residual, margin) = (m.report.mass, m.report.diagnostics["residual_2_3"], m.bound.margin);
                pass &= mass < 0.0 && residual < 1e-8 && margin > 0.0 && elapsed < 300.0;
                parts.push(format!(
                    "{name}: mass {mass:.6e}, residual {residual:.1e}, margin {margin:.3e}, {elapsed:.1} s"
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn robin_constancy() -> Outcome {
    let mut spreads = Vec::new();
    for n in [256, 512] {
        let run = prepare(TorusModulus::square(), n);
        match minimize(&run).0 {
            Ok(m) => spreads.push(m.report.diagnostics["robin_spread"]),
            Err(e) => return outcome(false, format!("N = {n}: {e}")),
        }
    }
    let pass = spreads[0] < 1e-4 && spreads[1] <= spreads[0].max(1e-11);
    outcome(pass, format!("spread {:.2e} (N=256), {:.2e} (N=512)", spreads[0], spreads[1]))
}

fn trace_identity(runs: &[(&str, Run)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, run) in runs {
        match minimize(run).0 {
            Ok(m) => {
                let gap = m.report.diagnostics["trace_identity_gap"];
                let direct = (trace_conformal(&run.robin, &m.metric).unwrap() - m.report.trace).abs();
                let eq = m.report.diagnostics["eq_2_5_error"];
                pass &= gap < 1e-8 && direct < 1e-8 && eq < 1e-8;
                parts.push(format!("{name}: trace gap {:.1e}, potential identity {eq:.1e}", gap.max(direct)));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn gradient_check() -> Outcome {
    let g = TorusGrid::<f64>::square(TorusModulus::new(0.0, 3.0).unwrap(), 64).unwrap();
    let h = g.smooth_noise(11, 2, 0.5).unwrap().exp();
    let h = h.scale(1.0 / integrate(&h, g.quadrature()).unwrap());
    let p = MeanFieldProblem::new(&g, h, g.constant(0.0)).unwrap();
    let u = g.smooth_noise(12, 3, 1.0).unwrap();
    let grad = gradient_j(&p, &u).unwrap();
    let mut worst = 0.0f64;
    for k in 0..10u64 {
        let v = g.smooth_noise(100 + k, 4, 1.0).unwrap();
        let eps = 1e-5;
        let fd = (functional_j(&p, &u.axpy(eps, &v).unwrap()).unwrap()
            - functional_j(&p, &u.axpy(-eps, &v).unwrap()).unwrap())
            / (2.0 * eps);
        let exact = deltamass::field::inner(&grad, &v, g.quadrature()).unwrap();
        worst = worst.max((fd - exact).abs() / exact.abs());
    }
    outcome(worst < 1e-6, format!("worst relative error {worst:.2e} over 10 directions"))
}

fn mass_of<S: Surface<f64>>(base: &S, m: f64, phi: &Field<f64>) -> f64 {
    let cm = ConformalMetric::new(base, phi.clone()).unwrap();
    delta_mass(trace_conformal(&base.constant(m), &cm).unwrap(), cm.area_phi()).unwrap()
}

fn scale_invariance() -> Outcome {
    let tau = TorusModulus::new(0.2, 1.4).unwrap();
    let g = TorusGrid::<f64>::square(tau, 64).unwrap();
    let m_flat = EwaldGreen::new(tau).robin();
    let s = SphereGrid::<f64>::with_order(32).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let pg = g.smooth_noise(seed, 4, 1.0).unwrap();
        let ps = s.smooth_noise(seed, 4, 1.0).unwrap();
        let (mg, ms) = (mass_of(&g, m_flat, &pg), mass_of(&s, ROUND, &ps));
        for c in [0.5f64, 2.0, 10.0] {
            worst = worst.max((mass_of(&g, m_flat, &pg.shift(c.ln())) - mg).abs());
            worst = worst.max((mass_of(&s, ROUND, &ps.shift(c.ln())) - ms).abs());
        }
    }
    outcome(worst < 1e-10, format!("worst change {worst:.2e}"))
}

fn green_invariants() -> Outcome {
    let g = TorusGrid::<f64>::square(TorusModulus::hexagonal(), 256).unwrap();
    let nodes = [0usize, 1234, 30_000, 65_000];
    let (mut sym, mut mean, mut res) = (0.0f64, 0.0f64, 0.0f64);
    for &p in &nodes {
        let col = g.green_column_direct(p);
        mean = mean.max(integrate(&col, g.quadrature()).unwrap().abs());
        for &q in &nodes {
            sym = sym.max((col.get(q) - g.green_column_direct(q).get(p)).abs());
        }
        let lap = g.laplacian(&col).unwrap();
        for q in (0..g.node_count()).filter(|&q| q != p) {
            res = res.max((lap.get(q) + 1.0).abs());
        }
    }
    let grid_ok = sym <= 1e-9 && mean <= 1e-10 && res <= 1e-8;

    let (mut msym, mut mmean, mut mres) = (0.0f64, 0.0f64, 0.0f64);
    for mesh in [icosphere(3), voxel_genus2(3), flat_torus_mesh(TorusModulus::new(0.0, 3.0).unwrap(), 48)] {
        let s = MeshSurface::new(mesh).unwrap();
        let n = s.node_count();
        let picks = [0, n / 3, n / 2, n - 1];
        let cols: Vec<_> = picks.iter().map(|&p| s.green_column(p).unwrap()).collect();
        for (a, &p) in picks.iter().enumerate() {
            mmean = mmean.max(integrate(&cols[a], s.quadrature()).unwrap().abs());
            mres = mres.max(s.green_residual(p, &cols[a]).unwrap());
            for (b, &q) in picks.iter().enumerate() {
                msym = msym.max((cols[a].get(q) - cols[b].get(p)).abs());
            }
        }
    }
    let mesh_ok = msym <= 1e-9 && mmean <= 1e-10 && mres <= 1e-6;
    outcome(
        grid_ok && mesh_ok,
        format!(
            "grid: symmetry {sym:.1e}, mean {mean:.1e}, residual {res:.1e}; \
             mesh: symmetry {msym:.1e}, mean {mmean:.1e}, residual {mres:.1e}"
        ),
    )
}

fn morpurgo() -> Outcome {
    let s = SphereGrid::<f64>::with_order(32).unwrap();
    let mut least = f64::INFINITY;
    for seed in 0..20u64 {
        let amp = 0.1 + 0.1 * seed as f64;
        let phi = s.smooth_noise(1000 + seed, 2 + (seed as usize % 6), amp).unwrap();
        least = least.min(mass_of(&s, ROUND, &phi));
    }
    let constant = [-1.0, 0.0, 2.5].iter().map(|&c| mass_of(&s, ROUND, &s.constant(c)).abs()).fold(0.0, f64::max);
    outcome(
        least > 0.0 && constant < 1e-8,
        format!("smallest mass {least:.3e} over 20 factors, constant factors {constant:.1e}"),
    )
}

fn deficits_at_minimizer() -> Outcome {
    let run = prepare(TorusModulus::square(), 256);
    let m = match minimize(&run).0 {
        Ok(m) => m,
        Err(e) => return outcome(false, e),
    };
    match sample_deficits(&m.metric, 2024, 100, 4, 4.0) {
        Ok(samples) => {
            let s = DeficitSummary::from_samples(&samples);
            outcome(
                s.violations == 0 && s.samples == 100,
                format!("min log-HLS {:.3e}, min Onofri {:.3e}, {} violations", s.hls_min, s.onofri_min, s.violations),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn mesh_convergence() -> Outcome {
    let tau = TorusModulus::square();
    let exact = delta_mass(EwaldGreen::new(tau).robin(), 1.0).unwrap();
    let mut points = Vec::new();
    let mut vertices = 0;
    for n in [40usize, 80, 160, 320] {
        let s = MeshSurface::new(flat_torus_mesh(tau, n)).unwrap();
        let robins = match s.robin_sample(4) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("N = {n}: {e}")),
        };
        let (trace, _) = s.sampled_trace(&robins);
        let mass = delta_mass(trace, s.area()).unwrap();
        points.push(((1.0 / n as f64).ln(), (mass - exact).abs()));
        vertices = s.node_count();
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let order = sxy / sxx;
    let gap = points.last().unwrap().1;
    let gaps: Vec<String> = points.iter().map(|p| format!("{:.1e}", p.1)).collect();
    outcome(
        order >= 1.5 && gap < 1e-2,
        format!("gaps [{}], order {order:.2}, final gap {gap:.1e} at {vertices} vertices", gaps.join(", ")),
    )
}

fn gauss_bonnet() -> Outcome {
    let meshes = [
        (icosphere(0), 2),
        (icosphere(2), 2),
        (icosphere(4), 2),
        (voxel_genus1(2), 0),
        (voxel_genus2(3), -2),
        (flat_torus_mesh(TorusModulus::square(), 32), 0),
        (flat_torus_mesh(TorusModulus::hexagonal(), 32), 0),
        (flat_torus_mesh(TorusModulus::new(0.0, 3.0).unwrap(), 32), 0),
    ];
    let mut discrete = 0.0f64;
    for (mesh, chi) in meshes {
        let s = MeshSurface::new(mesh).unwrap();
        let total: f64 = s.angle_defects().iter().sum();
        discrete = discrete.max((total - 2.0 * PI * chi as f64).abs());
    }
    let sphere = SphereGrid::<f64>::with_order(32).unwrap();
    let mut smooth = 0.0f64;
    for seed in 0..20u64 {
        let phi = sphere.smooth_noise(seed, 6, 0.1 * (seed + 1) as f64).unwrap();
        let cm = ConformalMetric::new(&sphere, phi).unwrap();
        let total = integrate(&cm.curvature().unwrap(), cm.quadrature()).unwrap();
        smooth = smooth.max((total - 4.0 * PI).abs());
    }
    outcome(
        discrete < 1e-10 && smooth < 1e-6,
        format!("discrete defect error {discrete:.1e}, smooth error {smooth:.1e}"),
    )
}

fn djlw_reports() -> Outcome {
    let mut worst = 0.0f64;
    let mut all_pass = true;
    for tau in [TorusModulus::square(), TorusModulus::hexagonal(), TorusModulus::new(0.0, 3.0).unwrap()] {
        let g = TorusGrid::<f64>::square(tau, 64).unwrap();
        let p = MeanFieldProblem::new(&g, g.constant(1.0), g.constant(EwaldGreen::new(tau).robin())).unwrap();
        let r = djlw_hypothesis(&p).unwrap();
        all_pass &= r.passed;
        worst = worst.max((r.margin - 8.0 * PI).abs());
    }
    let s = SphereGrid::<f64>::with_order(32).unwrap();
    let a = 1.0 / (8.0 * PI * s.angles(0).0.cos());
    let h = s.sample(|theta, _| a * theta.cos()).exp();
    let counter = djlw_hypothesis(&MeanFieldProblem::new(&s, h, s.constant(ROUND)).unwrap()).unwrap();
    outcome(
        all_pass && worst < 1e-10 && !counter.passed,
        format!(
            "constant h margin error {worst:.1e}; sphere counterexample margin {:.3e} ({})",
            counter.margin,
            if counter.passed { "passed" } else { "failed" }
        ),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let negative_runs = vec![
        ("τ=i", prepare(TorusModulus::square(), 256)),
        ("τ=3i", prepare(TorusModulus::new(0.0, 3.0).unwrap(), 256)),
    ];
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome + '_>)> = vec![
        ("sphere reference constant", Box::new(sphere_constants)),
        ("dual-method Robin oracle", Box::new(dual_robin)),
        ("negative mass at N=256", Box::new(|| negative_mass(&negative_runs))),
        ("Euler–Lagrange Robin constancy", Box::new(robin_constancy)),
        ("trace and potential identities", Box::new(|| {
            let runs = vec![
                ("τ=i", prepare(TorusModulus::square(), 256)),
                ("τ=3i", prepare(TorusModulus::new(0.0, 3.0).unwrap(), 256)),
                ("τ=5i", prepare(TorusModulus::new(0.0, 5.0).unwrap(), 256)),
            ];
            trace_identity(&runs)
        })),
        ("gradient finite differences", Box::new(gradient_check)),
        ("mass scale invariance", Box::new(scale_invariance)),
        ("Green's function invariants", Box::new(green_invariants)),
        ("Morpurgo positivity", Box::new(morpurgo)),
        ("inequality deficits at the minimizer", Box::new(deficits_at_minimizer)),
        ("mesh-to-torus convergence", Box::new(mesh_convergence)),
        ("Gauss–Bonnet", Box::new(gauss_bonnet)),
        ("existence hypothesis reports", Box::new(djlw_reports)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let o = guarded(check);
        let status = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{status} {:>2} {name}: {} [{:.1} s]", i + 1, o.detail, secs(t.elapsed()));
    }
    println!("acceptance: {} of 13 criteria pass", 13 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
