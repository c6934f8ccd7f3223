use std::f64::consts::PI;

use deltamass::field::inner;
use deltamass::mean_field::HistoryRow;
use deltamass::{
    djlw_hypothesis, functional_j, gradient_j, integrate, minimize_mass, solve_mean_field, trace_conformal,
    MeanFieldOptions, MeanFieldProblem, SphereGrid, Start, Surface, TorusGrid, TorusModulus,
};
use proptest::prelude::*;

#[test]
fn constant_h_hypothesis_margin_is_eight_pi() {
    let g = TorusGrid::<f64>::square(TorusModulus::new(0.0, 3.0).unwrap(), 32).unwrap();
    let p = MeanFieldProblem::new(&g, g.constant(1.0), g.constant(-0.1299320059828287)).unwrap();
    let report = djlw_hypothesis(&p).unwrap();
    assert!(report.passed);
    assert!((report.margin - 8.0 * PI).abs() < 1e-12);
    assert_eq!(report.nodes.len(), g.node_count());
}

#[test]
fn manufactured_sphere_counterexample_fails() {
    let s = SphereGrid::<f64>::with_order(32).unwrap();
    // with a·cos θ₀ > 0, log h = a cos θ peaks on the polar ring of node 0,
    // where Δ log h = 8πa cos θ₀; choose a so that this exceeds 8π − 2K by one
    let cos_top = s.angles(0).0.cos();
    let a = 1.0 / (8.0 * PI * cos_top);
    let log_h = s.sample(|theta, _| a * theta.cos());
    let p = MeanFieldProblem::new(&s, log_h.exp(), s.constant(-0.17067218146492423)).unwrap();
    let report = djlw_hypothesis(&p).unwrap();
    assert!(!report.passed);
    assert!((report.margin + 1.0).abs() < 1e-9, "{}", report.margin);
}

#[test]
fn solution_satisfies_energy_identity() {
    let g = TorusGrid::<f64>::square(TorusModulus::new(0.0, 1.5).unwrap(), 32).unwrap();
    let h = g.smooth_noise(3, 2, 0.05).unwrap().exp();
    let h = h.scale(1.0 / integrate(&h, g.quadrature()).unwrap());
    let p = MeanFieldProblem::new(&g, h.clone(), g.constant(0.0)).unwrap();
    let sol = solve_mean_field(&p, &MeanFieldOptions::default()).unwrap();
    let u = &sol.best.u;
    assert!(sol.best.converged && sol.best.residual_2_3 < 1e-8);
    let heu = h.mul(&u.exp()).unwrap();
    let rhs = 0.5 * inner(u, &heu.shift(1.0), g.quadrature()).unwrap();
    assert!((sol.best.j_value - rhs).abs() < 1e-9, "{} vs {rhs}", sol.best.j_value);
    assert!(!sol.history.is_empty());
    assert_eq!(HistoryRow::CSV_HEADER.split(',').count(), sol.history[0].to_csv().split(',').count());
}

#[test]
fn small_grid_minimization_is_consistent() {
    let g = TorusGrid::<f64>::square(TorusModulus::new(0.0, 2.0).unwrap(), 64).unwrap();
    let robin = g.constant(-0.18099834322441993);
    let opts = MeanFieldOptions {
        starts: vec![Start::Constant, Start::Bubble { width: 0.1, site: 0 }],
        ..MeanFieldOptions::default()
    };
    let run = minimize_mass(&g, &robin, &opts).unwrap();
    let trace = trace_conformal(&robin, &run.metric).unwrap();
    assert!((run.report.trace - trace).abs() < 1e-8);
    assert!(run.report.diagnostics["eq_2_5_error"] < 1e-8);
    assert!(run.report.mass < 0.0);
    assert!(run.report.flags.all_pass());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>()) {
        let g = TorusGrid::<f64>::square(TorusModulus::new(0.2, 1.3).unwrap(), 32).unwrap();
        let h = g.smooth_noise(seed, 2, 0.5).unwrap().exp();
        let h = h.scale(1.0 / integrate(&h, g.quadrature()).unwrap());
        let p = MeanFieldProblem::new(&g, h, g.constant(0.0)).unwrap();
        let u = g.smooth_noise(seed ^ 0x55, 3, 1.0).unwrap();
        let v = g.smooth_noise(seed ^ 0xaa, 4, 1.0).unwrap();
        let eps = 1e-5;
        let fd = (functional_j(&p, &u.axpy(eps, &v).unwrap()).unwrap()
            - functional_j(&p, &u.axpy(-eps, &v).unwrap()).unwrap())
            / (2.0 * eps);
        let exact = inner(&gradient_j(&p, &u).unwrap(), &v, g.quadrature()).unwrap();
        prop_assert!((fd - exact).abs() < 1e-6 * exact.abs().max(1e-3), "{fd} vs {exact}");
    }
}
