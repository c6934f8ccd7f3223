//! The functional
//!
//! ```text
//! J(u) = (1/16π) ∫|∇u|² dA + ∫u dA − log ∫ h e^u dA
//! ```
//!
//! on a unit-area surface, its critical points `Δu = 8πhe^u − 8π` (with
//! `∫he^u = 1`), and the conformal mass minimization built on it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::{robin_conformal, trace_conformal, ConformalMetric};
use crate::error::{Error, Result};
use crate::field::{inner, integrate, log_integral_exp, Field};
use crate::report::{MassReport, Provenance};
use crate::scalar::Real;
use crate::surface::Surface;

/// Sup-norm bound on the spread of the conformal Robin field for the
/// constancy flag.
pub const ROBIN_CONSTANCY_TOLERANCE: f64 = 1e-4;

/// Data of one mean field problem on a unit-area surface.
pub struct MeanFieldProblem<'a, T: Real, S: Surface<T> + ?Sized> {
    surface: &'a S,
    h: Field<T>,
    log_h: Field<T>,
    robin: Field<T>,
    curvature: Field<T>,
}

impl<'a, T: Real, S: Surface<T> + ?Sized> MeanFieldProblem<'a, T, S> {
    /// Problem with weight `h` and base Robin field `robin`.
    pub fn new(surface: &'a S, h: Field<T>, robin: Field<T>) -> Result<Self> {
        let q = surface.quadrature();
        q.check(&h)?;
        q.check(&robin)?;
        let tol = T::lit((T::eps().to_f64_lossy() * q.len() as f64).max(1e-12));
        if (surface.area() - T::one()).abs() > tol {
            return Err(Error::InvalidInput(format!(
                "mean field problems need unit area (got {})",
                surface.area()
            )));
        }
        if !(h.min() > T::zero()) {
            return Err(Error::InvalidInput("weight h must be strictly positive".into()));
        }
        let log_h = h.map(T::ln);
        let curvature = surface.curvature()?;
        let rough = surface.laplacian(&log_h)?.sup_norm();
        log::debug!("mean field weight: sup |Δ log h| = {rough}");
        Ok(Self { surface, h, log_h, robin, curvature })
    }

    /// The mass-minimization problem: `h = e^{−4π m_g}`.
    pub fn from_robin(surface: &'a S, robin: Field<T>) -> Result<Self> {
        let four_pi = T::lit(4.0 * PI);
        let h = robin.map(|m| (-four_pi * m).exp());
        Self::new(surface, h, robin)
    }

    pub fn surface(&self) -> &'a S {
        self.surface
    }

    pub fn h(&self) -> &Field<T> {
        &self.h
    }

    pub fn robin(&self) -> &Field<T> {
        &self.robin
    }

    pub fn curvature(&self) -> &Field<T> {
        &self.curvature
    }

    /// `log ∫ h e^u dA`, overflow-guarded.
    pub fn log_mass(&self, u: &Field<T>) -> Result<T> {
        log_integral_exp(&u.add(&self.log_h)?, self.surface.quadrature())
    }

    /// `u` shifted so that `∫ h e^u dA = 1`.
    pub fn normalize(&self, u: &Field<T>) -> Result<Field<T>> {
        Ok(u.shift(-self.log_mass(u)?))
    }

    /// Normalized density `ρ = he^u / ∫he^u`.
    pub fn density(&self, u: &Field<T>) -> Result<Field<T>> {
        let l = self.log_mass(u)?;
        u.zip_map(&self.log_h, |a, b| (a + b - l).exp())
    }

    /// `sup |Δu − 8πhe^u + 8π|`.
    pub fn residual(&self, u: &Field<T>) -> Result<T> {
        let lu = self.surface.laplacian(u)?;
        let eight_pi = T::lit(8.0 * PI);
        let heu = u.zip_map(&self.h, |a, h| h * a.exp())?;
        Ok(lu.zip_map(&heu, |l, e| l - eight_pi * e + eight_pi)?.sup_norm())
    }

    /// `J(u)`.
    pub fn functional(&self, u: &Field<T>) -> Result<T> {
        let q = self.surface.quadrature();
        let lu = self.surface.laplacian(u)?;
        let dirichlet = inner(u, &lu, q)?;
        Ok(dirichlet / T::lit(16.0 * PI) + integrate(u, q)? - self.log_mass(u)?)
    }

    /// `(1/8π)Δu + 1 − he^u/∫he^u`, the gradient in the `L²(dA)` pairing.
    pub fn gradient(&self, u: &Field<T>) -> Result<Field<T>> {
        let lu = self.surface.laplacian(u)?;
        let rho = self.density(u)?;
        let eight_pi = T::lit(8.0 * PI);
        lu.zip_map(&rho, |l, r| l / eight_pi + T::one() - r)
    }

    /// Hessian of `J` at the point with normalized density `rho`, applied
    /// to `v`: `(1/8π)Δv − ρv + ρ ∫ρv`.
    fn hessian(&self, rho: &Field<T>, v: &Field<T>) -> Result<Field<T>> {
        let lv = self.surface.laplacian(v)?;
        let mean = inner(rho, v, self.surface.quadrature())?;
        let a = lv.scale(T::lit(1.0 / (8.0 * PI)));
        let b = rho.zip_map(v, |r, x| r * (mean - x))?;
        a.add(&b)
    }

    fn state(&self, u: Field<T>, iterations: usize, converged: bool) -> Result<MeanFieldState<T>> {
        let l = self.log_mass(&u)?;
        let g = self.gradient(&u)?;
        Ok(MeanFieldState {
            j_value: self.functional(&u)?,
            grad_norm: g.sup_norm(),
            residual_2_3: self.residual(&u)?,
            normalized: l.abs().to_f64_lossy() < 1e-10,
            iterations,
            converged,
            u,
        })
    }
}

/// `J(u)` for a problem.
pub fn functional_j<T: Real, S: Surface<T> + ?Sized>(problem: &MeanFieldProblem<'_, T, S>, u: &Field<T>) -> Result<T> {
    problem.functional(u)
}

/// Gradient of `J` at `u`.
pub fn gradient_j<T: Real, S: Surface<T> + ?Sized>(
    problem: &MeanFieldProblem<'_, T, S>,
    u: &Field<T>,
) -> Result<Field<T>> {
    problem.gradient(u)
}

/// An iterate of the solver.
#[derive(Clone, Debug)]
pub struct MeanFieldState<T: Real> {
    pub u: Field<T>,
    pub j_value: T,
    /// Sup-norm of the gradient.
    pub grad_norm: T,
    /// `sup |Δu − 8πhe^u + 8π|`.
    pub residual_2_3: T,
    /// `|∫he^u − 1| < 10⁻¹⁰`.
    pub normalized: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// Initial guess for one descent run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Start {
    /// `u = −log h̄`.
    Constant,
    /// Smooth random field of sup-norm 1.
    Random { seed: u64 },
    /// `log(1 + N_w(d(site, ·)))` with `N_w` the unit-mass Gaussian of width `w`.
    Bubble { width: f64, site: usize },
}

impl fmt::Display for Start {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Start::Constant => f.write_str("constant"),
            Start::Random { seed } => write!(f, "random:{seed}"),
            Start::Bubble { width, site } => write!(f, "bubble:{width},{site}"),
        }
    }
}

impl FromStr for Start {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unrecognized start `{s}`"));
        let s = s.trim();
        if s == "constant" {
            return Ok(Start::Constant);
        }
        if let Some(seed) = s.strip_prefix("random:") {
            return Ok(Start::Random { seed: seed.trim().parse().map_err(|_| bad())? });
        }
        if let Some(rest) = s.strip_prefix("bubble:") {
            let (w, site) = rest.split_once(',').unwrap_or((rest, "0"));
            let width: f64 = w.trim().parse().map_err(|_| bad())?;
            if !(width > 0.0) {
                return Err(bad());
            }
            return Ok(Start::Bubble { width, site: site.trim().parse().map_err(|_| bad())? });
        }
        Err(bad())
    }
}

impl TryFrom<String> for Start {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Start> for String {
    fn from(s: Start) -> String {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanFieldOptions {
    /// Target for `sup |Δu − 8πhe^u + 8π|`.
    pub tol: f64,
    pub max_iter: usize,
    pub starts: Vec<Start>,
    /// `δ` in the preconditioner `(δ + Δ/8π)⁻¹`.
    pub precondition_delta: f64,
    /// Residual below which Newton steps replace gradient steps.
    pub newton_switch: f64,
    /// Refuse to solve when the existence hypothesis fails.
    pub require_hypothesis: bool,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            starts: vec![
                Start::Constant,
                Start::Random { seed: 1 },
                Start::Bubble { width: 0.05, site: 0 },
                Start::Bubble { width: 0.1, site: 0 },
                Start::Bubble { width: 0.2, site: 0 },
            ],
            precondition_delta: 1e-2,
            newton_switch: 1.0,
            require_hypothesis: true,
        }
    }
}

impl MeanFieldOptions {
    /// Defaults with the looser mesh tolerance.
    pub fn mesh() -> Self {
        Self { tol: 1e-6, ..Self::default() }
    }
}

/// One row of the convergence history.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub start: usize,
    pub iter: usize,
    pub j: f64,
    pub grad_norm: f64,
    pub residual: f64,
}

impl HistoryRow {
    pub const CSV_HEADER: &'static str = "start,iter,J,grad_norm,residual";

    pub fn to_csv(&self) -> String {
        use crate::report::format_f64;
        format!(
            "{},{},{},{},{}",
            self.start,
            self.iter,
            format_f64(self.j),
            format_f64(self.grad_norm),
            format_f64(self.residual)
        )
    }
}

/// Outcome of one start.
#[derive(Clone, Debug)]
pub struct StartOutcome<T: Real> {
    pub start: Start,
    pub state: std::result::Result<MeanFieldState<T>, String>,
}

/// Multi-start result: the lowest converged state plus every run.
#[derive(Clone, Debug)]
pub struct MeanFieldSolution<T: Real> {
    pub best: MeanFieldState<T>,
    pub best_start: Start,
    pub runs: Vec<StartOutcome<T>>,
    pub history: Vec<HistoryRow>,
}

impl<T: Real> MeanFieldSolution<T> {
    /// Largest gap in `J` between the best run and any other converged run.
    pub fn start_spread(&self) -> f64 {
        let best = self.best.j_value.to_f64_lossy();
        self.runs
            .iter()
            .filter_map(|r| r.state.as_ref().ok())
            .map(|s| s.j_value.to_f64_lossy() - best)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MeanFieldError<T: Real> {
    #[error("mean field solve did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64, best: Box<MeanFieldState<T>> },
    #[error("line search failed at iteration {iteration} (residual {residual:e})")]
    StepSize { iteration: usize, residual: f64, best: Box<MeanFieldState<T>> },
    #[error("existence hypothesis fails: margin {margin:e} at {failing} node(s)")]
    Hypothesis { margin: f64, failing: usize },
    #[error(transparent)]
    Numeric(#[from] Error),
}

impl<T: Real> MeanFieldError<T> {
    /// Best state reached before the failure, if any.
    pub fn best_state(&self) -> Option<&MeanFieldState<T>> {
        match self {
            Self::NotConverged { best, .. } | Self::StepSize { best, .. } => Some(best),
            _ => None,
        }
    }
}

/// Solves the mean field equation from every configured start and keeps the
/// converged state of lowest `J`.
pub fn solve_mean_field<T: Real, S: Surface<T> + ?Sized>(
    problem: &MeanFieldProblem<'_, T, S>,
    opts: &MeanFieldOptions,
) -> std::result::Result<MeanFieldSolution<T>, MeanFieldError<T>> {
    if opts.require_hypothesis {
        let report = djlw_hypothesis(problem)?;
        if !report.passed {
            return Err(MeanFieldError::Hypothesis {
                margin: report.margin,
                failing: report.nodes.iter().filter(|n| n.margin <= 0.0).count(),
            });
        }
    }
    if opts.starts.is_empty() {
        return Err(Error::InvalidInput("no mean field starts configured".into()).into());
    }
    let runs: Vec<_> = opts
        .starts
        .par_iter()
        .enumerate()
        .map(|(i, &start)| {
            let mut history = Vec::new();
            let result = initial_guess(problem, start)
                .map_err(MeanFieldError::from)
                .and_then(|u0| descend(problem, u0, opts, i, &mut history));
            (start, result, history)
        })
        .collect();

    let mut history = Vec::new();
    let mut outcomes = Vec::new();
    let mut best: Option<(MeanFieldState<T>, Start)> = None;
    let mut first_error = None;
    for (start, result, rows) in runs {
        history.extend(rows);
        match result {
            Ok(state) => {
                if best.as_ref().is_none_or(|(b, _)| state.j_value < b.j_value) {
                    best = Some((state.clone(), start));
                }
                outcomes.push(StartOutcome { start, state: Ok(state) });
            }
            Err(e) => {
                log::warn!("mean field start {start} failed: {e}");
                outcomes.push(StartOutcome { start, state: Err(e.to_string()) });
                first_error.get_or_insert(e);
            }
        }
    }
    match best {
        Some((best, best_start)) => Ok(MeanFieldSolution { best, best_start, runs: outcomes, history }),
        None => Err(first_error.expect("at least one start ran")),
    }
}

fn initial_guess<T: Real, S: Surface<T> + ?Sized>(
    problem: &MeanFieldProblem<'_, T, S>,
    start: Start,
) -> Result<Field<T>> {
    let s = problem.surface;
    let u = match start {
        Start::Constant => {
            let mean_h = integrate(&problem.h, s.quadrature())? / s.area();
            s.constant(-mean_h.ln())
        }
        Start::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            s.smooth_noise(rng.random(), 4, T::one())?
        }
        Start::Bubble { width, site } => {
            if site >= s.node_count() {
                return Err(Error::InvalidInput(format!("bubble site {site} is not a node")));
            }
            let norm = 1.0 / (2.0 * PI * width * width);
            let values = (0..s.node_count())
                .map(|q| {
                    let d = s.node_distance(site, q).to_f64_lossy();
                    T::lit((1.0 + norm * (-d * d / (2.0 * width * width)).exp()).ln())
                })
                .collect();
            s.field(values)?
        }
    };
    problem.normalize(&u)
}

/// Sobolev-preconditioned descent with Armijo backtracking, switching to
/// truncated Newton–CG once the residual is small.
fn descend<T: Real, S: Surface<T> + ?Sized>(
    problem: &MeanFieldProblem<'_, T, S>,
    u0: Field<T>,
    opts: &MeanFieldOptions,
    start: usize,
    history: &mut Vec<HistoryRow>,
) -> std::result::Result<MeanFieldState<T>, MeanFieldError<T>> {
    let s = problem.surface;
    let q = s.quadrature();
    let delta = T::lit(opts.precondition_delta);
    let inv8pi = T::lit(1.0 / (8.0 * PI));
    let mut u = u0;
    let mut j = problem.functional(&u)?;
    let mut recent: Vec<f64> = Vec::new();
    // lowest-residual iterate, returned when the run fails
    let mut best = (f64::INFINITY, u.clone(), 0usize);
    let mut iterations = 0;
    for iter in 0..opts.max_iter {
        iterations = iter;
        let g = problem.gradient(&u)?;
        let residual = problem.residual(&u)?.to_f64_lossy();
        history.push(HistoryRow {
            start,
            iter,
            j: j.to_f64_lossy(),
            grad_norm: g.sup_norm().to_f64_lossy(),
            residual,
        });
        recent.push(j.to_f64_lossy());
        if residual < opts.tol && stalled(&recent) {
            return Ok(problem.state(u, iter, true)?);
        }
        if residual < best.0 {
            best = (residual, u.clone(), iter);
        } else if residual < opts.newton_switch && iter - best.2 > STAGNATION_WINDOW {
            log::debug!("start {start}: residual stagnated at {:e}", best.0);
            break;
        }

        let preconditioned = s.solve_shifted(delta, inv8pi, &g)?;
        let gradient_step = preconditioned.scale(-T::one());
        let mut direction = if residual < opts.newton_switch {
            newton_direction(problem, &u, &g, delta, inv8pi).unwrap_or_else(|_| gradient_step.clone())
        } else {
            gradient_step.clone()
        };
        let mut slope = inner(&g, &direction, q)?;
        if !(slope < T::zero()) {
            direction = gradient_step;
            slope = inner(&g, &direction, q)?;
        }
        if slope == T::zero() && residual < opts.tol {
            // exact critical point; nothing left to descend
            return Ok(problem.state(u, iter, true)?);
        }

        let c1 = T::lit(1e-4);
        let slack = T::lit(1e-14) * j.abs().max(T::one());
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..50 {
            let trial = u.axpy(step, &direction)?;
            if let Ok(jt) = problem.functional(&trial) {
                if jt.is_finite() && jt <= j + c1 * step * slope + slack {
                    accepted = Some((trial, jt));
                    break;
                }
            }
            step = step * T::lit(0.5);
        }
        if accepted.is_none() && residual < opts.newton_switch {
            // J differences drown in rounding near the solution; fall back to
            // damping on the equation residual
            step = T::one();
            for _ in 0..30 {
                let trial = problem.normalize(&u.axpy(step, &direction)?)?;
                let r = problem.residual(&trial)?.to_f64_lossy();
                if r < residual * (1.0 - 1e-4 * step.to_f64_lossy()) {
                    let jt = problem.functional(&trial)?;
                    accepted = Some((trial, jt));
                    break;
                }
                step = step * T::lit(0.5);
            }
        }
        match accepted {
            Some((trial, jt)) => {
                u = problem.normalize(&trial)?;
                j = jt;
            }
            None => {
                if residual < opts.tol {
                    return Ok(problem.state(u, iter, true)?);
                }
                let best = problem.state(best.1, best.2, false)?;
                return Err(MeanFieldError::StepSize { iteration: iter, residual, best: Box::new(best) });
            }
        }
    }
    let best = problem.state(best.1, best.2, false)?;
    Err(MeanFieldError::NotConverged {
        iterations: iterations + 1,
        residual: best.residual_2_3.to_f64_lossy(),
        best: Box::new(best),
    })
}

/// Newton iterations without residual progress before a run is abandoned.
const STAGNATION_WINDOW: usize = 30;

/// Relative change of `J` below `10⁻¹²` over the last five iterations.
fn stalled(recent: &[f64]) -> bool {
    if recent.len() < 6 {
        return false;
    }
    let tail = &recent[recent.len() - 6..];
    tail.windows(2).all(|w| (w[1] - w[0]).abs() <= 1e-12 * w[1].abs().max(1.0))
}

/// Truncated preconditioned CG on `H d = −g`; stops early on negative
/// curvature.
fn newton_direction<T: Real, S: Surface<T> + ?Sized>(
    problem: &MeanFieldProblem<'_, T, S>,
    u: &Field<T>,
    g: &Field<T>,
    delta: T,
    inv8pi: T,
) -> Result<Field<T>> {
    let s = problem.surface;
    let q = s.quadrature();
    let rho = problem.density(u)?;
    let project = |f: Field<T>| -> Result<Field<T>> { crate::field::mean_zero(&f, q) };
    let gnorm = inner(g, g, q)?.sqrt();
    let forcing = T::lit(0.5).min(gnorm.sqrt()) * gnorm;
    let mut x = s.constant(T::zero());
    let mut r = project(g.scale(-T::one()))?;
    let mut z = project(s.solve_shifted(delta, inv8pi, &r)?)?;
    let mut p = z.clone();
    let mut rz = inner(&r, &z, q)?;
    for it in 0..200 {
        let hp = problem.hessian(&rho, &p)?;
        let php = inner(&p, &hp, q)?;
        if !(php > T::zero()) {
            if it == 0 {
                return Err(Error::Singular("negative curvature in Newton step".into()));
            }
            break;
        }
        let alpha = rz / php;
        x = x.axpy(alpha, &p)?;
        r = project(r.axpy(-alpha, &hp)?)?;
        if inner(&r, &r, q)?.sqrt() <= forcing {
            break;
        }
        z = project(s.solve_shifted(delta, inv8pi, &r)?)?;
        let rz_new = inner(&r, &z, q)?;
        p = z.axpy(rz_new / rz, &p)?;
        rz = rz_new;
    }
    Ok(x)
}

/// One node near the maximum of `8πm + 2 log h`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DjlwNode {
    pub node: usize,
    pub delta_log_h: f64,
    pub curvature: f64,
    /// `8π − 2K − Δ log h`; positive when the condition holds.
    pub margin: f64,
}

/// Existence hypothesis `Δ log h(p₀) < 8π − 2K(p₀)` at every maximizer `p₀`
/// of `8πm + 2 log h` (nodes within `10⁻⁸` of the maximum).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DjlwReport {
    pub passed: bool,
    pub margin: f64,
    pub max_value: f64,
    pub nodes: Vec<DjlwNode>,
}

pub fn djlw_hypothesis<T: Real, S: Surface<T> + ?Sized>(problem: &MeanFieldProblem<'_, T, S>) -> Result<DjlwReport> {
    let eight_pi = 8.0 * PI;
    let target: Vec<f64> = problem
        .robin
        .values()
        .iter()
        .zip(problem.log_h.values())
        .map(|(&m, &l)| eight_pi * m.to_f64_lossy() + 2.0 * l.to_f64_lossy())
        .collect();
    let max_value = target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lap = problem.surface.laplacian(&problem.log_h)?;
    let nodes: Vec<DjlwNode> = target
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= max_value - 1e-8)
        .map(|(i, _)| {
            let delta_log_h = lap.get(i).to_f64_lossy();
            let curvature = problem.curvature.get(i).to_f64_lossy();
            DjlwNode { node: i, delta_log_h, curvature, margin: eight_pi - 2.0 * curvature - delta_log_h }
        })
        .collect();
    let margin = nodes.iter().map(|n| n.margin).fold(f64::INFINITY, f64::min);
    Ok(DjlwReport { passed: margin > 0.0, margin, max_value, nodes })
}

/// Strict upper bound on the minimum of `J`:
/// `J(u) < −(1 + log π + max(4πm + log h))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub passed: bool,
    pub threshold: f64,
    /// `threshold − J(u)`; positive when the bound holds.
    pub margin: f64,
}

pub fn bound_2_4_check<T: Real, S: Surface<T> + ?Sized>(
    state: &MeanFieldState<T>,
    problem: &MeanFieldProblem<'_, T, S>,
) -> BoundCheck {
    let four_pi = 4.0 * PI;
    let top = problem
        .robin
        .values()
        .iter()
        .zip(problem.log_h.values())
        .map(|(&m, &l)| four_pi * m.to_f64_lossy() + l.to_f64_lossy())
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold = -(1.0 + PI.ln() + top);
    let margin = threshold - state.j_value.to_f64_lossy();
    BoundCheck { passed: margin > 0.0, threshold, margin }
}

/// Conformal mass minimizer of a unit-area base metric.
pub struct MassMinimization<'a, T: Real, S: Surface<T> + ?Sized> {
    /// `e^φ g` with `φ = u − 4πm_g`, unit area.
    pub metric: ConformalMetric<'a, T, S>,
    pub report: MassReport,
    pub solution: MeanFieldSolution<T>,
    pub hypothesis: DjlwReport,
    pub bound: BoundCheck,
    /// Robin field of the minimizing metric.
    pub robin: Field<T>,
}

/// Minimizes the Δ-mass in the conformal class of `surface` (unit area,
/// Robin field `robin`) by solving the mean field equation with
/// `h = e^{−4π m_g}`. The trace of the minimizer is `J(u)/4π`.
pub fn minimize_mass<'a, T: Real, S: Surface<T> + ?Sized>(
    surface: &'a S,
    robin: &Field<T>,
    opts: &MeanFieldOptions,
) -> std::result::Result<MassMinimization<'a, T, S>, MeanFieldError<T>> {
    let problem = MeanFieldProblem::from_robin(surface, robin.clone())?;
    let hypothesis = djlw_hypothesis(&problem)?;
    if !hypothesis.passed {
        log::warn!("existence hypothesis fails with margin {:e}", hypothesis.margin);
    }
    let solution = solve_mean_field(&problem, opts)?;
    let state = &solution.best;
    let four_pi = T::lit(4.0 * PI);
    let phi = state.u.zip_map(robin, |u, m| u - four_pi * m)?;
    let phi = phi.shift(-log_integral_exp(&phi, surface.quadrature())?);
    let metric = ConformalMetric::new(surface, phi)?;

    let trace = (state.j_value / four_pi).to_f64_lossy();
    let trace_law = trace_conformal(robin, &metric)?.to_f64_lossy();
    let conformal_robin = robin_conformal(robin, &metric)?;
    let spread = conformal_robin.spread().to_f64_lossy();
    let mean_u = integrate(&state.u, surface.quadrature())? / surface.area();
    let potential = metric.base_potential()?;
    let eight_pi = T::lit(8.0 * PI);
    let eq_2_5 = potential.zip_map(&state.u, |p, u| p - (u - mean_u) / eight_pi)?.sup_norm();
    let bound = bound_2_4_check(state, &problem);
    let density = metric.density();

    let mut report = MassReport::new(trace, metric.area_phi().to_f64_lossy(), Provenance::default())?
        .with_diagnostic("J", state.j_value.to_f64_lossy())
        .with_diagnostic("residual_2_3", state.residual_2_3.to_f64_lossy())
        .with_diagnostic("trace_identity_gap", (trace - trace_law).abs())
        .with_diagnostic("eq_2_5_error", eq_2_5.to_f64_lossy())
        .with_diagnostic("robin_spread", spread)
        .with_diagnostic("bound_margin", bound.margin)
        .with_diagnostic("bound_threshold", bound.threshold)
        .with_diagnostic("djlw_margin", hypothesis.margin)
        .with_diagnostic("start_spread", solution.start_spread())
        .with_diagnostic("concentration_ratio", (density.max() / density.min()).to_f64_lossy());
    report.flags.bound_2_4 = Some(bound.passed);
    report.flags.robin_constancy = Some(spread < ROBIN_CONSTANCY_TOLERANCE);
    report.flags.djlw_hypothesis = Some(hypothesis.passed);
    Ok(MassMinimization { metric, report, solution, hypothesis, bound, robin: conformal_robin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{TorusGrid, TorusModulus};

    #[test]
    fn start_round_trips_through_text() {
        for s in [Start::Constant, Start::Random { seed: 42 }, Start::Bubble { width: 0.1, site: 7 }] {
            assert_eq!(s.to_string().parse::<Start>().unwrap(), s);
        }
        assert_eq!("bubble:0.05".parse::<Start>().unwrap(), Start::Bubble { width: 0.05, site: 0 });
        assert!("bubble:-1,0".parse::<Start>().is_err());
        assert!("nope".parse::<Start>().is_err());
    }

    #[test]
    fn functional_basics() {
        let g = TorusGrid::<f64>::square(TorusModulus::square(), 16).unwrap();
        let h = g.smooth_noise(2, 2, 0.5).unwrap().map(f64::exp);
        let p = MeanFieldProblem::new(&g, h.clone(), g.constant(0.0)).unwrap();
        let zero = g.constant(0.0);
        let expect = -integrate(&h, g.quadrature()).unwrap().ln();
        assert!((p.functional(&zero).unwrap() - expect).abs() < 1e-14);
        let u = g.smooth_noise(5, 3, 1.0).unwrap();
        let a = p.functional(&u).unwrap();
        let b = p.functional(&u.shift(3.7)).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn gradient_vanishes_at_constant_solutions() {
        let g = TorusGrid::<f64>::square(TorusModulus::square(), 16).unwrap();
        let p = MeanFieldProblem::new(&g, g.constant(1.0), g.constant(0.0)).unwrap();
        assert!(p.gradient(&g.constant(0.0)).unwrap().sup_norm() < 1e-15);
        let c = 2.5f64;
        let p = MeanFieldProblem::new(&g, g.constant(c), g.constant(0.0)).unwrap();
        assert!(p.gradient(&g.constant(-c.ln())).unwrap().sup_norm() < 1e-15);
        assert!(p.residual(&g.constant(-c.ln())).unwrap() < 1e-13);
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let g = TorusGrid::<f64>::square(TorusModulus::new(0.0, 2.0).unwrap(), 16).unwrap();
        let h = g.smooth_noise(1, 2, 0.3).unwrap().map(f64::exp);
        let p = MeanFieldProblem::new(&g, h, g.constant(0.0)).unwrap();
        let u = g.smooth_noise(2, 3, 0.7).unwrap();
        let v = g.smooth_noise(3, 3, 1.0).unwrap();
        let eps = 1e-6;
        let fd = p
            .gradient(&u.axpy(eps, &v).unwrap())
            .unwrap()
            .sub(&p.gradient(&u.axpy(-eps, &v).unwrap()).unwrap())
            .unwrap()
            .scale(0.5 / eps);
        let hv = p.hessian(&p.density(&u).unwrap(), &v).unwrap();
        assert!(fd.sub(&hv).unwrap().sup_norm() < 1e-7 * hv.sup_norm().max(1.0));
    }

    #[test]
    fn rejects_bad_problems() {
        let g = TorusGrid::<f64>::square(TorusModulus::square(), 8).unwrap();
        assert!(MeanFieldProblem::new(&g, g.constant(-1.0), g.constant(0.0)).is_err());
        let cm = ConformalMetric::new(&g, g.constant(1.0)).unwrap();
        assert!(MeanFieldProblem::new(&cm, cm.constant(1.0), cm.constant(0.0)).is_err());
    }

    #[test]
    fn history_rows_use_full_precision() {
        let row = HistoryRow { start: 0, iter: 3, j: -2.5, grad_norm: 1e-9, residual: 0.1 };
        assert_eq!(row.to_csv(), "0,3,-2.5000000000000000e0,1.0000000000000001e-9,1.0000000000000001e-1");
    }
}
