//! Invariant suites run by `verify`, reported as a pass/fail matrix.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use deltamass::conformal::conformal_curvature;
use deltamass::inequalities::sample_deficits;
use deltamass::mesh::{icosphere, voxel_genus2};
use deltamass::report::sig17;
use deltamass::sphere::{adm_identity_residual, sphere_robin, sphere_spectral_robin};
use deltamass::torus::{flat_robin, EwaldGreen};
use deltamass::{
    functional_j, gradient_j, integrate, ConformalMetric, MeanFieldProblem, MeshSurface, SphereGrid, Surface,
    TorusGrid,
};
use serde::Serialize;

use crate::commands::Geometry;
use crate::config::{file_digest, phi_path, RunConfig};
use crate::output::{embedded_hash, OutputDir, RunRecord, RECORD_FILE};
use crate::Code;

#[derive(Serialize)]
struct Check {
    check: String,
    passed: bool,
    #[serde(with = "sig17")]
    value: f64,
    #[serde(with = "sig17")]
    tolerance: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    detail: String,
}

#[derive(Serialize)]
struct Suite {
    suite: String,
    passed: bool,
    checks: Vec<Check>,
}

#[derive(Serialize)]
struct Matrix {
    config_hash: String,
    passed: bool,
    suites: Vec<Suite>,
}

#[derive(Default)]
struct Builder {
    checks: Vec<Check>,
}

impl Builder {
    /// Passes when `value ≤ tolerance`.
    fn within(&mut self, name: &str, value: f64, tolerance: f64) {
        self.checks.push(Check {
            check: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
            detail: String::new(),
        });
    }

    fn outcome(&mut self, name: &str, result: Result<f64>, tolerance: f64) {
        match result {
            Ok(v) => self.within(name, v, tolerance),
            Err(e) => self.failed(name, format!("{e:#}")),
        }
    }

    fn failed(&mut self, name: &str, detail: String) {
        self.checks.push(Check { check: name.into(), passed: false, value: f64::NAN, tolerance: 0.0, detail });
    }

    fn finish(self, name: &str) -> Suite {
        Suite { suite: name.into(), passed: self.checks.iter().all(|c| c.passed), checks: self.checks }
    }
}

fn torus_suite(cfg: &RunConfig) -> Suite {
    let mut b = Builder::default();
    let tau = match cfg.modulus() {
        Ok(t) => t,
        Err(e) => {
            b.failed("modulus", format!("{e:#}"));
            return b.finish("torus");
        }
    };
    b.outcome("robin_dual_oracle", flat_robin(tau).map(|p| p.discrepancy()).map_err(Into::into), 1e-5);
    let m = EwaldGreen::new(tau).robin();
    let modular = (m - EwaldGreen::new(tau.translated()).robin())
        .abs()
        .max((m - EwaldGreen::new(tau.inverted()).robin()).abs());
    b.within("robin_modular_invariance", modular, 1e-10);

    match TorusGrid::<f64>::new(tau, cfg.n1, cfg.n2) {
        Ok(g) => green_checks(&mut b, &g, &[0, g.node_count() / 3]),
        Err(e) => b.failed("grid", e.to_string()),
    }
    b.finish("torus")
}

/// Kernel, mean-zero, symmetry and residual checks on Green columns.
fn green_checks(b: &mut Builder, s: &dyn Surface<f64>, nodes: &[usize]) {
    b.outcome("constants_in_kernel", s.laplacian(&s.constant(1.0)).map(|f| f.sup_norm()).map_err(Into::into), 1e-10);
    let q = s.quadrature();
    let cols: Vec<_> = nodes
        .iter()
        .map(|&p| {
            let mut delta = vec![0.0; s.node_count()];
            delta[p] = 1.0 / q.weights()[p];
            let delta = deltamass::Field::new(s.domain().clone(), delta)?;
            let col = s.inverse_laplacian(&delta)?;
            let residual = s.laplacian(&col)?.sub(&delta.shift(-1.0 / s.area()))?.sup_norm() * q.weights()[p];
            Ok::<_, deltamass::Error>((p, col, residual))
        })
        .collect();
    let mut cols_ok = Vec::new();
    for c in cols {
        match c {
            Ok(c) => cols_ok.push(c),
            Err(e) => b.failed("green_column", e.to_string()),
        }
    }
    let mean = cols_ok
        .iter()
        .map(|(_, c, _)| integrate(c, q).map(f64::abs))
        .try_fold(0.0f64, |a, v| v.map(|v| a.max(v)));
    b.outcome("green_mean_zero", mean.map_err(Into::into), 1e-10);
    let residual = cols_ok.iter().map(|(_, _, r)| *r).fold(0.0, f64::max);
    b.within("green_residual", residual, 1e-6);
    let mut asym = 0.0f64;
    for (p, a, _) in &cols_ok {
        for (r, c, _) in &cols_ok {
            asym = asym.max((a.get(*r) - c.get(*p)).abs());
        }
    }
    b.within("green_symmetry", asym, 1e-8);
}

fn sphere_suite(cfg: &RunConfig) -> Suite {
    let mut b = Builder::default();
    b.within("robin_dual_oracle", (sphere_robin() - sphere_spectral_robin()).abs(), 1e-8);
    match SphereGrid::<f64>::new(cfg.sphere_ntheta, cfg.sphere_nphi) {
        Ok(s) => {
            let phi = s.smooth_noise(cfg.seed, 3, 0.5);
            let identity = phi.as_ref().map_err(|e| anyhow::anyhow!("{e}")).and_then(|phi| {
                Ok(adm_identity_residual(&s, phi)?.sup_norm())
            });
            b.outcome("mass_identity_residual", identity, 1e-8);
            let gb = phi.map_err(Into::into).and_then(|phi| gauss_bonnet_gap(&s, &phi));
            b.outcome("gauss_bonnet", gb, 1e-8);
        }
        Err(e) => b.failed("grid", e.to_string()),
    }
    b.finish("sphere")
}

/// `|∫ K_φ dA_φ − 2πχ|` for the metric `e^φ g`.
fn gauss_bonnet_gap(s: &dyn Surface<f64>, phi: &deltamass::Field<f64>) -> Result<f64> {
    let k = conformal_curvature(s, phi)?;
    let total = integrate(&k.mul(&phi.exp())?, s.quadrature())?;
    Ok((total - 2.0 * PI * s.euler_characteristic() as f64).abs())
}

fn mesh_suite(name: &str, load: impl FnOnce() -> Result<MeshSurface>) -> Suite {
    let mut b = Builder::default();
    let surface = match load() {
        Ok(s) => {
            b.within("mesh_quality", 0.0, 0.0);
            s
        }
        Err(e) => {
            b.failed("mesh_quality", format!("{e:#}"));
            return b.finish(name);
        }
    };
    let defects: f64 = surface.angle_defects().iter().sum();
    b.within("discrete_gauss_bonnet", (defects - 2.0 * PI * surface.euler_characteristic() as f64).abs(), 1e-9);
    let n = surface.node_count();
    green_checks(&mut b, &surface, &[0, n / 2]);
    b.finish(name)
}

fn mean_field_suite(cfg: &RunConfig) -> Suite {
    let mut b = Builder::default();
    let result = (|| -> Result<f64> {
        let g = TorusGrid::<f64>::new(cfg.modulus()?, 32, 32)?;
        let h = g.smooth_noise(cfg.seed, 2, 0.5)?.exp();
        let h = h.scale(1.0 / integrate(&h, g.quadrature())?);
        let p = MeanFieldProblem::new(&g, h, g.constant(0.0))?;
        let u = g.smooth_noise(cfg.seed ^ 0x55, 3, 1.0)?;
        let v = g.smooth_noise(cfg.seed ^ 0xaa, 4, 1.0)?;
        let eps = 1e-5;
        let fd = (functional_j(&p, &u.axpy(eps, &v)?)? - functional_j(&p, &u.axpy(-eps, &v)?)?) / (2.0 * eps);
        let exact = deltamass::field::inner(&gradient_j(&p, &u)?, &v, g.quadrature())?;
        Ok((fd - exact).abs() / exact.abs().max(1e-3))
    })();
    b.outcome("gradient_central_difference", result, 1e-6);
    b.finish("mean_field")
}

fn reproducibility_suite(cfg: &RunConfig) -> Suite {
    let mut b = Builder::default();
    let run = || -> Result<String> {
        let g = TorusGrid::<f64>::new(cfg.modulus()?, 32, 32)?;
        let phi = g.smooth_noise(cfg.seed, 3, 1.0)?;
        let metric = ConformalMetric::new(&g, phi)?;
        let samples = sample_deficits(&metric, cfg.seed, 16, 4, 3.0)?;
        Ok(serde_json::to_string(&samples)?)
    };
    match (run(), run()) {
        (Ok(a), Ok(b2)) => b.within("deficit_samples_identical", if a == b2 { 0.0 } else { 1.0 }, 0.0),
        (Err(e), _) | (_, Err(e)) => b.failed("deficit_samples_identical", format!("{e:#}")),
    }
    b.finish("reproducibility")
}

/// Re-derives the config hash of a finished run and checks every output
/// embeds it.
fn record_suite(dir: &Path) -> Suite {
    let mut b = Builder::default();
    let record = fs::read_to_string(dir.join(RECORD_FILE))
        .with_context(|| format!("reading {}", dir.join(RECORD_FILE).display()))
        .and_then(|t| serde_json::from_str::<RunRecord>(&t).map_err(Into::into));
    let record = match record {
        Ok(r) => r,
        Err(e) => {
            b.failed("record", format!("{e:#}"));
            return b.finish("record");
        }
    };
    let recomputed = record.config.hash();
    b.within("config_hash", if recomputed == record.config_hash { 0.0 } else { 1.0 }, 0.0);
    let cfg = &record.config;
    let inputs: Vec<&Path> =
        [cfg.mesh.as_deref(), phi_path(&cfg.phi), cfg.state.as_deref()].into_iter().flatten().collect();
    for (path, digest) in inputs.iter().zip(&cfg.input_digests) {
        let name = format!("input {}", path.display());
        match file_digest(path) {
            Ok(d) => b.within(&name, if &d == digest { 0.0 } else { 1.0 }, 0.0),
            Err(e) => b.failed(&name, format!("{e:#}")),
        }
    }
    for name in &record.outputs {
        match embedded_hash(&dir.join(name)) {
            Ok(Some(h)) if h == record.config_hash => b.within(name, 0.0, 0.0),
            Ok(Some(h)) => b.failed(name, format!("embeds hash {h}")),
            Ok(None) => b.failed(name, "no embedded config hash".into()),
            Err(e) => b.failed(name, format!("{e:#}")),
        }
    }
    b.finish("record")
}

pub fn verify(cfg: &RunConfig, record: Option<&Path>, out: &mut OutputDir) -> Result<Code> {
    let mut suites = vec![torus_suite(cfg), sphere_suite(cfg)];
    match &cfg.mesh {
        Some(path) => suites.push(mesh_suite("mesh", || match Geometry::mesh(path)? {
            Geometry::Mesh { surface, .. } => Ok(surface),
            _ => unreachable!(),
        })),
        None => {
            suites.push(mesh_suite("mesh_icosphere", || Ok(MeshSurface::new(icosphere(3))?)));
            suites.push(mesh_suite("mesh_genus2", || Ok(MeshSurface::new(voxel_genus2(2))?)));
        }
    }
    suites.push(mean_field_suite(cfg));
    suites.push(reproducibility_suite(cfg));
    if let Some(dir) = record {
        suites.push(record_suite(dir));
    }
    let passed = suites.iter().all(|s| s.passed);
    for s in &suites {
        for c in s.checks.iter().filter(|c| !c.passed) {
            log::error!("{}/{} failed: value {:e}, tolerance {:e} {}", s.suite, c.check, c.value, c.tolerance, c.detail);
        }
    }
    let matrix = Matrix { config_hash: out.hash().into(), passed, suites };
    let text = serde_json::to_string_pretty(&matrix)?;
    out.json("verify.json", &text)?;
    crate::emit(&text)?;
    Ok(if passed { Code::Ok } else { Code::Certification })
}
