use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use deltamass::conformal::conformal_curvature;
use deltamass::inequalities::{sample_deficits, DeficitSummary};
use deltamass::mean_field::{HistoryRow, MeanFieldError};
use deltamass::mesh::MeshRobin;
use deltamass::report::{format_f64, sig17};
use deltamass::sphere::{sphere_robin, sphere_spectral_robin};
use deltamass::torus::flat_robin;
use deltamass::{
    djlw_hypothesis, integrate, minimize_mass, robin_conformal, trace_conformal, ConformalMetric, Field, MassReport,
    MeanFieldProblem, MeshSurface, Provenance, SphereGrid, Surface, TorusGrid, TorusModulus, TriMesh,
};
use serde::Serialize;

use crate::config::{phi_path, RunConfig};
use crate::output::OutputDir;
use crate::{emit, fail, Code};

const SPHERE_ORACLE_TOLERANCE: f64 = 1e-8;

/// A discretized base metric together with its Robin constants.
pub enum Geometry {
    Torus(TorusGrid<f64>),
    Sphere(SphereGrid<f64>),
    Mesh { surface: MeshSurface, path: PathBuf },
}

impl Geometry {
    pub fn from_config(kind: &str, cfg: &RunConfig) -> Result<Self> {
        match kind {
            "flat-torus" => Ok(Self::Torus(TorusGrid::new(cfg.modulus()?, cfg.n1, cfg.n2)?)),
            "sphere" => Ok(Self::Sphere(SphereGrid::new(cfg.sphere_ntheta, cfg.sphere_nphi)?)),
            "mesh" => {
                let path = cfg.mesh.clone().ok_or_else(|| fail(Code::Invalid, "mesh surface needs --file"))?;
                Self::mesh(&path)
            }
            other => bail!("unknown surface `{other}`"),
        }
    }

    pub fn mesh(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let surface = MeshSurface::new(TriMesh::read_off(BufReader::new(file))?)?;
        Ok(Self::Mesh { surface, path: path.to_path_buf() })
    }

    /// Rebuilds the discretization named by a field's domain id.
    pub fn from_domain(id: &str, mesh: Option<&Path>) -> Result<Self> {
        let keys: Vec<(&str, &str)> = id.split(':').skip(1).filter_map(|kv| kv.split_once('=')).collect();
        let get = |k: &str| -> Result<&str> {
            keys.iter().find(|(key, _)| *key == k).map(|(_, v)| *v).ok_or_else(|| {
                fail(Code::Invalid, format!("discretization `{id}` lacks `{k}`"))
            })
        };
        match id.split(':').next() {
            Some("torus") => {
                let modulus = TorusModulus::new(get("re")?.parse()?, get("im")?.parse()?)?;
                Ok(Self::Torus(TorusGrid::new(modulus, get("n1")?.parse()?, get("n2")?.parse()?)?))
            }
            Some("sphere") => Ok(Self::Sphere(SphereGrid::new(get("ntheta")?.parse()?, get("nphi")?.parse()?)?)),
            Some("mesh") => {
                let path = mesh.ok_or_else(|| fail(Code::Invalid, "mesh state needs --file or a `# source=` line"))?;
                let g = Self::mesh(path)?;
                if g.surface().domain().as_str() != id {
                    return Err(fail(Code::Invalid, format!("{} is not the mesh of `{id}`", path.display())));
                }
                Ok(g)
            }
            _ => Err(fail(Code::Invalid, format!("unrecognised discretization `{id}`"))),
        }
    }

    pub fn surface(&self) -> &dyn Surface<f64> {
        match self {
            Self::Torus(g) => g,
            Self::Sphere(s) => s,
            Self::Mesh { surface, .. } => surface,
        }
    }

    pub fn provenance(&self, hash: &str) -> Provenance {
        let (discretization, resolution, source) = match self {
            Self::Torus(g) => {
                let (n1, n2) = g.dims();
                let m = g.modulus();
                ("spectral torus grid".into(), format!("{n1}x{n2}"), format!("tau={}+{}i", m.re_tau, m.im_tau))
            }
            Self::Sphere(s) => {
                let (nt, np) = s.dims();
                ("Gauss-Legendre sphere grid".into(), format!("{nt}x{np}"), "round sphere".into())
            }
            Self::Mesh { surface, path } => {
                let info = surface.info();
                (
                    "cotangent mesh".into(),
                    format!("{} vertices, {} faces", info.vertices, info.faces),
                    path.display().to_string(),
                )
            }
        };
        Provenance { discretization, resolution, source, input_hash: hash.into() }
    }

    /// Comment lines that let a field written on this geometry be reloaded.
    pub fn source_comment(&self) -> Vec<String> {
        match self {
            Self::Mesh { path, .. } => vec![format!("source={}", path.display())],
            _ => Vec::new(),
        }
    }
}

/// Robin field of the base metric, with oracle diagnostics.
pub struct BaseRobin {
    pub field: Option<Field<f64>>,
    pub mesh: Vec<MeshRobin>,
    pub diagnostics: Vec<(&'static str, f64)>,
}

impl BaseRobin {
    /// `samples` limits the mesh vertices visited; the other surfaces have
    /// constant Robin functions.
    pub fn compute(geometry: &Geometry, samples: Option<usize>) -> Result<Self> {
        match geometry {
            Geometry::Torus(g) => {
                let pair = flat_robin(g.modulus())?;
                Ok(Self {
                    field: Some(g.constant(pair.ewald)),
                    mesh: Vec::new(),
                    diagnostics: vec![
                        ("robin_ewald", pair.ewald),
                        ("robin_grid", pair.grid.value),
                        ("robin_grid_standard_error", pair.grid.standard_error),
                        ("robin_discrepancy", pair.discrepancy()),
                    ],
                })
            }
            Geometry::Sphere(s) => {
                let closed = sphere_robin();
                let spectral = sphere_spectral_robin();
                if (closed - spectral).abs() > SPHERE_ORACLE_TOLERANCE {
                    return Err(deltamass::Error::Accuracy {
                        what: "round sphere Robin constant".into(),
                        first: closed,
                        second: spectral,
                        tolerance: SPHERE_ORACLE_TOLERANCE,
                    }
                    .into());
                }
                Ok(Self {
                    field: Some(s.constant(closed)),
                    mesh: Vec::new(),
                    diagnostics: vec![
                        ("robin_closed_form", closed),
                        ("robin_spectral", spectral),
                        ("robin_discrepancy", (closed - spectral).abs()),
                    ],
                })
            }
            Geometry::Mesh { surface, .. } => {
                let n = surface.node_count();
                let robins = surface.robin_sample(samples.unwrap_or(n))?;
                let field = (robins.len() == n).then(|| {
                    let mut values = vec![0.0; n];
                    for r in &robins {
                        values[r.vertex] = r.value;
                    }
                    Field::new(surface.domain().clone(), values)
                });
                let max_bar = robins.iter().map(|r| r.error_bar).fold(0.0, f64::max);
                Ok(Self {
                    field: field.transpose()?,
                    mesh: robins,
                    diagnostics: vec![("robin_max_error_bar", max_bar)],
                })
            }
        }
    }

    fn require_field(&self) -> Result<&Field<f64>> {
        self.field
            .as_ref()
            .ok_or_else(|| fail(Code::Invalid, "this needs the Robin constant at every vertex; drop --robin-samples"))
    }
}

/// Conformal factor named by `--phi`.
pub fn load_phi(spec: &str, surface: &dyn Surface<f64>) -> Result<Field<f64>> {
    if spec == "zero" {
        return Ok(surface.constant(0.0));
    }
    if let Some(rest) = spec.strip_prefix("random:") {
        let (seed, amp) = match rest.split_once(':') {
            Some((s, a)) => (s, a.parse::<f64>().with_context(|| format!("amplitude in `{spec}`"))?),
            None => (rest, 1.0),
        };
        let seed: u64 = seed.parse().with_context(|| format!("seed in `{spec}`"))?;
        return Ok(surface.smooth_noise(seed, 4, amp)?);
    }
    let path = phi_path(spec).expect("file spec");
    let field = read_field(path)?;
    if field.domain() != surface.domain() {
        return Err(deltamass::Error::DomainMismatch {
            expected: surface.domain().to_string(),
            found: field.domain().to_string(),
        }
        .into());
    }
    Ok(field)
}

pub fn read_field(path: &Path) -> Result<Field<f64>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Field::read_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// `# source=<path>` from a field file's comment lines.
fn source_comment(path: &Path) -> Result<Option<PathBuf>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim().strip_prefix("source=").map(PathBuf::from)))
}

pub fn mass(kind: &str, cfg: &RunConfig, out: &mut OutputDir) -> Result<Code> {
    let geometry = Geometry::from_config(kind, cfg)?;
    let surface = geometry.surface();
    let robin = BaseRobin::compute(&geometry, cfg.robin_samples)?;
    let phi = load_phi(&cfg.phi, surface)?;
    let is_zero = phi.sup_norm() == 0.0;

    let (trace, area, bar) = match (&geometry, is_zero) {
        (Geometry::Mesh { surface, .. }, true) => {
            let (trace, bar) = surface.sampled_trace(&robin.mesh);
            (trace, surface.area(), Some(bar))
        }
        _ => {
            let metric = ConformalMetric::new(surface, phi)?;
            let trace = trace_conformal(robin.require_field()?, &metric)?;
            // pointwise Robin error bars bound the trace error by their max times A_φ
            let bar = matches!(geometry, Geometry::Mesh { .. })
                .then(|| robin.mesh.iter().map(|r| r.error_bar).fold(0.0, f64::max) * metric.area_phi());
            (trace, metric.area_phi(), bar)
        }
    };
    let mut report = MassReport::new(trace, area, geometry.provenance(out.hash()))?;
    for (k, v) in &robin.diagnostics {
        report = report.with_diagnostic(k, *v);
    }
    if let Some(bar) = bar {
        report = report.with_diagnostic("trace_error_bar", bar).with_diagnostic("mass_error_bar", bar / area);
        report = report.with_diagnostic("robin_samples", robin.mesh.len() as f64);
    }
    if let Geometry::Mesh { surface: m, .. } = &geometry {
        let info = m.info();
        report = report
            .with_diagnostic("genus", info.genus as f64)
            .with_diagnostic("min_angle_degrees", info.min_angle_degrees);
    }
    if let Some(field) = &robin.field {
        let problem = MeanFieldProblem::from_robin(surface, field.clone())?;
        let hypothesis = djlw_hypothesis(&problem)?;
        report.flags.djlw_hypothesis = Some(hypothesis.passed);
        report = report.with_diagnostic("djlw_margin", hypothesis.margin);
    }
    out.report("mass.json", &report)?;
    emit(&report.to_json())?;
    Ok(Code::Ok)
}

pub fn minimize(kind: &str, cfg: &RunConfig, out: &mut OutputDir) -> Result<Code> {
    if kind == "sphere" {
        return Err(fail(
            Code::Invalid,
            "minimize needs genus at least one; the round sphere already minimizes the mass in its class",
        ));
    }
    let geometry = Geometry::from_config(kind, cfg)?;
    if geometry.surface().euler_characteristic() > 0 {
        return Err(fail(Code::Invalid, "minimize needs genus at least one; this mesh is a sphere"));
    }
    let robin = BaseRobin::compute(&geometry, None)?;
    let field = robin.require_field()?;
    let run = match minimize_mass(geometry.surface(), field, &cfg.solver) {
        Ok(run) => run,
        Err(e) => return Err(mean_field_failure(e)),
    };
    let mut report = run.report.clone();
    report.provenance = geometry.provenance(out.hash());
    for (k, v) in &robin.diagnostics {
        report = report.with_diagnostic(k, *v);
    }
    log::info!(
        "best start {} after {} iterations, concentration ratio {:.3e}",
        run.solution.best_start,
        run.solution.best.iterations,
        report.diagnostics["concentration_ratio"]
    );
    out.field("phi.csv", run.metric.phi(), &geometry.source_comment())?;
    out.field("robin.csv", &run.robin, &geometry.source_comment())?;
    let rows: Vec<String> = run.solution.history.iter().map(HistoryRow::to_csv).collect();
    out.csv("convergence.csv", HistoryRow::CSV_HEADER, &rows)?;
    out.report("mass.json", &report)?;
    emit(&report.to_json())?;
    if report.flags.all_pass() {
        Ok(Code::Ok)
    } else {
        log::error!("certification failed: {:?}", report.flags);
        Ok(Code::Certification)
    }
}

fn mean_field_failure(e: MeanFieldError<f64>) -> anyhow::Error {
    let code = match &e {
        MeanFieldError::NotConverged { .. } | MeanFieldError::StepSize { .. } => Code::Solver,
        MeanFieldError::Hypothesis { .. } => Code::Certification,
        MeanFieldError::Numeric(inner) => crate::core_code(inner),
    };
    fail(code, e.to_string())
}

#[derive(Serialize)]
struct RobinSummary {
    config_hash: String,
    discretization: String,
    nodes: usize,
    #[serde(with = "sig17")]
    min: f64,
    #[serde(with = "sig17")]
    max: f64,
    #[serde(with = "sig17")]
    mean: f64,
    #[serde(with = "sig17")]
    spread: f64,
    #[serde(with = "deltamass::report::sig17_map")]
    diagnostics: std::collections::BTreeMap<String, f64>,
}

pub fn robin(kind: &str, cfg: &RunConfig, out: &mut OutputDir) -> Result<Code> {
    let geometry = Geometry::from_config(kind, cfg)?;
    let surface = geometry.surface();
    let base = BaseRobin::compute(&geometry, None)?;
    let phi = load_phi(&cfg.phi, surface)?;
    let metric = ConformalMetric::new(surface, phi)?;
    let field = robin_conformal(base.require_field()?, &metric)?;
    let curvature = conformal_curvature(surface, metric.phi())?;
    let comments = geometry.source_comment();
    out.field("robin.csv", &field, &comments)?;
    out.field("curvature.csv", &curvature, &comments)?;
    if let Geometry::Mesh { surface: m, .. } = &geometry {
        let bars = Field::new(m.domain().clone(), base.mesh.iter().map(|r| r.error_bar).collect())?;
        out.field("robin_error.csv", &bars, &comments)?;
    }
    let q = metric.quadrature();
    let summary = RobinSummary {
        config_hash: out.hash().into(),
        discretization: surface.domain().to_string(),
        nodes: field.len(),
        min: field.min(),
        max: field.max(),
        mean: integrate(&field, q)? / metric.area_phi(),
        spread: field.spread(),
        diagnostics: base.diagnostics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    };
    let text = serde_json::to_string_pretty(&summary)?;
    out.json("robin.json", &text)?;
    emit(&text)?;
    Ok(Code::Ok)
}

#[derive(Serialize)]
struct DeficitReport {
    config_hash: String,
    state: String,
    master_seed: u64,
    band: usize,
    #[serde(with = "sig17")]
    amplitude: f64,
    samples: usize,
    violations: usize,
    #[serde(with = "sig17")]
    hls_min: f64,
    #[serde(with = "sig17")]
    hls_mean: f64,
    #[serde(with = "sig17")]
    onofri_min: f64,
    #[serde(with = "sig17")]
    onofri_mean: f64,
}

pub fn check_inequalities(cfg: &RunConfig, out: &mut OutputDir) -> Result<Code> {
    let state = cfg.state.as_deref().ok_or_else(|| fail(Code::Invalid, "check-inequalities needs --state"))?;
    let phi = read_field(state)?;
    let mesh = match &cfg.mesh {
        Some(p) => Some(p.clone()),
        None => source_comment(state)?,
    };
    let geometry = Geometry::from_domain(phi.domain().as_str(), mesh.as_deref())?;
    let metric = ConformalMetric::new(geometry.surface(), phi)?;
    let samples = sample_deficits(&metric, cfg.seed, cfg.samples, cfg.band, cfg.amplitude)?;
    let summary = DeficitSummary::from_samples(&samples);
    let rows: Vec<String> =
        samples.iter().map(|s| format!("{},{},{}", s.seed, format_f64(s.hls), format_f64(s.onofri))).collect();
    let header = "seed,hls_deficit,onofri_deficit";
    out.csv("deficits.csv", header, &rows)?;
    let report = DeficitReport {
        config_hash: out.hash().into(),
        state: state.display().to_string(),
        master_seed: cfg.seed,
        band: cfg.band,
        amplitude: cfg.amplitude,
        samples: summary.samples,
        violations: summary.violations,
        hls_min: summary.hls_min,
        hls_mean: summary.hls_mean,
        onofri_min: summary.onofri_min,
        onofri_mean: summary.onofri_mean,
    };
    out.json("deficits_summary.json", &serde_json::to_string_pretty(&report)?)?;
    let mut text = format!("# config_hash={}\n{header}", out.hash());
    for row in &rows {
        text.push('\n');
        text.push_str(row);
    }
    emit(&text)?;
    eprintln!(
        "{} samples, min log-HLS deficit {}, min Onofri deficit {}, {} violations",
        summary.samples,
        format_f64(summary.hls_min),
        format_f64(summary.onofri_min),
        summary.violations
    );
    Ok(if summary.violations == 0 { Code::Ok } else { Code::Certification })
}
