//! Run configuration: flags merged over an optional TOML file, resolved to
//! concrete values and hashed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use deltamass::{MeanFieldOptions, Start, TorusModulus};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const GRID_MIN: usize = 32;
pub const GRID_MAX: usize = 2048;

/// Every tunable, as given on the command line or in the config file.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed for every pseudo-random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Reproducibility mode: single-threaded, deterministic scheduling.
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub repro: Option<bool>,

    /// Real part of the torus modulus τ.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tau_re: Option<f64>,
    /// Imaginary part of the torus modulus τ.
    #[arg(long, global = true)]
    pub tau_im: Option<f64>,
    /// Torus grid points along the first period.
    #[arg(long, global = true)]
    pub n1: Option<usize>,
    /// Torus grid points along the second period (defaults to n1).
    #[arg(long, global = true)]
    pub n2: Option<usize>,
    /// Sphere colatitude nodes.
    #[arg(long, global = true)]
    pub sphere_ntheta: Option<usize>,
    /// Sphere longitude nodes (defaults to 2·ntheta).
    #[arg(long, global = true)]
    pub sphere_nphi: Option<usize>,

    /// Mesh in OFF format.
    #[arg(long = "file", global = true)]
    pub mesh: Option<PathBuf>,
    /// Conformal factor: `zero`, `random:SEED[:AMPLITUDE]` or a field CSV.
    #[arg(long, global = true)]
    pub phi: Option<String>,
    /// Mesh vertices at which the Robin constant is extracted (all if unset).
    #[arg(long, global = true)]
    pub robin_samples: Option<usize>,

    /// Target mean-field residual.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Iteration cap per start.
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Comma-separated starts, e.g. `constant,random:1,bubble:0.1`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub starts: Option<Vec<String>>,
    /// Solve even when the existence hypothesis fails.
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub allow_hypothesis_failure: Option<bool>,

    /// Minimizer field written by `minimize`.
    #[arg(long, global = true)]
    pub state: Option<PathBuf>,
    /// Number of random test functions.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Frequency band of the test functions.
    #[arg(long, global = true)]
    pub band: Option<usize>,
    /// Largest sup-norm of the test functions.
    #[arg(long, global = true)]
    pub amplitude: Option<f64>,
}

macro_rules! overlay {
    ($flags:expr, $file:expr, $($f:ident),*) => {
        Settings { $($f: $flags.$f.clone().or($file.$f.clone()),)* }
    };
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Field-wise `self` over `file`: flags win.
    pub fn over(&self, file: &Settings) -> Settings {
        overlay!(
            self, file, out, seed, repro, tau_re, tau_im, n1, n2, sphere_ntheta, sphere_nphi, mesh, phi,
            robin_samples, tol, max_iter, starts, allow_hypothesis_failure, state, samples, band, amplitude
        )
    }
}

/// Fully resolved configuration; its JSON form is what gets hashed.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub surface: Option<String>,
    pub seed: u64,
    pub tau_re: f64,
    pub tau_im: f64,
    pub n1: usize,
    pub n2: usize,
    pub sphere_ntheta: usize,
    pub sphere_nphi: usize,
    pub mesh: Option<PathBuf>,
    pub phi: String,
    pub robin_samples: Option<usize>,
    pub solver: MeanFieldOptions,
    pub state: Option<PathBuf>,
    pub samples: usize,
    pub band: usize,
    pub amplitude: f64,
    /// SHA-256 of every input file named above, in the order mesh, phi, state.
    pub input_digests: Vec<String>,
}

impl RunConfig {
    pub fn resolve(command: &str, surface: Option<&str>, s: &Settings) -> Result<Self> {
        let n1 = s.n1.unwrap_or(256);
        let n2 = s.n2.unwrap_or(n1);
        let ntheta = s.sphere_ntheta.unwrap_or(64);
        let nphi = s.sphere_nphi.unwrap_or(2 * ntheta);
        for (name, v) in [("n1", n1), ("n2", n2), ("sphere-ntheta", ntheta), ("sphere-nphi", nphi)] {
            if !(GRID_MIN..=GRID_MAX).contains(&v) {
                bail!("--{name} = {v} outside the supported range {GRID_MIN}–{GRID_MAX}");
            }
        }
        let mut solver = if surface == Some("mesh") { MeanFieldOptions::mesh() } else { MeanFieldOptions::default() };
        if let Some(t) = s.tol {
            if !(t > 0.0) {
                bail!("--tol must be positive");
            }
            solver.tol = t;
        }
        if let Some(m) = s.max_iter {
            solver.max_iter = m;
        }
        if let Some(starts) = &s.starts {
            solver.starts = starts.iter().map(|t| t.parse::<Start>()).collect::<Result<_, _>>()?;
            if solver.starts.is_empty() {
                bail!("--starts needs at least one start");
            }
        }
        if let Some(allow) = s.allow_hypothesis_failure {
            solver.require_hypothesis = !allow;
        }
        let phi = s.phi.clone().unwrap_or_else(|| "zero".into());
        let mut input_digests = Vec::new();
        for path in [s.mesh.as_deref(), phi_path(&phi), s.state.as_deref()].into_iter().flatten() {
            input_digests.push(file_digest(path)?);
        }
        let amplitude = s.amplitude.unwrap_or(4.0);
        if !(0.0..=deltamass::inequalities::MAX_AMPLITUDE).contains(&amplitude) {
            bail!("--amplitude must lie in [0, {}]", deltamass::inequalities::MAX_AMPLITUDE);
        }
        Ok(Self {
            command: command.into(),
            surface: surface.map(str::to_string),
            seed: s.seed.unwrap_or(0),
            tau_re: s.tau_re.unwrap_or(0.0),
            tau_im: s.tau_im.unwrap_or(1.0),
            n1,
            n2,
            sphere_ntheta: ntheta,
            sphere_nphi: nphi,
            mesh: s.mesh.clone(),
            phi,
            robin_samples: s.robin_samples,
            solver,
            state: s.state.clone(),
            samples: s.samples.unwrap_or(100),
            band: s.band.unwrap_or(4),
            amplitude,
            input_digests,
        })
    }

    pub fn modulus(&self) -> Result<TorusModulus> {
        Ok(TorusModulus::new(self.tau_re, self.tau_im)?)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// The file behind a `--phi` value, if it names one.
pub fn phi_path(phi: &str) -> Option<&Path> {
    (phi != "zero" && !phi.starts_with("random:")).then(|| Path::new(phi))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
