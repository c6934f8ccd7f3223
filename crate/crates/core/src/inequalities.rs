//! Logarithmic Hardy–Littlewood–Sobolev and Moser–Trudinger–Onofri
//! deficits, both nonnegative at mass-minimizing metrics.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{inner, integrate, log_integral_exp, Field};
use crate::scalar::Real;
use crate::surface::Surface;

/// Largest allowed test-function amplitude; keeps `e^ψ` well inside range.
pub const MAX_AMPLITUDE: f64 = 5.0;

/// A negative deficit below this counts as a violation.
pub const VIOLATION_TOLERANCE: f64 = 1e-8;

/// Recipe for one pseudo-random test function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionSpec {
    pub seed: u64,
    /// Frequency scale handed to [`Surface::smooth_noise`].
    pub band: usize,
    /// Sup-norm of the function.
    pub amplitude: f64,
}

impl TestFunctionSpec {
    pub fn sample<T: Real, S: Surface<T> + ?Sized>(&self, surface: &S) -> Result<Field<T>> {
        if !(self.amplitude >= 0.0 && self.amplitude <= MAX_AMPLITUDE) {
            return Err(Error::InvalidInput(format!(
                "test function amplitude {} outside [0, {MAX_AMPLITUDE}]",
                self.amplitude
            )));
        }
        surface.smooth_noise(self.seed, self.band, T::lit(self.amplitude))
    }
}

/// `ψ` shifted so that `∫ e^ψ dA = A`.
pub fn normalize_exponential<T: Real, S: Surface<T> + ?Sized>(surface: &S, psi: &Field<T>) -> Result<Field<T>> {
    let l = log_integral_exp(psi, surface.quadrature())?;
    Ok(psi.shift(surface.area().ln() - l))
}

/// `(1/4π)∫ψe^ψ dA − (1/A)∫e^ψ Δ⁻¹e^ψ dA` for `ψ` with `∫e^ψ dA = A`.
pub fn log_hls_deficit<T: Real, S: Surface<T> + ?Sized>(surface: &S, psi: &Field<T>) -> Result<T> {
    let q = surface.quadrature();
    let area = surface.area();
    let e = psi.exp();
    let mass = integrate(&e, q)?;
    if (mass - area).abs().to_f64_lossy() > 1e-10 {
        return Err(Error::InvalidInput(format!(
            "log-HLS deficit needs ∫e^ψ dA = A (got {mass} against {area})"
        )));
    }
    let potential = surface.inverse_laplacian(&e)?;
    Ok(inner(psi, &e, q)? / T::lit(4.0 * PI) - inner(&e, &potential, q)? / area)
}

/// `(1/16π)∫ψΔψ dA − log((1/A)∫e^ψ dA) + (1/A)∫ψ dA`.
pub fn onofri_deficit<T: Real, S: Surface<T> + ?Sized>(surface: &S, psi: &Field<T>) -> Result<T> {
    let q = surface.quadrature();
    let area = surface.area();
    let dirichlet = inner(psi, &surface.laplacian(psi)?, q)?;
    let log_mean = log_integral_exp(psi, q)? - area.ln();
    Ok(dirichlet / T::lit(16.0 * PI) - log_mean + integrate(psi, q)? / area)
}

/// Both deficits for one test function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeficitSample {
    pub seed: u64,
    pub hls: f64,
    pub onofri: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeficitSummary {
    pub samples: usize,
    pub hls_min: f64,
    pub hls_mean: f64,
    pub onofri_min: f64,
    pub onofri_mean: f64,
    /// Deficits below `−10⁻⁸`, counted over both functionals.
    pub violations: usize,
}

impl DeficitSummary {
    pub fn from_samples(samples: &[DeficitSample]) -> Self {
        let n = samples.len().max(1) as f64;
        let min = |f: fn(&DeficitSample) -> f64| samples.iter().map(f).fold(f64::INFINITY, f64::min);
        let mean = |f: fn(&DeficitSample) -> f64| samples.iter().map(f).sum::<f64>() / n;
        let violations = samples
            .iter()
            .map(|s| {
                usize::from(s.hls < -VIOLATION_TOLERANCE) + usize::from(s.onofri < -VIOLATION_TOLERANCE)
            })
            .sum();
        Self {
            samples: samples.len(),
            hls_min: min(|s| s.hls),
            hls_mean: mean(|s| s.hls),
            onofri_min: min(|s| s.onofri),
            onofri_mean: mean(|s| s.onofri),
            violations,
        }
    }
}

/// Per-sample seeds drawn from the master seed; independent of scheduling.
pub fn derive_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..count).map(|_| rng.random()).collect()
}

/// Evaluates both deficits for `count` random test functions. Amplitudes
/// cycle through `(0, amplitude]` so both small and large `ψ` are probed.
pub fn sample_deficits<T: Real, S: Surface<T> + ?Sized>(
    surface: &S,
    master_seed: u64,
    count: usize,
    band: usize,
    amplitude: f64,
) -> Result<Vec<DeficitSample>> {
    derive_seeds(master_seed, count)
        .into_par_iter()
        .enumerate()
        .map(|(i, seed)| {
            let spec = TestFunctionSpec { seed, band, amplitude: amplitude * ((i % 5) + 1) as f64 / 5.0 };
            let psi = normalize_exponential(surface, &spec.sample(surface)?)?;
            Ok(DeficitSample {
                seed,
                hls: log_hls_deficit(surface, &psi)?.to_f64_lossy(),
                onofri: onofri_deficit(surface, &psi)?.to_f64_lossy(),
            })
        })
        .collect()
}
