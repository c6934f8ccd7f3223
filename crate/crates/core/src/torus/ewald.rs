//! Continuum Green's function of the flat unit-area torus by Ewald
//! splitting of the heat-kernel representation
//!
//! ```text
//! G(r) = ∫₀^∞ (H_t(r) − 1) dt,   H_t(r) = Σ_ℓ e^{−|r−ℓ|²/4t} / 4πt
//!      = (1/4π) Σ_ℓ E₁(|r−ℓ|²/4t₀) − t₀ + Σ_{k≠0} e^{−4π²|k|²t₀} cos(2πk·r) / 4π²|k|²
//! ```
//!
//! where ℓ runs over the lattice and k over the dual lattice (both unit
//! covolume). Expanding the ℓ = 0 image with `E₁(x) = −γ − log x + O(x)`
//! gives the Robin constant in closed form.

use std::f64::consts::PI;

use super::TorusModulus;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Terms with exponent beyond this are dropped (`e^{-46} ≈ 1e-20`).
const EXPONENT_CUTOFF: f64 = 46.0;

/// Exponential integral `E₁(x) = ∫ₓ^∞ e^{−s}/s ds` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 needs a positive argument");
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // modified Lentz evaluation of the continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Lattice sums for one modulus, ready to evaluate `G` and `m`.
#[derive(Clone, Debug)]
pub struct EwaldGreen {
    modulus: TorusModulus,
    t0: f64,
    basis: [[f64; 2]; 2],
    dual: [[f64; 2]; 2],
    /// `(k, e^{−4π²|k|²t₀}/4π²|k|²)` over the truncated dual lattice.
    reciprocal: Vec<([f64; 2], f64)>,
}

impl EwaldGreen {
    /// Splits at `t₀ = 1/4π`, which balances the two sums on a unit-area cell.
    pub fn new(modulus: TorusModulus) -> Self {
        Self::with_split(modulus, 1.0 / (4.0 * PI))
    }

    pub fn with_split(modulus: TorusModulus, t0: f64) -> Self {
        let basis = modulus.basis();
        let [a, b] = basis;
        let det = a[0] * b[1] - a[1] * b[0];
        let dual = [[b[1] / det, -b[0] / det], [-a[1] / det, a[0] / det]];
        let k_max = (EXPONENT_CUTOFF / (4.0 * PI * PI * t0)).sqrt();
        let reciprocal = lattice_points(dual, k_max)
            .into_iter()
            .filter(|k| k[0] != 0.0 || k[1] != 0.0)
            .filter_map(|k| {
                let k2 = k[0] * k[0] + k[1] * k[1];
                let e = 4.0 * PI * PI * k2 * t0;
                (e <= EXPONENT_CUTOFF).then(|| (k, (-e).exp() / (4.0 * PI * PI * k2)))
            })
            .collect();
        Self { modulus, t0, basis, dual, reciprocal }
    }

    pub fn modulus(&self) -> TorusModulus {
        self.modulus
    }

    /// Continuum zero-mean Green's function at physical displacement `r`
    /// (not a lattice point).
    pub fn green(&self, r: [f64; 2]) -> f64 {
        let r = self.reduce(r);
        let reach = (EXPONENT_CUTOFF * 4.0 * self.t0).sqrt() + r[0].hypot(r[1]);
        let mut real = 0.0;
        for l in lattice_points(self.basis, reach) {
            let d2 = (r[0] - l[0]).powi(2) + (r[1] - l[1]).powi(2);
            let x = d2 / (4.0 * self.t0);
            if x <= EXPONENT_CUTOFF {
                real += exp_integral_e1(x);
            }
        }
        let fourier: f64 = self
            .reciprocal
            .iter()
            .map(|(k, c)| c * (2.0 * PI * (k[0] * r[0] + k[1] * r[1])).cos())
            .sum();
        real / (4.0 * PI) - self.t0 + fourier
    }

    /// Green's function at a lattice-coordinate displacement.
    pub fn green_lattice(&self, dx: f64, dy: f64) -> f64 {
        self.green(self.modulus.to_physical(dx, dy))
    }

    /// Robin constant `m = lim_{r→0} [G(r) + (1/2π) log |r|]`.
    pub fn robin(&self) -> f64 {
        let t0 = self.t0;
        let reach = (EXPONENT_CUTOFF * 4.0 * t0).sqrt();
        let images: f64 = lattice_points(self.basis, reach)
            .into_iter()
            .filter(|l| l[0] != 0.0 || l[1] != 0.0)
            .map(|l| {
                let x = (l[0] * l[0] + l[1] * l[1]) / (4.0 * t0);
                if x <= EXPONENT_CUTOFF {
                    exp_integral_e1(x)
                } else {
                    0.0
                }
            })
            .sum();
        let fourier: f64 = self.reciprocal.iter().map(|(_, c)| c).sum();
        ((4.0 * t0).ln() - EULER_GAMMA) / (4.0 * PI) + images / (4.0 * PI) - t0 + fourier
    }

    /// Maps `r` into the fundamental cell centred at the origin.
    fn reduce(&self, r: [f64; 2]) -> [f64; 2] {
        let x = self.dual[0][0] * r[0] + self.dual[0][1] * r[1];
        let y = self.dual[1][0] * r[0] + self.dual[1][1] * r[1];
        let (x, y) = (x - x.round(), y - y.round());
        self.modulus.to_physical(x, y)
    }
}

/// All `m·a + n·b` with length at most `radius`.
fn lattice_points(basis: [[f64; 2]; 2], radius: f64) -> Vec<[f64; 2]> {
    let [a, b] = basis;
    let area = (a[0] * b[1] - a[1] * b[0]).abs();
    let m_max = (radius * b[0].hypot(b[1]) / area).ceil() as i64 + 1;
    let n_max = (radius * a[0].hypot(a[1]) / area).ceil() as i64 + 1;
    let mut out = Vec::new();
    for m in -m_max..=m_max {
        for n in -n_max..=n_max {
            let p = [m as f64 * a[0] + n as f64 * b[0], m as f64 * a[1] + n as f64 * b[1]];
            if p[0].hypot(p[1]) <= radius {
                out.push(p);
            }
        }
    }
    out
}
