//! Flat unit-area torus `ℂ/(ℤ + τℤ)` sampled on a periodic lattice grid.
//!
//! Nodes sit at lattice coordinates `(j/n1, k/n2) ∈ [0,1)²`, flattened as
//! `j·n2 + k`. In these coordinates the unit-area flat metric is the
//! constant tensor `((1, Re τ), (Re τ, |τ|²)) / Im τ`, and the Laplacian is
//! the Fourier multiplier `4π²|mτ − n|² / Im τ` on the mode `e^{2πi(mx+ny)}`.

mod ewald;
mod robin;

use std::sync::{Arc, OnceLock};

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DomainId, Field, Quadrature};
use crate::scalar::Real;
use crate::surface::{check_shift, Surface};

pub use ewald::{exp_integral_e1, EwaldGreen};
pub use robin::{flat_robin, grid_robin, grid_robin_at, GridRobin, RobinPair, FLAT_ROBIN_TOLERANCE};

/// Modulus `τ` of the lattice `ℤ + τℤ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusModulus {
    pub re_tau: f64,
    pub im_tau: f64,
}

impl TorusModulus {
    pub fn new(re_tau: f64, im_tau: f64) -> Result<Self> {
        if !(re_tau.is_finite() && im_tau.is_finite()) || im_tau <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "torus modulus needs Im τ > 0 (got {re_tau} + {im_tau}i)"
            )));
        }
        if !(0.05..=20.0).contains(&im_tau) {
            log::warn!("ill-conditioned thin torus: Im τ = {im_tau}");
        }
        Ok(Self { re_tau, im_tau })
    }

    /// The square torus `τ = i`.
    pub fn square() -> Self {
        Self { re_tau: 0.0, im_tau: 1.0 }
    }

    /// The hexagonal torus `τ = 1/2 + i√3/2`.
    pub fn hexagonal() -> Self {
        Self { re_tau: 0.5, im_tau: 3f64.sqrt() / 2.0 }
    }

    pub fn abs2(&self) -> f64 {
        self.re_tau * self.re_tau + self.im_tau * self.im_tau
    }

    /// `τ + 1`, the same lattice.
    pub fn translated(&self) -> Self {
        Self { re_tau: self.re_tau + 1.0, im_tau: self.im_tau }
    }

    /// `−1/τ`, the same lattice up to rotation and scale.
    pub fn inverted(&self) -> Self {
        let a = self.abs2();
        Self { re_tau: -self.re_tau / a, im_tau: self.im_tau / a }
    }

    /// Metric tensor of the unit-area flat metric in lattice coordinates.
    pub fn metric_tensor(&self) -> [[f64; 2]; 2] {
        let s = 1.0 / self.im_tau;
        [[s, self.re_tau * s], [self.re_tau * s, self.abs2() * s]]
    }

    /// Physical lattice basis `(ω₁, ω₂)` of the unit-area torus.
    pub fn basis(&self) -> [[f64; 2]; 2] {
        let s = 1.0 / self.im_tau.sqrt();
        [[s, 0.0], [s * self.re_tau, s * self.im_tau]]
    }

    /// Physical displacement for a lattice-coordinate displacement.
    pub fn to_physical(&self, x: f64, y: f64) -> [f64; 2] {
        let [a, b] = self.basis();
        [x * a[0] + y * b[0], x * a[1] + y * b[1]]
    }

    /// Laplace eigenvalue of the mode `e^{2πi(mx+ny)}`.
    pub fn eigenvalue(&self, m: f64, n: f64) -> f64 {
        let four_pi2 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
        four_pi2 * (self.abs2() * m * m - 2.0 * self.re_tau * m * n + n * n) / self.im_tau
    }

    /// Shortest metric length of a lattice-coordinate displacement, over
    /// all periodic images.
    pub fn periodic_distance(&self, dx: f64, dy: f64) -> f64 {
        let dx = dx - dx.round();
        let dy = dy - dy.round();
        let mut best = f64::INFINITY;
        for a in -1..=1 {
            for b in -1..=1 {
                let p = self.to_physical(dx + a as f64, dy + b as f64);
                best = best.min(p[0].hypot(p[1]));
            }
        }
        best
    }

    pub(crate) fn tag(&self) -> String {
        format!("re={}:im={}", self.re_tau, self.im_tau)
    }
}

struct Plans<T: Real> {
    fwd1: Arc<dyn Fft<T>>,
    inv1: Arc<dyn Fft<T>>,
    fwd2: Arc<dyn Fft<T>>,
    inv2: Arc<dyn Fft<T>>,
}

/// Periodic grid on the flat unit-area torus with a pseudo-spectral
/// Laplacian.
pub struct TorusGrid<T: Real> {
    modulus: TorusModulus,
    n1: usize,
    n2: usize,
    domain: DomainId,
    quadrature: Quadrature<T>,
    /// Laplace multiplier in transposed (`k·n1 + j`) order.
    eigen_t: Vec<T>,
    plans: Plans<T>,
    kernel: OnceLock<Vec<T>>,
}

impl<T: Real> TorusGrid<T> {
    pub fn new(modulus: TorusModulus, n1: usize, n2: usize) -> Result<Self> {
        for n in [n1, n2] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidInput(format!(
                    "torus grid sizes must be even and ≥ 8 (got {n1}×{n2})"
                )));
            }
        }
        let modulus = TorusModulus::new(modulus.re_tau, modulus.im_tau)?;
        let domain = DomainId::new(format!("torus:{}:n1={n1}:n2={n2}", modulus.tag()));
        let w = T::one() / T::from_usize_lossy(n1 * n2);
        let quadrature = Quadrature::new(domain.clone(), vec![w; n1 * n2])?;

        let mut eigen_t = vec![T::zero(); n1 * n2];
        for k in 0..n2 {
            let n = wavenumber(k, n2);
            for j in 0..n1 {
                let m = wavenumber(j, n1);
                // Nyquist modes alias their own conjugates; the symmetrized
                // multiplier drops the cross term there.
                let lam = if 2 * j == n1 || 2 * k == n2 {
                    0.5 * (modulus.eigenvalue(m, n) + modulus.eigenvalue(m, -n))
                } else {
                    modulus.eigenvalue(m, n)
                };
                eigen_t[k * n1 + j] = T::lit(lam);
            }
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            fwd1: planner.plan_fft_forward(n1),
            inv1: planner.plan_fft_inverse(n1),
            fwd2: planner.plan_fft_forward(n2),
            inv2: planner.plan_fft_inverse(n2),
        };
        Ok(Self { modulus, n1, n2, domain, quadrature, eigen_t, plans, kernel: OnceLock::new() })
    }

    /// Square `n × n` grid.
    pub fn square(modulus: TorusModulus, n: usize) -> Result<Self> {
        Self::new(modulus, n, n)
    }

    pub fn modulus(&self) -> TorusModulus {
        self.modulus
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn index(&self, j: usize, k: usize) -> usize {
        (j % self.n1) * self.n2 + (k % self.n2)
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node / self.n2, node % self.n2)
    }

    /// Lattice coordinates of a node in `[0,1)²`.
    pub fn lattice_point(&self, node: usize) -> (f64, f64) {
        let (j, k) = self.coords(node);
        (j as f64 / self.n1 as f64, k as f64 / self.n2 as f64)
    }

    /// Largest physical spacing between neighbouring nodes.
    pub fn spacing(&self) -> f64 {
        let [a, b] = self.modulus.basis();
        (a[0].hypot(a[1]) / self.n1 as f64).max(b[0].hypot(b[1]) / self.n2 as f64)
    }

    /// Samples `f(x, y)` at the lattice coordinates of every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Field<T> {
        let values = (0..self.n1 * self.n2)
            .map(|i| {
                let (x, y) = self.lattice_point(i);
                T::lit(f(x, y))
            })
            .collect();
        Field::from_raw(self.domain.clone(), values)
    }

    /// Discrete delta at `node`, normalized to unit integral.
    pub fn delta(&self, node: usize) -> Field<T> {
        let mut v = vec![T::zero(); self.n1 * self.n2];
        v[node] = T::from_usize_lossy(self.n1 * self.n2);
        Field::from_raw(self.domain.clone(), v)
    }

    /// Applies the Fourier multiplier `symbol(λ)` to `f`, where λ is the
    /// Laplace eigenvalue of each mode.
    pub fn apply_symbol(&self, f: &Field<T>, symbol: impl Fn(T) -> T) -> Result<Field<T>> {
        self.quadrature.check(f)?;
        let (n1, n2) = (self.n1, self.n2);
        let mut buf: Vec<Complex<T>> =
            f.values().iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.plans.fwd2.process(&mut buf);
        let mut tr = vec![Complex::zero(); n1 * n2];
        transpose(&buf, &mut tr, n1, n2);
        self.plans.fwd1.process(&mut tr);
        let norm = T::one() / T::from_usize_lossy(n1 * n2);
        for (c, &lam) in tr.iter_mut().zip(&self.eigen_t) {
            *c = *c * (symbol(lam) * norm);
        }
        self.plans.inv1.process(&mut tr);
        transpose(&tr, &mut buf, n2, n1);
        self.plans.inv2.process(&mut buf);
        Ok(Field::from_raw(self.domain.clone(), buf.into_iter().map(|c| c.re).collect()))
    }

    /// Mean-zero Green's function `G(p, ·)`; exactly symmetric in `(p, q)`.
    pub fn green_column(&self, p: usize) -> Field<T> {
        let kernel = self.kernel();
        let (pj, pk) = self.coords(p);
        let values = (0..self.n1 * self.n2)
            .map(|q| {
                let (qj, qk) = self.coords(q);
                let dj = (qj + self.n1 - pj) % self.n1;
                let dk = (qk + self.n2 - pk) % self.n2;
                kernel[dj * self.n2 + dk]
            })
            .collect();
        Field::from_raw(self.domain.clone(), values)
    }

    /// Green's function column by a direct spectral solve with a delta at
    /// `p` (no reuse of the translation-invariant kernel).
    pub fn green_column_direct(&self, p: usize) -> Field<T> {
        self.inverse_laplacian(&self.delta(p)).expect("own domain")
    }

    fn kernel(&self) -> &[T] {
        self.kernel.get_or_init(|| {
            let raw = self.green_column_direct(0);
            let raw = raw.values();
            let (n1, n2) = (self.n1, self.n2);
            let half = T::lit(0.5);
            (0..n1 * n2)
                .map(|i| {
                    let (j, k) = (i / n2, i % n2);
                    let mirror = ((n1 - j) % n1) * n2 + (n2 - k) % n2;
                    (raw[i] + raw[mirror]) * half
                })
                .collect()
        })
    }
}

fn wavenumber(i: usize, n: usize) -> f64 {
    if i < n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// `dst[c·rows + r] = src[r·cols + c]`.
fn transpose<C: Copy>(src: &[C], dst: &mut [C], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

impl<T: Real> Surface<T> for TorusGrid<T> {
    fn domain(&self) -> &DomainId {
        &self.domain
    }

    fn quadrature(&self) -> &Quadrature<T> {
        &self.quadrature
    }

    fn laplacian(&self, f: &Field<T>) -> Result<Field<T>> {
        // constants are in the kernel; centring first keeps transform
        // rounding proportional to the oscillation of f, not its size
        let mean = f.values().iter().copied().sum::<T>() / T::from_usize_lossy(f.len());
        self.apply_symbol(&f.shift(-mean), |lam| lam)
    }

    fn inverse_laplacian(&self, f: &Field<T>) -> Result<Field<T>> {
        self.apply_symbol(f, |lam| if lam > T::zero() { T::one() / lam } else { T::zero() })
    }

    fn curvature(&self) -> Result<Field<T>> {
        Ok(self.constant(T::zero()))
    }

    fn euler_characteristic(&self) -> i64 {
        0
    }

    fn node_distance(&self, p: usize, q: usize) -> T {
        let (px, py) = self.lattice_point(p);
        let (qx, qy) = self.lattice_point(q);
        T::lit(self.modulus.periodic_distance(qx - px, qy - py))
    }

    fn solve_shifted(&self, shift: T, scale: T, f: &Field<T>) -> Result<Field<T>> {
        check_shift(shift, scale)?;
        self.apply_symbol(f, |lam| T::one() / (shift + scale * lam))
    }

    /// Random trigonometric polynomial with modes `|m|, |n| ≤ band`.
    fn smooth_noise(&self, seed: u64, band: usize, amplitude: T) -> Result<Field<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let band = band.max(1) as i64;
        let mut terms = Vec::new();
        for m in -band..=band {
            for n in 0..=band {
                if n == 0 && m <= 0 {
                    continue;
                }
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                terms.push((m as f64, n as f64, a, b));
            }
        }
        let tau = std::f64::consts::TAU;
        let raw = self.sample(|x, y| {
            terms
                .iter()
                .map(|&(m, n, a, b)| {
                    let t = tau * (m * x + n * y);
                    a * t.cos() + b * t.sin()
                })
                .sum()
        });
        let sup = raw.sup_norm();
        Ok(if sup > T::zero() { raw.scale(amplitude / sup) } else { raw })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{inner, integrate, mean_zero};
    use std::f64::consts::PI;

    fn square(n: usize) -> TorusGrid<f64> {
        TorusGrid::square(TorusModulus::square(), n).unwrap()
    }

    #[test]
    fn rejects_bad_sizes_and_moduli() {
        assert!(TorusGrid::<f64>::new(TorusModulus::square(), 6, 8).is_err());
        assert!(TorusGrid::<f64>::new(TorusModulus::square(), 9, 8).is_err());
        assert!(TorusModulus::new(0.0, 0.0).is_err());
        assert!(TorusModulus::new(0.0, -1.0).is_err());
    }

    #[test]
    fn metric_tensor_has_unit_determinant() {
        for t in [TorusModulus::square(), TorusModulus::hexagonal(), TorusModulus::new(0.3, 2.7).unwrap()] {
            let g = t.metric_tensor();
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            assert!((det - 1.0).abs() < 1e-14);
            assert_eq!(g[0][1], g[1][0]);
        }
    }

    #[test]
    fn square_torus_eigenfunctions() {
        let g = square(32);
        let f = g.sample(|x, _| (2.0 * PI * x).cos());
        let lf = g.laplacian(&f).unwrap();
        let expect = f.scale(4.0 * PI * PI);
        assert!(lf.sub(&expect).unwrap().sup_norm() < 1e-10);

        let f = g.sample(|x, y| (2.0 * PI * x).cos() * (2.0 * PI * y).cos());
        let lf = g.laplacian(&f).unwrap();
        assert!(lf.sub(&f.scale(8.0 * PI * PI)).unwrap().sup_norm() < 1e-10);

        let one = g.constant(1.0);
        assert!(g.laplacian(&one).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn skew_multiplier_matches_metric() {
        // e^{2πi(mx+ny)} with Re part cos: check against −g^{ij}∂i∂j.
        let t = TorusModulus::new(0.3, 1.4).unwrap();
        let g = TorusGrid::<f64>::square(t, 32).unwrap();
        let f = g.sample(|x, y| (2.0 * PI * (2.0 * x - 3.0 * y)).cos());
        let lf = g.laplacian(&f).unwrap();
        assert!(lf.sub(&f.scale(t.eigenvalue(2.0, -3.0))).unwrap().sup_norm() < 1e-9);
    }

    #[test]
    fn poisson_solve_examples() {
        let g = square(64);
        let c = g.constant(3.0);
        assert!(g.inverse_laplacian(&c).unwrap().sup_norm() < 1e-14);
        let f = g.sample(|x, _| (2.0 * PI * x).cos());
        let u = g.inverse_laplacian(&f).unwrap();
        assert!(u.sub(&f.scale(1.0 / (4.0 * PI * PI))).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn poisson_round_trip_band_limited() {
        let g = TorusGrid::<f64>::square(TorusModulus::hexagonal(), 64).unwrap();
        let f = g.smooth_noise(7, 6, 2.0).unwrap().shift(0.7);
        let u = g.inverse_laplacian(&f).unwrap();
        assert!(integrate(&u, g.quadrature()).unwrap().abs() < 1e-14);
        let back = g.laplacian(&u).unwrap();
        let target = mean_zero(&f, g.quadrature()).unwrap();
        assert!(back.sub(&target).unwrap().sup_norm() < 1e-10);
    }

    #[test]
    fn laplacian_symmetric_and_positive() {
        let g = TorusGrid::<f64>::square(TorusModulus::new(0.2, 1.7).unwrap(), 32).unwrap();
        let f = g.smooth_noise(1, 5, 1.0).unwrap();
        let h = g.smooth_noise(2, 5, 1.0).unwrap();
        let q = g.quadrature();
        let a = inner(&g.laplacian(&f).unwrap(), &h, q).unwrap();
        let b = inner(&f, &g.laplacian(&h).unwrap(), q).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        assert!(inner(&g.laplacian(&f).unwrap(), &f, q).unwrap() > 0.0);
    }

    #[test]
    fn green_column_is_mean_zero_symmetric_and_homogeneous() {
        let g = square(32);
        let q = g.quadrature();
        let p = g.index(3, 5);
        let col = g.green_column(p);
        assert!(integrate(&col, q).unwrap().abs() < 1e-12);
        for other in [0, 17, 200, 1023] {
            assert_eq!(col.get(other), g.green_column(other).get(p));
        }
        // translation: G(p+s, q+s) = G(p, q)
        let shifted = g.green_column(g.index(3 + 4, 5 + 9));
        for q0 in [0usize, 11, 500] {
            let (j, k) = g.coords(q0);
            assert_eq!(col.get(q0), shifted.get(g.index(j + 4, k + 9)));
        }
    }

    #[test]
    fn green_column_satisfies_discrete_point_equation() {
        let g = square(64);
        let col = g.green_column(0);
        let lap = g.laplacian(&col).unwrap();
        for q in 1..g.node_count() {
            assert!((lap.get(q) + 1.0).abs() < 1e-9, "node {q}: {}", lap.get(q));
        }
    }

    #[test]
    fn periodic_distance_uses_shortest_image() {
        let t = TorusModulus::square();
        assert!((t.periodic_distance(0.9, 0.0) - 0.1).abs() < 1e-15);
        assert!((t.periodic_distance(0.5, 0.5) - 0.5f64.sqrt()).abs() < 1e-15);
        let h = TorusModulus::hexagonal();
        // (1,−1) is a short lattice vector of the hexagonal lattice
        let s = 1.0 / h.im_tau.sqrt();
        assert!((h.periodic_distance(0.0, 0.0) - 0.0).abs() < 1e-15);
        assert!((h.periodic_distance(0.5, 0.0) - 0.5 * s).abs() < 1e-14);
    }

    #[test]
    fn works_in_single_precision() {
        let g = TorusGrid::<f32>::square(TorusModulus::square(), 16).unwrap();
        let f = g.sample(|x, _| (2.0 * PI * x).sin());
        let u = g.inverse_laplacian(&f).unwrap();
        let back = g.laplacian(&u).unwrap();
        assert!(back.sub(&f).unwrap().sup_norm() < 1e-4);
    }
}
