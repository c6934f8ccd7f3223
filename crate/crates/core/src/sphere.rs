//! Round unit-area sphere on a Gauss–Legendre × uniform-longitude grid.
//!
//! The sphere has radius `R = 1/√(4π)`, curvature `K = 4π`, and Laplace
//! eigenvalues `4π l(l+1)`. Operators act through a spherical-harmonic
//! transform truncated at degree `n_theta − 1`, the exact degree of the
//! colatitude rule.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::conformal::{robin_conformal, trace_conformal, ConformalMetric};
use crate::error::{Error, Result};
use crate::field::{DomainId, Field, Quadrature};
use crate::scalar::Real;
use crate::surface::{check_shift, Surface};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Gauss–Legendre nodes and weights on `[−1, 1]`, nodes descending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p, d)
}

/// Zero-mean Green's function of the unit-area round sphere at geodesic
/// angle `gamma` (radians) between the two points.
pub fn sphere_green_angle(gamma: f64) -> f64 {
    let s = (0.5 * gamma).sin();
    -((s * s).ln() + 1.0) / (4.0 * PI)
}

/// Robin constant of the unit-area round sphere, `(−1 − log π)/4π`.
///
/// Also evaluates the finite part of the closed-form kernel,
/// `G(d) + (1/2π) log d` as `d → 0`, and asserts the two agree.
pub fn sphere_robin() -> f64 {
    let value = (-1.0 - PI.ln()) / (4.0 * PI);
    let finite = sphere_kernel_finite_part();
    assert!((finite - value).abs() < 1e-10, "sphere kernel finite part {finite} vs {value}");
    value
}

/// `lim_{d→0} [G(d) + (1/2π) log d]` from the closed-form kernel, with one
/// Richardson step in `d²`.
pub fn sphere_kernel_finite_part() -> f64 {
    let radius = 1.0 / (4.0 * PI).sqrt();
    let part = |gamma: f64| sphere_green_angle(gamma) + (radius * gamma).ln() / (2.0 * PI);
    let gamma = 1e-3;
    (4.0 * part(0.5 * gamma) - part(gamma)) / 3.0
}

/// Robin constant from the spectrum alone: the heat-regularized diagonal
/// `Σ_{l≥1} (2l+1) e^{−λ_l t}/λ_l` minus its `log t` divergence, `t → 0`.
pub fn sphere_spectral_robin() -> f64 {
    let at = |t: f64| {
        let l_max = (60.0 / (4.0 * PI * t)).sqrt() as usize + 8;
        let sum: f64 = (1..=l_max)
            .map(|l| {
                let lam = 4.0 * PI * (l * (l + 1)) as f64;
                (2 * l + 1) as f64 * (-lam * t).exp() / lam
            })
            .sum();
        sum + ((4.0 * t).ln() - EULER_GAMMA) / (4.0 * PI) - 2.0 * t / 3.0
    };
    let t = 1e-5;
    (4.0 * at(0.5 * t) - at(t)) / 3.0
}

/// Round-sphere Robin constant at any area: constant-φ conformal change of
/// the unit-area value.
pub fn sphere_robin_at_area(area: f64) -> f64 {
    sphere_robin() + area.ln() / (4.0 * PI)
}

/// Pointwise residual of the mass identity on the conformal sphere
/// `g = e^φ·round`: `m_g − (1/2π) Δ_g⁻¹K_g − trace Δ_g⁻¹ / A_g`.
pub fn adm_identity_residual<T: Real>(sphere: &SphereGrid<T>, phi: &Field<T>) -> Result<Field<T>> {
    let m_round = sphere.constant(T::lit(sphere_robin()));
    let cm = ConformalMetric::new(sphere, phi.clone())?;
    let m_g = robin_conformal(&m_round, &cm)?;
    let potential = cm.inverse_laplacian(&cm.curvature()?)?;
    let trace = trace_conformal(&m_round, &cm)?;
    let offset = trace / cm.area_phi();
    let two_pi = T::lit(2.0 * PI);
    Ok(m_g.zip_map(&potential, |m, u| m - u / two_pi)?.shift(-offset))
}

struct Transform<T: Real> {
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    /// `legendre[m][(l − m)·n_theta + i] = P̄_l^m(x_i)`, normalized on `[−1,1]`.
    legendre: Vec<Vec<T>>,
}

/// Unit-area round sphere sampled at `n_theta` Gauss–Legendre colatitudes
/// and `n_phi` equispaced longitudes, node `i·n_phi + k`.
pub struct SphereGrid<T: Real> {
    n_theta: usize,
    n_phi: usize,
    cos_theta: Vec<f64>,
    gl_weights: Vec<T>,
    domain: DomainId,
    quadrature: Quadrature<T>,
    transform: Transform<T>,
}

impl<T: Real> SphereGrid<T> {
    /// Needs `n_theta ≥ 4` and `n_phi ≥ 2·n_theta` so longitude sampling
    /// resolves every retained order.
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 4 || n_phi < 2 * n_theta {
            return Err(Error::InvalidInput(format!(
                "sphere grid needs n_theta ≥ 4 and n_phi ≥ 2·n_theta (got {n_theta}×{n_phi})"
            )));
        }
        let (x, w) = gauss_legendre(n_theta);
        let domain = DomainId::new(format!("sphere:ntheta={n_theta}:nphi={n_phi}"));
        let dphi = 2.0 * PI / n_phi as f64;
        let weights: Vec<T> = (0..n_theta * n_phi)
            .map(|node| T::lit(w[node / n_phi] * dphi / (4.0 * PI)))
            .collect();
        let quadrature = Quadrature::new(domain.clone(), weights)?;

        let l_max = n_theta - 1;
        let legendre = (0..=l_max)
            .map(|m| {
                let mut table = vec![T::zero(); (l_max + 1 - m) * n_theta];
                for (i, &xi) in x.iter().enumerate() {
                    for (k, v) in normalized_legendre(m, l_max, xi).into_iter().enumerate() {
                        table[k * n_theta + i] = T::lit(v);
                    }
                }
                table
            })
            .collect();
        let mut planner = FftPlanner::new();
        let transform = Transform {
            fwd: planner.plan_fft_forward(n_phi),
            inv: planner.plan_fft_inverse(n_phi),
            legendre,
        };
        Ok(Self {
            n_theta,
            n_phi,
            cos_theta: x,
            gl_weights: w.into_iter().map(T::lit).collect(),
            domain,
            quadrature,
            transform,
        })
    }

    /// Square-ish default with `n_phi = 2·n_theta`.
    pub fn with_order(n_theta: usize) -> Result<Self> {
        Self::new(n_theta, 2 * n_theta)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_theta, self.n_phi)
    }

    /// Highest spherical-harmonic degree retained.
    pub fn max_degree(&self) -> usize {
        self.n_theta - 1
    }

    /// Colatitude and longitude of a node.
    pub fn angles(&self, node: usize) -> (f64, f64) {
        let (i, k) = (node / self.n_phi, node % self.n_phi);
        (self.cos_theta[i].acos(), 2.0 * PI * k as f64 / self.n_phi as f64)
    }

    /// Unit vector of a node.
    pub fn unit_vector(&self, node: usize) -> [f64; 3] {
        let (theta, phi) = self.angles(node);
        let s = theta.sin();
        [s * phi.cos(), s * phi.sin(), theta.cos()]
    }

    /// Geodesic angle between two nodes.
    pub fn angle_between(&self, p: usize, q: usize) -> f64 {
        let a = self.unit_vector(p);
        let b = self.unit_vector(q);
        let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        let s = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        let c = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        s.atan2(c)
    }

    /// Samples `f(θ, φ)` at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Field<T> {
        let values = (0..self.n_theta * self.n_phi)
            .map(|node| {
                let (t, p) = self.angles(node);
                T::lit(f(t, p))
            })
            .collect();
        Field::from_raw(self.domain.clone(), values)
    }

    /// `G(p, q)`; errors when `p == q`.
    pub fn green(&self, p: usize, q: usize) -> Result<f64> {
        if p == q {
            return Err(Error::Singular(format!("sphere Green's function at coincident node {p}")));
        }
        Ok(sphere_green_angle(self.angle_between(p, q)))
    }

    /// `G(p, ·)` with the value at `p` itself set to zero.
    pub fn green_column(&self, p: usize) -> Field<T> {
        let values = (0..self.node_count())
            .map(|q| if q == p { T::zero() } else { T::lit(sphere_green_angle(self.angle_between(p, q))) })
            .collect();
        Field::from_raw(self.domain.clone(), values)
    }

    /// Applies `symbol(λ_l)` to the degree-`l` component of `f`; components
    /// above [`SphereGrid::max_degree`] are dropped.
    pub fn apply_symbol(&self, f: &Field<T>, symbol: impl Fn(T) -> T) -> Result<Field<T>> {
        self.quadrature.check(f)?;
        let mut coeffs = self.analyze(f.values());
        for (m, row) in coeffs.iter_mut().enumerate() {
            for (k, c) in row.iter_mut().enumerate() {
                *c = *c * symbol(eigenvalue::<T>(m + k));
            }
        }
        Ok(Field::from_raw(self.domain.clone(), self.synthesize(&coeffs)))
    }

    /// `coeffs[m][l − m]`: Legendre-projected Fourier coefficients.
    fn analyze(&self, values: &[T]) -> Vec<Vec<Complex<T>>> {
        let (nt, np) = (self.n_theta, self.n_phi);
        let l_max = nt - 1;
        let mut rings = Vec::with_capacity(nt);
        for i in 0..nt {
            let mut buf: Vec<Complex<T>> =
                values[i * np..(i + 1) * np].iter().map(|&v| Complex::new(v, T::zero())).collect();
            self.transform.fwd.process(&mut buf);
            rings.push(buf);
        }
        (0..=l_max)
            .map(|m| {
                let table = &self.transform.legendre[m];
                (0..=l_max - m)
                    .map(|k| {
                        let mut acc = Complex::new(T::zero(), T::zero());
                        for i in 0..nt {
                            acc = acc + rings[i][m] * (self.gl_weights[i] * table[k * nt + i]);
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    fn synthesize(&self, coeffs: &[Vec<Complex<T>>]) -> Vec<T> {
        let (nt, np) = (self.n_theta, self.n_phi);
        let norm = T::one() / T::from_usize_lossy(np);
        let mut out = vec![T::zero(); nt * np];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); np];
        for i in 0..nt {
            buf.iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero()));
            for (m, row) in coeffs.iter().enumerate() {
                let table = &self.transform.legendre[m];
                let mut acc = Complex::new(T::zero(), T::zero());
                for (k, &c) in row.iter().enumerate() {
                    acc = acc + c * table[k * nt + i];
                }
                buf[m] = acc;
                if m > 0 {
                    buf[np - m] = acc.conj();
                }
            }
            self.transform.inv.process(&mut buf);
            for (k, c) in buf.iter().enumerate() {
                out[i * np + k] = c.re * norm;
            }
        }
        out
    }
}

fn eigenvalue<T: Real>(l: usize) -> T {
    T::lit(4.0 * PI * (l * (l + 1)) as f64)
}

/// `P̄_l^m(x)` for `l = m..=l_max`, normalized so `∫_{−1}^{1} P̄² dx = 1`.
fn normalized_legendre(m: usize, l_max: usize, x: f64) -> Vec<f64> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = (0.5f64).sqrt();
    for k in 1..=m {
        pmm *= ((2 * k + 1) as f64 / (2 * k) as f64).sqrt() * s;
    }
    let mut out = Vec::with_capacity(l_max + 1 - m);
    out.push(pmm);
    if m == l_max {
        return out;
    }
    let mut prev = pmm;
    let mut cur = ((2 * m + 3) as f64).sqrt() * x * pmm;
    out.push(cur);
    for l in m + 2..=l_max {
        let (lf, mf) = (l as f64, m as f64);
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
        let next = a * (x * cur - b * prev);
        prev = cur;
        cur = next;
        out.push(cur);
    }
    out
}

impl<T: Real> Surface<T> for SphereGrid<T> {
    fn domain(&self) -> &DomainId {
        &self.domain
    }

    fn quadrature(&self) -> &Quadrature<T> {
        &self.quadrature
    }

    fn laplacian(&self, f: &Field<T>) -> Result<Field<T>> {
        self.apply_symbol(f, |lam| lam)
    }

    fn inverse_laplacian(&self, f: &Field<T>) -> Result<Field<T>> {
        self.apply_symbol(f, |lam| if lam > T::zero() { T::one() / lam } else { T::zero() })
    }

    fn curvature(&self) -> Result<Field<T>> {
        Ok(self.constant(T::lit(4.0 * PI)))
    }

    fn euler_characteristic(&self) -> i64 {
        2
    }

    fn node_distance(&self, p: usize, q: usize) -> T {
        T::lit(self.angle_between(p, q) / (4.0 * PI).sqrt())
    }

    fn solve_shifted(&self, shift: T, scale: T, f: &Field<T>) -> Result<Field<T>> {
        check_shift(shift, scale)?;
        self.apply_symbol(f, |lam| T::one() / (shift + scale * lam))
    }

    /// Random spherical-harmonic combination of degree `1..=band`.
    fn smooth_noise(&self, seed: u64, band: usize, amplitude: T) -> Result<Field<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let band = band.clamp(1, self.max_degree());
        let l_max = self.max_degree();
        let coeffs: Vec<Vec<Complex<T>>> = (0..=l_max)
            .map(|m| {
                (m..=l_max)
                    .map(|l| {
                        if l == 0 || l > band {
                            return Complex::new(T::zero(), T::zero());
                        }
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = if m == 0 { 0.0 } else { rng.sample(StandardNormal) };
                        Complex::new(T::lit(re), T::lit(im))
                    })
                    .collect()
            })
            .collect();
        let raw = Field::from_raw(self.domain.clone(), self.synthesize(&coeffs));
        let sup = raw.sup_norm();
        Ok(if sup > T::zero() { raw.scale(amplitude / sup) } else { raw })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{inner, integrate};

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for k in 0..24 {
            let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k)).sum();
            let want = if k % 2 == 1 { 0.0 } else { 2.0 / (k + 1) as f64 };
            assert!((got - want).abs() < 1e-14, "x^{k}: {got}");
        }
    }

    #[test]
    fn weights_sum_to_unit_area() {
        let s = SphereGrid::<f64>::with_order(32).unwrap();
        assert!((s.area() - 1.0).abs() < 1e-12);
        assert!(SphereGrid::<f64>::new(16, 31).is_err());
    }

    #[test]
    fn harmonics_are_integrated_exactly() {
        let s = SphereGrid::<f64>::with_order(16).unwrap();
        // products of degree ≤ 15 harmonics: any random band-15 field
        let f = s.smooth_noise(3, 15, 1.0).unwrap();
        assert!(integrate(&f, s.quadrature()).unwrap().abs() < 1e-13);
        let z = s.sample(|t, _| t.cos().powi(14));
        assert!((integrate(&z, s.quadrature()).unwrap() - 1.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn low_harmonics_are_eigenfunctions() {
        let s = SphereGrid::<f64>::with_order(16).unwrap();
        let z = s.sample(|t, _| t.cos());
        let lz = s.laplacian(&z).unwrap();
        assert!(lz.sub(&z.scale(8.0 * PI)).unwrap().sup_norm() < 1e-11);
        let y = s.sample(|t, p| t.sin() * t.sin() * (2.0 * p).sin());
        let ly = s.laplacian(&y).unwrap();
        assert!(ly.sub(&y.scale(24.0 * PI)).unwrap().sup_norm() < 1e-10);
        assert!(s.laplacian(&s.constant(2.0)).unwrap().sup_norm() < 1e-11);
    }

    #[test]
    fn laplacian_is_symmetric_and_inverts() {
        let s = SphereGrid::<f64>::with_order(24).unwrap();
        let q = s.quadrature();
        let f = s.smooth_noise(1, 10, 1.0).unwrap();
        let g = s.smooth_noise(2, 10, 1.0).unwrap();
        let a = inner(&s.laplacian(&f).unwrap(), &g, q).unwrap();
        let b = inner(&f, &s.laplacian(&g).unwrap(), q).unwrap();
        assert!((a - b).abs() < 1e-11 * a.abs().max(1.0));
        let u = s.inverse_laplacian(&f.shift(3.0)).unwrap();
        assert!(s.laplacian(&u).unwrap().sub(&f).unwrap().sup_norm() < 1e-11);
    }

    #[test]
    fn robin_constant_matches_closed_form() {
        let m = sphere_robin();
        assert!((m + 0.170_672_181_464_924_2).abs() < 1e-15);
        assert!((sphere_spectral_robin() - m).abs() < 1e-10);
        // unit radius sphere, area 4π
        assert!((sphere_robin_at_area(4.0 * PI) - (4f64.ln() - 1.0) / (4.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn green_is_symmetric_and_rejects_diagonal() {
        let s = SphereGrid::<f64>::with_order(8).unwrap();
        assert!(s.green(5, 5).is_err());
        assert_eq!(s.green(3, 40).unwrap(), s.green(40, 3).unwrap());
    }

    #[test]
    fn mass_identity_vanishes() {
        let s = SphereGrid::<f64>::with_order(24).unwrap();
        assert!(adm_identity_residual(&s, &s.constant(0.0)).unwrap().sup_norm() < 1e-14);
        assert!(adm_identity_residual(&s, &s.constant(0.7)).unwrap().sup_norm() < 1e-13);
        let phi = s.smooth_noise(11, 4, 1.0).unwrap();
        assert!(adm_identity_residual(&s, &phi).unwrap().sup_norm() < 1e-10);
    }

    #[test]
    fn single_precision_transform() {
        let s = SphereGrid::<f32>::with_order(12).unwrap();
        let z = s.sample(|t, _| t.cos());
        let lz = s.laplacian(&z).unwrap();
        assert!(lz.sub(&z.scale(8.0 * std::f32::consts::PI)).unwrap().sup_norm() < 1e-3);
    }
}
