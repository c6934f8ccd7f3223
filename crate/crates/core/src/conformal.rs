//! Conformal change `g ↦ e^φ g`: the metric itself, and the transformation
//! laws for the Robin constant, the trace of `Δ⁻¹`, and the Δ-mass.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{inner, integrate, DomainId, Field, Quadrature};
use crate::linalg::pcg;
use crate::scalar::Real;
use crate::surface::{check_shift, shifted_tolerance, Surface};

/// The metric `e^φ g` on the nodes of a base discretization.
///
/// Shares the base node set (and [`DomainId`]); only the quadrature,
/// Laplacian and curvature change.
pub struct ConformalMetric<'a, T: Real, S: Surface<T> + ?Sized> {
    base: &'a S,
    phi: Field<T>,
    density: Field<T>,
    quadrature: Quadrature<T>,
}

impl<'a, T: Real, S: Surface<T> + ?Sized> ConformalMetric<'a, T, S> {
    pub fn new(base: &'a S, phi: Field<T>) -> Result<Self> {
        base.quadrature().check(&phi)?;
        if let Some(i) = phi.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("conformal factor is not finite at node {i}")));
        }
        let values: Vec<T> = phi.values().iter().map(|v| v.exp()).collect();
        let density = Field::new(phi.domain().clone(), values).map_err(|_| {
            Error::InvalidInput("conformal factor overflows the area element".into())
        })?;
        let quadrature = base.quadrature().reweighted(&density)?;
        let area = quadrature.total_area();
        if !(area.is_finite() && area > T::zero()) {
            return Err(Error::InvalidInput(format!("conformal area {area} is not positive and finite")));
        }
        Ok(Self { base, phi, density, quadrature })
    }

    pub fn base(&self) -> &'a S {
        self.base
    }

    pub fn phi(&self) -> &Field<T> {
        &self.phi
    }

    /// `e^φ` at every node.
    pub fn density(&self) -> &Field<T> {
        &self.density
    }

    /// `A_φ = ∫ e^φ dA_g`.
    pub fn area_phi(&self) -> T {
        self.quadrature.total_area()
    }

    /// `Δ_g⁻¹ e^φ`, the potential entering both conformal laws.
    pub fn base_potential(&self) -> Result<Field<T>> {
        self.base.inverse_laplacian(&self.density)
    }
}

impl<T: Real, S: Surface<T> + ?Sized> Surface<T> for ConformalMetric<'_, T, S> {
    fn domain(&self) -> &DomainId {
        self.base.domain()
    }

    fn quadrature(&self) -> &Quadrature<T> {
        &self.quadrature
    }

    /// `e^{−φ} Δ_g f`.
    fn laplacian(&self, f: &Field<T>) -> Result<Field<T>> {
        let lf = self.base.laplacian(f)?;
        lf.zip_map(&self.density, |a, d| a / d)
    }

    /// Solves `Δ_g v = e^φ (f − f̄_φ)` and removes the `e^φ`-weighted mean.
    fn inverse_laplacian(&self, f: &Field<T>) -> Result<Field<T>> {
        let area = self.area_phi();
        let mean = integrate(f, &self.quadrature)? / area;
        let rhs = f.zip_map(&self.density, |v, d| d * (v - mean))?;
        let v = self.base.inverse_laplacian(&rhs)?;
        let shift = integrate(&v, &self.quadrature)? / area;
        Ok(v.shift(-shift))
    }

    /// `K_{e^φ g} = e^{−φ}(K_g + ½ Δ_g φ)`.
    fn curvature(&self) -> Result<Field<T>> {
        conformal_curvature(self.base, &self.phi)
    }

    fn euler_characteristic(&self) -> i64 {
        self.base.euler_characteristic()
    }

    /// Base distance scaled by the conformal factor at the midpoint.
    fn node_distance(&self, p: usize, q: usize) -> T {
        let half = T::lit(0.25) * (self.phi.get(p) + self.phi.get(q));
        self.base.node_distance(p, q) * half.exp()
    }

    /// Conjugate gradients in the `e^φ` inner product, preconditioned by the
    /// base solve with the conformal factor replaced by its mean.
    fn solve_shifted(&self, shift: T, scale: T, f: &Field<T>) -> Result<Field<T>> {
        check_shift(shift, scale)?;
        self.quadrature.check(f)?;
        let domain = self.domain().clone();
        let mean_density = self.area_phi() / self.base.area();
        let wrap = |v: &[T]| Field::from_raw(domain.clone(), v.to_vec());
        let apply = |v: &[T]| -> Vec<T> {
            let lv = self.laplacian(&wrap(v)).expect("own domain");
            v.iter().zip(lv.values()).map(|(&a, &b)| shift * a + scale * b).collect()
        };
        let precondition = |r: &[T]| -> Vec<T> {
            let weighted = wrap(r).mul(&self.density).expect("own domain");
            self.base
                .solve_shifted(shift * mean_density, scale, &weighted)
                .map(Field::into_values)
                .unwrap_or_else(|_| r.iter().map(|&v| v / shift).collect())
        };
        let (x, _) = pcg(
            apply,
            precondition,
            |_| {},
            self.quadrature.weights(),
            f.values(),
            None,
            shifted_tolerance::<T>(),
            10 * self.node_count() + 200,
        )?;
        Ok(wrap(&x))
    }

    fn smooth_noise(&self, seed: u64, band: usize, amplitude: T) -> Result<Field<T>> {
        self.base.smooth_noise(seed, band, amplitude)
    }
}

/// Gaussian curvature of `e^φ g`: `e^{−φ}(K_g + ½ Δ_g φ)`.
pub fn conformal_curvature<T: Real, S: Surface<T> + ?Sized>(base: &S, phi: &Field<T>) -> Result<Field<T>> {
    let k = base.curvature()?;
    let lphi = base.laplacian(phi)?;
    let half = T::lit(0.5);
    let numer = k.zip_map(&lphi, |k, l| k + half * l)?;
    numer.zip_map(phi, |n, p| n * (-p).exp())
}

/// Robin constant of `e^φ g` from that of `g`:
/// `m_g + φ/4π − (2/A_φ) Δ_g⁻¹e^φ + (1/A_φ²) ∫ e^φ Δ_g⁻¹e^φ dA_g`.
pub fn robin_conformal<T: Real, S: Surface<T> + ?Sized>(
    m_g: &Field<T>,
    cm: &ConformalMetric<'_, T, S>,
) -> Result<Field<T>> {
    let q = cm.base.quadrature();
    q.check(m_g)?;
    let a = cm.area_phi();
    let pot = cm.base_potential()?;
    let energy = inner(&cm.density, &pot, q)?;
    let four_pi = T::lit(4.0 * PI);
    let two = T::lit(2.0);
    let shifted = m_g.zip_map(&cm.phi, |m, p| m + p / four_pi)?;
    let out = shifted.zip_map(&pot, |v, g| v - two * g / a)?;
    Ok(out.shift(energy / (a * a)))
}

/// Trace of `Δ⁻¹` for `e^φ g`:
/// `∫ m_g e^φ dA + (1/4π) ∫ φ e^φ dA − (1/A_φ) ∫ e^φ Δ_g⁻¹e^φ dA`.
pub fn trace_conformal<T: Real, S: Surface<T> + ?Sized>(
    m_g: &Field<T>,
    cm: &ConformalMetric<'_, T, S>,
) -> Result<T> {
    let q = cm.base.quadrature();
    let pot = cm.base_potential()?;
    let robin_part = inner(m_g, &cm.density, q)?;
    let entropy = inner(&cm.phi, &cm.density, q)?;
    let energy = inner(&cm.density, &pot, q)?;
    Ok(robin_part + entropy / T::lit(4.0 * PI) - energy / cm.area_phi())
}

/// Trace of `Δ⁻¹` for the round sphere of area `A`:
/// `A·(−1 − log π)/4π + A log A/4π`.
pub fn sphere_reference<T: Real>(area: T) -> Result<T> {
    check_area(area)?;
    let unit = T::lit((-1.0 - PI.ln()) / (4.0 * PI));
    Ok(area * unit + area * area.ln() / T::lit(4.0 * PI))
}

/// Δ-mass `(trace − trace_{S²,A}) / A`.
pub fn delta_mass<T: Real>(trace: T, area: T) -> Result<T> {
    Ok((trace - sphere_reference(area)?) / area)
}

fn check_area<T: Real>(area: T) -> Result<()> {
    if !(area.is_finite() && area > T::zero()) {
        return Err(Error::InvalidInput(format!("area must be positive and finite (got {area})")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::SphereGrid;
    use crate::torus::{TorusGrid, TorusModulus};

    const M_FLAT_I: f64 = -0.208_577_793_243_501_4;

    #[test]
    fn sphere_reference_scaling_law() {
        let unit = sphere_reference(1.0).unwrap();
        assert!((unit - (-1.0 - PI.ln()) / (4.0 * PI)).abs() < 1e-16);
        let radius_one = sphere_reference(4.0 * PI).unwrap();
        assert!((radius_one - (4f64.ln() - 1.0)).abs() < 1e-13);
        for (a, c) in [(0.3, 2.0), (1.0, 0.5), (2.5, 10.0)] {
            let lhs = sphere_reference(c * a).unwrap();
            let rhs = c * sphere_reference(a).unwrap() + c * a * f64::ln(c) / (4.0 * PI);
            assert!((lhs - rhs).abs() < 1e-13);
        }
        assert!(sphere_reference(0.0).is_err());
        assert!(delta_mass(1.0, -1.0).is_err());
    }

    #[test]
    fn flat_torus_mass_from_fixture() {
        let mass = delta_mass(M_FLAT_I, 1.0).unwrap();
        assert!((mass - (M_FLAT_I + (1.0 + PI.ln()) / (4.0 * PI))).abs() < 1e-16);
        assert!(mass < 0.0);
    }

    #[test]
    fn zero_and_constant_factors() {
        let g = TorusGrid::<f64>::square(TorusModulus::square(), 32).unwrap();
        let m = g.constant(M_FLAT_I);
        let cm = ConformalMetric::new(&g, g.constant(0.0)).unwrap();
        assert!(robin_conformal(&m, &cm).unwrap().sub(&m).unwrap().sup_norm() < 1e-15);
        assert!((trace_conformal(&m, &cm).unwrap() - M_FLAT_I).abs() < 1e-14);

        let c: f64 = 3.0;
        let cm = ConformalMetric::new(&g, g.constant(c.ln())).unwrap();
        let r = robin_conformal(&m, &cm).unwrap();
        assert!(r.shift(-(M_FLAT_I + c.ln() / (4.0 * PI))).sup_norm() < 1e-14);
        let t = trace_conformal(&m, &cm).unwrap();
        assert!((t - (c * M_FLAT_I + c * c.ln() / (4.0 * PI))).abs() < 1e-14);
    }

    #[test]
    fn robin_and_trace_laws_are_consistent() {
        let g = TorusGrid::<f64>::square(TorusModulus::new(0.1, 1.2).unwrap(), 32).unwrap();
        let m = g.constant(-0.2);
        let phi = g.smooth_noise(5, 3, 0.8).unwrap();
        let cm = ConformalMetric::new(&g, phi).unwrap();
        let r = robin_conformal(&m, &cm).unwrap();
        let via_field = integrate(&r, cm.quadrature()).unwrap();
        let t = trace_conformal(&m, &cm).unwrap();
        assert!((via_field - t).abs() < 1e-12);
    }

    #[test]
    fn conformal_inverse_is_mean_zero_right_inverse() {
        let s = SphereGrid::<f64>::with_order(16).unwrap();
        let phi = s.smooth_noise(2, 4, 0.7).unwrap();
        let cm = ConformalMetric::new(&s, phi).unwrap();
        let f = s.smooth_noise(9, 5, 1.0).unwrap().shift(0.4);
        let u = cm.inverse_laplacian(&f).unwrap();
        assert!(integrate(&u, cm.quadrature()).unwrap().abs() < 1e-13);
        // Δ_φ Δ_φ⁻¹ f = f − f̄_φ holds exactly on the band-limited part only,
        // so check the weak form against band-limited test functions
        let v = s.smooth_noise(4, 6, 1.0).unwrap();
        let lhs = inner(&cm.laplacian(&u).unwrap(), &v, cm.quadrature()).unwrap();
        let mean = integrate(&f, cm.quadrature()).unwrap() / cm.area_phi();
        let rhs = inner(&f.shift(-mean), &v, cm.quadrature()).unwrap();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn conformal_shifted_solve() {
        let g = TorusGrid::<f64>::square(TorusModulus::square(), 16).unwrap();
        let phi = g.smooth_noise(1, 2, 0.5).unwrap();
        let cm = ConformalMetric::new(&g, phi).unwrap();
        let f = g.smooth_noise(3, 3, 1.0).unwrap();
        let x = cm.solve_shifted(0.5, 0.1, &f).unwrap();
        let back = cm.laplacian(&x).unwrap().scale(0.1).add(&x.scale(0.5)).unwrap();
        assert!(back.sub(&f).unwrap().sup_norm() < 1e-9);
    }

    #[test]
    fn rejects_non_finite_factor() {
        let g = TorusGrid::<f64>::square(TorusModulus::square(), 8).unwrap();
        assert!(ConformalMetric::new(&g, g.constant(800.0)).is_err());
    }
}
