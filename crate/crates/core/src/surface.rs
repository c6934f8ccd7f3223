//! The contract every discretized closed surface satisfies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::{DomainId, Field, Quadrature};
use crate::linalg::pcg;
use crate::scalar::Real;

/// A closed surface with a metric, discretized on a fixed node set.
///
/// The Laplacian follows the geometer's convention (positive semidefinite);
/// `inverse_laplacian` returns the mean-zero solution, so that
/// `Δ⁻¹f(p) = ∫ G(p,q) f(q) dA(q)` for the zero-mean Green's function.
pub trait Surface<T: Real>: Send + Sync {
    fn domain(&self) -> &DomainId;

    fn quadrature(&self) -> &Quadrature<T>;

    fn node_count(&self) -> usize {
        self.quadrature().len()
    }

    fn area(&self) -> T {
        self.quadrature().total_area()
    }

    /// `Δf`.
    fn laplacian(&self, f: &Field<T>) -> Result<Field<T>>;

    /// Mean-zero `u` with `Δu = f − f̄`.
    fn inverse_laplacian(&self, f: &Field<T>) -> Result<Field<T>>;

    /// Gaussian curvature of the metric at each node.
    fn curvature(&self) -> Result<Field<T>>;

    /// `V − E + F`, i.e. `2 − 2H` for genus `H`.
    fn euler_characteristic(&self) -> i64;

    /// Distance between two nodes, exact to leading order as they approach.
    fn node_distance(&self, p: usize, q: usize) -> T;

    /// Solves `(shift + scale·Δ) x = f` for `shift > 0`, `scale ≥ 0`.
    ///
    /// The default runs conjugate gradients on `laplacian`; discretizations
    /// with a diagonalizing transform override it.
    fn solve_shifted(&self, shift: T, scale: T, f: &Field<T>) -> Result<Field<T>> {
        check_shift(shift, scale)?;
        let q = self.quadrature();
        q.check(f)?;
        let domain = self.domain().clone();
        let apply = |v: &[T]| -> Vec<T> {
            let fv = Field::from_raw(domain.clone(), v.to_vec());
            let lv = self.laplacian(&fv).expect("same domain");
            v.iter().zip(lv.values()).map(|(&a, &b)| shift * a + scale * b).collect()
        };
        let (x, _) = pcg(
            apply,
            |r| r.iter().map(|&v| v / shift).collect(),
            |_| {},
            q.weights(),
            f.values(),
            None,
            shifted_tolerance::<T>(),
            20 * self.node_count() + 200,
        )?;
        Ok(Field::from_raw(self.domain().clone(), x))
    }

    /// Smooth pseudo-random field with sup-norm `amplitude`, reproducible
    /// from `seed`. `band` sets the spatial frequency scale.
    ///
    /// The default smooths white noise with three implicit heat steps.
    fn smooth_noise(&self, seed: u64, band: usize, amplitude: T) -> Result<Field<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.node_count();
        let noise: Vec<T> = (0..n).map(|_| T::lit(rng.sample(StandardNormal))).collect();
        let mut f = Field::from_raw(self.domain().clone(), noise);
        let band = T::from_usize_lossy(band.max(1));
        let step = T::one() / (T::lit(4.0) * T::PI() * T::PI() * band * band) * self.area();
        for _ in 0..3 {
            f = self.solve_shifted(T::one(), step, &f)?;
        }
        f = crate::field::mean_zero(&f, self.quadrature())?;
        let sup = f.sup_norm();
        if sup == T::zero() {
            return Ok(f);
        }
        Ok(f.scale(amplitude / sup))
    }

    /// Wraps node values as a field on this surface.
    fn field(&self, values: Vec<T>) -> Result<Field<T>> {
        if values.len() != self.node_count() {
            return Err(Error::LengthMismatch { expected: self.node_count(), found: values.len() });
        }
        Field::new(self.domain().clone(), values)
    }

    fn constant(&self, value: T) -> Field<T> {
        Field::constant(self.domain().clone(), self.node_count(), value)
    }
}

pub(crate) fn check_shift<T: Real>(shift: T, scale: T) -> Result<()> {
    if !(shift > T::zero()) || scale < T::zero() {
        return Err(Error::InvalidInput(format!(
            "shifted solve needs shift > 0 and scale ≥ 0 (got {shift}, {scale})"
        )));
    }
    Ok(())
}

pub(crate) fn shifted_tolerance<T: Real>() -> f64 {
    (T::eps().to_f64_lossy() * 100.0).max(1e-13)
}
