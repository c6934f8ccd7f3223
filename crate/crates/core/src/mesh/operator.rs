//! Cotangent Laplacian, Green's functions and Robin extraction on meshes.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;

use super::{dot, norm, cross, MeshInfo, TriMesh};
use crate::error::{Error, Result};
use crate::field::{inner, DomainId, Field, Quadrature};
use crate::linalg::{least_squares, pcg, remove_mean, remove_weighted_mean, CsrMatrix};
use crate::scalar::Real;
use crate::surface::{check_shift, Surface};

/// Relative residual for every mesh solve.
pub const MESH_SOLVER_TOLERANCE: f64 = 1e-10;
/// Green's function columns are solved tighter so that the pointwise
/// residual survives division by small vertex areas.
const GREEN_TOLERANCE: f64 = 1e-12;

/// Stiffness `L` (positive semidefinite) and lumped barycentric mass `M`;
/// the Laplacian is `M⁻¹L`.
#[derive(Clone, Debug)]
pub struct CotanOperator {
    stiffness: CsrMatrix<f64>,
    mass: Vec<f64>,
    diagonal: Vec<f64>,
}

impl CotanOperator {
    pub fn new(mesh: &TriMesh) -> Self {
        let n = mesh.vertex_count();
        let mut trip = Vec::with_capacity(12 * mesh.faces().len());
        let mut mass = vec![0.0; n];
        for (f, face) in mesh.faces().iter().enumerate() {
            let area = mesh.face_area(f);
            for k in 0..3 {
                let (o, a, b) = (face[k], face[(k + 1) % 3], face[(k + 2) % 3]);
                let u = mesh.displacement(o, a);
                let v = mesh.displacement(o, b);
                let w = 0.5 * dot(u, v) / norm(cross(u, v));
                trip.extend([(a, b, -w), (b, a, -w), (a, a, w), (b, b, w)]);
                mass[o] += area / 3.0;
            }
        }
        let stiffness = CsrMatrix::from_triplets(n, trip);
        let diagonal = stiffness.diagonal();
        Self { stiffness, mass, diagonal }
    }

    pub fn stiffness(&self) -> &CsrMatrix<f64> {
        &self.stiffness
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.mass
    }

    /// Solves `L x = b` for `b` summing to zero; `x` has zero plain mean.
    fn solve_singular(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        let ones = vec![1.0; b.len()];
        let (x, info) = pcg(
            |v| self.stiffness.matvec(v),
            |r| r.iter().zip(&self.diagonal).map(|(a, d)| a / d).collect(),
            remove_mean,
            &ones,
            b,
            None,
            tol,
            20 * b.len() + 500,
        )?;
        log::trace!("cotangent solve: {} iterations, residual {:.2e}", info.iterations, info.relative_residual);
        Ok(x)
    }
}

/// Robin constant at one vertex with its error bar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshRobin {
    pub vertex: usize,
    pub value: f64,
    /// Three standard errors of the fit, the spread between the full and
    /// the inner half of the window, and a discretization allowance
    /// `h² |log h|`.
    pub error_bar: f64,
    pub samples: usize,
    pub window: (f64, f64),
}

/// A validated, unit-area mesh viewed as a discretized surface.
#[derive(Clone, Debug)]
pub struct MeshSurface {
    mesh: TriMesh,
    operator: CotanOperator,
    domain: DomainId,
    quadrature: Quadrature<f64>,
    curvature: Vec<f64>,
    info: MeshInfo,
    original_area: f64,
}

impl MeshSurface {
    /// Validates the mesh and rescales it to unit area.
    pub fn new(mut mesh: TriMesh) -> Result<Self> {
        mesh.validate()?;
        let original_area = if (mesh.total_area() - 1.0).abs() > 1e-14 {
            mesh.normalize_area()
        } else {
            mesh.total_area()
        };
        let info = mesh.validate()?;
        let operator = CotanOperator::new(&mesh);
        let domain = DomainId::new(format!(
            "mesh:v={}:f={}:{:016x}",
            info.vertices,
            info.faces,
            content_hash(&mesh)
        ));
        let quadrature = Quadrature::new(domain.clone(), operator.mass.clone())?;
        let mut angle_sum = vec![0.0; mesh.vertex_count()];
        for (f, face) in mesh.faces().iter().enumerate() {
            for (k, angle) in mesh.corner_angles(f).into_iter().enumerate() {
                angle_sum[face[k]] += angle;
            }
        }
        let curvature = angle_sum
            .iter()
            .zip(&operator.mass)
            .map(|(s, m)| (2.0 * PI - s) / m)
            .collect();
        Ok(Self { mesh, operator, domain, quadrature, curvature, info, original_area })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn operator(&self) -> &CotanOperator {
        &self.operator
    }

    pub fn info(&self) -> &MeshInfo {
        &self.info
    }

    /// Area before rescaling.
    pub fn original_area(&self) -> f64 {
        self.original_area
    }

    /// Angle defect `2π − Σθ` at each vertex; sums to `2πχ`.
    pub fn angle_defects(&self) -> Vec<f64> {
        self.curvature.iter().zip(&self.operator.mass).map(|(k, m)| k * m).collect()
    }

    /// Mean length of the edges at vertex `p`.
    pub fn local_edge_length(&self, p: usize) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for (j, _) in self.operator.stiffness.row(p) {
            if j != p {
                total += self.mesh.chord(p, j);
                count += 1;
            }
        }
        total / count.max(1) as f64
    }

    /// Mean-zero `G(p, ·)` with `L G = e_p − M/A`.
    pub fn green_column(&self, p: usize) -> Result<Field<f64>> {
        let n = self.mesh.vertex_count();
        if p >= n {
            return Err(Error::InvalidInput(format!("vertex {p} out of range (mesh has {n})")));
        }
        let area = self.area();
        let mut b: Vec<f64> = self.operator.mass.iter().map(|m| -m / area).collect();
        b[p] += 1.0;
        let mut x = self.operator.solve_singular(&b, GREEN_TOLERANCE)?;
        remove_weighted_mean(&mut x, &self.operator.mass, area);
        Field::new(self.domain.clone(), x)
    }

    /// Largest `|ΔG(p,·)(q) + 1/A|` over `q ≠ p`.
    pub fn green_residual(&self, p: usize, column: &Field<f64>) -> Result<f64> {
        let lap = self.laplacian(column)?;
        let inv_area = 1.0 / self.area();
        Ok(lap
            .values()
            .iter()
            .enumerate()
            .filter(|&(q, _)| q != p)
            .map(|(_, v)| (v + inv_area).abs())
            .fold(0.0, f64::max))
    }

    /// Robin constant at `p`: least-squares fit of
    /// `G(p,q) + (1/2π) log d = m + a d + b d²` over chord distances `d`
    /// in `[max(2h, 0.05), max(8h, 0.2)]`, `h` the local edge length.
    pub fn robin_at(&self, p: usize) -> Result<MeshRobin> {
        let h = self.local_edge_length(p);
        let lo = (2.0 * h).max(0.05);
        let hi = (8.0 * h).max(0.2);
        if hi > 0.35 {
            return Err(Error::Accuracy {
                what: format!("mesh too coarse for Robin extraction at vertex {p} (edge length {h:.3e})"),
                first: h,
                second: hi,
                tolerance: 0.35,
            });
        }
        let column = self.green_column(p)?;
        let fit = |upper: f64| -> Result<(f64, f64, usize)> {
            let mut rows = Vec::new();
            let mut values = Vec::new();
            for (q, &g) in column.values().iter().enumerate() {
                let d = self.mesh.chord(p, q);
                if d >= lo && d <= upper {
                    let s = d / hi;
                    rows.push(vec![1.0, s, s * s]);
                    values.push(g + d.ln() / (2.0 * PI));
                }
            }
            if rows.len() < 12 {
                return Err(Error::Accuracy {
                    what: format!("only {} vertices in the Robin window at vertex {p}", rows.len()),
                    first: lo,
                    second: upper,
                    tolerance: 12.0,
                });
            }
            let ls = least_squares(&rows, &values)?;
            Ok((ls.coefficients[0], ls.standard_errors[0], rows.len()))
        };
        let (value, se, samples) = fit(hi)?;
        let (inner_value, _, _) = fit(0.5 * (lo + hi))?;
        Ok(MeshRobin {
            vertex: p,
            value,
            error_bar: 3.0 * se + (value - inner_value).abs() + h * h * h.ln().abs(),
            samples,
            window: (lo, hi),
        })
    }

    /// Robin constants at every vertex, in parallel.
    pub fn robin_field(&self) -> Result<Vec<MeshRobin>> {
        (0..self.mesh.vertex_count()).into_par_iter().map(|p| self.robin_at(p)).collect()
    }

    /// Robin constants at `count` vertices spread evenly through the index
    /// range (every vertex when `count ≥ V`).
    pub fn robin_sample(&self, count: usize) -> Result<Vec<MeshRobin>> {
        let n = self.mesh.vertex_count();
        if count >= n {
            return self.robin_field();
        }
        let count = count.max(1);
        (0..count).into_par_iter().map(|i| self.robin_at(i * n / count)).collect()
    }

    /// `∫ m dA` from sampled Robin constants: area times the mass-weighted
    /// mean. The error bar adds the standard error of the sample mean when
    /// not every vertex was visited.
    pub fn sampled_trace(&self, robins: &[MeshRobin]) -> (f64, f64) {
        let m = &self.operator.mass;
        let total: f64 = robins.iter().map(|r| m[r.vertex]).sum();
        let mean = robins.iter().map(|r| m[r.vertex] * r.value).sum::<f64>() / total;
        let bar = robins.iter().map(|r| m[r.vertex] * r.error_bar).sum::<f64>() / total;
        let k = robins.len();
        let sampling = if k < self.mesh.vertex_count() && k > 1 {
            let var = robins.iter().map(|r| (r.value - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        let area = self.area();
        (area * mean, area * (bar + sampling))
    }

    /// Smallest nonzero eigenvalue of `M⁻¹L` by inverse iteration.
    pub fn first_eigenvalue(&self, seed: u64) -> Result<f64> {
        let mut v = self.smooth_noise(seed, 2, 1.0)?;
        let mut lambda = f64::NAN;
        for _ in 0..300 {
            v = self.inverse_laplacian(&v)?;
            let norm2 = inner(&v, &v, &self.quadrature)?;
            v = v.scale(1.0 / norm2.sqrt());
            let lv = self.laplacian(&v)?;
            let next = inner(&v, &lv, &self.quadrature)?;
            if (next - lambda).abs() <= 1e-12 * next {
                return Ok(next);
            }
            lambda = next;
        }
        Ok(lambda)
    }
}

fn content_hash(mesh: &TriMesh) -> u64 {
    let mut h = DefaultHasher::new();
    for p in mesh.positions() {
        p.iter().for_each(|c| c.to_bits().hash(&mut h));
    }
    mesh.faces().hash(&mut h);
    if let Some(per) = mesh.periods() {
        per.iter().flatten().for_each(|c| c.to_bits().hash(&mut h));
    }
    h.finish()
}

impl Surface<f64> for MeshSurface {
    fn domain(&self) -> &DomainId {
        &self.domain
    }

    fn quadrature(&self) -> &Quadrature<f64> {
        &self.quadrature
    }

    fn laplacian(&self, f: &Field<f64>) -> Result<Field<f64>> {
        self.quadrature.check(f)?;
        let lf = self.operator.stiffness.matvec(f.values());
        let v = lf.iter().zip(&self.operator.mass).map(|(a, m)| a / m).collect();
        Ok(Field::from_raw(self.domain.clone(), v))
    }

    fn inverse_laplacian(&self, f: &Field<f64>) -> Result<Field<f64>> {
        self.quadrature.check(f)?;
        let area = self.area();
        let m = &self.operator.mass;
        let mean = m.iter().zip(f.values()).map(|(w, v)| w * v).sum::<f64>() / area;
        let b: Vec<f64> = m.iter().zip(f.values()).map(|(w, v)| w * (v - mean)).collect();
        let mut x = self.operator.solve_singular(&b, MESH_SOLVER_TOLERANCE)?;
        remove_weighted_mean(&mut x, m, area);
        Ok(Field::from_raw(self.domain.clone(), x))
    }

    fn curvature(&self) -> Result<Field<f64>> {
        Ok(Field::from_raw(self.domain.clone(), self.curvature.clone()))
    }

    fn euler_characteristic(&self) -> i64 {
        self.info.euler_characteristic
    }

    fn node_distance(&self, p: usize, q: usize) -> f64 {
        self.mesh.chord(p, q)
    }

    /// `(shift·M + scale·L) x = M f` by Jacobi-preconditioned CG.
    fn solve_shifted(&self, shift: f64, scale: f64, f: &Field<f64>) -> Result<Field<f64>> {
        check_shift(shift, scale)?;
        self.quadrature.check(f)?;
        let m = &self.operator.mass;
        let b: Vec<f64> = m.iter().zip(f.values()).map(|(w, v)| w * v).collect();
        let diag: Vec<f64> = m.iter().zip(&self.operator.diagonal).map(|(w, d)| shift * w + scale * d).collect();
        let ones = vec![1.0; b.len()];
        let (x, _) = pcg(
            |v| {
                let lv = self.operator.stiffness.matvec(v);
                v.iter().zip(&lv).zip(m).map(|((a, l), w)| shift * w * a + scale * l).collect()
            },
            |r| r.iter().zip(&diag).map(|(a, d)| a / d).collect(),
            |_| {},
            &ones,
            &b,
            None,
            MESH_SOLVER_TOLERANCE,
            20 * b.len() + 500,
        )?;
        Ok(Field::from_raw(self.domain.clone(), x))
    }
}

/// `Δm − ((2H − 2)/A + K/2π)` for a Robin field `m`; vanishes for the
/// exact Robin function of any smooth metric.
pub fn canonical_residual<T: Real, S: Surface<T> + ?Sized>(surface: &S, robin: &Field<T>) -> Result<Field<T>> {
    let lap = surface.laplacian(robin)?;
    let k = surface.curvature()?;
    let topological = T::lit(-(surface.euler_characteristic() as f64)) / surface.area();
    let two_pi = T::lit(2.0 * PI);
    lap.zip_map(&k, |l, k| l - (topological + k / two_pi))
}
