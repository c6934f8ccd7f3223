//! Sparse matrices and Krylov solvers used by the mesh and conformal code.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).find(|&(c, _)| c == j).map_or(T::zero(), |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// Relabels rows and columns: new index `i` is old index `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut trip = Vec::with_capacity(self.nnz());
        for old_r in 0..self.n {
            for (old_c, v) in self.row(old_r) {
                trip.push((inverse[old_r], inverse[old_c], v));
            }
        }
        Self::from_triplets(self.n, trip)
    }
}

/// Outcome of a Krylov solve.
#[derive(Clone, Debug)]
pub struct SolveInfo {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for an operator that is symmetric with
/// respect to the weighted inner product `⟨a,b⟩ = Σ wᵢ aᵢ bᵢ`.
///
/// `project` is applied to every residual and search direction; pass the
/// identity for nonsingular systems or a projection onto the complement of
/// the kernel for singular ones.
#[allow(clippy::too_many_arguments)]
pub fn pcg<T: Real>(
    apply: impl Fn(&[T]) -> Vec<T>,
    precondition: impl Fn(&[T]) -> Vec<T>,
    project: impl Fn(&mut [T]),
    weights: &[T],
    rhs: &[T],
    x0: Option<Vec<T>>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<T>, SolveInfo)> {
    let n = rhs.len();
    let dot = |a: &[T], b: &[T]| -> T {
        weights.iter().zip(a).zip(b).map(|((&w, &x), &y)| w * x * y).sum()
    };
    let mut b = rhs.to_vec();
    project(&mut b);
    let bnorm = dot(&b, &b).sqrt().to_f64_lossy();
    let mut x = x0.unwrap_or_else(|| vec![T::zero(); n]);
    if bnorm == 0.0 {
        return Ok((vec![T::zero(); n], SolveInfo { iterations: 0, relative_residual: 0.0 }));
    }
    let ax = apply(&x);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    project(&mut r);
    let mut z = precondition(&r);
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = dot(&r, &r).sqrt().to_f64_lossy() / bnorm;
    let mut it = 0;
    while rel > tol && it < max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project(&mut r);
        rel = dot(&r, &r).sqrt().to_f64_lossy() / bnorm;
        it += 1;
        if rel <= tol {
            break;
        }
        z = precondition(&r);
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if rel > tol {
        return Err(Error::LinearSolver { iterations: it, residual: rel });
    }
    Ok((x, SolveInfo { iterations: it, relative_residual: rel }))
}

/// Removes the weighted mean: `x ← x − (Σ wᵢxᵢ / Σ wᵢ)`.
pub fn remove_weighted_mean<T: Real>(x: &mut [T], weights: &[T], total: T) {
    let mean = weights.iter().zip(x.iter()).map(|(&w, &v)| w * v).sum::<T>() / total;
    x.iter_mut().for_each(|v| *v -= mean);
}

/// Removes the plain average, the projection onto the complement of the
/// constants in the Euclidean inner product.
pub fn remove_mean<T: Real>(x: &mut [T]) {
    let mean = x.iter().copied().sum::<T>() / T::from_usize_lossy(x.len());
    x.iter_mut().for_each(|v| *v -= mean);
}

/// Least-squares fit `rows · c ≈ values` by Householder QR.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// Standard error of each coefficient from the residual variance.
    pub standard_errors: Vec<f64>,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

pub fn least_squares(rows: &[Vec<f64>], values: &[f64]) -> Result<LeastSquares> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if m < n || n == 0 {
        return Err(Error::InvalidInput(format!("least squares with {m} samples for {n} unknowns")));
    }
    // column-major copy of the design matrix
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut b = values.to_vec();
    let mut diag = vec![0.0; n];
    for j in 0..n {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Singular(format!("least squares column {j} is zero")));
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        diag[j] = alpha;
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(j) {
                let s = 2.0 * v.iter().zip(&col[j..]).map(|(x, y)| x * y).sum::<f64>() / vnorm2;
                col[j..].iter_mut().zip(&v).for_each(|(c, x)| *c -= s * x);
            }
            let s = 2.0 * v.iter().zip(&b[j..]).map(|(x, y)| x * y).sum::<f64>() / vnorm2;
            b[j..].iter_mut().zip(&v).for_each(|(c, x)| *c -= s * x);
        }
    }
    // back substitution with R (upper triangle of a, diagonal in `diag`)
    let r = |i: usize, j: usize| if i == j { diag[i] } else { a[j][i] };
    let mut c = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| r(i, j) * c[j]).sum();
        if r(i, i).abs() < 1e-14 * r(0, 0).abs() {
            return Err(Error::Singular("rank-deficient least squares".into()));
        }
        c[i] = (b[i] - s) / r(i, i);
    }
    let rss: f64 = rows
        .iter()
        .zip(values)
        .map(|(row, &y)| {
            let fit: f64 = row.iter().zip(&c).map(|(x, k)| x * k).sum();
            (y - fit).powi(2)
        })
        .sum();
    let dof = (m - n).max(1) as f64;
    let sigma2 = rss / dof;
    // diag((RᵀR)⁻¹) via R⁻¹ columns
    let mut se = vec![0.0; n];
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| r(i, j) * x[j]).sum();
            x[i] = (e[i] - s) / r(i, i);
        }
        for (i, xi) in x.iter().enumerate() {
            se[i] += xi * xi;
        }
    }
    let standard_errors = se.into_iter().map(|v| (v * sigma2).sqrt()).collect();
    Ok(LeastSquares { coefficients: c, standard_errors, rms_residual: (rss / m as f64).sqrt() })
}
