//! Scalar fields sampled on the nodes of a discretization, and the
//! quadrature rules that integrate them.
//!
//! A [`Field`] is an opaque flat array; node ordering is owned by the
//! discretization that produced it. Every field carries the [`DomainId`]
//! of that discretization so operations can refuse to mix domains.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Handle identifying the node set a field lives on.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainId(Arc<str>);

impl DomainId {
    pub fn new(id: impl AsRef<str>) -> Self {
        Self(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DomainId({})", self.0)
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Real scalar function sampled at the nodes of a discretization.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    values: Vec<T>,
    domain: DomainId,
}

impl<T: Real> Field<T> {
    /// Wraps node values. Rejects non-finite entries.
    pub fn new(domain: DomainId, values: Vec<T>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "field value at node {i} is not finite"
            )));
        }
        Ok(Self { values, domain })
    }

    /// Wraps values produced internally by a discretization; finiteness is
    /// only checked in debug builds.
    pub(crate) fn from_raw(domain: DomainId, values: Vec<T>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()), "non-finite field on {domain}");
        Self { values, domain }
    }

    pub fn constant(domain: DomainId, len: usize, value: T) -> Self {
        Self::from_raw(domain, vec![value; len])
    }

    pub fn zeros(domain: DomainId, len: usize) -> Self {
        Self::constant(domain, len, T::zero())
    }

    pub fn domain(&self) -> &DomainId {
        &self.domain
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, node: usize) -> T {
        self.values[node]
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// `max − min`.
    pub fn spread(&self) -> T {
        self.max() - self.min()
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.domain.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same domain.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::from_raw(
            self.domain.clone(),
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn shift(&self, c: T) -> Self {
        self.map(|v| v + c)
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: T, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn exp(&self) -> Self {
        self.map(T::exp)
    }

    /// Reorders nodes: `out[i] = self[perm[i]]`.
    pub fn permuted(&self, perm: &[usize], domain: DomainId) -> Self {
        Self::from_raw(domain, perm.iter().map(|&i| self.values[i]).collect())
    }

    pub(crate) fn check_same(&self, other: &Self) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch {
                expected: self.domain.to_string(),
                found: other.domain.to_string(),
            });
        }
        if self.values.len() != other.values.len() {
            return Err(Error::LengthMismatch {
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        Ok(())
    }

    /// Writes `# discretization=<id> nodes=<n>` followed by `index,value`
    /// rows, values with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# discretization={} nodes={}", self.domain, self.values.len())?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{i},{:.16e}", v.to_f64_lossy())?;
        }
        Ok(())
    }

    /// Parses the format produced by [`Field::write_csv`]. Extra `#` comment
    /// lines after the header are ignored.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut domain = None;
        let mut expected = None;
        let mut values = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if domain.is_none() {
                    for token in comment.split_whitespace() {
                        if let Some(id) = token.strip_prefix("discretization=") {
                            domain = Some(DomainId::new(id));
                        } else if let Some(n) = token.strip_prefix("nodes=") {
                            expected = Some(n.parse::<usize>().map_err(|e| Error::Parse {
                                line: lineno + 1,
                                message: e.to_string(),
                            })?);
                        }
                    }
                }
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: lineno + 1, message };
            let (idx, val) = line
                .split_once(',')
                .ok_or_else(|| parse_err("expected `index,value`".into()))?;
            let idx: usize = idx.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
            let val: f64 = val.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
            if idx != values.len() {
                return Err(parse_err(format!("index {idx} out of sequence")));
            }
            values.push(T::lit(val));
        }
        let domain = domain.ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing `# discretization=` header".into(),
        })?;
        if let Some(n) = expected {
            if n != values.len() {
                return Err(Error::LengthMismatch { expected: n, found: values.len() });
            }
        }
        Field::new(domain, values)
    }
}

/// Positive per-node weights with units of area.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature<T> {
    weights: Vec<T>,
    total_area: T,
    domain: DomainId,
}

impl<T: Real> Quadrature<T> {
    pub fn new(domain: DomainId, weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("quadrature without nodes".into()));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > T::zero())) {
            return Err(Error::InvalidInput(format!("quadrature weight {i} is not positive")));
        }
        let total_area = weights.iter().copied().sum();
        Ok(Self { weights, total_area, domain })
    }

    pub fn domain(&self) -> &DomainId {
        &self.domain
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn total_area(&self) -> T {
        self.total_area
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Quadrature with weights multiplied pointwise by `density`.
    pub fn reweighted(&self, density: &Field<T>) -> Result<Self> {
        self.check(density)?;
        Self::new(
            self.domain.clone(),
            self.weights.iter().zip(density.values()).map(|(&w, &d)| w * d).collect(),
        )
    }

    /// Same weights, relabelled onto another domain (used after node permutations).
    pub fn permuted(&self, perm: &[usize], domain: DomainId) -> Result<Self> {
        Self::new(domain, perm.iter().map(|&i| self.weights[i]).collect())
    }

    pub(crate) fn check(&self, f: &Field<T>) -> Result<()> {
        if f.domain() != &self.domain {
            return Err(Error::DomainMismatch {
                expected: self.domain.to_string(),
                found: f.domain().to_string(),
            });
        }
        if f.len() != self.weights.len() {
            return Err(Error::LengthMismatch { expected: self.weights.len(), found: f.len() });
        }
        Ok(())
    }
}

/// `Σ_i w_i f_i`.
pub fn integrate<T: Real>(f: &Field<T>, q: &Quadrature<T>) -> Result<T> {
    q.check(f)?;
    Ok(q.weights.iter().zip(f.values()).map(|(&w, &v)| w * v).sum())
}

/// `∫ f g dA`.
pub fn inner<T: Real>(f: &Field<T>, g: &Field<T>, q: &Quadrature<T>) -> Result<T> {
    q.check(f)?;
    q.check(g)?;
    Ok(q
        .weights
        .iter()
        .zip(f.values())
        .zip(g.values())
        .map(|((&w, &a), &b)| w * a * b)
        .sum())
}

/// `f − (1/A)∫ f dA`.
pub fn mean_zero<T: Real>(f: &Field<T>, q: &Quadrature<T>) -> Result<Field<T>> {
    let mean = integrate(f, q)? / q.total_area();
    Ok(f.shift(-mean))
}

/// `log ∫ e^f dA`, evaluated with the maximum of `f` factored out.
pub fn log_integral_exp<T: Real>(f: &Field<T>, q: &Quadrature<T>) -> Result<T> {
    q.check(f)?;
    let top = f.max();
    let s: T = q
        .weights
        .iter()
        .zip(f.values())
        .map(|(&w, &v)| w * (v - top).exp())
        .sum();
    Ok(top + s.ln())
}
