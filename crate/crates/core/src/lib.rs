//! Spectral invariants of closed surfaces: Robin constants, the trace of
//! the inverse Laplacian, the Δ-mass, and its minimization within a
//! conformal class through the mean field equation `Δu = 8πhe^u − 8π`.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below name the double-precision instances used by the CLI.

pub mod conformal;
pub mod error;
pub mod field;
pub mod inequalities;
pub mod linalg;
pub mod mean_field;
pub mod mesh;
pub mod report;
pub mod scalar;
pub mod sphere;
pub mod surface;
pub mod torus;

pub use conformal::{delta_mass, robin_conformal, sphere_reference, trace_conformal, ConformalMetric};
pub use error::{Error, Result};
pub use field::{integrate, mean_zero, DomainId, Field, Quadrature};
pub use mean_field::{
    bound_2_4_check, djlw_hypothesis, functional_j, gradient_j, minimize_mass, solve_mean_field, MeanFieldOptions,
    MeanFieldProblem, MeanFieldState, Start,
};
pub use mesh::{MeshSurface, TriMesh};
pub use report::{Flags, MassReport, Provenance};
pub use scalar::Real;
pub use sphere::SphereGrid;
pub use surface::Surface;
pub use torus::{TorusGrid, TorusModulus};

pub type Field64 = Field<f64>;
pub type Quadrature64 = Quadrature<f64>;
pub type SphereGrid64 = SphereGrid<f64>;
pub type TorusGrid64 = TorusGrid<f64>;
