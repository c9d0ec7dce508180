//! Numerical laboratory for the Hermitian-Yang-Mills flow on holomorphic
//! vector bundles over discretized flat complex tori, including non-Kähler
//! (Gauduchon) base metrics.
//!
//! The crate is generic over the scalar type through [`scalar::Scalar`];
//! `f64` aliases are exported at the root and are what the CLI and the
//! quantitative test suite use.

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod parallel;
pub mod scalar;

pub mod bundle;
pub mod diagnostics;
pub mod flow;

pub use error::{CoreError, Result};
pub use parallel::set_parallel_width;
pub use scalar::{Cplx, Scalar};

/// Working precision of the CLI and the quantitative suite.
pub type Real = f64;
/// Complex value at working precision.
pub type C64 = num_complex::Complex<f64>;
pub type Geometry = geometry::GridGeometry<Real>;
pub type Metric = geometry::MetricField<Real>;
pub type Form = geometry::FormField<Real>;
pub type Bundle = bundle::BundleState<Real>;
pub type Connection = bundle::ConnectionState<Real>;
