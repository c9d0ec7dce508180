//! Discretized flat complex torus with an arbitrary Hermitian metric field:
//! spectral Dolbeault calculus, wedge algebra, contraction, Hodge star and
//! torsion operators.

pub mod forms;
pub mod grid;
pub mod metric;
pub mod real;
pub mod torsion;

pub use forms::{dolbeault_derivative, wedge, FormField, FormShape};
pub use grid::{build_torus_geometry, Dolbeault, GridGeometry};
pub use metric::{
    lambda_contract, make_test_metric, make_test_metric_with_mode, metric_condition_check,
    wedge_power_volume, MetricField, MetricKind,
};
pub use real::{
    hodge_star, l2_inner, l2_norm, lambda_general, pointwise_inner, pointwise_norm_sq, sup_norm,
};
pub use torsion::{torsion_adjoint_apply, OneForm};
