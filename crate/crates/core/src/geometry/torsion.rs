//! Torsion operators of a non-Kähler Hermitian metric: the adjoint of
//! τ = [Λ_ω, ∂ω] and its conjugate, realized through the Hodge star as
//!
//!   τ*F  = −*(∂̄ω^{n−2} ∧ F)/(n−2)! + *(∂̄ω^{n−1} ∧ Λ_ω F)/(n−1)!
//!   τ̄*F = −*(∂ω^{n−2} ∧ F)/(n−2)! + *(∂ω^{n−1} ∧ Λ_ω F)/(n−1)!
//!
//! At n ≤ 2 the ω^{n−2} terms are absent (the degenerate power is constant),
//! and for n = 1 everything vanishes: a metric on a curve is Kähler.

use num_complex::Complex;

use crate::error::Result;
use crate::geometry::forms::{dolbeault_derivative, wedge, FormField};
use crate::geometry::grid::{Dolbeault, GridGeometry};
use crate::geometry::metric::{lambda_contract, MetricField};
use crate::geometry::real::hodge_star;
use crate::scalar::Scalar;

/// A full 1-form split into its (1,0) and (0,1) parts.
#[derive(Clone, Debug)]
pub struct OneForm<T: Scalar> {
    pub pq10: FormField<T>,
    pub pq01: FormField<T>,
}

impl<T: Scalar> OneForm<T> {
    pub fn zeros(geom: &GridGeometry<T>, rank: usize) -> Self {
        OneForm {
            pq10: FormField::zeros_like_degree(geom, 1, 0, rank),
            pq01: FormField::zeros_like_degree(geom, 0, 1, rank),
        }
    }

    pub fn axpy(&mut self, c: Complex<T>, other: &Self) -> Result<()> {
        self.pq10.axpy(c, &other.pq10)?;
        self.pq01.axpy(c, &other.pq01)?;
        Ok(())
    }

    pub fn subbed(&self, other: &Self) -> Result<Self> {
        Ok(OneForm {
            pq10: self.pq10.subbed(&other.pq10)?,
            pq01: self.pq01.subbed(&other.pq01)?,
        })
    }

    pub fn max_abs(&self) -> T {
        let a = self.pq10.max_abs();
        let b = self.pq01.max_abs();
        if a > b {
            a
        } else {
            b
        }
    }
}

/// (τ* + τ̄*) applied to an endomorphism-valued (1,1) field. Identically
/// zero for any Kähler metric (dω = 0) and for all of complex dimension one.
pub fn torsion_adjoint_apply<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    f: &FormField<T>,
) -> Result<OneForm<T>> {
    let n = geom.complex_dim();
    let rank = f.rank();
    if n < 2 {
        return Ok(OneForm::zeros(geom, rank));
    }
    // n = 2: only the ω^{n−1} = ω terms survive.
    let omega = metric.omega();
    let lam_f = lambda_contract(metric, f)?;

    let dbar_omega = dolbeault_derivative(geom, &omega, Dolbeault::Antiholomorphic)?;
    let d_omega = dolbeault_derivative(geom, &omega, Dolbeault::Holomorphic)?;

    let tau_star = hodge_star(geom, metric, &wedge(&dbar_omega, &lam_f)?)?;
    let taubar_star = hodge_star(geom, metric, &wedge(&d_omega, &lam_f)?)?;

    debug_assert_eq!(tau_star.degree(), (0, 1));
    debug_assert_eq!(taubar_star.degree(), (1, 0));
    Ok(OneForm {
        pq10: taubar_star,
        pq01: tau_star,
    })
}
