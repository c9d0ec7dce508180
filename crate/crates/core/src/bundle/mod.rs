//! Holomorphic bundle structures over the torus: Hermitian bundle metrics,
//! Chern connections, curvature, degree and slope, the complex gauge action,
//! and the Demailly adjoint identity.
//!
//! Frames and fluxes. Everything lives in a fixed global frame. A block with
//! flux k per complex plane carries the constant-curvature background
//! connection of that flux; the background never appears as stored data —
//! only its (constant) curvature contribution does, and covariant operations
//! on admissible fields commute with it. Admissible means: endomorphism
//! entries between blocks of different flux vanish identically. This is
//! preserved by every flow here (block-diagonal data evolves blockwise), and
//! is what makes spectral differentiation legitimate: a nonzero-flux bundle
//! has no global periodic frame.

use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::geometry::forms::{dolbeault_derivative, wedge, FormField};
use crate::geometry::grid::{Dolbeault, GridGeometry};
use crate::geometry::metric::{lambda_contract, MetricField};
use crate::geometry::real::{hodge_star, l2_norm, lambda_general, integrate_top_form};
use crate::geometry::torsion::torsion_adjoint_apply;
use crate::geometry::wedge_power_volume;
use crate::linalg;
use crate::scalar::{cplx, imag_unit, real, Cplx, Scalar};

/// Holomorphic structure plus Hermitian bundle metric in the fixed frame.
#[derive(Clone)]
pub struct BundleState<T: Scalar> {
    rank: usize,
    /// flux per block, one integer per complex plane
    block_fluxes: Vec<Vec<i64>>,
    /// frame index -> block id
    block_of_index: Vec<usize>,
    /// ∂̄-operator perturbation: endomorphism-valued (0,1)-form
    a: FormField<T>,
    /// evolving bundle metric
    h: FormField<T>,
    /// fixed reference metric (the initial one)
    h0: FormField<T>,
}

/// Unitary connection for the fixed reference metric, evolving under the
/// heat flow. The (1,0)-part is determined by H₀-compatibility.
#[derive(Clone)]
pub struct ConnectionState<T: Scalar> {
    rank: usize,
    block_fluxes: Vec<Vec<i64>>,
    block_of_index: Vec<usize>,
    /// (0,1)-part perturbation
    alpha: FormField<T>,
    h0: FormField<T>,
    h0_inv: FormField<T>,
}

/// Test bundle menu. Direct sums take line-bundle entries.
#[derive(Debug, Clone)]
pub enum BundleKind {
    TrivialLine,
    ConformalLine { amplitude: f64, mode: Vec<i32> },
    FluxLine { flux: Vec<i64> },
    DirectSum(Vec<BundleKind>),
    /// Rank-2 non-split extension: upper-triangular ∂̄ with a constant
    /// (harmonic) class Σ class_k dz̄^k.
    Extension { class: Vec<(f64, f64)> },
}

const INTEGRABILITY_TOL: f64 = 1e-8;

/// Pointwise inverse of a Hermitian positive (0,0) endomorphism field.
pub fn invert_endo<T: Scalar>(h: &FormField<T>) -> Result<FormField<T>> {
    let rank = h.rank();
    let sites = h.sites();
    let mut out = h.clone();
    match rank {
        1 => {
            for site in 0..sites {
                let v = h.at(0, 0, 0, site);
                if v.norm_sqr() == T::zero() {
                    return Err(CoreError::NonPositive(format!(
                        "singular endomorphism at site {site}"
                    )));
                }
                *out.at_mut(0, 0, 0, site) = v.inv();
            }
        }
        2 => {
            for site in 0..sites {
                let a = h.at(0, 0, 0, site);
                let b = h.at(0, 0, 1, site);
                let c = h.at(0, 1, 0, site);
                let d = h.at(0, 1, 1, site);
                let det = a * d - b * c;
                if det.norm_sqr() == T::zero() {
                    return Err(CoreError::NonPositive(format!(
                        "singular endomorphism at site {site}"
                    )));
                }
                let inv = det.inv();
                *out.at_mut(0, 0, 0, site) = d * inv;
                *out.at_mut(0, 0, 1, site) = -b * inv;
                *out.at_mut(0, 1, 0, site) = -c * inv;
                *out.at_mut(0, 1, 1, site) = a * inv;
            }
        }
        _ => {
            let mut m = vec![Complex::new(T::zero(), T::zero()); rank * rank];
            for site in 0..sites {
                for i in 0..rank {
                    for j in 0..rank {
                        m[i * rank + j] = h.at(0, i, j, site);
                    }
                }
                let inv = linalg::mat_inverse(rank, &m)?;
                for i in 0..rank {
                    for j in 0..rank {
                        *out.at_mut(0, i, j, site) = inv[i * rank + j];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Leaner f11-only assembly: curvature of (a, θ) without the (2,0)/(0,2)
/// parts, for right-hand sides that contract with Λ immediately.
pub fn curvature_f11<T: Scalar>(
    geom: &GridGeometry<T>,
    a: &FormField<T>,
    theta: &FormField<T>,
    da_h: &FormField<T>,
    f_bg: &FormField<T>,
) -> Result<FormField<T>> {
    let dtheta_a = dolbeault_derivative(geom, theta, Dolbeault::Antiholomorphic)?;
    let mut f11 = da_h.added(&dtheta_a)?;
    f11.axpy(cplx::<T>(1.0, 0.0), &wedge(theta, a)?)?;
    f11.axpy(cplx::<T>(1.0, 0.0), &wedge(a, theta)?)?;
    f11.axpy(cplx::<T>(1.0, 0.0), f_bg)?;
    Ok(f11)
}

/// H-adjoint of an endomorphism-valued (p,q)-form:
/// (φ^{*H})_{K J̄} = (−1)^{pq} H⁻¹ (φ_{J K̄})† H, a (q,p)-form.
pub fn h_adjoint<T: Scalar>(
    phi: &FormField<T>,
    h: &FormField<T>,
    h_inv: &FormField<T>,
) -> FormField<T> {
    let (p, q) = phi.degree();
    let n = phi.shape().n;
    let rank = phi.rank();
    let sites = phi.sites();
    let mut out = FormField::zeros(n, q, p, rank, sites)
        .with_twist(phi.twist().iter().map(|t| -t).collect());
    let hol_len = phi.shape().hol.len();
    let anti_len = phi.shape().anti.len();
    let sign = if (p * q) % 2 == 1 { -T::one() } else { T::one() };
    let mut m = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut tmp = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut res = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut hs = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut hi = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    for site in 0..sites {
        for i in 0..rank {
            for j in 0..rank {
                hs[i * rank + j] = h.at(0, i, j, site);
                hi[i * rank + j] = h_inv.at(0, i, j, site);
            }
        }
        for hidx in 0..hol_len {
            for aidx in 0..anti_len {
                let comp_in = hidx * anti_len + aidx;
                // output component: hol = K (index aidx), anti = J (index hidx)
                let comp_out = aidx * hol_len + hidx;
                for i in 0..rank {
                    for j in 0..rank {
                        m[i * rank + j] = phi.at(comp_in, j, i, site).conj();
                    }
                }
                linalg::mat_mul(rank, &m, &hs, &mut tmp);
                linalg::mat_mul(rank, &hi, &tmp, &mut res);
                for i in 0..rank {
                    for j in 0..rank {
                        *out.at_mut(comp_out, i, j, site) = res[i * rank + j].scale(sign);
                    }
                }
            }
        }
    }
    out
}

/// Graded commutator [ν, φ] = ν∧φ − (−1)^{deg φ} φ∧ν for an odd 1-form ν.
pub fn graded_bracket<T: Scalar>(nu: &FormField<T>, phi: &FormField<T>) -> Result<FormField<T>> {
    let (p, q) = phi.degree();
    let left = wedge(nu, phi)?;
    let right = wedge(phi, nu)?;
    let s = if (p + q) % 2 == 0 { -T::one() } else { T::one() };
    let mut out = left;
    out.axpy(Complex::new(s, T::zero()), &right)?;
    Ok(out)
}

/// ∂̄_A φ = ∂̄φ + [a, φ] on endomorphism-valued forms.
pub fn dbar_cov_with<T: Scalar>(
    geom: &GridGeometry<T>,
    a01: &FormField<T>,
    phi: &FormField<T>,
) -> Result<FormField<T>> {
    let mut out = dolbeault_derivative(geom, phi, Dolbeault::Antiholomorphic)?;
    out.axpy(cplx::<T>(1.0, 0.0), &graded_bracket(a01, phi)?)?;
    Ok(out)
}

/// ∂_A φ = ∂φ + [θ, φ] on endomorphism-valued forms.
pub fn d_cov_with<T: Scalar>(
    geom: &GridGeometry<T>,
    theta: &FormField<T>,
    phi: &FormField<T>,
) -> Result<FormField<T>> {
    let mut out = dolbeault_derivative(geom, phi, Dolbeault::Holomorphic)?;
    out.axpy(cplx::<T>(1.0, 0.0), &graded_bracket(theta, phi)?)?;
    Ok(out)
}

impl<T: Scalar> BundleState<T> {
    /// Reassemble a state from raw parts (checkpoint restore); validates the
    /// structural invariants.
    pub fn from_parts(
        geom: &GridGeometry<T>,
        block_fluxes: Vec<Vec<i64>>,
        block_of_index: Vec<usize>,
        a: FormField<T>,
        h: FormField<T>,
        h0: FormField<T>,
    ) -> Result<Self> {
        let rank = block_of_index.len();
        if a.rank() != rank || h.rank() != rank || h0.rank() != rank {
            return Err(CoreError::ShapeMismatch(
                "field ranks disagree with the frame".into(),
            ));
        }
        let state = BundleState {
            rank,
            block_fluxes,
            block_of_index,
            a,
            h,
            h0,
        };
        let (me, site) = state.min_metric_eigenvalue();
        if me <= T::zero() {
            return Err(CoreError::PositivityLost {
                t: 0.0,
                site,
                min_eig: me.to_f64().unwrap_or(f64::NAN),
            });
        }
        let _ = state.integrability_residual(geom)?;
        Ok(state)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn a(&self) -> &FormField<T> {
        &self.a
    }

    pub fn h(&self) -> &FormField<T> {
        &self.h
    }

    pub fn h0(&self) -> &FormField<T> {
        &self.h0
    }

    pub fn block_fluxes(&self) -> &[Vec<i64>] {
        &self.block_fluxes
    }

    pub fn block_of_index(&self) -> &[usize] {
        &self.block_of_index
    }

    /// All fluxes flattened per frame index.
    pub fn frame_flux(&self, idx: usize) -> &[i64] {
        &self.block_fluxes[self.block_of_index[idx]]
    }

    /// Replace the evolving metric (flows produce new states).
    pub fn with_metric(&self, h: FormField<T>) -> Self {
        let mut s = self.clone();
        s.h = h;
        s
    }

    /// Total first-Chern flux per complex plane (trace over the frame).
    pub fn total_flux(&self) -> Vec<i64> {
        let n = self.block_fluxes[0].len();
        let mut tot = vec![0i64; n];
        for idx in 0..self.rank {
            for (j, t) in tot.iter_mut().enumerate() {
                *t += self.frame_flux(idx)[j];
            }
        }
        tot
    }

    /// Constant background curvature of the flux blocks:
    /// F_bg = diag_α Σ_j π k_{α,j} / (L_{2j} L_{2j+1}) dz^j ∧ dz̄^j.
    pub fn background_curvature(&self, geom: &GridGeometry<T>) -> FormField<T> {
        background_curvature(
            geom,
            self.rank,
            &self.block_fluxes,
            &self.block_of_index,
        )
    }

    /// ‖∂̄a + a∧a‖ / (1 + ‖a‖²) in lattice-L² of the coefficients.
    pub fn integrability_residual(&self, geom: &GridGeometry<T>) -> Result<T> {
        integrability_residual(geom, &self.a)
    }

    /// Initial unitary connection A₀ = (∂̄_E, H₀) for the heat flow.
    pub fn connection(&self) -> Result<ConnectionState<T>> {
        let h0_inv = invert_endo(&self.h0)?;
        Ok(ConnectionState {
            rank: self.rank,
            block_fluxes: self.block_fluxes.clone(),
            block_of_index: self.block_of_index.clone(),
            alpha: self.a.clone(),
            h0: self.h0.clone(),
            h0_inv,
        })
    }

    /// Minimum eigenvalue of H over all sites.
    pub fn min_metric_eigenvalue(&self) -> (T, usize) {
        min_eig_field(&self.h)
    }
}

fn min_eig_field<T: Scalar>(h: &FormField<T>) -> (T, usize) {
    let rank = h.rank();
    let mut m = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut worst = T::infinity();
    let mut at = 0usize;
    for site in 0..h.sites() {
        for i in 0..rank {
            for j in 0..rank {
                m[i * rank + j] = h.at(0, i, j, site);
            }
        }
        let e = linalg::min_eig_hermitian(rank, &m);
        if e < worst {
            worst = e;
            at = site;
        }
    }
    (worst, at)
}

fn integrability_residual<T: Scalar>(geom: &GridGeometry<T>, a: &FormField<T>) -> Result<T> {
    let da = dolbeault_derivative(geom, a, Dolbeault::Antiholomorphic)?;
    let aa = wedge(a, a)?;
    let f02 = da.added(&aa)?;
    let cell = geom.cell_volume().sqrt();
    let num = f02.coeff_l2() * cell;
    let an = a.coeff_l2() * cell;
    Ok(num / (T::one() + an * an))
}

pub fn background_curvature<T: Scalar>(
    geom: &GridGeometry<T>,
    rank: usize,
    block_fluxes: &[Vec<i64>],
    block_of_index: &[usize],
) -> FormField<T> {
    let n = geom.complex_dim();
    let mut f = FormField::zeros(n, 1, 1, rank, geom.site_count());
    for idx in 0..rank {
        let flux = &block_fluxes[block_of_index[idx]];
        for j in 0..n {
            if flux[j] == 0 {
                continue;
            }
            let area = geom.periods()[2 * j] * geom.periods()[2 * j + 1];
            let c = real::<T>(std::f64::consts::PI * flux[j] as f64) / area;
            let comp = j * n + j;
            for v in f.lane_mut(comp, idx, idx) {
                *v = Complex::new(c, T::zero());
            }
        }
    }
    f
}

/// Zero all endomorphism entries between blocks of different flux; errors if
/// those entries were not already negligible.
pub fn enforce_flux_sparsity<T: Scalar>(
    field: &mut FormField<T>,
    block_fluxes: &[Vec<i64>],
    block_of_index: &[usize],
) -> Result<()> {
    let rank = field.rank();
    let scale = field.max_abs() + T::one();
    for i in 0..rank {
        for j in 0..rank {
            if block_fluxes[block_of_index[i]] == block_fluxes[block_of_index[j]] {
                continue;
            }
            for c in 0..field.comp_count() {
                for v in field.lane_mut(c, i, j) {
                    if v.norm() > real::<T>(1e-10) * scale {
                        return Err(CoreError::TwistObstruction(format!(
                            "entry ({i},{j}) couples blocks of different flux"
                        )));
                    }
                    *v = Complex::new(T::zero(), T::zero());
                }
            }
        }
    }
    Ok(())
}

/// Chern (1,0) connection form θ = H⁻¹∂H − a^{*H} in the frame.
pub fn chern_theta<T: Scalar>(
    geom: &GridGeometry<T>,
    a: &FormField<T>,
    h: &FormField<T>,
    h_inv: &FormField<T>,
) -> Result<FormField<T>> {
    let dh = dolbeault_derivative(geom, h, Dolbeault::Holomorphic)?;
    let mut theta = wedge(h_inv, &dh)?;
    let a_star = h_adjoint(a, h, h_inv);
    theta.axpy(cplx::<T>(-1.0, 0.0), &a_star)?;
    Ok(theta)
}

/// Curvature pieces of the connection with (0,1)-part `a` and (1,0)-part
/// `theta`, plus the constant background.
pub struct Curvature<T: Scalar> {
    pub f11: FormField<T>,
    pub f20: FormField<T>,
    pub f02: FormField<T>,
    pub theta: FormField<T>,
}

pub fn curvature_parts<T: Scalar>(
    geom: &GridGeometry<T>,
    a: &FormField<T>,
    theta: &FormField<T>,
    f_bg: &FormField<T>,
) -> Result<Curvature<T>> {
    let da_h = dolbeault_derivative(geom, a, Dolbeault::Holomorphic)?;
    let dtheta_a = dolbeault_derivative(geom, theta, Dolbeault::Antiholomorphic)?;
    let mut f11 = da_h.added(&dtheta_a)?;
    f11.axpy(cplx::<T>(1.0, 0.0), &wedge(theta, a)?)?;
    f11.axpy(cplx::<T>(1.0, 0.0), &wedge(a, theta)?)?;
    f11.axpy(cplx::<T>(1.0, 0.0), f_bg)?;

    let dtheta_h = dolbeault_derivative(geom, theta, Dolbeault::Holomorphic)?;
    let mut f20 = dtheta_h;
    f20.axpy(cplx::<T>(1.0, 0.0), &wedge(theta, theta)?)?;

    let da_a = dolbeault_derivative(geom, a, Dolbeault::Antiholomorphic)?;
    let mut f02 = da_a;
    f02.axpy(cplx::<T>(1.0, 0.0), &wedge(a, a)?)?;

    Ok(Curvature {
        f11,
        f20,
        f02,
        theta: theta.clone(),
    })
}

/// Chern connection of a bundle state: the unique H-compatible connection
/// with (0,1)-part ∂̄_E. Compatibility is a tested property, not an
/// assumption (`compatibility_residual`).
pub fn chern_connection<T: Scalar>(
    geom: &GridGeometry<T>,
    bundle: &BundleState<T>,
) -> Result<FormField<T>> {
    let h_inv = invert_endo(&bundle.h)?;
    chern_theta(geom, &bundle.a, &bundle.h, &h_inv)
}

/// Full Chern curvature of (∂̄_E, H) including the flux background.
pub fn curvature<T: Scalar>(
    geom: &GridGeometry<T>,
    bundle: &BundleState<T>,
) -> Result<Curvature<T>> {
    let h_inv = invert_endo(&bundle.h)?;
    let theta = chern_theta(geom, &bundle.a, &bundle.h, &h_inv)?;
    let f_bg = bundle.background_curvature(geom);
    curvature_parts(geom, &bundle.a, &theta, &f_bg)
}

impl<T: Scalar> ConnectionState<T> {
    /// Reassemble a connection from raw parts (checkpoint restore).
    pub fn from_parts(
        geom: &GridGeometry<T>,
        block_fluxes: Vec<Vec<i64>>,
        block_of_index: Vec<usize>,
        alpha: FormField<T>,
        h0: FormField<T>,
    ) -> Result<Self> {
        let rank = block_of_index.len();
        if alpha.rank() != rank || h0.rank() != rank {
            return Err(CoreError::ShapeMismatch(
                "field ranks disagree with the frame".into(),
            ));
        }
        let h0_inv = invert_endo(&h0)?;
        let state = ConnectionState {
            rank,
            block_fluxes,
            block_of_index,
            alpha,
            h0,
            h0_inv,
        };
        let _ = state.integrability_residual(geom)?;
        Ok(state)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn alpha(&self) -> &FormField<T> {
        &self.alpha
    }

    pub fn h0(&self) -> &FormField<T> {
        &self.h0
    }

    pub fn h0_inv(&self) -> &FormField<T> {
        &self.h0_inv
    }

    pub fn block_fluxes(&self) -> &[Vec<i64>] {
        &self.block_fluxes
    }

    pub fn block_of_index(&self) -> &[usize] {
        &self.block_of_index
    }

    pub fn with_alpha(&self, alpha: FormField<T>) -> Self {
        let mut s = self.clone();
        s.alpha = alpha;
        s
    }

    /// H₀-compatible (1,0)-part.
    pub fn theta(&self, geom: &GridGeometry<T>) -> Result<FormField<T>> {
        chern_theta(geom, &self.alpha, &self.h0, &self.h0_inv)
    }

    pub fn background_curvature(&self, geom: &GridGeometry<T>) -> FormField<T> {
        background_curvature(
            geom,
            self.rank,
            &self.block_fluxes,
            &self.block_of_index,
        )
    }

    pub fn curvature(&self, geom: &GridGeometry<T>) -> Result<Curvature<T>> {
        let theta = self.theta(geom)?;
        let f_bg = self.background_curvature(geom);
        curvature_parts(geom, &self.alpha, &theta, &f_bg)
    }

    pub fn integrability_residual(&self, geom: &GridGeometry<T>) -> Result<T> {
        integrability_residual(geom, &self.alpha)
    }

    /// Covariant ∂̄_A on an endomorphism-valued form.
    pub fn dbar_cov(&self, geom: &GridGeometry<T>, phi: &FormField<T>) -> Result<FormField<T>> {
        dbar_cov_with(geom, &self.alpha, phi)
    }

    /// Covariant ∂_A on an endomorphism-valued form.
    pub fn d_cov(&self, geom: &GridGeometry<T>, phi: &FormField<T>) -> Result<FormField<T>> {
        let theta = self.theta(geom)?;
        d_cov_with(geom, &theta, phi)
    }
}

/// Complex gauge action on a unitary connection:
/// ∂̄ ↦ σ∂̄_Aσ⁻¹ gives α' = σασ⁻¹ − (∂̄σ)σ⁻¹; the (1,0)-part stays
/// H₀-compatible automatically.
pub fn gauge_act<T: Scalar>(
    geom: &GridGeometry<T>,
    sigma: &FormField<T>,
    conn: &ConnectionState<T>,
) -> Result<ConnectionState<T>> {
    let rank = conn.rank;
    let sites = sigma.sites();
    assert_eq!(sigma.rank(), rank);
    // invertibility per site
    let mut m = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    for site in 0..sites {
        for i in 0..rank {
            for j in 0..rank {
                m[i * rank + j] = sigma.at(0, i, j, site);
            }
        }
        if linalg::mat_det(rank, &m).norm() < real::<T>(1e-14) {
            return Err(CoreError::SingularGauge { site });
        }
    }
    let mut sigma_sparse = sigma.clone();
    enforce_flux_sparsity(
        &mut sigma_sparse,
        &conn.block_fluxes,
        &conn.block_of_index,
    )?;
    let sigma_inv = invert_endo(&sigma_sparse)?;
    let ds = dolbeault_derivative(geom, &sigma_sparse, Dolbeault::Antiholomorphic)?;
    let mut alpha = wedge(&sigma_sparse, &wedge(&conn.alpha, &sigma_inv)?)?;
    alpha.axpy(cplx::<T>(-1.0, 0.0), &wedge(&ds, &sigma_inv)?)?;
    let mut out = conn.with_alpha(alpha);
    enforce_flux_sparsity(&mut out.alpha, &conn.block_fluxes, &conn.block_of_index)?;
    Ok(out)
}

/// Degree, slope and Einstein constant from a given (1,1) curvature:
/// deg = (i/2π) ∫ tr F ∧ ω^{n−1}/(n−1)!, slope = deg/rank,
/// λ = 2π·slope/Vol.
pub fn degree_from_curvature<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    f11: &FormField<T>,
    rank: usize,
) -> Result<(T, T, T)> {
    let n = geom.complex_dim();
    let tr_f = f11.trace();
    let (omega_pow, _) = wedge_power_volume(geom, metric, n - 1)?;
    let top = wedge(&tr_f, &omega_pow)?;
    let integral = integrate_top_form(geom, &top);
    let two_pi = real::<T>(2.0 * std::f64::consts::PI);
    let deg = (integral * imag_unit::<T>()).re / two_pi;
    let slope = deg / real::<T>(rank as f64);
    let vol = metric.total_volume(geom);
    let lambda = two_pi * slope / vol;
    Ok((deg, slope, lambda))
}

/// ω-degree, slope and the Einstein constant λ = 2π·slope/Vol.
pub fn degree_slope_lambda<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    bundle: &BundleState<T>,
) -> Result<(T, T, T)> {
    let f = curvature(geom, bundle)?;
    degree_from_curvature(geom, metric, &f.f11, bundle.rank)
}

/// Residual of the Demailly adjoint identities applied to the curvature:
///   ∂̄_A* = −i[Λ, ∂_A] − τ̄*   and   ∂_A* = i[Λ, ∂̄_A] − τ*,
/// with the left sides realized as −*∂_A* and −*∂̄_A* and the right sides
/// assembled from independent contraction/torsion routes.
pub fn adjoint_identity_check<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    conn: &ConnectionState<T>,
) -> Result<T> {
    let f = conn.curvature(geom)?;
    let star_f = hodge_star(geom, metric, &f.f11)?;
    let torsion = torsion_adjoint_apply(geom, metric, &f.f11)?;
    let i = imag_unit::<T>();

    // ∂̄_A* F = −*(∂_A * F): a (1,0)-form
    let lhs_10 = {
        let d = conn.d_cov(geom, &star_f)?;
        hodge_star(geom, metric, &d)?.scaled(cplx::<T>(-1.0, 0.0))
    };
    // RHS: −i(Λ ∂_A F − ∂_A Λ F) − τ̄* F
    let rhs_10 = {
        let daf = conn.d_cov(geom, &f.f11)?;
        let lam_daf = lambda_general(geom, metric, &daf);
        let d_lamf = conn.d_cov(geom, &lambda_contract(metric, &f.f11)?)?;
        let mut rhs = lam_daf.subbed(&d_lamf)?.scaled(-i);
        rhs.axpy(cplx::<T>(-1.0, 0.0), &torsion.pq10)?;
        rhs
    };

    // ∂_A* F = −*(∂̄_A * F): a (0,1)-form
    let lhs_01 = {
        let d = conn.dbar_cov(geom, &star_f)?;
        hodge_star(geom, metric, &d)?.scaled(cplx::<T>(-1.0, 0.0))
    };
    // RHS: i(Λ ∂̄_A F − ∂̄_A Λ F) − τ* F
    let rhs_01 = {
        let dbf = conn.dbar_cov(geom, &f.f11)?;
        let lam_dbf = lambda_general(geom, metric, &dbf);
        let db_lamf = conn.dbar_cov(geom, &lambda_contract(metric, &f.f11)?)?;
        let mut rhs = lam_dbf.subbed(&db_lamf)?.scaled(i);
        rhs.axpy(cplx::<T>(-1.0, 0.0), &torsion.pq01)?;
        rhs
    };

    let h_pair = Some((&conn.h0, &conn.h0_inv));
    let scale = l2_norm(geom, metric, h_pair, &lhs_10)
        + l2_norm(geom, metric, h_pair, &rhs_10)
        + l2_norm(geom, metric, h_pair, &lhs_01)
        + l2_norm(geom, metric, h_pair, &rhs_01)
        + real::<T>(1e-30);
    let d10 = l2_norm(geom, metric, h_pair, &lhs_10.subbed(&rhs_10)?);
    let d01 = l2_norm(geom, metric, h_pair, &lhs_01.subbed(&rhs_01)?);
    Ok((d10 + d01) / scale)
}

/// Compatibility residual d⟨s,t⟩_H = ⟨Ds,t⟩ + ⟨s,Dt⟩ on two sections, as the
/// max coefficient mismatch of the (1,0) identity relative to the data scale.
pub fn compatibility_residual<T: Scalar>(
    geom: &GridGeometry<T>,
    a: &FormField<T>,
    h: &FormField<T>,
    s: &FormField<T>,
    t: &FormField<T>,
) -> Result<T> {
    let h_inv = invert_endo(h)?;
    let theta = chern_theta(geom, a, h, &h_inv)?;
    let n = geom.complex_dim();
    let rank = a.rank();
    let sites = geom.site_count();

    // ⟨s,t⟩_H = Σ_{i,j} conj(t_i) H_{ij} s_j  (sections as first columns)
    let pairing = |s: &FormField<T>, t: &FormField<T>| -> Vec<Cplx<T>> {
        (0..sites)
            .map(|site| {
                let mut acc = Complex::new(T::zero(), T::zero());
                for i in 0..rank {
                    for j in 0..rank {
                        acc += t.at(0, i, 0, site).conj() * h.at(0, i, j, site)
                            * s.at(0, j, 0, site);
                    }
                }
                acc
            })
            .collect()
    };

    // lhs: ∂⟨s,t⟩ per holomorphic direction
    let inner = pairing(s, t);
    let lhs = geom.dolbeault_lane(&inner, Dolbeault::Holomorphic);

    // D^{1,0}s = ∂s + θ s ;  ∂̄_E t = ∂̄t + a t
    let ds = dolbeault_derivative(geom, s, Dolbeault::Holomorphic)?
        .added(&wedge(&theta, s)?)?;
    let dbar_t = dolbeault_derivative(geom, t, Dolbeault::Antiholomorphic)?
        .added(&wedge(a, t)?)?;

    let mut worst = T::zero();
    let mut scale = T::zero();
    for dir in 0..n {
        for site in 0..sites {
            // ⟨(Ds)_dir, t⟩ + ⟨s, (∂̄t)_dir⟩, the latter conjugating dz̄ → dz
            let mut rhs = Complex::new(T::zero(), T::zero());
            for i in 0..rank {
                for j in 0..rank {
                    rhs += t.at(0, i, 0, site).conj()
                        * h.at(0, i, j, site)
                        * ds.at(dir, j, 0, site);
                    rhs += dbar_t.at(dir, i, 0, site).conj()
                        * h.at(0, i, j, site)
                        * s.at(0, j, 0, site);
                }
            }
            let diff = (lhs[dir][site] - rhs).norm();
            if diff > worst {
                worst = diff;
            }
            let mag = lhs[dir][site].norm() + rhs.norm();
            if mag > scale {
                scale = mag;
            }
        }
    }
    Ok(worst / (scale + T::one()))
}

fn line_block<T: Scalar>(
    geom: &GridGeometry<T>,
    kind: &BundleKind,
) -> Result<(Vec<i64>, Vec<Cplx<T>>)> {
    // returns (flux, per-site metric value h)
    let n = geom.complex_dim();
    let sites = geom.site_count();
    match kind {
        BundleKind::TrivialLine => Ok((vec![0; n], vec![Complex::new(T::one(), T::zero()); sites])),
        BundleKind::ConformalLine { amplitude, mode } => {
            let lane = crate::geometry::metric::mode_lane(geom, mode);
            let h = lane
                .iter()
                .map(|v| {
                    let phi = v.re * real::<T>(*amplitude);
                    Complex::new(phi.exp(), T::zero())
                })
                .collect();
            Ok((vec![0; n], h))
        }
        BundleKind::FluxLine { flux } => {
            if flux.len() != n {
                return Err(CoreError::ShapeMismatch(format!(
                    "flux vector needs one entry per complex plane ({n}), got {}",
                    flux.len()
                )));
            }
            Ok((flux.clone(), vec![Complex::new(T::one(), T::zero()); sites]))
        }
        _ => Err(CoreError::ShapeMismatch(
            "direct sums take line-bundle blocks".into(),
        )),
    }
}

/// Build a test bundle; the integrability and positivity invariants are
/// validated before the state is returned.
pub fn make_test_bundle<T: Scalar>(
    geom: &GridGeometry<T>,
    kind: &BundleKind,
) -> Result<BundleState<T>> {
    let n = geom.complex_dim();
    let sites = geom.site_count();
    let state = match kind {
        BundleKind::TrivialLine | BundleKind::ConformalLine { .. } | BundleKind::FluxLine { .. } => {
            let (flux, hvals) = line_block(geom, kind)?;
            let mut h = FormField::zeros(n, 0, 0, 1, sites);
            h.lane_mut(0, 0, 0).copy_from_slice(&hvals);
            BundleState {
                rank: 1,
                block_fluxes: vec![flux],
                block_of_index: vec![0],
                a: FormField::zeros(n, 0, 1, 1, sites),
                h0: h.clone(),
                h,
            }
        }
        BundleKind::DirectSum(blocks) => {
            if blocks.is_empty() {
                return Err(CoreError::ShapeMismatch("empty direct sum".into()));
            }
            let rank = blocks.len();
            let mut block_fluxes = Vec::with_capacity(rank);
            let mut h = FormField::zeros(n, 0, 0, rank, sites);
            for (b, blk) in blocks.iter().enumerate() {
                let (flux, hvals) = line_block(geom, blk)?;
                block_fluxes.push(flux);
                h.lane_mut(0, b, b).copy_from_slice(&hvals);
            }
            BundleState {
                rank,
                block_fluxes,
                block_of_index: (0..rank).collect(),
                a: FormField::zeros(n, 0, 1, rank, sites),
                h0: h.clone(),
                h,
            }
        }
        BundleKind::Extension { class } => {
            if class.len() != n {
                return Err(CoreError::ShapeMismatch(format!(
                    "extension class needs {n} coefficients"
                )));
            }
            if class.iter().all(|(re, im)| *re == 0.0 && *im == 0.0) {
                return Err(CoreError::ShapeMismatch(
                    "extension class must be nonzero (otherwise use a direct sum)".into(),
                ));
            }
            let mut a = FormField::zeros(n, 0, 1, 2, sites);
            for (k, (re, im)) in class.iter().enumerate() {
                for v in a.lane_mut(k, 0, 1) {
                    *v = cplx::<T>(*re, *im);
                }
            }
            let mut h = FormField::zeros(n, 0, 0, 2, sites);
            for d in 0..2 {
                for v in h.lane_mut(0, d, d) {
                    *v = Complex::new(T::one(), T::zero());
                }
            }
            BundleState {
                rank: 2,
                block_fluxes: vec![vec![0; n]],
                block_of_index: vec![0, 0],
                a,
                h0: h.clone(),
                h,
            }
        }
    };

    let resid = state.integrability_residual(geom)?;
    let a_norm = state.a.coeff_l2() * geom.cell_volume().sqrt();
    let tol = real::<T>(INTEGRABILITY_TOL) * (T::one() + a_norm * a_norm);
    if resid > tol {
        return Err(CoreError::IntegrabilityViolation {
            residual: resid.to_f64().unwrap_or(f64::NAN),
            tolerance: tol.to_f64().unwrap_or(f64::NAN),
        });
    }
    let (min_eig, site) = state.min_metric_eigenvalue();
    if min_eig <= T::zero() {
        return Err(CoreError::PositivityLost {
            t: 0.0,
            site,
            min_eig: min_eig.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(state)
}

/// Multiply the bundle metric by exp(2ψ B) per block sign pattern: a
/// positivity-preserving initial perturbation for convergence studies.
pub fn perturb_bundle_metric<T: Scalar>(
    geom: &GridGeometry<T>,
    bundle: &BundleState<T>,
    amplitude: f64,
    mode: &[i32],
) -> BundleState<T> {
    perturb_bundle_metric_with_phase(geom, bundle, amplitude, mode, 0.0)
}

/// Same, with a phase offset on the perturbation mode (seed plumbing).
pub fn perturb_bundle_metric_with_phase<T: Scalar>(
    geom: &GridGeometry<T>,
    bundle: &BundleState<T>,
    amplitude: f64,
    mode: &[i32],
    phase: f64,
) -> BundleState<T> {
    let lane = crate::geometry::metric::mode_lane_with_phase(geom, mode, phase);
    let mut h = bundle.h.clone();
    let rank = bundle.rank;
    // H ← S H S with S = diag(e^{s_d ψ}), s_d = ±1 alternating
    let sgn = |d: usize| if d.is_multiple_of(2) { 1.0 } else { -1.0 };
    for i in 0..rank {
        for j in 0..rank {
            let weight = amplitude * (sgn(i) + sgn(j));
            if weight == 0.0 {
                continue;
            }
            let dst = h.lane_mut(0, i, j);
            for (v, m) in dst.iter_mut().zip(&lane) {
                let factor = (m.re * real::<T>(weight)).exp();
                *v = v.scale(factor);
            }
        }
    }
    let mut out = bundle.clone();
    out.h = h.clone();
    out.h0 = h;
    out
}

/// Pointwise H-Hermiticity residual of iΛF: sup‖(iΛF)^{*H} − iΛF‖ over sites.
pub fn lambda_f_hermiticity_residual<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    bundle: &BundleState<T>,
) -> Result<T> {
    let f = curvature(geom, bundle)?;
    let ilf = lambda_contract(metric, &f.f11)?.scaled(imag_unit::<T>());
    let h_inv = invert_endo(&bundle.h)?;
    let adj = h_adjoint(&ilf, &bundle.h, &h_inv);
    Ok(adj.subbed(&ilf)?.max_abs())
}
