//! Time integration of the bundle-metric flow
//!     H⁻¹ ∂H/∂t = −2(iΛ_ω F_H − λ Id)
//! and of the gauge-equivalent unitary heat flow
//!     ∂A/∂t = i(∂̄_A − ∂_A) Λ_ω F_A,
//! the gauge link σ σ^{*H₀} relation between them, and the cross-check of
//! the two equivalent heat-flow right-hand sides.

use num_complex::Complex;

use crate::bundle::{
    self, degree_from_curvature, gauge_act, BundleState, ConnectionState,
};
use crate::diagnostics::{flow_observables, DiagnosticsRecord};
use crate::error::{CoreError, Result};
use crate::geometry::forms::FormField;
use crate::geometry::grid::GridGeometry;
use crate::geometry::metric::{lambda_contract, MetricField};
use crate::geometry::real::hodge_star;
use crate::geometry::torsion::{torsion_adjoint_apply, OneForm};
use crate::linalg;
use crate::scalar::{cplx, imag_unit, real, Cplx, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
    Euler,
}

#[derive(Debug, Clone)]
pub struct FlowConfig<T: Scalar> {
    /// explicit step; None resolves from the CFL bound
    pub dt: Option<T>,
    pub t_end: T,
    pub cfl: T,
    pub scheme: Scheme,
    pub record_every: usize,
    /// full-state storage cadence in steps; 0 stores only the endpoints
    pub checkpoint_every: usize,
    pub store_energy: bool,
    /// abort when sup|F| exceeds this multiple of its initial value
    pub blowup_factor: T,
    /// Einstein constant; None computes it from the initial state and holds
    /// it fixed for the whole run
    pub lambda: Option<T>,
}

impl<T: Scalar> Default for FlowConfig<T> {
    fn default() -> Self {
        FlowConfig {
            dt: None,
            t_end: real(0.1),
            cfl: real(0.1),
            scheme: Scheme::Rk4,
            record_every: 10,
            checkpoint_every: 0,
            store_energy: false,
            blowup_factor: real(1e6),
            lambda: None,
        }
    }
}

#[derive(Clone)]
pub enum FlowState<T: Scalar> {
    Metric(BundleState<T>),
    Conn(ConnectionState<T>),
}

impl<T: Scalar> FlowState<T> {
    pub fn rank(&self) -> usize {
        match self {
            FlowState::Metric(b) => b.rank(),
            FlowState::Conn(c) => c.rank(),
        }
    }

    pub fn as_metric(&self) -> Option<&BundleState<T>> {
        match self {
            FlowState::Metric(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_conn(&self) -> Option<&ConnectionState<T>> {
        match self {
            FlowState::Conn(c) => Some(c),
            _ => None,
        }
    }
}

/// Terminal status of a run: mid-flight invariant failures abort the march
/// but keep everything recorded up to the last good step.
#[derive(Debug)]
pub enum FlowStatus {
    Completed,
    Aborted { t: f64, error: CoreError },
}

impl FlowStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, FlowStatus::Completed)
    }
}

pub struct Trajectory<T: Scalar> {
    pub records: Vec<DiagnosticsRecord<T>>,
    pub states: Vec<(T, FlowState<T>)>,
    pub energy_fields: Vec<(T, Vec<T>)>,
    pub final_state: FlowState<T>,
    pub final_time: T,
    pub lambda: T,
    pub dt: T,
    pub status: FlowStatus,
}

/// Explicit parabolic stability bound dt = cfl · h²_min / (4n · Λ_max).
pub fn cfl_timestep<T: Scalar>(geom: &GridGeometry<T>, metric: &MetricField<T>, cfl: T) -> T {
    let h = geom.min_spacing();
    let n = real::<T>(geom.complex_dim() as f64);
    let lam_max = metric.max_inverse_eigenvalue();
    cfl * h * h / (real::<T>(4.0) * n * lam_max)
}

/// Per-run constants of the right-hand sides: the holomorphic structure and
/// the flux background never change along a flow.
pub struct RhsCache<T: Scalar> {
    /// ∂a for the metric flow (a fixed), or ∂̄-side reference parts unused
    da_h: FormField<T>,
    /// H₀⁻¹∂H₀, the fixed part of the unitary (1,0)-component
    theta0: Option<FormField<T>>,
    f_bg: FormField<T>,
}

impl<T: Scalar> RhsCache<T> {
    pub fn for_metric(geom: &GridGeometry<T>, b: &BundleState<T>) -> Result<Self> {
        Ok(RhsCache {
            da_h: crate::geometry::forms::dolbeault_derivative(
                geom,
                b.a(),
                crate::geometry::grid::Dolbeault::Holomorphic,
            )?,
            theta0: None,
            f_bg: b.background_curvature(geom),
        })
    }

    pub fn for_conn(geom: &GridGeometry<T>, c: &ConnectionState<T>) -> Result<Self> {
        let dh0 = crate::geometry::forms::dolbeault_derivative(
            geom,
            c.h0(),
            crate::geometry::grid::Dolbeault::Holomorphic,
        )?;
        let theta0 = crate::geometry::forms::wedge(c.h0_inv(), &dh0)?;
        Ok(RhsCache {
            da_h: FormField::zeros_like_degree(geom, 1, 1, c.rank()),
            theta0: Some(theta0),
            f_bg: c.background_curvature(geom),
        })
    }
}

fn metric_rhs_cached<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    state: &BundleState<T>,
    lambda: T,
    cache: &RhsCache<T>,
) -> Result<FormField<T>> {
    let h_inv = bundle::invert_endo(state.h())?;
    let theta = bundle::chern_theta(geom, state.a(), state.h(), &h_inv)?;
    let f11 = bundle::curvature_f11(geom, state.a(), &theta, &cache.da_h, &cache.f_bg)?;
    let mut s = lambda_contract(metric, &f11)?.scaled(imag_unit::<T>());
    let ident = FormField::identity(geom.complex_dim(), state.rank(), geom.site_count());
    s.axpy(Complex::new(-lambda, T::zero()), &ident)?;
    let mut rhs = crate::geometry::forms::wedge(state.h(), &s)?;
    rhs.scale(cplx::<T>(-2.0, 0.0));
    Ok(rhs)
}

fn conn_rhs_dof_cached<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    conn: &ConnectionState<T>,
    cache: &RhsCache<T>,
) -> Result<FormField<T>> {
    let alpha_star = bundle::h_adjoint(conn.alpha(), conn.h0(), conn.h0_inv());
    let mut theta = cache.theta0.as_ref().expect("connection cache").clone();
    theta.axpy(cplx::<T>(-1.0, 0.0), &alpha_star)?;
    let da_h = crate::geometry::forms::dolbeault_derivative(
        geom,
        conn.alpha(),
        crate::geometry::grid::Dolbeault::Holomorphic,
    )?;
    let f11 = bundle::curvature_f11(geom, conn.alpha(), &theta, &da_h, &cache.f_bg)?;
    let lam_f = lambda_contract(metric, &f11)?;
    // only the evolving (0,1)-part: i ∂̄_A ΛF
    Ok(bundle::dbar_cov_with(geom, conn.alpha(), &lam_f)?.scaled(imag_unit::<T>()))
}

/// ∂H/∂t = −2 H (iΛ_ω F_H − λ Id); Hermitian because iΛF is H-selfadjoint.
pub fn metric_flow_rhs<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    state: &BundleState<T>,
    lambda: T,
) -> Result<FormField<T>> {
    let cache = RhsCache::for_metric(geom, state)?;
    metric_rhs_cached(geom, metric, state, lambda, &cache)
}

/// ∂A/∂t with (0,1)-part i ∂̄_A ΛF and (1,0)-part −i ∂_A ΛF; the flow stays
/// H₀-unitary because the two parts are H₀-adjoint up to sign.
pub fn connection_flow_rhs<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    conn: &ConnectionState<T>,
) -> Result<OneForm<T>> {
    let curv = conn.curvature(geom)?;
    let lam_f = lambda_contract(metric, &curv.f11)?;
    let i = imag_unit::<T>();
    Ok(OneForm {
        pq01: conn.dbar_cov(geom, &lam_f)?.scaled(i),
        pq10: conn.d_cov(geom, &lam_f)?.scaled(-i),
    })
}

/// Relative L² distance between the two equivalent heat-flow right-hand
/// sides: i(∂̄_A−∂_A)ΛF versus −D_A*F − [Λ, dω]*F. Small for every
/// Hermitian base metric.
pub fn rhs_cross_check<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    conn: &ConnectionState<T>,
) -> Result<T> {
    let lhs = connection_flow_rhs(geom, metric, conn)?;

    let curv = conn.curvature(geom)?;
    let star_f = hodge_star(geom, metric, &curv.f11)?;
    // −D_A*F = +*(D_A (*F)) on the even-dimensional torus
    let rhs10_star = hodge_star(geom, metric, &conn.d_cov(geom, &star_f)?)?;
    let rhs01_star = hodge_star(geom, metric, &conn.dbar_cov(geom, &star_f)?)?;
    let torsion = torsion_adjoint_apply(geom, metric, &curv.f11)?;
    let rhs = OneForm {
        pq10: rhs10_star.subbed(&torsion.pq10)?,
        pq01: rhs01_star.subbed(&torsion.pq01)?,
    };

    let h_pair = Some((conn.h0(), conn.h0_inv()));
    let norm = |f: &FormField<T>| crate::geometry::real::l2_norm(geom, metric, h_pair, f);
    // normalize by the operand sizes before cancellation: on flux blocks the
    // star and torsion terms are large and cancel exactly, so the assembled
    // right-hand side itself is no scale
    let scale = norm(&lhs.pq10)
        + norm(&lhs.pq01)
        + norm(&rhs10_star)
        + norm(&rhs01_star)
        + norm(&torsion.pq10)
        + norm(&torsion.pq01)
        + real::<T>(1e-30);
    let diff = norm(&lhs.pq10.subbed(&rhs.pq10)?) + norm(&lhs.pq01.subbed(&rhs.pq01)?);
    Ok(diff / scale)
}

/// Einstein constant of the initial state: λ = 2π·slope/Vol.
pub fn lambda_for_state<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    state: &FlowState<T>,
) -> Result<T> {
    let (f11, rank) = match state {
        FlowState::Metric(b) => (bundle::curvature(geom, b)?.f11, b.rank()),
        FlowState::Conn(c) => (c.curvature(geom)?.f11, c.rank()),
    };
    let (_, _, lambda) = degree_from_curvature(geom, metric, &f11, rank)?;
    Ok(lambda)
}

fn hermitian_project<T: Scalar>(h: &mut FormField<T>) {
    let rank = h.rank();
    let sites = h.sites();
    for i in 0..rank {
        for j in i..rank {
            for site in 0..sites {
                let a = h.at(0, i, j, site);
                let b = h.at(0, j, i, site);
                let avg = (a + b.conj()).scale(real::<T>(0.5));
                *h.at_mut(0, i, j, site) = avg;
                *h.at_mut(0, j, i, site) = avg.conj();
            }
        }
    }
}

/// Advance the flow. Records diagnostics every `record_every` steps, stores
/// full states at the checkpoint cadence, and aborts on positivity loss,
/// curvature blow-up, or integrability drift beyond 10× the initial
/// residual.
pub fn integrate<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    initial: FlowState<T>,
    cfg: &FlowConfig<T>,
) -> Result<Trajectory<T>> {
    let bound = cfl_timestep(geom, metric, cfg.cfl);
    let dt = match cfg.dt {
        Some(d) => {
            if d > bound * (T::one() + real::<T>(1e-9)) {
                return Err(CoreError::CflViolation {
                    dt: d.to_f64().unwrap_or(f64::NAN),
                    bound: bound.to_f64().unwrap_or(f64::NAN),
                });
            }
            d
        }
        None => bound,
    };
    let n_steps = {
        let raw = (cfg.t_end / dt).to_f64().unwrap_or(1.0).round() as usize;
        raw.max(1)
    };

    let lambda = match cfg.lambda {
        Some(l) => l,
        None => lambda_for_state(geom, metric, &initial)?,
    };

    // initial observables, ceilings and storage
    let obs0 = flow_observables(geom, metric, &initial, lambda, T::zero())?;
    if let FlowState::Metric(b) = &initial {
        let (me, site) = b.min_metric_eigenvalue();
        if me <= T::zero() {
            return Err(CoreError::PositivityLost {
                t: 0.0,
                site,
                min_eig: me.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let sup_f0 = obs0.sup_f;
    let ceiling = cfg.blowup_factor * if sup_f0 > T::one() { sup_f0 } else { T::one() };
    let integ0 = obs0.record.integrability_resid;
    let ym0 = obs0.record.ym;

    let mut records = vec![obs0.record];
    let mut energy_fields = Vec::new();
    if cfg.store_energy {
        energy_fields.push((T::zero(), obs0.energy_density));
    }
    let mut states = vec![(T::zero(), initial.clone())];

    let mut dof: Vec<Cplx<T>> = match &initial {
        FlowState::Metric(b) => b.h().data().to_vec(),
        FlowState::Conn(c) => c.alpha().data().to_vec(),
    };

    let rebuild = |dof: &[Cplx<T>]| -> FlowState<T> {
        match &initial {
            FlowState::Metric(b) => {
                let mut h = b.h().clone();
                h.data_mut().copy_from_slice(dof);
                FlowState::Metric(b.with_metric(h))
            }
            FlowState::Conn(c) => {
                let mut a = c.alpha().clone();
                a.data_mut().copy_from_slice(dof);
                FlowState::Conn(c.with_alpha(a))
            }
        }
    };

    let cache = match &initial {
        FlowState::Metric(b) => RhsCache::for_metric(geom, b)?,
        FlowState::Conn(c) => RhsCache::for_conn(geom, c)?,
    };
    let rhs_flat = |dof: &[Cplx<T>]| -> Result<Vec<Cplx<T>>> {
        match rebuild(dof) {
            FlowState::Metric(b) => Ok(metric_rhs_cached(geom, metric, &b, lambda, &cache)?
                .data()
                .to_vec()),
            FlowState::Conn(c) => Ok(conn_rhs_dof_cached(geom, metric, &c, &cache)?
                .data()
                .to_vec()),
        }
    };

    let mut cum_dta = T::zero();
    let mut prev_dta = records[0].dta_l2sq;
    let mut prev_t = T::zero();
    let mut status = FlowStatus::Completed;
    let mut last_good = dof.clone();
    let mut last_good_t = T::zero();

    let len = dof.len();
    let mut k1 = vec![Complex::new(T::zero(), T::zero()); len];
    let mut tmp = vec![Complex::new(T::zero(), T::zero()); len];

    'march: for step in 1..=n_steps {
        match cfg.scheme {
            Scheme::Euler => {
                let f = rhs_flat(&dof)?;
                for (d, v) in dof.iter_mut().zip(&f) {
                    *d += v.scale(dt);
                }
            }
            Scheme::Rk4 => {
                let half = dt * real::<T>(0.5);
                let f1 = rhs_flat(&dof)?;
                for i in 0..len {
                    tmp[i] = dof[i] + f1[i].scale(half);
                }
                let f2 = rhs_flat(&tmp)?;
                for i in 0..len {
                    tmp[i] = dof[i] + f2[i].scale(half);
                }
                let f3 = rhs_flat(&tmp)?;
                for i in 0..len {
                    tmp[i] = dof[i] + f3[i].scale(dt);
                }
                let f4 = rhs_flat(&tmp)?;
                let sixth = dt / real::<T>(6.0);
                for i in 0..len {
                    k1[i] = (f1[i] + (f2[i] + f3[i]).scale(real::<T>(2.0)) + f4[i]).scale(sixth);
                    dof[i] += k1[i];
                }
            }
        }

        // structural projection: Hermitian metric, flux-sparse entries
        match &initial {
            FlowState::Metric(b) => {
                let mut h = b.h().clone();
                h.data_mut().copy_from_slice(&dof);
                hermitian_project(&mut h);
                bundle::enforce_flux_sparsity(&mut h, b.block_fluxes(), b.block_of_index())?;
                dof.copy_from_slice(h.data());
            }
            FlowState::Conn(c) => {
                let mut a = c.alpha().clone();
                a.data_mut().copy_from_slice(&dof);
                bundle::enforce_flux_sparsity(&mut a, c.block_fluxes(), c.block_of_index())?;
                dof.copy_from_slice(a.data());
            }
        }

        let t = dt * real::<T>(step as f64);
        let at_record = step % cfg.record_every.max(1) == 0 || step == n_steps;
        let at_checkpoint =
            cfg.checkpoint_every > 0 && (step % cfg.checkpoint_every == 0 || step == n_steps);

        if at_record || at_checkpoint {
            let state = rebuild(&dof);

            if let FlowState::Metric(b) = &state {
                let (me, site) = b.min_metric_eigenvalue();
                if me <= T::zero() {
                    status = FlowStatus::Aborted {
                        t: t.to_f64().unwrap_or(f64::NAN),
                        error: CoreError::PositivityLost {
                            t: t.to_f64().unwrap_or(f64::NAN),
                            site,
                            min_eig: me.to_f64().unwrap_or(f64::NAN),
                        },
                    };
                    break 'march;
                }
            }

            if at_record {
                let mut obs = flow_observables(geom, metric, &state, lambda, t)?;
                if obs.sup_f > ceiling {
                    status = FlowStatus::Aborted {
                        t: t.to_f64().unwrap_or(f64::NAN),
                        error: CoreError::Blowup {
                            t: t.to_f64().unwrap_or(f64::NAN),
                            sup: obs.sup_f.to_f64().unwrap_or(f64::NAN),
                            ceiling: ceiling.to_f64().unwrap_or(f64::NAN),
                        },
                    };
                    break 'march;
                }
                let integ_tol =
                    integ0 * real::<T>(10.0) + real::<T>(1e-10);
                if obs.record.integrability_resid > integ_tol {
                    status = FlowStatus::Aborted {
                        t: t.to_f64().unwrap_or(f64::NAN),
                        error: CoreError::IntegrabilityViolation {
                            residual: obs
                                .record
                                .integrability_resid
                                .to_f64()
                                .unwrap_or(f64::NAN),
                            tolerance: integ_tol.to_f64().unwrap_or(f64::NAN),
                        },
                    };
                    break 'march;
                }
                cum_dta += (obs.record.dta_l2sq + prev_dta) * (t - prev_t) * real::<T>(0.5);
                prev_dta = obs.record.dta_l2sq;
                prev_t = t;
                let floor = real::<T>(1e-30);
                obs.record.energy_ident_resid = (obs.record.ym + real::<T>(2.0) * cum_dta
                    - ym0)
                    .abs()
                    / if ym0 > floor { ym0 } else { floor };
                if !obs.record.is_finite() {
                    status = FlowStatus::Aborted {
                        t: t.to_f64().unwrap_or(f64::NAN),
                        error: CoreError::Blowup {
                            t: t.to_f64().unwrap_or(f64::NAN),
                            sup: f64::NAN,
                            ceiling: ceiling.to_f64().unwrap_or(f64::NAN),
                        },
                    };
                    break 'march;
                }
                records.push(obs.record);
                if cfg.store_energy {
                    energy_fields.push((t, obs.energy_density));
                }
                last_good.copy_from_slice(&dof);
                last_good_t = t;
            }
            if at_checkpoint {
                states.push((t, state));
            }
        }
    }

    let (final_time, final_state) = match &status {
        FlowStatus::Completed => {
            let ft = dt * real::<T>(n_steps as f64);
            (ft, rebuild(&dof))
        }
        // keep the last state that passed its monitors
        FlowStatus::Aborted { .. } => (last_good_t, rebuild(&last_good)),
    };
    if status.is_completed() && states.last().map(|(t, _)| *t) != Some(final_time) {
        states.push((final_time, final_state.clone()));
    }
    Ok(Trajectory {
        records,
        states,
        energy_fields,
        final_state,
        final_time,
        lambda,
        dt,
        status,
    })
}

/// σ(t): the positive H₀-selfadjoint root of h = H₀⁻¹H, canonical among the
/// gauge transformations with σ^{*H₀}σ = h.
pub fn gauge_link<T: Scalar>(h: &FormField<T>, h0: &FormField<T>) -> Result<FormField<T>> {
    let rank = h.rank();
    let sites = h.sites();
    let mut out = h.clone();
    let mut hbuf = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut h0buf = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut m = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut t1 = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    for site in 0..sites {
        for i in 0..rank {
            for j in 0..rank {
                hbuf[i * rank + j] = h.at(0, i, j, site);
                h0buf[i * rank + j] = h0.at(0, i, j, site);
            }
        }
        let h0_sqrt = linalg::sqrt_hermitian(rank, &h0buf)?;
        let h0_sqrt_inv = linalg::mat_inverse(rank, &h0_sqrt)?;
        // M = H₀^{-1/2} H H₀^{-1/2}
        linalg::mat_mul(rank, &h0_sqrt_inv, &hbuf, &mut t1);
        linalg::mat_mul(rank, &t1, &h0_sqrt_inv, &mut m);
        let m_sqrt = linalg::sqrt_hermitian(rank, &m)?;
        // σ = H₀^{-1/2} M^{1/2} H₀^{1/2}
        linalg::mat_mul(rank, &h0_sqrt_inv, &m_sqrt, &mut t1);
        linalg::mat_mul(rank, &t1, &h0_sqrt, &mut m);
        for i in 0..rank {
            for j in 0..rank {
                *out.at_mut(0, i, j, site) = m[i * rank + j];
            }
        }
    }
    Ok(out)
}

/// Gauge-invariant observables of a connection used by the two-flow
/// comparison: YM energy, ‖ΛF‖₂ and the iΛF spectrum at sample sites.
pub fn equivalence_observables<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    conn: &ConnectionState<T>,
) -> Result<Vec<T>> {
    let curv = conn.curvature(geom)?;
    let h_pair = Some((conn.h0(), conn.h0_inv()));
    let e = crate::geometry::real::pointwise_norm_sq(metric, h_pair, &curv.f11);
    let det = metric.det();
    let mut ym = T::zero();
    for (site, &v) in e.iter().enumerate() {
        ym += v * det[site];
    }
    ym *= geom.cell_volume();

    let lam_f = lambda_contract(metric, &curv.f11)?;
    let lam_sq = crate::geometry::real::pointwise_norm_sq(metric, h_pair, &lam_f);
    let mut l2 = T::zero();
    for (site, &v) in lam_sq.iter().enumerate() {
        l2 += v * det[site];
    }
    l2 = (l2 * geom.cell_volume()).sqrt();

    let mut obs = vec![ym, l2];
    let rank = conn.rank();
    let i_lam_f = lam_f.scaled(imag_unit::<T>());
    let sites = geom.site_count();
    let mut mat = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut hbuf = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    for frac in [0usize, 1, 2] {
        let site = frac * sites / 3;
        for i in 0..rank {
            for j in 0..rank {
                mat[i * rank + j] = i_lam_f.at(0, i, j, site);
                hbuf[i * rank + j] = conn.h0().at(0, i, j, site);
            }
        }
        let evs = linalg::eig_h_selfadjoint(rank, &mat, Some(&hbuf))?;
        obs.extend(evs);
    }
    Ok(obs)
}

/// Compare a metric-flow trajectory against a heat-flow trajectory through
/// the gauge link: at each shared stored time, σ(t) maps A₀ to a connection
/// whose gauge-invariant observables must match the heat flow's.
pub fn trajectory_equivalence<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    traj_h: &Trajectory<T>,
    traj_a: &Trajectory<T>,
) -> Result<Vec<(T, T)>> {
    if traj_h.states.len() != traj_a.states.len() {
        return Err(CoreError::MismatchedGrids(format!(
            "stored state counts differ: {} vs {}",
            traj_h.states.len(),
            traj_a.states.len()
        )));
    }
    let a0 = traj_a.states[0]
        .1
        .as_conn()
        .ok_or_else(|| CoreError::MismatchedGrids("second trajectory is not a heat flow".into()))?
        .clone();
    let h0 = a0.h0().clone();

    let mut out = Vec::with_capacity(traj_h.states.len());
    for ((th, sh), (ta, sa)) in traj_h.states.iter().zip(&traj_a.states) {
        if (*th - *ta).abs() > real::<T>(1e-9) {
            return Err(CoreError::MismatchedGrids(format!(
                "stored times differ: {} vs {}",
                th.to_f64().unwrap_or(f64::NAN),
                ta.to_f64().unwrap_or(f64::NAN)
            )));
        }
        let b = sh.as_metric().ok_or_else(|| {
            CoreError::MismatchedGrids("first trajectory is not a metric flow".into())
        })?;
        let conn_a = sa.as_conn().ok_or_else(|| {
            CoreError::MismatchedGrids("second trajectory is not a heat flow".into())
        })?;
        let sigma = gauge_link(b.h(), &h0)?;
        let a_sigma = gauge_act(geom, &sigma, &a0)?;
        let obs_h = equivalence_observables(geom, metric, &a_sigma)?;
        let obs_a = equivalence_observables(geom, metric, conn_a)?;
        let scale = obs_h
            .iter()
            .chain(&obs_a)
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m });
        let floor = real::<T>(1e-12) + real::<T>(1e-9) * scale;
        let mut worst = T::zero();
        for (a, b) in obs_h.iter().zip(&obs_a) {
            let denom = {
                let m = if a.abs() > b.abs() { a.abs() } else { b.abs() };
                if m > floor {
                    m
                } else {
                    floor
                }
            };
            let d = (*a - *b).abs() / denom;
            if d > worst {
                worst = d;
            }
        }
        out.push((*th, worst));
    }
    Ok(out)
}
