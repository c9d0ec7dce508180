//! Every monitored quantity of the flows: energies, contracted-curvature
//! norms, the Hermitian-Einstein residual, the torsion pairing, the energy
//! identity, kernel-weighted local energies and their almost-monotonicity,
//! the scaled-density exceedance mask, and eigenvalue clustering of iΛF.

use num_complex::Complex;

use crate::bundle::{self};
use crate::error::{CoreError, Result};
use crate::flow::{FlowState, Trajectory};
use crate::geometry::forms::FormField;
use crate::geometry::grid::GridGeometry;
use crate::geometry::metric::{lambda_contract, MetricField};
use crate::geometry::real::{l2_inner, pointwise_norm_sq};
use crate::geometry::torsion::{torsion_adjoint_apply, OneForm};
use crate::linalg;
use crate::scalar::{imag_unit, real, Cplx, Scalar};

/// One time-sample of the monitored quantities, in CSV column order.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRecord<T: Scalar> {
    pub t: T,
    pub ym: T,
    pub dta_l2sq: T,
    pub sup_lambda_f: T,
    pub l2_lambda_f: T,
    pub i_func: T,
    pub he_resid: T,
    pub torsion_pair: T,
    pub energy_ident_resid: T,
    pub integrability_resid: T,
}

impl<T: Scalar> DiagnosticsRecord<T> {
    pub const FIELD_NAMES: [&'static str; 10] = [
        "t",
        "ym",
        "dta_l2sq",
        "sup_lambda_f",
        "l2_lambda_f",
        "i_func",
        "he_resid",
        "torsion_pair",
        "energy_ident_resid",
        "integrability_resid",
    ];

    pub fn values(&self) -> [T; 10] {
        [
            self.t,
            self.ym,
            self.dta_l2sq,
            self.sup_lambda_f,
            self.l2_lambda_f,
            self.i_func,
            self.he_resid,
            self.torsion_pair,
            self.energy_ident_resid,
            self.integrability_resid,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Evaluated observables of one state, with the reusable by-products.
pub struct Observed<T: Scalar> {
    pub record: DiagnosticsRecord<T>,
    pub energy_density: Vec<T>,
    pub sup_f: T,
    pub torsion_denominator: T,
}

/// Curvature, velocity 1-form and inner-product context of a flow state.
/// Metric states pair with H(t), connection states with H₀; all listed
/// quantities are gauge-invariant so the two frames are comparable.
struct StateContext<T: Scalar> {
    f11: FormField<T>,
    lambda_f: FormField<T>,
    velocity: OneForm<T>,
    h: FormField<T>,
    h_inv: FormField<T>,
    integrability: T,
}

fn context<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    state: &FlowState<T>,
) -> Result<StateContext<T>> {
    match state {
        FlowState::Conn(conn) => {
            let curv = conn.curvature(geom)?;
            let lambda_f = lambda_contract(metric, &curv.f11)?;
            let i = imag_unit::<T>();
            let v01 = conn.dbar_cov(geom, &lambda_f)?.scaled(i);
            let v10 = conn.d_cov(geom, &lambda_f)?.scaled(-i);
            Ok(StateContext {
                f11: curv.f11,
                lambda_f,
                velocity: OneForm {
                    pq10: v10,
                    pq01: v01,
                },
                h: conn.h0().clone(),
                h_inv: conn.h0_inv().clone(),
                integrability: conn.integrability_residual(geom)?,
            })
        }
        FlowState::Metric(b) => {
            let h_inv = bundle::invert_endo(b.h())?;
            let theta = bundle::chern_theta(geom, b.a(), b.h(), &h_inv)?;
            let f_bg = b.background_curvature(geom);
            let curv = bundle::curvature_parts(geom, b.a(), &theta, &f_bg)?;
            let lambda_f = lambda_contract(metric, &curv.f11)?;
            let i = imag_unit::<T>();
            // velocity of the gauge-equivalent connection, in the H-frame
            let v01 = bundle::dbar_cov_with(geom, b.a(), &lambda_f)?.scaled(i);
            let v10 = bundle::d_cov_with(geom, &theta, &lambda_f)?.scaled(-i);
            Ok(StateContext {
                f11: curv.f11,
                lambda_f,
                velocity: OneForm {
                    pq10: v10,
                    pq01: v01,
                },
                h: b.h().clone(),
                h_inv,
                integrability: b.integrability_residual(geom)?,
            })
        }
    }
}

/// Yang-Mills energy, sup/L² of ΛF, Hermitian-Einstein residual, the
/// torsion pairing and the velocity norms of one state.
pub fn flow_observables<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    state: &FlowState<T>,
    lambda: T,
    t: T,
) -> Result<Observed<T>> {
    let ctx = context(geom, metric, state)?;
    let h_pair = Some((&ctx.h, &ctx.h_inv));

    let energy_density = pointwise_norm_sq(metric, h_pair, &ctx.f11);
    let det = metric.det();
    let mut ym = T::zero();
    let mut sup_f = T::zero();
    for (site, &e) in energy_density.iter().enumerate() {
        ym += e * det[site];
        let s = e.sqrt();
        if s > sup_f {
            sup_f = s;
        }
    }
    ym *= geom.cell_volume();

    // ΛF norms and the Einstein residual sup‖iΛF − λ Id‖
    let lam_sq = pointwise_norm_sq(metric, h_pair, &ctx.lambda_f);
    let mut sup_lambda_f = T::zero();
    let mut l2_lambda_f = T::zero();
    for (site, &v) in lam_sq.iter().enumerate() {
        let s = v.sqrt();
        if s > sup_lambda_f {
            sup_lambda_f = s;
        }
        l2_lambda_f += v * det[site];
    }
    l2_lambda_f = (l2_lambda_f * geom.cell_volume()).sqrt();

    let rank = ctx.f11.rank();
    let n = geom.complex_dim();
    let mut he_dev = ctx.lambda_f.scaled(imag_unit::<T>());
    let ident = FormField::identity(n, rank, geom.site_count());
    he_dev.axpy(Complex::new(-lambda, T::zero()), &ident)?;
    let he_sq = pointwise_norm_sq(metric, h_pair, &he_dev);
    let he_resid = he_sq
        .iter()
        .fold(T::zero(), |m, &v| if v.sqrt() > m { v.sqrt() } else { m });

    // velocity norms: ∫|∂A/∂t|² = ∫|D_A ΛF|² along the heat flow
    let v10_sq = pointwise_norm_sq(metric, h_pair, &ctx.velocity.pq10);
    let v01_sq = pointwise_norm_sq(metric, h_pair, &ctx.velocity.pq01);
    let mut dta = T::zero();
    for site in 0..geom.site_count() {
        dta += (v10_sq[site] + v01_sq[site]) * det[site];
    }
    dta *= geom.cell_volume();
    let i_func = dta;

    // torsion pairing Re ∫⟨(τ+τ̄)*F, ∂A/∂t⟩ dV and its cancellation scale
    let torsion = torsion_adjoint_apply(geom, metric, &ctx.f11)?;
    let pair = l2_inner(geom, metric, h_pair, &torsion.pq10, &ctx.velocity.pq10).re
        + l2_inner(geom, metric, h_pair, &torsion.pq01, &ctx.velocity.pq01).re;
    let t10 = pointwise_norm_sq(metric, h_pair, &torsion.pq10);
    let t01 = pointwise_norm_sq(metric, h_pair, &torsion.pq01);
    let mut denom = T::zero();
    for site in 0..geom.site_count() {
        let tn = (t10[site] + t01[site]).sqrt();
        let vn = (v10_sq[site] + v01_sq[site]).sqrt();
        denom += tn * vn * det[site];
    }
    denom *= geom.cell_volume();

    Ok(Observed {
        record: DiagnosticsRecord {
            t,
            ym,
            dta_l2sq: dta,
            sup_lambda_f,
            l2_lambda_f,
            i_func,
            he_resid,
            torsion_pair: pair,
            energy_ident_resid: T::zero(),
            integrability_resid: ctx.integrability,
        },
        energy_density,
        sup_f,
        torsion_denominator: denom,
    })
}

/// I(t) = ∫ |D_A Λ_ω F_A|² dV; zero exactly at the limiting equation.
pub fn i_functional<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    state: &FlowState<T>,
) -> Result<T> {
    let ctx = context(geom, metric, state)?;
    let h_pair = Some((&ctx.h, &ctx.h_inv));
    let v10 = pointwise_norm_sq(metric, h_pair, &ctx.velocity.pq10);
    let v01 = pointwise_norm_sq(metric, h_pair, &ctx.velocity.pq01);
    let det = metric.det();
    let mut acc = T::zero();
    for site in 0..geom.site_count() {
        acc += (v10[site] + v01[site]) * det[site];
    }
    Ok(acc * geom.cell_volume())
}

/// The torsion pairing of a given curvature and velocity, plus the
/// magnitude scale ∫|(τ+τ̄)*F||∂A/∂t| for the cancellation ratio.
pub fn torsion_pairing<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    h_pair: Option<(&FormField<T>, &FormField<T>)>,
    f11: &FormField<T>,
    velocity: &OneForm<T>,
) -> Result<(T, T)> {
    let torsion = torsion_adjoint_apply(geom, metric, f11)?;
    let pair = l2_inner(geom, metric, h_pair, &torsion.pq10, &velocity.pq10).re
        + l2_inner(geom, metric, h_pair, &torsion.pq01, &velocity.pq01).re;
    let t10 = pointwise_norm_sq(metric, h_pair, &torsion.pq10);
    let t01 = pointwise_norm_sq(metric, h_pair, &torsion.pq01);
    let v10 = pointwise_norm_sq(metric, h_pair, &velocity.pq10);
    let v01 = pointwise_norm_sq(metric, h_pair, &velocity.pq01);
    let det = metric.det();
    let mut denom = T::zero();
    for site in 0..geom.site_count() {
        denom += ((t10[site] + t01[site]).sqrt()) * ((v10[site] + v01[site]).sqrt()) * det[site];
    }
    Ok((pair, denom * geom.cell_volume()))
}

/// Running residual of the energy identity
/// YM(t) + 2∫₀ᵗ ∫|∂A/∂t|² = YM(0), by cumulative trapezoid over the records.
pub fn energy_identity_residual<T: Scalar>(traj: &Trajectory<T>) -> Vec<T> {
    let recs = &traj.records;
    if recs.is_empty() {
        return Vec::new();
    }
    let ym0 = recs[0].ym;
    let floor = real::<T>(1e-30);
    let mut out = Vec::with_capacity(recs.len());
    let mut cum = T::zero();
    out.push(T::zero());
    for k in 1..recs.len() {
        let dt = recs[k].t - recs[k - 1].t;
        cum += (recs[k].dta_l2sq + recs[k - 1].dta_l2sq) * dt * real::<T>(0.5);
        let resid = (recs[k].ym + real::<T>(2.0) * cum - ym0).abs()
            / if ym0 > floor { ym0 } else { floor };
        out.push(resid);
    }
    out
}

/// Linear interpolation of stored energy fields at time `t`.
fn energy_at<T: Scalar>(traj: &Trajectory<T>, t: T) -> Result<Vec<T>> {
    let fields = &traj.energy_fields;
    if fields.is_empty() {
        return Err(CoreError::TrajectoryCoverage(
            "no stored energy fields (enable store_energy)".into(),
        ));
    }
    if t < fields[0].0 - real::<T>(1e-12) || t > fields.last().unwrap().0 + real::<T>(1e-12) {
        return Err(CoreError::TrajectoryCoverage(format!(
            "time {} outside stored range",
            t.to_f64().unwrap_or(f64::NAN)
        )));
    }
    let mut k = 0;
    while k + 1 < fields.len() && fields[k + 1].0 < t {
        k += 1;
    }
    if k + 1 == fields.len() {
        return Ok(fields[k].1.clone());
    }
    let (t0, ref e0) = fields[k];
    let (t1, ref e1) = fields[k + 1];
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { T::zero() };
    Ok(e0
        .iter()
        .zip(e1)
        .map(|(&a, &b)| a + (b - a) * w)
        .collect())
}

/// Ball indicator mask around a base point (flat-torus distance).
fn ball_mask<T: Scalar>(geom: &GridGeometry<T>, x0: &[T], r: T) -> Vec<bool> {
    (0..geom.site_count())
        .map(|s| geom.distance(&geom.position(s), x0) <= r)
        .collect()
}

fn masked_energy_integral<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    e: &[T],
    mask: &[bool],
) -> T {
    let det = metric.det();
    let mut acc = T::zero();
    for site in 0..geom.site_count() {
        if mask[site] {
            acc += e[site] * det[site];
        }
    }
    acc * geom.cell_volume()
}

/// Both sides of the local energy estimate between times s and τ:
/// ∫_{B_R} e(s) ≤ ∫_{B_2R} e(τ) + 2∫∫|∂A/∂t|² + C(...)^{1/2} + (C...)^{1/2}
/// with the measured calibration constant supplied by the caller.
pub fn local_energy_check<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    traj: &Trajectory<T>,
    x0: &[T],
    big_r: T,
    s: T,
    tau: T,
    calib_c: T,
) -> Result<(T, T)> {
    if big_r * real::<T>(2.0) > geom.injectivity_radius() + real::<T>(1e-12) {
        return Err(CoreError::GeometryDomain(format!(
            "2R = {} exceeds the injectivity radius {}",
            (big_r * real::<T>(2.0)).to_f64().unwrap_or(f64::NAN),
            geom.injectivity_radius().to_f64().unwrap_or(f64::NAN)
        )));
    }
    let e_s = energy_at(traj, s)?;
    let e_tau = energy_at(traj, tau)?;
    let lhs = masked_energy_integral(geom, metric, &e_s, &ball_mask(geom, x0, big_r));
    let outer = masked_energy_integral(
        geom,
        metric,
        &e_tau,
        &ball_mask(geom, x0, big_r * real::<T>(2.0)),
    );

    let (lo, hi) = if s < tau { (s, tau) } else { (tau, s) };
    let mut dta_int = T::zero();
    let recs = &traj.records;
    for k in 1..recs.len() {
        let (t0, t1) = (recs[k - 1].t, recs[k].t);
        if t1 < lo || t0 > hi {
            continue;
        }
        let a = if t0 > lo { t0 } else { lo };
        let b = if t1 < hi { t1 } else { hi };
        if b <= a {
            continue;
        }
        // linear-in-t integrand over the clipped segment
        let w0 = recs[k - 1].dta_l2sq;
        let w1 = recs[k].dta_l2sq;
        let seg = |t: T| -> T {
            if t1 > t0 {
                w0 + (w1 - w0) * (t - t0) / (t1 - t0)
            } else {
                w0
            }
        };
        dta_int += (seg(a) + seg(b)) * (b - a) * real::<T>(0.5);
    }

    let ym0 = traj.records.first().map(|r| r.ym).unwrap_or(T::zero());
    let gap = (s - tau).abs();
    let sqrt1 = (gap / (big_r * big_r) * ym0 * dta_int).sqrt();
    let sqrt2 = (gap * ym0 * dta_int).sqrt();
    let rhs = outer
        + real::<T>(2.0) * dta_int
        + calib_c * sqrt1
        + calib_c * sqrt2;
    Ok((lhs, rhs))
}

/// Periodized backward heat kernel (4πs)^{-n} exp(−d²/4s) summed over the
/// 3^{2n} nearest lattice translates.
fn backward_kernel<T: Scalar>(geom: &GridGeometry<T>, x0: &[T], s: T) -> Vec<T> {
    let n = geom.complex_dim();
    let axes = 2 * n;
    let norm = (real::<T>(4.0 * std::f64::consts::PI) * s).powi(-(n as i32));
    let four_s = real::<T>(4.0) * s;
    let mut shifts: Vec<Vec<T>> = vec![vec![T::zero(); axes]];
    for a in 0..axes {
        let mut next = Vec::new();
        for base in &shifts {
            for m in [-1.0f64, 0.0, 1.0] {
                let mut v = base.clone();
                v[a] = real::<T>(m) * geom.periods()[a];
                next.push(v);
            }
        }
        shifts = next;
    }
    (0..geom.site_count())
        .map(|site| {
            let x = geom.position(site);
            let mut acc = T::zero();
            for shift in &shifts {
                let mut d2 = T::zero();
                for a in 0..axes {
                    let d = x[a] - x0[a] + shift[a];
                    d2 += d * d;
                }
                acc += (-d2 / four_s).exp();
            }
            acc * norm
        })
        .collect()
}

/// Radial cutoff: 1 on B_{R/2}, 0 outside B_R, |∇f| = 2/R on the ramp (the
/// linear profile is the only one meeting the stated gradient bound).
fn cutoff<T: Scalar>(geom: &GridGeometry<T>, x0: &[T], big_r: T) -> Vec<T> {
    let half = big_r * real::<T>(0.5);
    (0..geom.site_count())
        .map(|site| {
            let d = geom.distance(&geom.position(site), x0);
            if d <= half {
                T::one()
            } else if d >= big_r {
                T::zero()
            } else {
                (big_r - d) / half
            }
        })
        .collect()
}

pub struct PhiReport<T: Scalar> {
    pub rs: Vec<T>,
    pub phi: Vec<T>,
    /// Φ(r)/r⁴: the parabolic density that is near-constant for smooth
    /// solutions (raw Φ scales like r⁴ at regular points).
    pub phi_normalized: Vec<T>,
    pub verdict: bool,
    pub worst_margin: T,
}

/// Kernel-weighted local energy Φ(r) = r² ∫_{T_r(u₀)} e f² G dV dt over the
/// backward windows T_r = [t₀−4r², t₀−r²], and the almost-monotonicity
/// verdict with the supplied calibration constant.
pub fn phi_monotonicity<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    traj: &Trajectory<T>,
    x0: &[T],
    t0: T,
    r_list: &[T],
    big_r: T,
    calib_c: T,
) -> Result<PhiReport<T>> {
    if big_r > geom.injectivity_radius() + real::<T>(1e-12) {
        return Err(CoreError::GeometryDomain(
            "cutoff radius exceeds the injectivity radius".into(),
        ));
    }
    let rmax_allowed = {
        let a = big_r * real::<T>(0.5);
        let b = t0.sqrt() * real::<T>(0.5);
        if a < b {
            a
        } else {
            b
        }
    };
    let mut rs = r_list.to_vec();
    rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &r in &rs {
        if r <= T::zero() || r > rmax_allowed + real::<T>(1e-12) {
            return Err(CoreError::GeometryDomain(format!(
                "radius {} outside (0, min(R/2, √t₀/2)]",
                r.to_f64().unwrap_or(f64::NAN)
            )));
        }
        if t0 - real::<T>(4.0) * r * r < -real::<T>(1e-12) {
            return Err(CoreError::GeometryDomain("t₀ − 4r² < 0".into()));
        }
    }

    let f2: Vec<T> = cutoff(geom, x0, big_r).iter().map(|&v| v * v).collect();
    let det = metric.det();
    let cell = geom.cell_volume();

    let mut phi = Vec::with_capacity(rs.len());
    for &r in &rs {
        let (a, b) = (t0 - real::<T>(4.0) * r * r, t0 - r * r);
        // trapezoid over stored samples clipped to [a, b]
        let samples = &traj.energy_fields;
        if samples.is_empty()
            || samples[0].0 > a + real::<T>(1e-12)
            || samples.last().unwrap().0 < b - real::<T>(1e-12)
        {
            return Err(CoreError::TrajectoryCoverage(format!(
                "Φ window [{}, {}] not covered by stored energy fields",
                a.to_f64().unwrap_or(f64::NAN),
                b.to_f64().unwrap_or(f64::NAN)
            )));
        }
        let value_at = |t: T| -> Result<T> {
            let e = energy_at(traj, t)?;
            let g = backward_kernel(geom, x0, t0 - t);
            let mut acc = T::zero();
            for site in 0..geom.site_count() {
                acc += e[site] * f2[site] * g[site] * det[site];
            }
            Ok(acc * cell)
        };
        // integration nodes: clipped sample times plus the window ends
        let mut nodes: Vec<T> = vec![a];
        for (t, _) in samples.iter() {
            if *t > a + real::<T>(1e-12) && *t < b - real::<T>(1e-12) {
                nodes.push(*t);
            }
        }
        nodes.push(b);
        let mut integral = T::zero();
        let mut prev_t = nodes[0];
        let mut prev_v = value_at(prev_t)?;
        for &t in &nodes[1..] {
            let v = value_at(t)?;
            integral += (v + prev_v) * (t - prev_t) * real::<T>(0.5);
            prev_t = t;
            prev_v = v;
        }
        phi.push(r * r * integral);
    }

    // verdict: Φ(r₁) ≤ C e^{C(r₂−r₁)} Φ(r₂) + C(r₂²−r₁²) YM(0) + C R^{2−2n} ∫_{P_R}|F|²
    let ym0 = traj.records.first().map(|rec| rec.ym).unwrap_or(T::zero());
    let p_r_energy = {
        let mask = ball_mask(geom, x0, big_r);
        let (lo, hi) = (t0 - big_r * big_r, t0 + big_r * big_r);
        let samples = &traj.energy_fields;
        let mut acc = T::zero();
        let mut prev: Option<(T, T)> = None;
        for (t, e) in samples.iter() {
            if *t < lo || *t > hi {
                continue;
            }
            let v = masked_energy_integral(geom, metric, e, &mask);
            if let Some((pt, pv)) = prev {
                acc += (v + pv) * (*t - pt) * real::<T>(0.5);
            }
            prev = Some((*t, v));
        }
        acc
    };
    let n = geom.complex_dim();
    let r_term = calib_c * big_r.powi(2 - 2 * n as i32) * p_r_energy;
    let mut verdict = true;
    let mut worst = T::neg_infinity();
    for i in 0..rs.len() {
        for j in i + 1..rs.len() {
            let (r1, r2) = (rs[i], rs[j]);
            let bound = calib_c * (calib_c * (r2 - r1)).exp() * phi[j]
                + calib_c * (r2 * r2 - r1 * r1) * ym0
                + r_term;
            let margin = phi[i] - bound;
            if margin > worst {
                worst = margin;
            }
            if margin > T::zero() {
                verdict = false;
            }
        }
    }

    let phi_normalized: Vec<T> = rs
        .iter()
        .zip(&phi)
        .map(|(&r, &p)| p / (r * r * r * r))
        .collect();
    Ok(PhiReport {
        rs,
        phi,
        phi_normalized,
        verdict,
        worst_margin: worst,
    })
}

/// Per-site scaled local energy r^{4−2n} ∫_{B_r(x)} e dV and its ε₁ mask.
pub struct DensityMap<T: Scalar> {
    pub r: T,
    pub eps1: T,
    pub values: Vec<T>,
    pub mask: Vec<bool>,
}

impl<T: Scalar> DensityMap<T> {
    pub fn exceedances(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Scaled-density scan of an energy density via exact cyclic convolution
/// with the ball indicator.
pub fn density_scan_energy<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    energy: &[T],
    r: T,
    eps1: T,
) -> Result<DensityMap<T>> {
    if r > geom.injectivity_radius() {
        return Err(CoreError::GeometryDomain(
            "density radius exceeds the injectivity radius".into(),
        ));
    }
    let sites = geom.site_count();
    let det = metric.det();
    let cell = geom.cell_volume();
    let mut weighted: Vec<Cplx<T>> = (0..sites)
        .map(|s| Complex::new(energy[s] * det[s] * cell, T::zero()))
        .collect();
    let origin = vec![T::zero(); geom.real_dim()];
    let mut indicator: Vec<Cplx<T>> = (0..sites)
        .map(|s| {
            if geom.distance(&geom.position(s), &origin) <= r {
                Complex::new(T::one(), T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        })
        .collect();
    geom.fft_forward(&mut weighted);
    geom.fft_forward(&mut indicator);
    for (w, i) in weighted.iter_mut().zip(&indicator) {
        *w *= *i;
    }
    geom.fft_inverse(&mut weighted);
    let n = geom.complex_dim();
    let scale = r.powi(4 - 2 * n as i32);
    let values: Vec<T> = weighted
        .iter()
        .map(|v| {
            let x = v.re * scale;
            if x > T::zero() {
                x
            } else {
                T::zero()
            }
        })
        .collect();
    let mask = values.iter().map(|&v| v >= eps1).collect();
    Ok(DensityMap {
        r,
        eps1,
        values,
        mask,
    })
}

/// Density scan of a curvature field (e = |F|² with the supplied pairing).
pub fn density_scan<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    h_pair: Option<(&FormField<T>, &FormField<T>)>,
    f11: &FormField<T>,
    r: T,
    eps1: T,
) -> Result<DensityMap<T>> {
    let energy = pointwise_norm_sq(metric, h_pair, f11);
    density_scan_energy(geom, metric, &energy, r, eps1)
}

/// sup-distance of an endomorphism field from its volume average: the
/// cluster-gap cushion. At an irreducible Einstein limit this equals the
/// Einstein residual; at a split limit it vanishes while sup‖iΛF − λId‖
/// stays at the block-gap scale.
pub fn constancy_residual<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    h_pair: Option<(&FormField<T>, &FormField<T>)>,
    field: &FormField<T>,
) -> T {
    let rank = field.rank();
    let det = metric.det();
    let vol = metric.total_volume(geom);
    let cell = geom.cell_volume();
    let mut mean = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    for i in 0..rank {
        for j in 0..rank {
            let lane = field.lane(0, i, j);
            let mut acc = Complex::new(T::zero(), T::zero());
            for (site, v) in lane.iter().enumerate() {
                acc += v.scale(det[site]);
            }
            mean[i * rank + j] = acc.scale(cell / vol);
        }
    }
    let mut dev = field.clone();
    for i in 0..rank {
        for j in 0..rank {
            let m = mean[i * rank + j];
            for v in dev.lane_mut(0, i, j) {
                *v -= m;
            }
        }
    }
    crate::geometry::real::sup_norm(metric, h_pair, &dev)
}

/// Cushion for the cluster-gap threshold of a flow state: the constancy
/// residual of iΛF plus sup|D_A ΛF| (unit-length scaled). Both vanish only
/// at genuinely split or irreducible limits; a not-yet-decayed extension
/// keeps a large covariant term and is reported as a single cluster.
pub fn cluster_cushion<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    state: &FlowState<T>,
) -> Result<T> {
    let ctx = context(geom, metric, state)?;
    let h_pair = Some((&ctx.h, &ctx.h_inv));
    let i_lam_f = ctx.lambda_f.scaled(imag_unit::<T>());
    let constancy = constancy_residual(geom, metric, h_pair, &i_lam_f);
    let v10 = pointwise_norm_sq(metric, h_pair, &ctx.velocity.pq10);
    let v01 = pointwise_norm_sq(metric, h_pair, &ctx.velocity.pq01);
    let mut sup_cov = T::zero();
    for site in 0..geom.site_count() {
        let v = (v10[site] + v01[site]).sqrt();
        if v > sup_cov {
            sup_cov = v;
        }
    }
    Ok(constancy + sup_cov)
}

#[derive(Debug, Clone)]
pub struct Cluster<T: Scalar> {
    pub center: T,
    pub multiplicity: usize,
    pub spread: T,
}

/// Pool the pointwise spectrum of an H-selfadjoint endomorphism field over
/// all sites and split it at gaps above
///   0.2·(λ_max − λ_min) + 10·cushion
/// (or the supplied override). The cushion should measure the distance to
/// the locally constant limit (`constancy_residual`); at an irreducible
/// Einstein limit it coincides with the Einstein residual. Clusters are
/// returned descending by center; multiplicity is the per-site eigenvalue
/// count of each cluster.
pub fn eigenvalue_clustering<T: Scalar>(
    field: &FormField<T>,
    h: Option<&FormField<T>>,
    cushion: T,
    gap_override: Option<T>,
) -> Result<Vec<Cluster<T>>> {
    let rank = field.rank();
    let sites = field.sites();
    let mut pool: Vec<T> = Vec::with_capacity(rank * sites);
    let mut m = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut hbuf = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    for site in 0..sites {
        for i in 0..rank {
            for j in 0..rank {
                m[i * rank + j] = field.at(0, i, j, site);
            }
        }
        let evs = match h {
            None => {
                // symmetrize against round-off
                let mut herm = m.clone();
                for i in 0..rank {
                    for j in 0..rank {
                        herm[i * rank + j] =
                            (m[i * rank + j] + m[j * rank + i].conj()).scale(real::<T>(0.5));
                    }
                }
                linalg::eig_hermitian(rank, &herm).0
            }
            Some(hf) => {
                for i in 0..rank {
                    for j in 0..rank {
                        hbuf[i * rank + j] = hf.at(0, i, j, site);
                    }
                }
                linalg::eig_h_selfadjoint(rank, &m, Some(&hbuf))?
            }
        };
        pool.extend(evs);
    }
    pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let range = *pool.last().unwrap() - pool[0];
    let gap = gap_override
        .unwrap_or(real::<T>(0.2) * range + real::<T>(10.0) * cushion + real::<T>(1e-12));

    let mut clusters = Vec::new();
    let mut start = 0usize;
    for k in 1..=pool.len() {
        if k == pool.len() || pool[k] - pool[k - 1] > gap {
            let slice = &pool[start..k];
            let mut sum = T::zero();
            for &v in slice {
                sum += v;
            }
            let center = sum / real::<T>(slice.len() as f64);
            clusters.push(Cluster {
                center,
                multiplicity: (slice.len() + sites / 2) / sites,
                spread: slice[slice.len() - 1] - slice[0],
            });
            start = k;
        }
    }
    clusters.sort_by(|a, b| b.center.partial_cmp(&a.center).unwrap());
    Ok(clusters)
}
