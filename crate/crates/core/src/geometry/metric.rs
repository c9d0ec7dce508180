//! Hermitian metric fields on the torus: g_{jk̄} per site with cached
//! inverse, determinant and the induced real Riemannian matrix, plus the
//! fundamental form, its powers, the Λ contraction and the torsion-class
//! residuals (Gauduchon / Astheno-Kähler / Kähler).

use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::geometry::forms::{wedge, FormField};
use crate::geometry::grid::{Dolbeault, GridGeometry};
use crate::geometry::real::{l2_norm, top_form_real_coefficient};
use crate::linalg::{mat_inverse, min_eig_hermitian};
use crate::scalar::{cplx, real, two_pi, Cplx, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    KahlerFlat,
    KahlerWarped,
    GauduchonNonkahler,
    /// Deliberately violates the Gauduchon condition; the discriminating
    /// counterexample for the torsion-cancellation checks.
    NonGauduchonBump,
}

pub struct MetricField<T: Scalar> {
    n: usize,
    sites: usize,
    g: Vec<Cplx<T>>,     // [j][k][site]
    g_inv: Vec<Cplx<T>>, // [j][k][site]
    det: Vec<T>,
    big_g_inv: Vec<T>, // [a][b][site], real 2n×2n inverse Riemannian matrix
    min_eig: T,
}

impl<T: Scalar> MetricField<T> {
    /// Build from per-site entries g[j][k][site]; validates Hermiticity and
    /// positivity.
    pub fn from_entries(geom: &GridGeometry<T>, g: Vec<Cplx<T>>) -> Result<Self> {
        let n = geom.complex_dim();
        let sites = geom.site_count();
        assert_eq!(g.len(), n * n * sites, "metric entry count");
        let axes = 2 * n;

        let mut g_inv = vec![Complex::new(T::zero(), T::zero()); n * n * sites];
        let mut det = vec![T::zero(); sites];
        let mut big_g_inv = vec![T::zero(); axes * axes * sites];
        let mut min_eig = T::infinity();

        let mut gs = vec![Complex::new(T::zero(), T::zero()); n * n];
        for site in 0..sites {
            for j in 0..n {
                for k in 0..n {
                    gs[j * n + k] = g[(j * n + k) * sites + site];
                }
            }
            // Hermiticity to round-off
            for j in 0..n {
                for k in 0..n {
                    let sym = (gs[j * n + k] - gs[k * n + j].conj()).norm();
                    if sym > real::<T>(1e-12) {
                        return Err(CoreError::NonPositive(format!(
                            "metric not Hermitian at site {site} (asymmetry {:e})",
                            sym.to_f64().unwrap_or(f64::NAN)
                        )));
                    }
                }
            }
            let me = min_eig_hermitian(n, &gs);
            if me <= T::zero() {
                return Err(CoreError::NonPositive(format!(
                    "metric loses positivity at site {site} (min eigenvalue {:e})",
                    me.to_f64().unwrap_or(f64::NAN)
                )));
            }
            if me < min_eig {
                min_eig = me;
            }
            let inv = mat_inverse(n, &gs)?;
            for j in 0..n {
                for k in 0..n {
                    g_inv[(j * n + k) * sites + site] = inv[j * n + k];
                }
            }
            det[site] = crate::linalg::mat_det(n, &gs).re;

            // Real Riemannian matrix G = Re(g dz ⊙ dz̄): flat g = Id ↔ Euclidean.
            let mut big_g = vec![T::zero(); axes * axes];
            for j in 0..n {
                for k in 0..n {
                    let a = gs[j * n + k].re;
                    let b = gs[j * n + k].im;
                    big_g[(2 * j) * axes + 2 * k] += a;
                    big_g[(2 * j + 1) * axes + 2 * k + 1] += a;
                    big_g[(2 * j) * axes + 2 * k + 1] += b;
                    big_g[(2 * j + 1) * axes + 2 * k] -= b;
                }
            }
            let big_c: Vec<Cplx<T>> = big_g
                .iter()
                .map(|&v| Complex::new(v, T::zero()))
                .collect();
            let big_inv = mat_inverse(axes, &big_c)?;
            for a in 0..axes {
                for b in 0..axes {
                    big_g_inv[(a * axes + b) * sites + site] = big_inv[a * axes + b].re;
                }
            }
        }

        Ok(MetricField {
            n,
            sites,
            g,
            g_inv,
            det,
            big_g_inv,
            min_eig,
        })
    }

    pub fn flat(geom: &GridGeometry<T>) -> Self {
        let n = geom.complex_dim();
        let sites = geom.site_count();
        let mut g = vec![Complex::new(T::zero(), T::zero()); n * n * sites];
        for j in 0..n {
            for s in 0..sites {
                g[(j * n + j) * sites + s] = Complex::new(T::one(), T::zero());
            }
        }
        Self::from_entries(geom, g).expect("flat metric valid")
    }

    pub fn complex_dim(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    #[inline]
    pub fn g_at(&self, j: usize, k: usize, site: usize) -> Cplx<T> {
        self.g[(j * self.n + k) * self.sites + site]
    }

    #[inline]
    pub fn g_inv_at(&self, j: usize, k: usize, site: usize) -> Cplx<T> {
        self.g_inv[(j * self.n + k) * self.sites + site]
    }

    pub fn det(&self) -> &[T] {
        &self.det
    }

    pub fn big_g_inv(&self) -> &[T] {
        &self.big_g_inv
    }

    pub fn min_eigenvalue(&self) -> T {
        self.min_eig
    }

    /// Largest eigenvalue of g⁻¹ over all sites (sets the parabolic CFL).
    pub fn max_inverse_eigenvalue(&self) -> T {
        let mut worst = T::zero();
        let n = self.n;
        let mut m = vec![Complex::new(T::zero(), T::zero()); n * n];
        for site in 0..self.sites {
            for j in 0..n {
                for k in 0..n {
                    m[j * n + k] = self.g_inv_at(j, k, site);
                }
            }
            let evs = crate::linalg::eig_hermitian(n, &m).0;
            let top = evs[n - 1];
            if top > worst {
                worst = top;
            }
        }
        worst
    }

    /// Fundamental form ω = (i/2) g_{jk̄} dz^j ∧ dz̄^k, normalized so that
    /// Λ_ω ω = n and the flat unit torus has volume one.
    pub fn omega(&self) -> FormField<T> {
        let n = self.n;
        let mut w = FormField::zeros(n, 1, 1, 1, self.sites);
        let half_i = cplx::<T>(0.0, 0.5);
        for j in 0..n {
            for k in 0..n {
                let comp = j * n + k;
                let dst = w.lane_mut(comp, 0, 0);
                for (site, v) in dst.iter_mut().enumerate() {
                    *v = half_i * self.g[(j * n + k) * self.sites + site];
                }
            }
        }
        w
    }

    /// Volume density det g (equals √det G; positive by construction).
    pub fn volume_density(&self) -> &[T] {
        &self.det
    }

    /// Total volume ∫ dV.
    pub fn total_volume(&self, geom: &GridGeometry<T>) -> T {
        geom.integrate_real(&self.det)
    }
}

/// ω^k / k! together with, at top degree, the positive scalar density of
/// ωⁿ/n! against dx^0∧…∧dx^{2n−1}.
pub fn wedge_power_volume<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    k: usize,
) -> Result<(FormField<T>, Option<Vec<T>>)> {
    let n = geom.complex_dim();
    if k > n {
        return Err(CoreError::DegreeOutOfRange(format!(
            "omega power {k} exceeds complex dimension {n}"
        )));
    }
    let mut pow = FormField::identity(n, 1, geom.site_count());
    let omega = metric.omega();
    let mut factorial = 1.0f64;
    for step in 1..=k {
        pow = wedge(&pow, &omega)?;
        factorial *= step as f64;
    }
    pow.scale(cplx::<T>(1.0 / factorial, 0.0));
    if k == n {
        let coeff = top_form_real_coefficient(&pow);
        let mut density = Vec::with_capacity(coeff.len());
        for (site, c) in coeff.iter().enumerate() {
            if c.im.abs() > real::<T>(1e-9) || c.re <= T::zero() {
                return Err(CoreError::NonPositive(format!(
                    "volume density not positive real at site {site}: {} + {}i",
                    c.re.to_f64().unwrap_or(f64::NAN),
                    c.im.to_f64().unwrap_or(f64::NAN)
                )));
            }
            density.push(c.re);
        }
        Ok((pow, Some(density)))
    } else {
        Ok((pow, None))
    }
}

/// Λ_ω on a (1,1) form: −2i g^{k̄j} φ_{jk̄}, the fast path anchored by
/// Λ_ω ω = n. Errors on non-(1,1) input; `lambda_general` covers the rest.
pub fn lambda_contract<T: Scalar>(
    metric: &MetricField<T>,
    phi: &FormField<T>,
) -> Result<FormField<T>> {
    if phi.degree() != (1, 1) {
        return Err(CoreError::DegreeOutOfRange(format!(
            "lambda_contract expects a (1,1) form, got {:?}",
            phi.degree()
        )));
    }
    let n = metric.n;
    let rank = phi.rank();
    let sites = phi.sites();
    let mut out = FormField::zeros(n, 0, 0, rank, sites).with_twist(phi.twist().to_vec());
    let m2i = cplx::<T>(0.0, -2.0);
    for j in 0..n {
        for k in 0..n {
            let comp = j * n + k;
            for row in 0..rank {
                for col in 0..rank {
                    let src = phi.lane(comp, row, col).to_vec();
                    let dst = out.lane_mut(0, row, col);
                    for (site, d) in dst.iter_mut().enumerate() {
                        // g^{k̄j} = (g⁻¹)[k][j]
                        *d += m2i * metric.g_inv_at(k, j, site) * src[site];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// L² residuals of the three torsion classes: (‖∂∂̄ω^{n−1}‖, ‖∂∂̄ω^{n−2}‖,
/// ‖dω‖). Degenerate powers (n ≤ 2) are zero by convention.
pub fn metric_condition_check<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
) -> Result<(T, T, T)> {
    let n = geom.complex_dim();
    let omega = metric.omega();

    let ddbar_norm = |power: usize| -> Result<T> {
        let (w, _) = wedge_power_volume(geom, metric, power)?;
        let db = crate::geometry::forms::dolbeault_derivative(
            geom,
            &w,
            Dolbeault::Antiholomorphic,
        )?;
        let ddb = crate::geometry::forms::dolbeault_derivative(geom, &db, Dolbeault::Holomorphic)?;
        Ok(l2_norm(geom, metric, None, &ddb))
    };

    let gauduchon = if n >= 2 { ddbar_norm(n - 1)? } else { T::zero() };
    let astheno = if n >= 3 { ddbar_norm(n - 2)? } else { T::zero() };

    let d_omega_h =
        crate::geometry::forms::dolbeault_derivative(geom, &omega, Dolbeault::Holomorphic)?;
    let d_omega_a =
        crate::geometry::forms::dolbeault_derivative(geom, &omega, Dolbeault::Antiholomorphic)?;
    let nh = l2_norm(geom, metric, None, &d_omega_h);
    let na = l2_norm(geom, metric, None, &d_omega_a);
    let kahler = (nh * nh + na * na).sqrt();

    Ok((gauduchon, astheno, kahler))
}

/// Single complex Fourier mode e^{2πi m·x} as a scalar lane.
pub fn mode_lane<T: Scalar>(geom: &GridGeometry<T>, mode: &[i32]) -> Vec<Cplx<T>> {
    mode_lane_with_phase(geom, mode, 0.0)
}

/// Fourier mode with a constant phase offset: e^{i(2π m·x + φ)}.
pub fn mode_lane_with_phase<T: Scalar>(
    geom: &GridGeometry<T>,
    mode: &[i32],
    offset: f64,
) -> Vec<Cplx<T>> {
    let axes = geom.real_dim();
    assert_eq!(mode.len(), axes, "mode vector length");
    let off = real::<T>(offset);
    (0..geom.site_count())
        .map(|site| {
            let x = geom.position(site);
            let mut phase = T::zero();
            for a in 0..axes {
                phase += real::<T>(mode[a] as f64) * x[a] / geom.periods()[a];
            }
            phase = phase * two_pi::<T>() + off;
            Complex::new(phase.cos(), phase.sin())
        })
        .collect()
}

/// Construct a certified test metric. Modes are fixed per kind; see
/// `make_test_metric_with_mode` to override.
pub fn make_test_metric<T: Scalar>(
    geom: &GridGeometry<T>,
    kind: MetricKind,
    amplitude: T,
) -> Result<MetricField<T>> {
    let default_mode: Vec<i32> = match (kind, geom.complex_dim()) {
        (MetricKind::KahlerFlat, _) => vec![0; geom.real_dim()],
        (_, 1) => vec![1, 0],
        (MetricKind::NonGauduchonBump, 2) => vec![1, 0, 1, 0],
        (_, 2) => vec![1, 0, 0, 0],
        _ => vec![0; geom.real_dim()],
    };
    make_test_metric_with_mode(geom, kind, amplitude, &default_mode)
}

pub fn make_test_metric_with_mode<T: Scalar>(
    geom: &GridGeometry<T>,
    kind: MetricKind,
    amplitude: T,
    mode: &[i32],
) -> Result<MetricField<T>> {
    let n = geom.complex_dim();
    let sites = geom.site_count();
    let mut g = vec![Complex::new(T::zero(), T::zero()); n * n * sites];
    for j in 0..n {
        for s in 0..sites {
            g[(j * n + j) * sites + s] = Complex::new(T::one(), T::zero());
        }
    }

    match kind {
        MetricKind::KahlerFlat => {}
        MetricKind::KahlerWarped => {
            if n == 1 {
                // any conformal factor is Kähler in complex dimension one
                let lane = mode_lane(geom, mode);
                for s in 0..sites {
                    g[s] = Complex::new(T::one() + amplitude * lane[s].re, T::zero());
                }
            } else {
                // g = Id + amplitude · ∂∂̄ψ for a real potential ψ: dω = 0 exactly
                let lane = mode_lane(geom, mode);
                let psi: Vec<Cplx<T>> = lane.iter().map(|v| Complex::new(v.re, T::zero())).collect();
                let mut psi_field = FormField::<T>::zeros(n, 0, 0, 1, sites);
                psi_field.lane_mut(0, 0, 0).copy_from_slice(&psi);
                let dp = crate::geometry::forms::dolbeault_derivative(
                    geom,
                    &psi_field,
                    Dolbeault::Holomorphic,
                )?;
                let ddp = crate::geometry::forms::dolbeault_derivative(
                    geom,
                    &dp,
                    Dolbeault::Antiholomorphic,
                )?;
                // g += amp·∂∂̄ψ with ∂∂̄ψ = −∂̄∂ψ, rescaled so `amplitude`
                // bounds the sup of the perturbation entries.
                let peak = ddp.max_abs();
                let scale = if peak > T::zero() {
                    amplitude / peak
                } else {
                    T::zero()
                };
                for j in 0..n {
                    for k in 0..n {
                        let comp = j * n + k;
                        let lane = ddp.lane(comp, 0, 0);
                        for s in 0..sites {
                            g[(j * n + k) * sites + s] -= lane[s].scale(scale);
                        }
                    }
                }
            }
        }
        MetricKind::GauduchonNonkahler | MetricKind::NonGauduchonBump => {
            if n != 2 {
                return Err(CoreError::GeometryDomain(
                    "torsion test metrics need complex dimension 2".into(),
                ));
            }
            if kind == MetricKind::GauduchonNonkahler && (mode[2] != 0 || mode[3] != 0) {
                return Err(CoreError::GeometryDomain(
                    "gauduchon mode must live in the first coordinate plane".into(),
                ));
            }
            // ω += amplitude · i(f dz^0∧dz̄^1 + f̄ dz^1∧dz̄^0): exactly ∂∂̄-closed
            // when f depends only on the first complex plane, never d-closed.
            let lane = mode_lane(geom, mode);
            let two_amp = amplitude * real::<T>(2.0);
            for s in 0..sites {
                g[sites + s] = lane[s].scale(two_amp); // g_{01}
                g[(n) * sites + s] = lane[s].conj().scale(two_amp); // g_{10}
            }
        }
    }

    MetricField::from_entries(geom, g)
}
