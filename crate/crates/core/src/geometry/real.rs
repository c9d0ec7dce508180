//! Real-coordinate form calculus: expansion of (p,q)-forms in the dx basis,
//! Gram inner products against the Riemannian metric induced by g, and the
//! C-linear Hodge star.
//!
//! Conventions (anchored by the tests): z^j = x^{2j} + i x^{2j+1}, the
//! Riemannian matrix is G = Re(g_{jk̄} dz^j ⊙ dz̄^k) so a flat g = Id gives
//! the Euclidean metric, √det G = det g, and the fundamental form
//! ω = (i/2) g_{jk̄} dz^j ∧ dz̄^k has |ω|² = n and unit flat volume.

use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::geometry::forms::{merge_sign, multi_indices, FormField, FormShape};
use crate::geometry::grid::GridGeometry;
use crate::geometry::metric::MetricField;
use crate::linalg::{mat_inverse, mat_mul};
use crate::scalar::{real, Cplx, Scalar};

/// A complex-coefficient form over increasing real multi-indices dx^A.
pub struct RealFormField<T: Scalar> {
    pub k: usize,
    pub axes: usize,
    pub rank: usize,
    pub sites: usize,
    pub comps: Vec<Vec<u8>>,
    pub data: Vec<Cplx<T>>, // [comp][row][col][site]
}

impl<T: Scalar> RealFormField<T> {
    pub fn zeros(axes: usize, k: usize, rank: usize, sites: usize) -> Self {
        let comps = multi_indices(axes, k);
        let len = comps.len() * rank * rank * sites;
        RealFormField {
            k,
            axes,
            rank,
            sites,
            comps,
            data: vec![Complex::new(T::zero(), T::zero()); len],
        }
    }

    #[inline]
    pub fn lane_offset(&self, comp: usize, row: usize, col: usize) -> usize {
        ((comp * self.rank + row) * self.rank + col) * self.sites
    }

    #[inline]
    pub fn lane(&self, comp: usize, row: usize, col: usize) -> &[Cplx<T>] {
        let o = self.lane_offset(comp, row, col);
        &self.data[o..o + self.sites]
    }

    #[inline]
    pub fn lane_mut(&mut self, comp: usize, row: usize, col: usize) -> &mut [Cplx<T>] {
        let o = self.lane_offset(comp, row, col);
        &mut self.data[o..o + self.sites]
    }
}

/// Sparse expansion of one dz^J ∧ dz̄^K basis element over the dx basis.
fn expand_basis_element<T: Scalar>(
    axes: usize,
    hol: &[u8],
    anti: &[u8],
) -> Vec<(usize, Cplx<T>)> {
    let k = hol.len() + anti.len();
    let comps = multi_indices(axes, k);
    // covectors in wedge order: dz^j = e_{2j} + i e_{2j+1}, dz̄^j = e_{2j} − i e_{2j+1}
    let mut covs: Vec<[(u8, Cplx<T>); 2]> = Vec::with_capacity(k);
    let i_unit = Complex::new(T::zero(), T::one());
    let one = Complex::new(T::one(), T::zero());
    for &j in hol {
        covs.push([(2 * j, one), (2 * j + 1, i_unit)]);
    }
    for &j in anti {
        covs.push([(2 * j, one), (2 * j + 1, -i_unit)]);
    }
    // expand the product, keeping (sorted axes, sign-adjusted coefficient)
    let mut terms: Vec<(Vec<u8>, Cplx<T>)> = vec![(Vec::new(), one)];
    for cov in &covs {
        let mut next = Vec::with_capacity(terms.len() * 2);
        for (list, coeff) in &terms {
            for (ax, c) in cov {
                if list.contains(ax) {
                    continue;
                }
                // the new covector wedges from the right: sort [list…, ax]
                if let Some((sign, merged)) = merge_sign(list, &[*ax]) {
                    let sgn = if sign > 0 { T::one() } else { -T::one() };
                    next.push((merged, (*coeff * *c).scale(sgn)));
                }
            }
        }
        terms = next;
    }
    let mut out: Vec<(usize, Cplx<T>)> = Vec::new();
    for (list, coeff) in terms {
        let idx = comps
            .iter()
            .position(|c| c.as_slice() == list.as_slice())
            .expect("expanded multi-index present");
        match out.iter_mut().find(|(i, _)| *i == idx) {
            Some((_, acc)) => *acc += coeff,
            None => out.push((idx, coeff)),
        }
    }
    out
}

/// Expansion table for one (p,q) shape: per complex component, the sparse
/// real-component coefficients.
pub fn expansion_table<T: Scalar>(shape: &FormShape) -> Vec<Vec<(usize, Cplx<T>)>> {
    (0..shape.comp_count())
        .map(|c| {
            let (h, a) = shape.comp(c);
            expand_basis_element(2 * shape.n, h, a)
        })
        .collect()
}

/// Expand a (p,q) field into real-coordinate components.
pub fn expand_to_real<T: Scalar>(field: &FormField<T>) -> RealFormField<T> {
    let shape = field.shape();
    let axes = 2 * shape.n;
    let k = shape.p + shape.q;
    let mut out = RealFormField::zeros(axes, k, field.rank(), field.sites());
    let table = expansion_table::<T>(shape);
    for (c, entries) in table.iter().enumerate() {
        for row in 0..field.rank() {
            for col in 0..field.rank() {
                let src = field.lane(c, row, col).to_vec();
                for &(rc, coeff) in entries {
                    let dst = out.lane_mut(rc, row, col);
                    for (d, s) in dst.iter_mut().zip(&src) {
                        *d += *s * coeff;
                    }
                }
            }
        }
    }
    out
}

/// All bidegrees with p+q = k at complex dimension n.
pub fn bidegrees(n: usize, k: usize) -> Vec<(usize, usize)> {
    (0..=k.min(n))
        .rev()
        .filter(|&p| k - p <= n)
        .map(|p| (p, k - p))
        .collect()
}

/// Split a real k-form into its (p,q) parts.
pub fn project_parts<T: Scalar>(
    n: usize,
    real_field: &RealFormField<T>,
) -> Vec<((usize, usize), FormField<T>)> {
    let k = real_field.k;
    let parts = bidegrees(n, k);
    let shapes: Vec<FormShape> = parts.iter().map(|&(p, q)| FormShape::new(n, p, q)).collect();
    let dim = real_field.comps.len();
    let total_complex: usize = shapes.iter().map(|s| s.comp_count()).sum();
    assert_eq!(dim, total_complex, "bidegree decomposition must be square");

    // columns: complex basis elements across all parts; rows: real comps
    let mut m = vec![Complex::new(T::zero(), T::zero()); dim * dim];
    let mut col = 0usize;
    for shape in &shapes {
        let table = expansion_table::<T>(shape);
        for entries in &table {
            for &(rc, coeff) in entries {
                m[rc * dim + col] = coeff;
            }
            col += 1;
        }
    }
    let m_inv = mat_inverse(dim, &m).expect("basis change invertible");

    let rank = real_field.rank;
    let sites = real_field.sites;
    let mut out: Vec<((usize, usize), FormField<T>)> = parts
        .iter()
        .map(|&(p, q)| ((p, q), FormField::zeros(n, p, q, rank, sites)))
        .collect();
    for row in 0..rank {
        for colm in 0..rank {
            // complex_coeff[c] = Σ_rc m_inv[c][rc] · real_coeff[rc]
            for c_global in 0..dim {
                // locate target part and local component
                let mut remaining = c_global;
                let mut part_idx = 0usize;
                while remaining >= shapes[part_idx].comp_count() {
                    remaining -= shapes[part_idx].comp_count();
                    part_idx += 1;
                }
                let mut acc = vec![Complex::new(T::zero(), T::zero()); sites];
                for rc in 0..dim {
                    let coeff = m_inv[c_global * dim + rc];
                    if coeff.norm_sqr() == T::zero() {
                        continue;
                    }
                    let lane = real_field.lane(rc, row, colm);
                    for (a, s) in acc.iter_mut().zip(lane) {
                        *a += *s * coeff;
                    }
                }
                let dst = out[part_idx].1.lane_mut(remaining, row, colm);
                dst.copy_from_slice(&acc);
            }
        }
    }
    out
}

/// Determinant of the k×k minor G^{-1}[a_i][b_j] (Gram of raised indices).
fn gram_det<T: Scalar>(ginv: &[T], axes: usize, a: &[u8], b: &[u8]) -> T {
    let k = a.len();
    match k {
        0 => T::one(),
        1 => ginv[a[0] as usize * axes + b[0] as usize],
        2 => {
            let g = |i: usize, j: usize| ginv[a[i] as usize * axes + b[j] as usize];
            g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0)
        }
        3 => {
            let g = |i: usize, j: usize| ginv[a[i] as usize * axes + b[j] as usize];
            g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1))
                - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0))
        }
        4 => {
            // Laplace along the first row
            let mut acc = T::zero();
            for c in 0..4 {
                let sub_a = &[a[1], a[2], a[3]];
                let mut sub_b = [0u8; 3];
                let mut w = 0;
                for (j, &bj) in b.iter().enumerate() {
                    if j != c {
                        sub_b[w] = bj;
                        w += 1;
                    }
                }
                let minor = gram_det(ginv, axes, sub_a, &sub_b);
                let v = ginv[a[0] as usize * axes + b[c] as usize] * minor;
                if c % 2 == 0 {
                    acc += v;
                } else {
                    acc -= v;
                }
            }
            acc
        }
        _ => unreachable!("forms of degree > 4 do not occur"),
    }
}

/// C-linear Hodge star of a (p,q) field: returns the (n−q, n−p) part.
pub fn hodge_star<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    field: &FormField<T>,
) -> Result<FormField<T>> {
    let n = geom.complex_dim();
    let axes = 2 * n;
    let (p, q) = field.degree();
    if p > n || q > n {
        return Err(CoreError::DegreeOutOfRange(format!("star of ({p},{q})")));
    }
    let k = p + q;
    let k_out = axes - k;
    let rank = field.rank();
    let sites = field.sites();

    let real_in = expand_to_real(field);
    let mut real_out = RealFormField::<T>::zeros(axes, k_out, rank, sites);

    // per input comp B (increasing): complement C with permutation sign
    let in_comps = real_in.comps.clone();
    let mut complement: Vec<(usize, T)> = Vec::with_capacity(in_comps.len());
    for b in &in_comps {
        let c: Vec<u8> = (0..axes as u8).filter(|ax| !b.contains(ax)).collect();
        let (sign, _) = merge_sign(b, &c).expect("disjoint complement");
        let ci = real_out
            .comps
            .iter()
            .position(|x| x.as_slice() == c.as_slice())
            .unwrap();
        complement.push((ci, if sign > 0 { T::one() } else { -T::one() }));
    }

    let ginv = metric.big_g_inv();
    let det = metric.det();
    for site in 0..sites {
        let gsite: Vec<T> = (0..axes * axes)
            .map(|e| ginv[e * sites + site])
            .collect();
        let sqrt_det_g = det[site]; // √det G = det g for Hermitian g
        for (bi, b) in in_comps.iter().enumerate() {
            // raised coefficient α^B = Σ_A det(G^{-1}[B,A]) α_A
            let (ci, sign) = complement[bi];
            for (ai, a) in in_comps.iter().enumerate() {
                let w = gram_det(&gsite, axes, b, a) * sqrt_det_g * sign;
                if w == T::zero() {
                    continue;
                }
                for row in 0..rank {
                    for col in 0..rank {
                        let v = real_in.data[real_in.lane_offset(ai, row, col) + site];
                        let o = real_out.lane_offset(ci, row, col) + site;
                        real_out.data[o] += v.scale(w);
                    }
                }
            }
        }
    }

    let parts = project_parts(n, &real_out);
    let target = (n - q, n - p);
    let mut result = None;
    for ((pp, qq), part) in parts {
        if (pp, qq) == target {
            result = Some(part);
        } else {
            debug_assert!(
                part.max_abs() < real::<T>(1e-8) * (field.max_abs() + T::one()),
                "star leaked into ({pp},{qq})"
            );
        }
    }
    Ok(result.expect("target bidegree present"))
}

/// Pointwise Hermitian inner product density  ⟨a,b⟩(x)  of two same-degree
/// fields, using the form Gram of G and the endomorphism trace weighted by
/// an optional bundle metric (h, h⁻¹); None means the plain trace pairing.
pub fn pointwise_inner<T: Scalar>(
    metric: &MetricField<T>,
    h_pair: Option<(&FormField<T>, &FormField<T>)>,
    a: &FormField<T>,
    b: &FormField<T>,
) -> Vec<Cplx<T>> {
    assert!(a.same_shape(b), "inner product of mismatched shapes");
    let n = a.shape().n;
    let axes = 2 * n;
    let rank = a.rank();
    let sites = a.sites();
    let ra = expand_to_real(a);
    let rb = expand_to_real(b);
    let ginv = metric.big_g_inv();
    let ncomp = ra.comps.len();
    let mut out = vec![Complex::new(T::zero(), T::zero()); sites];

    let mut ha = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut hb = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut tmp = vec![Complex::new(T::zero(), T::zero()); rank * rank];
    let mut tmp2 = vec![Complex::new(T::zero(), T::zero()); rank * rank];

    for site in 0..sites {
        let gsite: Vec<T> = (0..axes * axes)
            .map(|e| ginv[e * sites + site])
            .collect();
        let mut acc = Complex::new(T::zero(), T::zero());
        for ca in 0..ncomp {
            for cb in 0..ncomp {
                let w = gram_det(&gsite, axes, &ra.comps[ca], &rb.comps[cb]);
                if w == T::zero() {
                    continue;
                }
                // tr(A · H⁻¹ B† H), or tr(A B†) without a bundle metric
                for i in 0..rank {
                    for j in 0..rank {
                        ha[i * rank + j] = ra.data[ra.lane_offset(ca, i, j) + site];
                        hb[i * rank + j] = rb.data[rb.lane_offset(cb, i, j) + site];
                    }
                }
                let t = match h_pair {
                    None => {
                        let mut s = Complex::new(T::zero(), T::zero());
                        for i in 0..rank {
                            for j in 0..rank {
                                s += ha[i * rank + j] * hb[i * rank + j].conj();
                            }
                        }
                        s
                    }
                    Some((h, hinv)) => {
                        // B† H
                        for i in 0..rank {
                            for j in 0..rank {
                                tmp[i * rank + j] = hb[j * rank + i].conj();
                            }
                        }
                        let hsite: Vec<Cplx<T>> = (0..rank * rank)
                            .map(|e| h.data()[e * sites + site])
                            .collect();
                        let hinvsite: Vec<Cplx<T>> = (0..rank * rank)
                            .map(|e| hinv.data()[e * sites + site])
                            .collect();
                        mat_mul(rank, &tmp, &hsite, &mut tmp2);
                        mat_mul(rank, &hinvsite, &tmp2, &mut tmp);
                        let mut s = Complex::new(T::zero(), T::zero());
                        for i in 0..rank {
                            let mut diag = Complex::new(T::zero(), T::zero());
                            for j in 0..rank {
                                diag += ha[i * rank + j] * tmp[j * rank + i];
                            }
                            s += diag;
                        }
                        s
                    }
                };
                acc += t.scale(w);
            }
        }
        out[site] = acc;
    }
    out
}

/// Pointwise squared norm density (real part of the self inner product).
pub fn pointwise_norm_sq<T: Scalar>(
    metric: &MetricField<T>,
    h_pair: Option<(&FormField<T>, &FormField<T>)>,
    a: &FormField<T>,
) -> Vec<T> {
    pointwise_inner(metric, h_pair, a, a)
        .iter()
        .map(|v| if v.re > T::zero() { v.re } else { T::zero() })
        .collect()
}

/// Weighted L² inner product  ∫ ⟨a,b⟩ dV  with dV = det g · cell.
pub fn l2_inner<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    h_pair: Option<(&FormField<T>, &FormField<T>)>,
    a: &FormField<T>,
    b: &FormField<T>,
) -> Cplx<T> {
    let density = pointwise_inner(metric, h_pair, a, b);
    let det = metric.det();
    let mut acc = Complex::new(T::zero(), T::zero());
    for (site, v) in density.iter().enumerate() {
        acc += v.scale(det[site]);
    }
    acc.scale(geom.cell_volume())
}

pub fn l2_norm<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    h_pair: Option<(&FormField<T>, &FormField<T>)>,
    a: &FormField<T>,
) -> T {
    let v = l2_inner(geom, metric, h_pair, a, a).re;
    if v > T::zero() {
        v.sqrt()
    } else {
        T::zero()
    }
}

pub fn sup_norm<T: Scalar>(
    metric: &MetricField<T>,
    h_pair: Option<(&FormField<T>, &FormField<T>)>,
    a: &FormField<T>,
) -> T {
    pointwise_norm_sq(metric, h_pair, a)
        .iter()
        .fold(T::zero(), |m, &v| {
            let s = v.sqrt();
            if s > m {
                s
            } else {
                m
            }
        })
}

/// General Λ_ω as the pointwise adjoint of ω∧ against the Gram inner
/// products: (p,q) → (p−1,q−1). Degenerate degrees return zero.
pub fn lambda_general<T: Scalar>(
    geom: &GridGeometry<T>,
    metric: &MetricField<T>,
    field: &FormField<T>,
) -> FormField<T> {
    let n = geom.complex_dim();
    let (p, q) = field.degree();
    let rank = field.rank();
    let sites = field.sites();
    if p == 0 || q == 0 {
        return FormField::zeros(n, p.saturating_sub(1), q.saturating_sub(1), rank, sites);
    }
    let shape_lo = FormShape::new(n, p - 1, q - 1);
    let shape_hi = FormShape::new(n, p, q);
    let dim_lo = shape_lo.comp_count();
    let dim_hi = shape_hi.comp_count();
    let table_lo = expansion_table::<T>(&shape_lo);
    let table_hi = expansion_table::<T>(&shape_hi);
    let comps_lo = multi_indices(2 * n, p + q - 2);
    let comps_hi = multi_indices(2 * n, p + q);
    let axes = 2 * n;
    let ginv = metric.big_g_inv();
    let omega = metric.omega();

    let mut out = FormField::zeros(n, p - 1, q - 1, rank, sites);
    // workspaces
    let mut w_lo = vec![Complex::new(T::zero(), T::zero()); dim_lo * dim_lo];
    let mut w_hi = vec![Complex::new(T::zero(), T::zero()); dim_hi * dim_hi];
    let mut l_mat = vec![Complex::new(T::zero(), T::zero()); dim_hi * dim_lo];

    // wedge sign bookkeeping for ω ∧ e_lo: ω comp (j,k) against lo comp (J,K)
    let omega_shape = FormShape::new(n, 1, 1);

    for site in 0..sites {
        let gsite: Vec<T> = (0..axes * axes)
            .map(|e| ginv[e * sites + site])
            .collect();
        // Transposed Gram M[c][d] = ⟨e_d, e_c⟩: the adjoint solve below pairs
        // the conjugated slot with the row index.
        let fill_w = |table: &Vec<Vec<(usize, Cplx<T>)>>,
                      comps: &Vec<Vec<u8>>,
                      dim: usize,
                      w: &mut Vec<Cplx<T>>| {
            for c in 0..dim {
                for d in 0..dim {
                    let mut acc = Complex::new(T::zero(), T::zero());
                    for &(ra, ea) in &table[c] {
                        for &(rb, eb) in &table[d] {
                            let gd = gram_det(&gsite, axes, &comps[ra], &comps[rb]);
                            acc += ea.conj() * eb * Complex::new(gd, T::zero());
                        }
                    }
                    w[c * dim + d] = acc;
                }
            }
        };
        fill_w(&table_lo, &comps_lo, dim_lo, &mut w_lo);
        fill_w(&table_hi, &comps_hi, dim_hi, &mut w_hi);

        // Lω matrix: (ω ∧ e_lo[d]) expressed in hi components
        for v in l_mat.iter_mut() {
            *v = Complex::new(T::zero(), T::zero());
        }
        for oc in 0..omega_shape.comp_count() {
            let (oj, ok) = omega_shape.comp(oc);
            let oval = omega.at(oc, 0, 0, site);
            if oval.norm_sqr() == T::zero() {
                continue;
            }
            for d in 0..dim_lo {
                let (lj, lk) = shape_lo.comp(d);
                let Some((sj, mj)) = merge_sign(oj, lj) else {
                    continue;
                };
                let Some((sk, mk)) = merge_sign(ok, lk) else {
                    continue;
                };
                // sign from moving dz̄^ok past dz^lj (q1=1 over p2=|lj|)
                let cross = if (lj.len()) % 2 == 1 { -1 } else { 1 };
                let Some(hi_idx) = shape_hi.comp_index(&mj, &mk) else {
                    continue;
                };
                let sign = sj * sk * cross;
                let sgn = if sign > 0 { T::one() } else { -T::one() };
                l_mat[hi_idx * dim_lo + d] += oval.scale(sgn);
            }
        }

        // Λφ = W_lo⁻¹ Lω† W_hi φ  per endomorphism entry
        let w_lo_inv = mat_inverse(dim_lo, &w_lo).expect("gram positive definite");
        for row in 0..rank {
            for col in 0..rank {
                let phi: Vec<Cplx<T>> = (0..dim_hi)
                    .map(|c| field.at(c, row, col, site))
                    .collect();
                // y = W_hi φ
                let mut y = vec![Complex::new(T::zero(), T::zero()); dim_hi];
                for c in 0..dim_hi {
                    for d in 0..dim_hi {
                        y[c] += w_hi[c * dim_hi + d] * phi[d];
                    }
                }
                // z = Lω† y
                let mut z = vec![Complex::new(T::zero(), T::zero()); dim_lo];
                for d in 0..dim_lo {
                    for c in 0..dim_hi {
                        z[d] += l_mat[c * dim_lo + d].conj() * y[c];
                    }
                }
                // x = W_lo⁻¹ z
                for d in 0..dim_lo {
                    let mut acc = Complex::new(T::zero(), T::zero());
                    for e in 0..dim_lo {
                        acc += w_lo_inv[d * dim_lo + e] * z[e];
                    }
                    *out.at_mut(d, row, col, site) = acc;
                }
            }
        }
    }
    out
}

/// Coefficient of dx^0∧…∧dx^{2n−1} of a top-degree (n,n) field (rank 1).
pub fn top_form_real_coefficient<T: Scalar>(field: &FormField<T>) -> Vec<Cplx<T>> {
    let (p, q) = field.degree();
    let n = field.shape().n;
    assert!(p == n && q == n, "top-degree extraction needs an (n,n) form");
    assert_eq!(field.rank(), 1);
    let r = expand_to_real(field);
    assert_eq!(r.comps.len(), 1);
    r.lane(0, 0, 0).to_vec()
}

/// Integrate a top-degree (n,n) scalar form over the torus.
pub fn integrate_top_form<T: Scalar>(geom: &GridGeometry<T>, field: &FormField<T>) -> Cplx<T> {
    let coeff = top_form_real_coefficient(field);
    geom.integrate_lane(&coeff)
}
