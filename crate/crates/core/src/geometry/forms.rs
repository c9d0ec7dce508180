//! Endomorphism-valued (p,q)-forms on the discretized torus.
//!
//! A field stores the coefficients of  φ = Σ' φ_{JK̄} dz^J ∧ dz̄^K  over
//! strictly increasing multi-indices J (|J| = p) and K (|K| = q), one complex
//! lane per (component, row, col) with the site index fastest. Scalar fields
//! are rank 1. The optional flux twist marks quasi-periodic boundary phases:
//! twisted fields support algebra (twists add under wedge) but only the zero
//! section can be differentiated spectrally, since a nonzero-flux bundle has
//! no global periodic frame.

use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::geometry::grid::{Dolbeault, GridGeometry};
use crate::scalar::{Cplx, Scalar};

/// Strictly increasing k-element subsets of 0..n, lexicographic.
pub fn multi_indices(n: usize, k: usize) -> Vec<Vec<u8>> {
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cur: Vec<u8> = (0..k as u8).collect();
    loop {
        out.push(cur.clone());
        // advance combination
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < (n - k + i) as u8 {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
        if k == 0 {
            return out;
        }
    }
}

/// Sign of merging two disjoint increasing lists into one increasing list;
/// `None` when they share an index.
pub fn merge_sign(a: &[u8], b: &[u8]) -> Option<(i32, Vec<u8>)> {
    let mut merged = Vec::with_capacity(a.len() + b.len());
    let mut sign = 1i32;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && a[i] < b[j]) {
            merged.push(a[i]);
            i += 1;
        } else if i >= a.len() || b[j] < a[i] {
            // b[j] crosses the remaining a-entries
            if (a.len() - i) % 2 == 1 {
                sign = -sign;
            }
            merged.push(b[j]);
            j += 1;
        } else {
            return None;
        }
    }
    Some((sign, merged))
}

/// Insert a single index into an increasing list: (sign, position list).
pub fn insert_sign(j: u8, list: &[u8]) -> Option<(i32, Vec<u8>)> {
    merge_sign(&[j], list)
}

/// Component bookkeeping for a (p,q) degree at complex dimension n.
#[derive(Debug, Clone)]
pub struct FormShape {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub hol: Vec<Vec<u8>>,
    pub anti: Vec<Vec<u8>>,
}

impl FormShape {
    pub fn new(n: usize, p: usize, q: usize) -> Self {
        FormShape {
            n,
            p,
            q,
            hol: multi_indices(n, p),
            anti: multi_indices(n, q),
        }
    }

    pub fn comp_count(&self) -> usize {
        self.hol.len() * self.anti.len()
    }

    pub fn comp(&self, c: usize) -> (&[u8], &[u8]) {
        let na = self.anti.len();
        (&self.hol[c / na], &self.anti[c % na])
    }

    pub fn comp_index(&self, hol: &[u8], anti: &[u8]) -> Option<usize> {
        let hi = self.hol.iter().position(|h| h.as_slice() == hol)?;
        let ai = self.anti.iter().position(|a| a.as_slice() == anti)?;
        Some(hi * self.anti.len() + ai)
    }
}

#[derive(Clone)]
pub struct FormField<T: Scalar> {
    shape: FormShape,
    rank: usize,
    sites: usize,
    twist: Vec<i64>,
    data: Vec<Cplx<T>>,
}

impl<T: Scalar> std::fmt::Debug for FormField<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FormField")
            .field("p", &self.shape.p)
            .field("q", &self.shape.q)
            .field("rank", &self.rank)
            .field("sites", &self.sites)
            .field("twist", &self.twist)
            .finish()
    }
}

impl<T: Scalar> FormField<T> {
    pub fn zeros(n: usize, p: usize, q: usize, rank: usize, sites: usize) -> Self {
        let shape = FormShape::new(n, p, q);
        let len = shape.comp_count() * rank * rank * sites;
        FormField {
            shape,
            rank,
            sites,
            twist: vec![0; n],
            data: vec![Complex::new(T::zero(), T::zero()); len],
        }
    }

    pub fn zeros_like_degree(geom: &GridGeometry<T>, p: usize, q: usize, rank: usize) -> Self {
        Self::zeros(geom.complex_dim(), p, q, rank, geom.site_count())
    }

    pub fn with_twist(mut self, twist: Vec<i64>) -> Self {
        assert_eq!(twist.len(), self.shape.n);
        self.twist = twist;
        self
    }

    pub fn shape(&self) -> &FormShape {
        &self.shape
    }

    pub fn degree(&self) -> (usize, usize) {
        (self.shape.p, self.shape.q)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn twist(&self) -> &[i64] {
        &self.twist
    }

    pub fn is_twisted(&self) -> bool {
        self.twist.iter().any(|&t| t != 0)
    }

    pub fn comp_count(&self) -> usize {
        self.shape.comp_count()
    }

    #[inline]
    fn lane_offset(&self, comp: usize, row: usize, col: usize) -> usize {
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

    #[inline]
    pub fn at(&self, comp: usize, row: usize, col: usize, site: usize) -> Cplx<T> {
        self.data[self.lane_offset(comp, row, col) + site]
    }

    #[inline]
    pub fn at_mut(&mut self, comp: usize, row: usize, col: usize, site: usize) -> &mut Cplx<T> {
        let o = self.lane_offset(comp, row, col) + site;
        &mut self.data[o]
    }

    pub fn data(&self) -> &[Cplx<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Cplx<T>] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape.n == other.shape.n
            && self.shape.p == other.shape.p
            && self.shape.q == other.shape.q
            && self.rank == other.rank
            && self.sites == other.sites
    }

    pub fn scale(&mut self, c: Cplx<T>) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn scaled(&self, c: Cplx<T>) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// self += c · other. Shapes and twists must agree.
    pub fn axpy(&mut self, c: Cplx<T>, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return Err(CoreError::ShapeMismatch(format!(
                "axpy between {:?} and {:?}",
                self, other
            )));
        }
        if self.twist != other.twist {
            return Err(CoreError::TwistObstruction(
                "adding fields of different flux twist".into(),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b * c;
        }
        Ok(())
    }

    pub fn added(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(Complex::new(T::one(), T::zero()), other)?;
        Ok(out)
    }

    pub fn subbed(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(Complex::new(-T::one(), T::zero()), other)?;
        Ok(out)
    }

    /// Max coefficient magnitude (no metric weighting).
    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, v| if v.norm() > m { v.norm() } else { m })
    }

    /// Plain (unweighted) l2 norm of coefficients; a cheap scale gauge.
    pub fn coeff_l2(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, v| acc + v.norm_sqr())
            .sqrt()
    }

    /// Trace over the endomorphism indices; rank-1 result.
    pub fn trace(&self) -> FormField<T> {
        let mut out = FormField::zeros(self.shape.n, self.shape.p, self.shape.q, 1, self.sites);
        out.twist = self.twist.clone();
        for c in 0..self.comp_count() {
            for r in 0..self.rank {
                let src = self.lane(c, r, r).to_vec();
                let dst = out.lane_mut(c, 0, 0);
                for (d, s) in dst.iter_mut().zip(&src) {
                    *d += *s;
                }
            }
        }
        out
    }

    /// Pointwise complex conjugate of all coefficients (dz ↔ dz̄ relabel is
    /// the caller's business).
    pub fn conj_coeffs(&self) -> FormField<T> {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = v.conj();
        }
        out
    }

    /// Identity endomorphism as a 0-form, rank r.
    pub fn identity(n: usize, rank: usize, sites: usize) -> Self {
        let mut f = Self::zeros(n, 0, 0, rank, sites);
        for r in 0..rank {
            for v in f.lane_mut(0, r, r) {
                *v = Complex::new(T::one(), T::zero());
            }
        }
        f
    }
}

/// Exterior Dolbeault derivative ∂ or ∂̄ of a (p,q) field.
///
/// Twisted fields must be numerically zero: a nonzero-flux line bundle admits
/// no global frame, so its sections cannot be transformed spectrally. All
/// bundle operations route around this by keeping nonzero-twist components
/// identically zero (block-diagonal flows).
pub fn dolbeault_derivative<T: Scalar>(
    geom: &GridGeometry<T>,
    field: &FormField<T>,
    kind: Dolbeault,
) -> Result<FormField<T>> {
    let n = geom.complex_dim();
    assert_eq!(field.shape.n, n, "field/geometry dimension mismatch");
    assert_eq!(field.sites, geom.site_count());

    let (p, q) = field.degree();
    let (p_out, q_out) = match kind {
        Dolbeault::Holomorphic => (p + 1, q),
        Dolbeault::Antiholomorphic => (p, q + 1),
    };
    let mut out = FormField::zeros(n, p_out, q_out, field.rank, field.sites)
        .with_twist(field.twist.clone());
    if p_out > n || q_out > n {
        return Ok(out); // top-degree overflow vanishes identically
    }

    if field.is_twisted() {
        let scale = field.max_abs();
        if scale > T::from_f64(1e-12).unwrap() {
            return Err(CoreError::TwistObstruction(format!(
                "cannot differentiate a nonzero flux-twisted field (twist {:?}, max |coeff| {:e})",
                field.twist,
                scale.to_f64().unwrap_or(f64::NAN)
            )));
        }
        return Ok(out);
    }

    let tasks: Vec<(usize, usize, usize)> = (0..field.comp_count())
        .flat_map(|c| {
            (0..field.rank).flat_map(move |row| (0..field.rank).map(move |col| (c, row, col)))
        })
        .collect();
    // transforms are independent per lane; scatter stays sequential so the
    // result is identical at any parallel width
    let all_derivs = crate::parallel::map_tasks(tasks.len(), 4, |i| {
        let (c, row, col) = tasks[i];
        geom.dolbeault_lane(field.lane(c, row, col), kind)
    });
    for (&(c, row, col), derivs) in tasks.iter().zip(&all_derivs) {
        let (hol, anti) = {
            let (h, a) = field.shape.comp(c);
            (h.to_vec(), a.to_vec())
        };
        for (j, dj) in derivs.iter().enumerate() {
            let j = j as u8;
            let (sign, out_comp) = match kind {
                Dolbeault::Holomorphic => {
                    let Some((s, merged)) = insert_sign(j, &hol) else {
                        continue;
                    };
                    let Some(ci) = out.shape.comp_index(&merged, &anti) else {
                        continue;
                    };
                    (s, ci)
                }
                Dolbeault::Antiholomorphic => {
                    // dz̄^j crosses the p holomorphic factors first
                    let Some((s, merged)) = insert_sign(j, &anti) else {
                        continue;
                    };
                    let s = if p % 2 == 1 { -s } else { s };
                    let Some(ci) = out.shape.comp_index(&hol, &merged) else {
                        continue;
                    };
                    (s, ci)
                }
            };
            let sgn = if sign > 0 { T::one() } else { -T::one() };
            let dst = out.lane_mut(out_comp, row, col);
            for (d, s) in dst.iter_mut().zip(dj) {
                *d += s.scale(sgn);
            }
        }
    }
    Ok(out)
}

/// Wedge product with matrix-valued coefficients multiplied in order.
/// Rank-1 factors act as scalars on the other side; twists add.
pub fn wedge<T: Scalar>(a: &FormField<T>, b: &FormField<T>) -> Result<FormField<T>> {
    assert_eq!(a.shape.n, b.shape.n);
    assert_eq!(a.sites, b.sites);
    let n = a.shape.n;
    let (p1, q1) = a.degree();
    let (p2, q2) = b.degree();
    let rank = match (a.rank, b.rank) {
        (r, s) if r == s => r,
        (1, s) => s,
        (r, 1) => r,
        (r, s) => {
            return Err(CoreError::ShapeMismatch(format!(
                "wedge of endomorphism ranks {r} and {s}"
            )))
        }
    };
    let twist: Vec<i64> = a.twist.iter().zip(&b.twist).map(|(x, y)| x + y).collect();
    let mut out =
        FormField::zeros(n, (p1 + p2).min(n + 1), (q1 + q2).min(n + 1), rank, a.sites)
            .with_twist(twist);
    if p1 + p2 > n || q1 + q2 > n {
        return Ok(out);
    }

    // (dz^J1 ∧ dz̄^K1) ∧ (dz^J2 ∧ dz̄^K2): moving dz^J2 past dz̄^K1 costs
    // (-1)^{q1 p2}, then the two merges contribute their crossing signs.
    let cross = if (q1 * p2) % 2 == 1 { -1 } else { 1 };
    for c1 in 0..a.comp_count() {
        let (j1, k1) = a.shape.comp(c1);
        for c2 in 0..b.comp_count() {
            let (j2, k2) = b.shape.comp(c2);
            let Some((s_j, jm)) = merge_sign(j1, j2) else {
                continue;
            };
            let Some((s_k, km)) = merge_sign(k1, k2) else {
                continue;
            };
            let Some(cout) = out.shape.comp_index(&jm, &km) else {
                continue;
            };
            let sign = cross * s_j * s_k;
            let sgn = if sign > 0 { T::one() } else { -T::one() };
            match (a.rank, b.rank) {
                (r, s) if r == s => {
                    for row in 0..rank {
                        for mid in 0..rank {
                            let left = a.lane(c1, row, mid).to_vec();
                            for col in 0..rank {
                                let right = b.lane(c2, mid, col);
                                let dst = out.lane_mut(cout, row, col);
                                for site in 0..left.len() {
                                    dst[site] += (left[site] * right[site]).scale(sgn);
                                }
                            }
                        }
                    }
                }
                (1, _) => {
                    for row in 0..rank {
                        for col in 0..rank {
                            let left = a.lane(c1, 0, 0).to_vec();
                            let right = b.lane(c2, row, col);
                            let dst = out.lane_mut(cout, row, col);
                            for site in 0..left.len() {
                                dst[site] += (left[site] * right[site]).scale(sgn);
                            }
                        }
                    }
                }
                (_, 1) => {
                    for row in 0..rank {
                        for col in 0..rank {
                            let left = a.lane(c1, row, col).to_vec();
                            let right = b.lane(c2, 0, 0);
                            let dst = out.lane_mut(cout, row, col);
                            for site in 0..left.len() {
                                dst[site] += (left[site] * right[site]).scale(sgn);
                            }
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid::build_torus_geometry;

    fn mode_field(
        geom: &GridGeometry<f64>,
        p: usize,
        q: usize,
        mode: &[i32],
        amp: f64,
    ) -> FormField<f64> {
        let mut f = FormField::<f64>::zeros_like_degree(geom, p, q, 1);
        let comps = f.comp_count();
        for c in 0..comps {
            let lane = f.lane_mut(c, 0, 0);
            for (site, v) in lane.iter_mut().enumerate() {
                let x = geom.position(site);
                let phase: f64 = std::f64::consts::TAU
                    * x.iter()
                        .zip(mode)
                        .map(|(&xi, &mi)| xi * mi as f64)
                        .sum::<f64>();
                *v = Complex::from_polar(amp * (1.0 + 0.25 * c as f64), phase);
            }
        }
        f
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(2, 0), vec![Vec::<u8>::new()]);
        assert_eq!(multi_indices(2, 1), vec![vec![0], vec![1]]);
        assert_eq!(multi_indices(2, 2), vec![vec![0, 1]]);
        assert_eq!(multi_indices(4, 2).len(), 6);
    }

    #[test]
    fn merge_signs() {
        assert_eq!(merge_sign(&[0], &[1]), Some((1, vec![0, 1])));
        assert_eq!(merge_sign(&[1], &[0]), Some((-1, vec![0, 1])));
        assert_eq!(merge_sign(&[0], &[0]), None);
        assert_eq!(merge_sign(&[1, 3], &[0, 2]), Some((-1, vec![0, 1, 2, 3])));
    }

    #[test]
    fn dbar_of_constant_vanishes() {
        let geom = build_torus_geometry::<f64>(1, 16, &[]).unwrap();
        let mut f = FormField::<f64>::zeros_like_degree(&geom, 0, 0, 1);
        for v in f.lane_mut(0, 0, 0) {
            *v = Complex::new(2.5, -1.0);
        }
        let df = dolbeault_derivative(&geom, &f, Dolbeault::Antiholomorphic).unwrap();
        assert!(df.max_abs() < 1e-13);
    }

    #[test]
    fn holomorphic_derivative_mode_oracle() {
        // ∂(exp(2πi x0)) = πi exp(2πi x0) dz^0 on the unit torus.
        let geom = build_torus_geometry::<f64>(1, 16, &[]).unwrap();
        let f = mode_field(&geom, 0, 0, &[1, 0], 1.0);
        let df = dolbeault_derivative(&geom, &f, Dolbeault::Holomorphic).unwrap();
        for site in 0..geom.site_count() {
            let expect = f.at(0, 0, 0, site) * Complex::new(0.0, std::f64::consts::PI);
            assert!((df.at(0, 0, 0, site) - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn dolbeault_complex_squares_to_zero() {
        for (n, npts) in [(1usize, 16usize), (2, 8)] {
            let geom = build_torus_geometry::<f64>(n, npts, &[]).unwrap();
            let f = mode_field(&geom, 0, 0, [1, 2, 1, 0][..2 * n].as_ref(), 0.7);
            let scale = f.max_abs();
            let ddf = dolbeault_derivative(
                &geom,
                &dolbeault_derivative(&geom, &f, Dolbeault::Holomorphic).unwrap(),
                Dolbeault::Holomorphic,
            )
            .unwrap();
            let dbdbf = dolbeault_derivative(
                &geom,
                &dolbeault_derivative(&geom, &f, Dolbeault::Antiholomorphic).unwrap(),
                Dolbeault::Antiholomorphic,
            )
            .unwrap();
            assert!(ddf.max_abs() < 1e-10 * scale);
            assert!(dbdbf.max_abs() < 1e-10 * scale);

            // ∂∂̄ + ∂̄∂ = 0
            let a = dolbeault_derivative(
                &geom,
                &dolbeault_derivative(&geom, &f, Dolbeault::Antiholomorphic).unwrap(),
                Dolbeault::Holomorphic,
            )
            .unwrap();
            let b = dolbeault_derivative(
                &geom,
                &dolbeault_derivative(&geom, &f, Dolbeault::Holomorphic).unwrap(),
                Dolbeault::Antiholomorphic,
            )
            .unwrap();
            let sum = a.added(&b).unwrap();
            assert!(sum.max_abs() < 1e-10 * scale, "n={n}: {:e}", sum.max_abs());
        }
    }

    #[test]
    fn wedge_anticommutes_on_one_forms() {
        let geom = build_torus_geometry::<f64>(2, 8, &[]).unwrap();
        let a = mode_field(&geom, 1, 0, &[1, 0, 0, 1], 0.9);
        let b = mode_field(&geom, 0, 1, &[0, 1, 1, 0], 1.1);
        let ab = wedge(&a, &b).unwrap();
        let ba = wedge(&b, &a).unwrap();
        let sum = ab.added(&ba).unwrap();
        assert!(sum.max_abs() < 1e-12);
    }

    #[test]
    fn wedge_twists_add_and_derivative_guards() {
        let geom = build_torus_geometry::<f64>(1, 16, &[]).unwrap();
        let a = mode_field(&geom, 0, 1, &[1, 0], 1.0).with_twist(vec![2]);
        let b = mode_field(&geom, 1, 0, &[0, 1], 1.0).with_twist(vec![-1]);
        let ab = wedge(&a, &b).unwrap();
        assert_eq!(ab.twist(), &[1]);

        // nonzero twisted field refuses spectral differentiation...
        let twisted = mode_field(&geom, 0, 0, &[1, 0], 1.0).with_twist(vec![2]);
        assert!(dolbeault_derivative(&geom, &twisted, Dolbeault::Antiholomorphic).is_err());
        // ...but the zero section passes through.
        let z = FormField::<f64>::zeros_like_degree(&geom, 0, 1, 1).with_twist(vec![3]);
        let dz = dolbeault_derivative(&geom, &z, Dolbeault::Antiholomorphic).unwrap();
        assert_eq!(dz.twist(), &[3]);
        assert!(dz.max_abs() == 0.0);

        // mixed-twist addition is rejected
        assert!(a.added(&b.scaled(Complex::new(0.0, 0.0))).is_err());
    }

    #[test]
    fn top_degree_overflow_is_zero() {
        let geom = build_torus_geometry::<f64>(1, 16, &[]).unwrap();
        let a = mode_field(&geom, 1, 0, &[1, 0], 1.0);
        let b = mode_field(&geom, 1, 0, &[0, 1], 1.0);
        let ab = wedge(&a, &b).unwrap();
        assert!(ab.max_abs() == 0.0);
        let da = dolbeault_derivative(&geom, &a, Dolbeault::Holomorphic).unwrap();
        assert!(da.max_abs() == 0.0);
    }
}
