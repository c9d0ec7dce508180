//! Dense complex linear algebra for small per-site matrices (rank ≤ ~4).
//!
//! Matrices are row-major slices of length r². Hermitian eigenproblems use
//! cyclic Jacobi with complex rotations; everything stays generic over the
//! scalar type.

use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::scalar::{real, Cplx, Scalar};

#[inline]
pub fn mat_zero<T: Scalar>(r: usize) -> Vec<Cplx<T>> {
    vec![Complex::new(T::zero(), T::zero()); r * r]
}

#[inline]
pub fn mat_identity<T: Scalar>(r: usize) -> Vec<Cplx<T>> {
    let mut m = mat_zero(r);
    for i in 0..r {
        m[i * r + i] = Complex::new(T::one(), T::zero());
    }
    m
}

pub fn mat_mul<T: Scalar>(r: usize, a: &[Cplx<T>], b: &[Cplx<T>], out: &mut [Cplx<T>]) {
    for i in 0..r {
        for k in 0..r {
            let mut acc = Complex::new(T::zero(), T::zero());
            for j in 0..r {
                acc += a[i * r + j] * b[j * r + k];
            }
            out[i * r + k] = acc;
        }
    }
}

pub fn mat_adjoint<T: Scalar>(r: usize, a: &[Cplx<T>], out: &mut [Cplx<T>]) {
    for i in 0..r {
        for j in 0..r {
            out[j * r + i] = a[i * r + j].conj();
        }
    }
}

pub fn mat_trace<T: Scalar>(r: usize, a: &[Cplx<T>]) -> Cplx<T> {
    let mut t = Complex::new(T::zero(), T::zero());
    for i in 0..r {
        t += a[i * r + i];
    }
    t
}

pub fn frobenius_norm<T: Scalar>(a: &[Cplx<T>]) -> T {
    a.iter()
        .fold(T::zero(), |acc, v| acc + v.norm_sqr())
        .sqrt()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn mat_inverse<T: Scalar>(r: usize, a: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
    let mut m = a.to_vec();
    let mut inv = mat_identity::<T>(r);
    for col in 0..r {
        let mut piv = col;
        let mut best = m[col * r + col].norm();
        for row in col + 1..r {
            let v = m[row * r + col].norm();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best <= T::zero() {
            return Err(CoreError::NonPositive("singular matrix in inverse".into()));
        }
        if piv != col {
            for k in 0..r {
                m.swap(col * r + k, piv * r + k);
                inv.swap(col * r + k, piv * r + k);
            }
        }
        let d = m[col * r + col];
        for k in 0..r {
            m[col * r + k] /= d;
            inv[col * r + k] /= d;
        }
        for row in 0..r {
            if row == col {
                continue;
            }
            let f = m[row * r + col];
            if f.norm_sqr() == T::zero() {
                continue;
            }
            for k in 0..r {
                let mc = m[col * r + k];
                let ic = inv[col * r + k];
                m[row * r + k] -= f * mc;
                inv[row * r + k] -= f * ic;
            }
        }
    }
    Ok(inv)
}

/// Determinant via LU with partial pivoting.
pub fn mat_det<T: Scalar>(r: usize, a: &[Cplx<T>]) -> Cplx<T> {
    let mut m = a.to_vec();
    let mut det = Complex::new(T::one(), T::zero());
    for col in 0..r {
        let mut piv = col;
        let mut best = m[col * r + col].norm();
        for row in col + 1..r {
            let v = m[row * r + col].norm();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best <= T::zero() {
            return Complex::new(T::zero(), T::zero());
        }
        if piv != col {
            for k in 0..r {
                m.swap(col * r + k, piv * r + k);
            }
            det = -det;
        }
        let d = m[col * r + col];
        det *= d;
        for row in col + 1..r {
            let f = m[row * r + col] / d;
            for k in col..r {
                let mc = m[col * r + k];
                m[row * r + k] -= f * mc;
            }
        }
    }
    det
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi.
/// Returns eigenvalues (ascending) and the unitary of column eigenvectors.
pub fn eig_hermitian<T: Scalar>(r: usize, a: &[Cplx<T>]) -> (Vec<T>, Vec<Cplx<T>>) {
    let mut m = a.to_vec();
    let mut v = mat_identity::<T>(r);
    if r == 1 {
        return (vec![m[0].re], v);
    }
    let scale = frobenius_norm(&m) + T::epsilon();
    let tol = scale * real::<T>(1e-15) * real::<T>(r as f64);
    for _sweep in 0..60 {
        let mut off = T::zero();
        for p in 0..r {
            for q in p + 1..r {
                off += m[p * r + q].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..r {
            for q in p + 1..r {
                let gamma = m[p * r + q];
                let g = gamma.norm();
                if g <= tol * real::<T>(0.01) {
                    continue;
                }
                let phase = gamma / Complex::new(g, T::zero());
                let alpha = m[p * r + p].re;
                let beta = m[q * r + q].re;
                let tau = (alpha - beta) / (g * real::<T>(2.0));
                let t = {
                    let denom = tau.abs() + (tau * tau + T::one()).sqrt();
                    let t = T::one() / denom;
                    if tau < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                // U: u_pp = c, u_pq = -s·phase, u_qp = s·conj(phase), u_qq = c
                let upq = -phase.scale(s);
                let uqp = phase.conj().scale(s);
                // columns: A <- A U
                for k in 0..r {
                    let ap = m[k * r + p];
                    let aq = m[k * r + q];
                    m[k * r + p] = ap.scale(c) + aq * uqp;
                    m[k * r + q] = ap * upq + aq.scale(c);
                }
                // rows: A <- U† A
                for k in 0..r {
                    let ap = m[p * r + k];
                    let aq = m[q * r + k];
                    m[p * r + k] = ap.scale(c) + aq * uqp.conj();
                    m[q * r + k] = ap * upq.conj() + aq.scale(c);
                }
                // eigenvector accumulation: V <- V U
                for k in 0..r {
                    let vp = v[k * r + p];
                    let vq = v[k * r + q];
                    v[k * r + p] = vp.scale(c) + vq * uqp;
                    v[k * r + q] = vp * upq + vq.scale(c);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..r).collect();
    let evs: Vec<T> = (0..r).map(|i| m[i * r + i].re).collect();
    order.sort_by(|&i, &j| evs[i].partial_cmp(&evs[j]).unwrap());
    let sorted_evs: Vec<T> = order.iter().map(|&i| evs[i]).collect();
    let mut sorted_v = mat_zero::<T>(r);
    for (newcol, &oldcol) in order.iter().enumerate() {
        for k in 0..r {
            sorted_v[k * r + newcol] = v[k * r + oldcol];
        }
    }
    (sorted_evs, sorted_v)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eig_hermitian<T: Scalar>(r: usize, a: &[Cplx<T>]) -> T {
    eig_hermitian(r, a).0[0]
}

/// Principal square root of a Hermitian positive matrix.
pub fn sqrt_hermitian<T: Scalar>(r: usize, a: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
    let (evs, v) = eig_hermitian(r, a);
    if evs[0] <= T::zero() {
        return Err(CoreError::NonPositive(format!(
            "matrix square root needs positive spectrum, min eig {:e}",
            evs[0].to_f64().unwrap_or(f64::NAN)
        )));
    }
    let mut w = mat_zero::<T>(r);
    // V sqrt(Λ) V†
    for i in 0..r {
        for j in 0..r {
            let mut acc = Complex::new(T::zero(), T::zero());
            for k in 0..r {
                acc += v[i * r + k] * v[j * r + k].conj() * Complex::new(evs[k].sqrt(), T::zero());
            }
            w[i * r + j] = acc;
        }
    }
    Ok(w)
}

/// Eigenvalues of a matrix that is self-adjoint with respect to a Hermitian
/// positive form H (real spectrum): eig of H^{1/2} M H^{-1/2}.
pub fn eig_h_selfadjoint<T: Scalar>(
    r: usize,
    m: &[Cplx<T>],
    h: Option<&[Cplx<T>]>,
) -> Result<Vec<T>> {
    match h {
        None => Ok(eig_hermitian(r, m).0),
        Some(h) => {
            let hs = sqrt_hermitian(r, h)?;
            let hsi = mat_inverse(r, &hs)?;
            let mut tmp = mat_zero::<T>(r);
            let mut sym = mat_zero::<T>(r);
            mat_mul(r, &hs, m, &mut tmp);
            mat_mul(r, &tmp, &hsi, &mut sym);
            // enforce exact Hermiticity before Jacobi
            let mut herm = mat_zero::<T>(r);
            for i in 0..r {
                for j in 0..r {
                    herm[i * r + j] =
                        (sym[i * r + j] + sym[j * r + i].conj()).scale(real::<T>(0.5));
                }
            }
            Ok(eig_hermitian(r, &herm).0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn inverse_and_det() {
        let a = vec![c(2.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)];
        let inv = mat_inverse(2, &a).unwrap();
        let mut prod = mat_zero::<f64>(2);
        mat_mul(2, &a, &inv, &mut prod);
        assert!((prod[0] - c(1.0, 0.0)).norm() < 1e-13);
        assert!((prod[3] - c(1.0, 0.0)).norm() < 1e-13);
        assert!(prod[1].norm() < 1e-13 && prod[2].norm() < 1e-13);
        // det of Hermitian [[2, 1+i],[1-i, 3]] = 6 - 2 = 4
        let d = mat_det(2, &a);
        assert!((d - c(4.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn jacobi_matches_analytic_2x2() {
        // [[1, i],[-i, 1]] has eigenvalues 0 and 2.
        let a = vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)];
        let (evs, v) = eig_hermitian(2, &a);
        assert!((evs[0] - 0.0).abs() < 1e-12);
        assert!((evs[1] - 2.0).abs() < 1e-12);
        // residual A v = λ v
        for k in 0..2 {
            for i in 0..2 {
                let mut av = c(0.0, 0.0);
                for j in 0..2 {
                    av += a[i * 2 + j] * v[j * 2 + k];
                }
                assert!((av - v[i * 2 + k] * evs[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_random_hermitian_residual() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for r in 1..=4usize {
            let mut a = mat_zero::<f64>(r);
            for i in 0..r {
                a[i * r + i] = c(rng.gen_range(-1.0..1.0), 0.0);
                for j in i + 1..r {
                    let z = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    a[i * r + j] = z;
                    a[j * r + i] = z.conj();
                }
            }
            let (evs, v) = eig_hermitian(r, &a);
            for k in 0..r {
                for i in 0..r {
                    let mut av = c(0.0, 0.0);
                    let mut vv = c(0.0, 0.0);
                    for j in 0..r {
                        av += a[i * r + j] * v[j * r + k];
                        vv += v[j * r + i].conj() * v[j * r + k];
                    }
                    assert!((av - v[i * r + k] * evs[k]).norm() < 1e-11);
                    let expect = if i == k { 1.0 } else { 0.0 };
                    assert!((vv - c(expect, 0.0)).norm() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn hermitian_sqrt_squares_back() {
        let a = vec![c(2.0, 0.0), c(0.5, 0.5), c(0.5, -0.5), c(1.5, 0.0)];
        let s = sqrt_hermitian(2, &a).unwrap();
        let mut sq = mat_zero::<f64>(2);
        mat_mul(2, &s, &s, &mut sq);
        for k in 0..4 {
            assert!((sq[k] - a[k]).norm() < 1e-12);
        }
        let neg = vec![c(-1.0, 0.0)];
        assert!(sqrt_hermitian(1, &neg).is_err());
    }
}
