//! Small deterministic linear-algebra helpers on top of nalgebra.
//!
//! Eigendecompositions here always return eigenvalues sorted descending with
//! a fixed eigenvector gauge (first component above 1e-12 in magnitude made
//! positive real), so repeated runs produce identical matrices.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex<f64>>;
pub type CVector = DVector<Complex<f64>>;

const GAUGE_TOL: f64 = 1e-12;

/// Cyclic Jacobi sweeps that finish diagonalizing `a` in place, accumulating
/// the rotations into `v`. nalgebra's QR iteration occasionally misconverges
/// on clustered spectra; rotating away the residual off-diagonal mass
/// restores machine-precision reconstruction at negligible cost when the
/// input is already diagonal.
fn jacobi_polish_real(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(f64::MIN_POSITIVE);
    for _ in 0..30 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(a[(p, q)].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-15 * scale {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
}

/// Complex-Hermitian counterpart of [`jacobi_polish_real`].
fn jacobi_polish_herm(a: &mut CMatrix, v: &mut CMatrix) {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |acc, x| acc.max(x.norm())).max(f64::MIN_POSITIVE);
    for _ in 0..30 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(a[(p, q)].norm());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.norm() <= 1e-15 * scale {
                    continue;
                }
                // Remove the phase, then rotate as in the real case.
                let phase = apq / apq.norm();
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * apq.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Column q of the rotation carries the phase of a_pq.
                let sp = phase * s;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - akq * sp.conj();
                    a[(k, q)] = akp * sp + akq * c;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c - aqk * sp;
                    a[(q, k)] = apk * sp.conj() + aqk * c;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * sp.conj();
                    v[(k, q)] = vkp * sp + vkq * c;
                }
            }
        }
    }
}

/// Symmetric eigendecomposition of a real matrix, eigenvalues descending,
/// eigenvector signs fixed by the first component of magnitude > 1e-12.
pub fn sym_eigen_sorted(mat: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = mat.nrows();
    let eig = mat.clone().symmetric_eigen();
    let mut v = eig.eigenvectors;
    let mut a = v.transpose() * mat * &v;
    jacobi_polish_real(&mut a, &mut v);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]));

    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = a[(src, src)];
        let mut col = v.column(src).clone_owned();
        if let Some(lead) = col.iter().find(|x| x.abs() > GAUGE_TOL) {
            if *lead < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Hermitian eigendecomposition, eigenvalues descending, phase gauge fixed so
/// the first component of magnitude > 1e-12 is positive real.
pub fn herm_eigen_sorted(mat: &CMatrix) -> (DVector<f64>, CMatrix) {
    let n = mat.nrows();
    let eig = mat.clone().symmetric_eigen();
    let mut v = eig.eigenvectors;
    let mut a = v.adjoint() * mat * &v;
    jacobi_polish_herm(&mut a, &mut v);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].re.total_cmp(&a[(x, x)].re));

    let mut values = DVector::zeros(n);
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = a[(src, src)].re;
        let mut col = v.column(src).clone_owned();
        fix_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Rotates a complex vector so its first component of magnitude > 1e-12 is
/// positive real.
pub fn fix_phase(v: &mut CVector) {
    if let Some(lead) = v.iter().find(|c| c.norm() > GAUGE_TOL) {
        let phase = lead / lead.norm();
        let rot = phase.conj();
        for c in v.iter_mut() {
            *c *= rot;
        }
    }
}

/// Rotates each column so its largest-magnitude entry is positive real.
pub fn fix_column_phases_by_peak(m: &mut CMatrix) {
    for j in 0..m.ncols() {
        let mut col = m.column(j).clone_owned();
        let mut peak = 0usize;
        let mut best = -1.0;
        for (i, c) in col.iter().enumerate() {
            if c.norm() > best {
                best = c.norm();
                peak = i;
            }
        }
        let lead = col[peak];
        if lead.norm() > GAUGE_TOL {
            let rot = (lead / lead.norm()).conj();
            for c in col.iter_mut() {
                *c *= rot;
            }
        }
        m.set_column(j, &col);
    }
}

/// Re-unitarizes a matrix through its QR factor, with the R diagonal folded
/// in so the result is a continuous retraction (Q scaled by sign of R_ii).
pub fn qr_unitarize(m: &CMatrix) -> CMatrix {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        if d.norm() > GAUGE_TOL {
            let s = d / d.norm();
            for i in 0..q.nrows() {
                q[(i, j)] *= s;
            }
        }
    }
    q
}

/// Inverts a square matrix, mapping failure to `Error::SingularMatrix`.
pub fn invert(mat: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    mat.clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix(what.to_string()))
}

/// Frobenius distance between a matrix product and the identity.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    let gram = u.adjoint() * u;
    (gram - CMatrix::identity(n, n)).norm()
}

/// Maximum absolute entry of a real matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sorted_real_eigen_is_descending_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 3.0]);
        let (vals, vecs) = sym_eigen_sorted(&m);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let rec = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert_relative_eq!(rec, m, epsilon = 1e-12);
    }

    #[test]
    fn hermitian_eigen_handles_complex_offdiagonal() {
        let i = Complex::new(0.0, 1.0);
        let m = CMatrix::from_row_slice(2, 2, &[
            Complex::new(1.0, 0.0),
            Complex::new(0.3, 0.0) + i * 0.2,
            Complex::new(0.3, 0.0) - i * 0.2,
            Complex::new(2.0, 0.0),
        ]);
        let (vals, vecs) = herm_eigen_sorted(&m);
        let rec = &vecs
            * CMatrix::from_diagonal(&vals.map(|v| Complex::new(v, 0.0)))
            * vecs.adjoint();
        assert!((rec - m).norm() < 1e-12);
        assert!(vals[0] >= vals[1]);
    }

    #[test]
    fn qr_unitarize_returns_unitary() {
        let m = CMatrix::from_fn(4, 4, |i, j| Complex::new((i * 7 + j) as f64 * 0.1 - 0.9, (j + 1) as f64 * 0.05));
        let q = qr_unitarize(&m);
        assert!(unitarity_defect(&q) < 1e-12);
    }
}
