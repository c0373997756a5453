//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        // fix the sign so that decompositions are reproducible
        let pos = col.iamax();
        if col[pos] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Numerical rank of a symmetric PSD matrix.
pub fn psd_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let (vals, _) = sym_eigen(m);
    let max = vals.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return 0;
    }
    vals.iter().filter(|&&v| v > rel_tol * max).count()
}

/// Upper-triangular R factor of a thin QR, padded with zero rows to `ncols × ncols`.
pub fn qr_r_square(m: &DMatrix<f64>) -> DMatrix<f64> {
    let p = m.ncols();
    let r = m.clone().qr().r();
    let mut out = DMatrix::zeros(p, p);
    let rows = r.nrows().min(p);
    out.view_mut((0, 0), (rows, p)).copy_from(&r.rows(0, rows));
    out
}

/// Inverse of an upper-triangular matrix by back substitution.
pub fn upper_tri_inverse(r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let p = r.nrows();
    let eye = DMatrix::identity(p, p);
    r.solve_upper_triangular(&eye)
}

/// Orthonormal basis for the null space of the rows of `c` (c is m×k, m < k).
///
/// Returns a k×(k−m) matrix Z with c·Z = 0 and ZᵀZ = I.
pub fn null_space_of_rows(c: &DMatrix<f64>) -> DMatrix<f64> {
    let k = c.ncols();
    let m = c.nrows();
    // eigenvectors of CᵀC beyond the row rank span the null space
    let (_, vecs) = sym_eigen(&(c.transpose() * c));
    vecs.columns(m, k - m).into_owned()
}

/// Row-wise Kronecker product: row i of the result is a_i ⊗ b_i.
pub fn row_kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let (ka, kb) = (a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(a.nrows(), ka * kb);
    for i in 0..a.nrows() {
        for p in 0..ka {
            let av = a[(i, p)];
            if av == 0.0 {
                continue;
            }
            for q in 0..kb {
                out[(i, p * kb + q)] = av * b[(i, q)];
            }
        }
    }
    out
}

pub fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Sample quantile with linear interpolation between order statistics
/// (the "type 7" definition). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_is_orthogonal_to_constraint() {
        let c = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let z = null_space_of_rows(&c);
        assert_eq!(z.shape(), (4, 3));
        assert!((&c * &z).norm() < 1e-12);
        assert!((z.transpose() * &z - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let (v, _) = sym_eigen(&m);
        assert_eq!(v.as_slice(), &[3.0, 1.0]);
    }

    #[test]
    fn quantile_interpolates() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&x, 0.5), 3.0);
        assert!((quantile_sorted(&x, 0.1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn upper_inverse_roundtrip() {
        let r = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 0.0, 3.0, 1.0, 0.0, 0.0, 4.0]);
        let inv = upper_tri_inverse(&r).unwrap();
        assert!((&r * inv - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
    }
}
