use nalgebra::DMatrix;

use super::bspline::bspline_matrix;
use crate::error::{Error, Result};

/// The order-`d` difference operator, `(k − d) × k`.
pub fn difference_matrix(k: usize, d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::identity(k, k);
    for _ in 0..d {
        let rows = m.nrows() - 1;
        let mut next = DMatrix::zeros(rows, k);
        for r in 0..rows {
            let diff = m.row(r + 1) - m.row(r);
            next.set_row(r, &diff);
        }
        m = next;
    }
    m
}

/// `DᵀD` for the order-`d` difference operator.
pub fn difference_penalty(k: usize, d: usize) -> Result<DMatrix<f64>> {
    if k <= d {
        return Err(Error::Config(format!("difference penalty needs k > d (k = {k}, d = {d})")));
    }
    let dm = difference_matrix(k, d);
    Ok(dm.transpose() * dm)
}

/// Components `S_a = Dᵀ diag(C_a) D` of an adaptive difference penalty, where
/// the columns `C_a` are a low-order B-spline basis over the difference index.
/// `Σ_a λ_a S_a` then weights each squared difference by `Σ_a λ_a C_a`.
pub fn adaptive_penalties(k: usize, d: usize, adaptive_dim: usize) -> Result<Vec<DMatrix<f64>>> {
    if adaptive_dim == 0 {
        return Err(Error::Config("adaptive penalty needs at least one component".into()));
    }
    if k <= d {
        return Err(Error::Config(format!("difference penalty needs k > d (k = {k}, d = {d})")));
    }
    let ndiff = k - d;
    if adaptive_dim > ndiff {
        return Err(Error::Config(format!(
            "adaptive dimension {adaptive_dim} exceeds the number of differences {ndiff}"
        )));
    }
    let weights = weight_basis(ndiff, adaptive_dim)?;
    let dm = difference_matrix(k, d);
    Ok((0..adaptive_dim)
        .map(|a| {
            let mut scaled = dm.clone();
            for r in 0..ndiff {
                let w = weights[(r, a)];
                scaled.row_mut(r).scale_mut(w);
            }
            dm.transpose() * scaled
        })
        .collect())
}

/// `ndiff × a` evaluation of the weight basis at difference positions.
pub(crate) fn weight_basis(ndiff: usize, a: usize) -> Result<DMatrix<f64>> {
    if a == 1 {
        return Ok(DMatrix::from_element(ndiff, 1, 1.0));
    }
    let degree = (a - 1).min(2);
    let positions: Vec<f64> = (0..ndiff).map(|i| i as f64).collect();
    bspline_matrix(&positions, a, degree, (0.0, (ndiff - 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_small() {
        let d = difference_matrix(3, 1);
        assert_eq!(d, DMatrix::from_row_slice(2, 3, &[-1.0, 1.0, 0.0, 0.0, -1.0, 1.0]));
        let s = difference_penalty(3, 1).unwrap();
        assert_eq!(
            s,
            DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0])
        );
    }

    #[test]
    fn constants_in_null_space() {
        let s = difference_penalty(8, 2).unwrap();
        let ones = nalgebra::DVector::from_element(8, 1.0);
        assert!((ones.transpose() * &s * &ones)[0].abs() < 1e-12);
        let lin = nalgebra::DVector::from_fn(8, |i, _| i as f64);
        assert!((lin.transpose() * &s * &lin)[0].abs() < 1e-12);
    }

    #[test]
    fn second_difference_summation_oracle() {
        let beta: Vec<f64> = (0..12).map(|i| ((i * 7 + 3) % 11) as f64 * 0.37 - 1.1).collect();
        let s = difference_penalty(12, 2).unwrap();
        let b = nalgebra::DVector::from_vec(beta.clone());
        let quad = (b.transpose() * &s * &b)[0];
        let direct: f64 = (0..10)
            .map(|i| (beta[i + 2] - 2.0 * beta[i + 1] + beta[i]).powi(2))
            .sum();
        assert!((quad - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn adaptive_single_component_is_standard() {
        let a = adaptive_penalties(10, 2, 1).unwrap();
        assert_eq!(a.len(), 1);
        assert!((&a[0] - difference_penalty(10, 2).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn adaptive_equal_weights_collapse() {
        let comps = adaptive_penalties(20, 2, 5).unwrap();
        let total = comps.iter().fold(DMatrix::zeros(20, 20), |acc, s| acc + s * 2.5);
        let want = difference_penalty(20, 2).unwrap() * 2.5;
        assert!((total - want).norm() < 1e-10);
    }

    #[test]
    fn adaptive_weighted_sum_oracle() {
        let (k, d, a) = (20, 2, 3);
        let comps = adaptive_penalties(k, d, a).unwrap();
        let lambdas = [0.3, 4.0, 1.7];
        let beta: Vec<f64> = (0..k).map(|i| ((i * 5 + 1) % 9) as f64 * 0.21 - 0.8).collect();
        let b = nalgebra::DVector::from_vec(beta.clone());
        let total = comps
            .iter()
            .zip(lambdas)
            .fold(DMatrix::zeros(k, k), |acc, (s, l)| acc + s * l);
        let quad = (b.transpose() * &total * &b)[0];
        let c = weight_basis(k - d, a).unwrap();
        let direct: f64 = (0..k - d)
            .map(|i| {
                let w: f64 = (0..a).map(|j| lambdas[j] * c[(i, j)]).sum();
                w * (beta[i + 2] - 2.0 * beta[i + 1] + beta[i]).powi(2)
            })
            .sum();
        assert!((quad - direct).abs() <= 1e-12 * direct.abs());
        assert!(crate::linalg::sym_eigen(&total).0.min() > -1e-10 * total.norm());
    }

    #[test]
    fn adaptive_dimension_bound() {
        assert!(adaptive_penalties(5, 2, 4).is_err());
        assert!(adaptive_penalties(5, 2, 3).is_ok());
    }
}
