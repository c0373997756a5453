use nalgebra::DMatrix;

use super::distinct_quantile_points;
use crate::error::{Error, Result};
use crate::linalg::{null_space_of_rows, symmetrize};

/// One-dimensional low-rank thin-plate regression spline (second-order
/// penalty, radial function `|r|³/12`).
///
/// Columns are ordered `[1, x, radial_1 .. radial_{k−2}]`. The radial block is
/// constrained orthogonal to the affine functions at the representative
/// points, and then projected off `span{1, x}` over the construction points,
/// so that the two parts can enter a model as separate effects.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinPlate {
    pub k: usize,
    shift: f64,
    scale: f64,
    knots: Vec<f64>,
    constraint_null: DMatrix<f64>,
    affine_projection: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

fn eta(r: f64) -> f64 {
    r.abs().powi(3) / 12.0
}

impl ThinPlate {
    pub fn new(points: &[f64], k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::Config("thin-plate basis needs k ≥ 3".into()));
        }
        let raw_knots = distinct_quantile_points(points, k)?;
        let lo = raw_knots[0];
        let hi = raw_knots[k - 1];
        let shift = lo;
        let scale = hi - lo;
        let knots: Vec<f64> = raw_knots.iter().map(|x| (x - shift) / scale).collect();

        let e = DMatrix::from_fn(k, k, |i, j| eta(knots[i] - knots[j]));
        let t_rows = DMatrix::from_fn(2, k, |r, j| if r == 0 { 1.0 } else { knots[j] });
        let z = null_space_of_rows(&t_rows);
        let penalty = symmetrize(&(z.transpose() * &e * &z));

        let mut tp = ThinPlate {
            k,
            shift,
            scale,
            knots,
            constraint_null: z,
            affine_projection: DMatrix::zeros(2, k - 2),
            penalty,
        };
        let xs: Vec<f64> = points.iter().map(|x| (x - shift) / scale).collect();
        let radial = tp.radial(&xs);
        let affine = DMatrix::from_fn(xs.len(), 2, |i, c| if c == 0 { 1.0 } else { xs[i] });
        let gram = affine.transpose() * &affine;
        let g = gram
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("thin-plate points are degenerate".into()))?
            .solve(&(affine.transpose() * radial));
        tp.affine_projection = g;
        Ok(tp)
    }

    fn radial(&self, xs: &[f64]) -> DMatrix<f64> {
        let e = DMatrix::from_fn(xs.len(), self.k, |i, j| eta(xs[i] - self.knots[j]));
        e * &self.constraint_null
    }

    pub fn design(&self, points: &[f64]) -> DMatrix<f64> {
        let xs: Vec<f64> = points.iter().map(|x| (x - self.shift) / self.scale).collect();
        let affine = DMatrix::from_fn(xs.len(), 2, |i, c| if c == 0 { 1.0 } else { xs[i] });
        let penalized = self.radial(&xs) - &affine * &self.affine_projection;
        let mut out = DMatrix::zeros(xs.len(), self.k);
        out.columns_mut(0, 2).copy_from(&affine);
        out.columns_mut(2, self.k - 2).copy_from(&penalized);
        out
    }

    /// Penalty over all `k` columns (zero on the affine part).
    pub fn penalty(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.k, self.k);
        s.view_mut((2, 2), (self.k - 2, self.k - 2)).copy_from(&self.penalty);
        s
    }

    /// Maps a raw covariate value to the internal scaled coordinate.
    pub fn scaled(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points() -> Vec<f64> {
        (0..40).map(|i| 140.0 + 1.3 * i as f64 + ((i * 7) % 5) as f64 * 0.1).collect()
    }

    #[test]
    fn penalized_block_is_orthogonal_to_affine() {
        let x = points();
        let tp = ThinPlate::new(&x, 8).unwrap();
        let b = tp.design(&x);
        for c in 2..8 {
            let col = b.column(c);
            assert!(col.sum().abs() < 1e-10);
            let dot: f64 = col.iter().zip(&x).map(|(v, xi)| v * tp.scaled(*xi)).sum();
            assert!(dot.abs() < 1e-10);
        }
    }

    #[test]
    fn penalty_is_psd_and_null_on_affine() {
        let tp = ThinPlate::new(&points(), 8).unwrap();
        let s = tp.penalty();
        let (vals, _) = crate::linalg::sym_eigen(&s);
        assert!(vals.min() > -1e-10 * s.norm());
        assert_eq!(crate::linalg::psd_rank(&s, 1e-10), 6);
    }

    #[test]
    fn too_few_distinct_points() {
        assert!(ThinPlate::new(&[1.0, 1.0, 2.0, 2.0, 3.0], 4).is_err());
    }
}
