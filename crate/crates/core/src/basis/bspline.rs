use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Equally spaced B-spline basis of `k` functions of the given degree over a
/// closed domain, with the knot sequence extended by `degree` knots beyond
/// each end.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    pub k: usize,
    pub degree: usize,
    pub domain: (f64, f64),
    knots: Vec<f64>,
}

impl BSplineBasis {
    pub fn new(k: usize, degree: usize, domain: (f64, f64)) -> Result<Self> {
        if k < degree + 1 {
            return Err(Error::Config(format!(
                "B-spline basis needs k ≥ degree + 1 (k = {k}, degree = {degree})"
            )));
        }
        let (a, b) = domain;
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!("invalid basis domain [{a}, {b}]")));
        }
        let nseg = k - degree;
        let h = (b - a) / nseg as f64;
        let knots = (0..=(k + degree))
            .map(|i| a + (i as f64 - degree as f64) * h)
            .collect();
        Ok(Self {
            k,
            degree,
            domain,
            knots,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Values of the `degree + 1` non-zero basis functions at `x` and the index
    /// of the first of them.
    pub fn eval_local(&self, x: f64) -> Result<(usize, Vec<f64>)> {
        let (a, b) = self.domain;
        let tol = 1e-12 * (b - a);
        if !(x >= a - tol && x <= b + tol) {
            return Err(Error::OutsideDomain {
                value: x,
                lower: a,
                upper: b,
            });
        }
        let p = self.degree;
        let nseg = self.k - p;
        let h = (b - a) / nseg as f64;
        let seg = (((x - a) / h).floor().max(0.0) as usize).min(nseg - 1);
        let span = seg + p;
        let t = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        Ok((span - p, n))
    }

    pub fn design(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(points.len(), self.k);
        for (i, &x) in points.iter().enumerate() {
            let (first, vals) = self.eval_local(x)?;
            for (r, v) in vals.into_iter().enumerate() {
                out[(i, first + r)] = v;
            }
        }
        Ok(out)
    }
}

/// Evaluation matrix of `k` equally spaced B-splines at `points`.
pub fn bspline_matrix(points: &[f64], k: usize, degree: usize, domain: (f64, f64)) -> Result<DMatrix<f64>> {
    BSplineBasis::new(k, degree, domain)?.design(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook Cox–de Boor recursion, kept independent of the evaluator above.
    fn cox_de_boor(t: &[f64], i: usize, p: usize, x: f64) -> f64 {
        if p == 0 {
            return if t[i] <= x && x < t[i + 1] { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = t[i + p] - t[i];
        if d1 > 0.0 {
            v += (x - t[i]) / d1 * cox_de_boor(t, i, p - 1, x);
        }
        let d2 = t[i + p + 1] - t[i + 1];
        if d2 > 0.0 {
            v += (t[i + p + 1] - x) / d2 * cox_de_boor(t, i + 1, p - 1, x);
        }
        v
    }

    #[test]
    fn matches_recursive_oracle() {
        let basis = BSplineBasis::new(10, 3, (0.0, 1.0)).unwrap();
        let points: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let m = basis.design(&points).unwrap();
        // knots extend past the domain, so right-continuous evaluation is
        // valid at the upper end
        for (r, &x) in points.iter().enumerate() {
            for c in 0..10 {
                let want = cox_de_boor(basis.knots(), c, 3, x);
                assert!((m[(r, c)] - want).abs() < 1e-12, "x={x} c={c}");
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        let m = bspline_matrix(&[0.0, 0.13, 0.5, 0.999, 1.0], 12, 3, (0.0, 1.0)).unwrap();
        for r in 0..m.nrows() {
            assert!((m.row(r).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degree_zero_is_indicator() {
        let mids: Vec<f64> = (0..5).map(|j| 50.0 + 100.0 * j as f64).collect();
        let m = bspline_matrix(&mids, 5, 0, (0.0, 500.0)).unwrap();
        assert_eq!(m, DMatrix::identity(5, 5));
    }

    #[test]
    fn outside_domain_is_error() {
        assert!(matches!(
            bspline_matrix(&[1.5], 6, 3, (0.0, 1.0)),
            Err(Error::OutsideDomain { .. })
        ));
    }
}
