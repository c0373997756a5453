use nalgebra::DMatrix;

use super::distinct_quantile_points;
use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// Cubic regression spline parameterized by its values at `k` knots (natural
/// boundary conditions), with the exact integrated squared second derivative
/// penalty. Beyond the end knots the spline continues linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicRegression {
    pub knots: Vec<f64>,
    /// Maps knot values to second derivatives at the knots.
    second_deriv: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

impl CubicRegression {
    /// Knots at quantiles of the distinct values of `points`.
    pub fn new(points: &[f64], k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::Config("cubic regression spline needs k ≥ 3".into()));
        }
        Self::with_knots(distinct_quantile_points(points, k)?)
    }

    pub fn with_knots(knots: Vec<f64>) -> Result<Self> {
        let k = knots.len();
        if k < 3 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("cubic spline knots must be ≥ 3 and increasing".into()));
        }
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let mut d = DMatrix::zeros(k - 2, k);
        let mut b = DMatrix::zeros(k - 2, k - 2);
        for i in 0..k - 2 {
            d[(i, i)] = 1.0 / h[i];
            d[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
            d[(i, i + 2)] = 1.0 / h[i + 1];
            b[(i, i)] = (h[i] + h[i + 1]) / 3.0;
            if i + 1 < k - 2 {
                b[(i, i + 1)] = h[i + 1] / 6.0;
                b[(i + 1, i)] = h[i + 1] / 6.0;
            }
        }
        let b_inv_d = b
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("cubic spline knot spacing is degenerate".into()))?
            .solve(&d);
        let penalty = symmetrize(&(d.transpose() * &b_inv_d));
        let mut second_deriv = DMatrix::zeros(k, k);
        second_deriv.rows_mut(1, k - 2).copy_from(&b_inv_d);
        Ok(Self {
            knots,
            second_deriv,
            penalty,
        })
    }

    pub fn k(&self) -> usize {
        self.knots.len()
    }

    pub fn penalty(&self) -> DMatrix<f64> {
        self.penalty.clone()
    }

    pub fn design(&self, points: &[f64]) -> DMatrix<f64> {
        let k = self.k();
        let f = &self.second_deriv;
        let t = &self.knots;
        let mut out = DMatrix::zeros(points.len(), k);
        for (i, &x) in points.iter().enumerate() {
            let mut row = out.row_mut(i);
            if x < t[0] || x > t[k - 1] {
                // linear continuation from the nearest end
                let (j, end) = if x < t[0] { (0, 0) } else { (k - 2, k - 1) };
                let h = t[j + 1] - t[j];
                let (wd0, wd1) = if end == 0 { (-h / 3.0, -h / 6.0) } else { (h / 6.0, h / 3.0) };
                let dx = x - t[end];
                row[end] += 1.0;
                row[j] += -dx / h;
                row[j + 1] += dx / h;
                for c in 0..k {
                    row[c] += dx * (wd0 * f[(j, c)] + wd1 * f[(j + 1, c)]);
                }
                continue;
            }
            let j = (t.partition_point(|&v| v <= x).max(1) - 1).min(k - 2);
            let h = t[j + 1] - t[j];
            let am = (t[j + 1] - x) / h;
            let ap = (x - t[j]) / h;
            let cm = ((t[j + 1] - x).powi(3) / h - h * (t[j + 1] - x)) / 6.0;
            let cp = ((x - t[j]).powi(3) / h - h * (x - t[j])) / 6.0;
            row[j] += am;
            row[j + 1] += ap;
            for c in 0..k {
                row[c] += cm * f[(j, c)] + cp * f[(j + 1, c)];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn spline() -> CubicRegression {
        CubicRegression::with_knots(vec![0.0, 0.7, 1.5, 2.0, 3.1, 4.0]).unwrap()
    }

    #[test]
    fn cardinal_at_knots() {
        let s = spline();
        let b = s.design(&s.knots.clone());
        assert!((b - DMatrix::<f64>::identity(6, 6)).norm() < 1e-12);
    }

    #[test]
    fn affine_has_zero_penalty() {
        let s = spline();
        let beta = DVector::from_iterator(6, s.knots.iter().map(|x| 2.0 - 0.5 * x));
        assert!((beta.transpose() * s.penalty() * &beta)[0].abs() < 1e-12);
    }

    #[test]
    fn penalty_matches_quadrature() {
        let s = spline();
        let beta = DVector::from_vec(vec![0.3, -1.2, 0.8, 2.0, -0.4, 0.1]);
        let quad = (beta.transpose() * s.penalty() * &beta)[0];
        // second derivative by central differences of the evaluated spline,
        // integrated with the composite Simpson rule on each knot interval
        // on each knot interval the spline is a cubic polynomial, so a central
        // second difference inside the interval is exact up to rounding and
        // f'' is linear: integrate its square in closed form from two samples
        let f = |x: f64| (s.design(&[x]) * &beta)[0];
        let mut integral = 0.0;
        for w in s.knots.windows(2) {
            let h = w[1] - w[0];
            let e = h / 8.0;
            let second = |x: f64| (f(x + e) - 2.0 * f(x) + f(x - e)) / (e * e);
            let (x1, x2) = (w[0] + h / 4.0, w[0] + 3.0 * h / 4.0);
            let (g1, g2) = (second(x1), second(x2));
            let slope = (g2 - g1) / (x2 - x1);
            let ga = g1 - slope * (x1 - w[0]);
            let gb = g2 + slope * (w[1] - x2);
            integral += h / 3.0 * (ga * ga + ga * gb + gb * gb);
        }
        assert!((quad - integral).abs() < 1e-8 * quad.abs(), "{quad} vs {integral}");
    }

    #[test]
    fn linear_extrapolation_is_continuous() {
        let s = spline();
        let beta = DVector::from_vec(vec![0.3, -1.2, 0.8, 2.0, -0.4, 0.1]);
        let f = |x: f64| (s.design(&[x]) * &beta)[0];
        for end in [0.0, 4.0] {
            let e = 1e-7;
            assert!((f(end - e) - f(end + e)).abs() < 1e-5);
        }
        // beyond the ends the continuation is a straight line
        let (a, b, c) = (f(-3.0), f(-2.0), f(-1.0));
        assert!((a - 2.0 * b + c).abs() < 1e-12);
    }
}
