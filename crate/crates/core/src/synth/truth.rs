use serde::{Deserialize, Serialize};

use crate::summary::BinGrid;

/// Anchors of the default true coefficient function: a positive hump over
/// light-to-moderate intensities and a negative plateau at high intensities.
pub const HUMP_DIP_ANCHORS: [(f64, f64); 9] = [
    (50.0, 0.0),
    (200.0, 0.3),
    (500.0, 1.0),
    (800.0, 0.7),
    (1100.0, 0.35),
    (1400.0, 0.0),
    (1900.0, -0.8),
    (2400.0, -1.0),
    (3000.0, -1.0),
];

/// True coefficient function over intensity. Values are shifted so that the
/// function is zero at the first grid midpoint, matching the drop-first-bin
/// identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefTruth {
    Zero,
    HumpDip { amplitude: f64 },
    Linear { slope: f64 },
    /// Monotone cubic interpolation through `(p, f)` pairs, constant outside.
    Anchors { points: Vec<(f64, f64)> },
}

impl CoefTruth {
    fn raw(&self, p: f64) -> f64 {
        match self {
            CoefTruth::Zero => 0.0,
            CoefTruth::HumpDip { amplitude } => amplitude * pchip(&HUMP_DIP_ANCHORS, p),
            CoefTruth::Linear { slope } => slope * p,
            CoefTruth::Anchors { points } => pchip(points, p),
        }
    }

    /// `f(p) − f(p₁)` at each point.
    pub fn eval(&self, grid: &BinGrid, points: &[f64]) -> Vec<f64> {
        let base = self.raw(grid.midpoints[0]);
        points.iter().map(|&p| self.raw(p) - base).collect()
    }

    pub fn on_grid(&self, grid: &BinGrid) -> Vec<f64> {
        self.eval(grid, &grid.midpoints)
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CoefTruth::Zero => true,
            CoefTruth::HumpDip { amplitude } => *amplitude == 0.0,
            CoefTruth::Linear { .. } => false,
            CoefTruth::Anchors { points } => points.iter().all(|p| p.1 == points[0].1),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, CoefTruth::Zero | CoefTruth::Linear { .. }) || self.is_zero()
    }
}

/// Piecewise cubic Hermite interpolation with Fritsch–Carlson slopes.
/// Points must be sorted by abscissa; values outside are held constant.
pub fn pchip(points: &[(f64, f64)], x: f64) -> f64 {
    let n = points.len();
    match n {
        0 => return 0.0,
        1 => return points[0].1,
        _ => {}
    }
    if x <= points[0].0 {
        return points[0].1;
    }
    if x >= points[n - 1].0 {
        return points[n - 1].1;
    }
    let h: Vec<f64> = points.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let delta: Vec<f64> = points
        .windows(2)
        .zip(&h)
        .map(|(w, h)| (w[1].1 - w[0].1) / h)
        .collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
    } else {
        d[0] = end(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    let k = points.partition_point(|p| p.0 <= x) - 1;
    let t = (x - points[k].0) / h[k];
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * points[k].1 + h10 * h[k] * d[k] + h01 * points[k + 1].1 + h11 * h[k] * d[k + 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interpolates_anchors() {
        for &(x, y) in &HUMP_DIP_ANCHORS {
            assert!((pchip(&HUMP_DIP_ANCHORS, x) - y).abs() < 1e-12);
        }
        assert_eq!(pchip(&HUMP_DIP_ANCHORS, 10.0), 0.0);
        assert_eq!(pchip(&HUMP_DIP_ANCHORS, 9000.0), -1.0);
    }

    #[test]
    fn reproduces_lines() {
        let pts = [(0.0, 1.0), (1.0, 3.0), (4.0, 9.0), (5.0, 11.0)];
        for x in [0.3, 2.2, 4.7] {
            assert!((pchip(&pts, x) - (1.0 + 2.0 * x)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn stays_within_neighbouring_anchors(x in 50.0f64..3000.0) {
            let k = HUMP_DIP_ANCHORS.partition_point(|p| p.0 <= x).min(HUMP_DIP_ANCHORS.len() - 1).max(1);
            let (a, b) = (HUMP_DIP_ANCHORS[k - 1].1, HUMP_DIP_ANCHORS[k].1);
            let v = pchip(&HUMP_DIP_ANCHORS, x);
            prop_assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
        }
    }
}
