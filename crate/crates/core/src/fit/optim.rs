//! Box-constrained quasi-Newton minimization.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub lower: f64,
    pub upper: f64,
    pub max_iter: usize,
    /// Convergence threshold on the projected gradient (max norm).
    pub grad_tol: f64,
    /// Largest change of any coordinate in one step.
    pub max_step: f64,
}

fn projected(x: &DVector<f64>, g: &DVector<f64>, s: &Settings) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let blocked = (x[i] <= s.lower && g[i] > 0.0) || (x[i] >= s.upper && g[i] < 0.0);
        if blocked {
            0.0
        } else {
            g[i]
        }
    })
}

/// BFGS with projection onto the box. `f` returns the value and gradient, or
/// `None` where the objective cannot be evaluated (treated as +∞).
pub fn minimize<F>(mut f: F, x0: &DVector<f64>, s: &Settings) -> Option<Minimum>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let n = x0.len();
    let clamp = |v: DVector<f64>| v.map(|e| e.clamp(s.lower, s.upper));
    let mut x = clamp(x0.clone());
    let (mut fx, mut g) = f(&x)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < s.max_iter {
        let pg = projected(&x, &g, s);
        if pg.amax() < s.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let free: Vec<bool> = (0..n).map(|i| pg[i] != 0.0 || g[i] == 0.0).collect();
        let mut d = -(&h * &pg);
        for i in 0..n {
            if !free[i] {
                d[i] = 0.0;
            }
        }
        if d.dot(&pg) >= 0.0 {
            h = DMatrix::identity(n, n);
            d = -pg.clone();
        }
        let longest = d.amax();
        if longest > s.max_step {
            d *= s.max_step / longest;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn = clamp(&x + &d * t);
            let step = &xn - &x;
            if step.amax() == 0.0 {
                break;
            }
            if let Some((fnew, gnew)) = f(&xn) {
                if fnew.is_finite() && fnew <= fx + 1e-4 * g.dot(&step) {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            // no descent possible: stationary up to numerical precision
            converged = pg.amax() < s.grad_tol * 1e3;
            break;
        };
        let sv = &xn - &x;
        let yv = &gnew - &g;
        let sy = sv.dot(&yv);
        let small_change = (fx - fnew).abs() <= 1e-14 * (1.0 + fx.abs()) && sv.amax() < 1e-10;
        if sy > 1e-12 * sv.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - &sv * yv.transpose() * rho;
            let right = &eye - &yv * sv.transpose() * rho;
            h = &left * &h * &right + &sv * sv.transpose() * rho;
        }
        x = xn;
        fx = fnew;
        g = gnew;
        if small_change {
            converged = projected(&x, &g, s).amax() < s.grad_tol * 1e3;
            break;
        }
    }
    Some(Minimum {
        x,
        value: fx,
        gradient: g,
        iterations,
        converged,
    })
}
