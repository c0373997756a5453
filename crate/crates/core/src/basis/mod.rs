//! Spline bases and their penalty matrices.

mod bspline;
mod cubic;
mod penalty;
mod thinplate;

pub use bspline::{bspline_matrix, BSplineBasis};
pub use cubic::CubicRegression;
pub use penalty::{adaptive_penalties, difference_matrix, difference_penalty};
pub use thinplate::ThinPlate;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kronecker, null_space_of_rows, psd_rank, row_kronecker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Pspline,
    Thinplate,
    CubicRs,
}

fn default_order() -> usize {
    2
}

fn default_degree() -> usize {
    3
}

/// Declarative description of a one-dimensional smooth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub k: usize,
    /// Difference order of a P-spline penalty.
    #[serde(default = "default_order")]
    pub penalty_order: usize,
    /// Number of adaptive penalty components; 0 means a single penalty.
    #[serde(default)]
    pub adaptive_dim: usize,
    /// B-spline degree of a P-spline.
    #[serde(default = "default_degree")]
    pub degree: usize,
}

impl BasisSpec {
    pub fn pspline(k: usize, adaptive_dim: usize) -> Self {
        Self {
            kind: BasisKind::Pspline,
            k,
            penalty_order: 2,
            adaptive_dim,
            degree: 3,
        }
    }

    pub fn thinplate(k: usize) -> Self {
        Self {
            kind: BasisKind::Thinplate,
            k,
            penalty_order: 2,
            adaptive_dim: 0,
            degree: 3,
        }
    }

    pub fn cubic_rs(k: usize) -> Self {
        Self {
            kind: BasisKind::CubicRs,
            k,
            penalty_order: 2,
            adaptive_dim: 0,
            degree: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BasisKind::Pspline {
            if self.k < self.penalty_order + 1 {
                return Err(Error::Config(format!(
                    "basis dimension {} must be at least penalty order + 1",
                    self.k
                )));
            }
            if self.adaptive_dim >= self.k {
                return Err(Error::Config("adaptive dimension must be below k".into()));
            }
        }
        Ok(())
    }
}

/// Which columns of a basis form the unpenalized affine part and which the
/// penalized remainder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearSplit {
    pub affine: Vec<usize>,
    pub penalized: Vec<usize>,
}

/// A basis evaluated at a set of points together with its penalties.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRealization {
    pub basis: DMatrix<f64>,
    pub penalties: Vec<DMatrix<f64>>,
    pub null_dim: usize,
    pub linear_split: Option<LinearSplit>,
}

#[derive(Serialize)]
struct DenseJson<'a> {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    #[serde(skip)]
    _m: std::marker::PhantomData<&'a ()>,
}

fn dense(m: &DMatrix<f64>) -> DenseJson<'_> {
    DenseJson {
        rows: m.nrows(),
        cols: m.ncols(),
        data: (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)]))
            .collect(),
        _m: std::marker::PhantomData,
    }
}

impl BasisRealization {
    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    /// Dense row-major dump of the basis and penalties.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            basis: DenseJson<'a>,
            penalties: Vec<DenseJson<'a>>,
            null_dim: usize,
            linear_split: &'a Option<LinearSplit>,
        }
        Ok(serde_json::to_string(&Dump {
            basis: dense(&self.basis),
            penalties: self.penalties.iter().map(dense).collect(),
            null_dim: self.null_dim,
            linear_split: &self.linear_split,
        })?)
    }
}

fn null_dim_of(k: usize, penalties: &[DMatrix<f64>]) -> usize {
    let total = penalties
        .iter()
        .fold(DMatrix::zeros(k, k), |acc, s| acc + s / s.norm().max(1e-300));
    k - psd_rank(&total, 1e-9)
}

/// `k` representative points at quantiles of the distinct values.
pub(crate) fn distinct_quantile_points(points: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut u: Vec<f64> = points.iter().copied().filter(|x| x.is_finite()).collect();
    u.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    u.dedup();
    if u.len() < k {
        return Err(Error::InvalidInput(format!(
            "{} distinct values, but the basis needs at least {k}",
            u.len()
        )));
    }
    let nd = u.len();
    Ok((0..k)
        .map(|i| {
            let pos = (i as f64 * (nd - 1) as f64 / (k - 1) as f64).round() as usize;
            u[pos]
        })
        .collect())
}

/// A one-dimensional smooth constructed from data, able to evaluate its basis
/// at new points.
#[derive(Debug, Clone, PartialEq)]
pub enum Smoother {
    PSpline {
        basis: BSplineBasis,
        penalties: Vec<DMatrix<f64>>,
    },
    ThinPlate(ThinPlate),
    Cubic(CubicRegression),
}

impl Smoother {
    pub fn build(spec: &BasisSpec, points: &[f64]) -> Result<Self> {
        spec.validate()?;
        match spec.kind {
            BasisKind::Pspline => {
                let lo = points.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let basis = BSplineBasis::new(spec.k, spec.degree, (lo, hi))?;
                let penalties = if spec.adaptive_dim >= 1 {
                    adaptive_penalties(spec.k, spec.penalty_order, spec.adaptive_dim)?
                } else {
                    vec![difference_penalty(spec.k, spec.penalty_order)?]
                };
                Ok(Smoother::PSpline { basis, penalties })
            }
            BasisKind::Thinplate => Ok(Smoother::ThinPlate(ThinPlate::new(points, spec.k)?)),
            BasisKind::CubicRs => Ok(Smoother::Cubic(CubicRegression::new(points, spec.k)?)),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Smoother::PSpline { basis, .. } => basis.k,
            Smoother::ThinPlate(t) => t.k,
            Smoother::Cubic(c) => c.k(),
        }
    }

    pub fn design(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            Smoother::PSpline { basis, .. } => basis.design(points),
            Smoother::ThinPlate(t) => Ok(t.design(points)),
            Smoother::Cubic(c) => Ok(c.design(points)),
        }
    }

    pub fn penalties(&self) -> Vec<DMatrix<f64>> {
        match self {
            Smoother::PSpline { penalties, .. } => penalties.clone(),
            Smoother::ThinPlate(t) => vec![t.penalty()],
            Smoother::Cubic(c) => vec![c.penalty()],
        }
    }

    pub fn linear_split(&self) -> Option<LinearSplit> {
        match self {
            Smoother::ThinPlate(t) => Some(LinearSplit {
                affine: vec![0, 1],
                penalized: (2..t.k).collect(),
            }),
            _ => None,
        }
    }

    /// Column that holds the constant function, when the basis has one.
    pub fn constant_column(&self) -> Option<usize> {
        matches!(self, Smoother::ThinPlate(_)).then_some(0)
    }

    pub fn realize(&self, points: &[f64]) -> Result<BasisRealization> {
        let penalties = self.penalties();
        Ok(BasisRealization {
            basis: self.design(points)?,
            null_dim: null_dim_of(self.k(), &penalties),
            penalties,
            linear_split: self.linear_split(),
        })
    }
}

/// Thin-plate regression spline realization at `points` with `k` columns.
pub fn thinplate_basis(points: &[f64], k: usize) -> Result<BasisRealization> {
    Smoother::ThinPlate(ThinPlate::new(points, k)?).realize(points)
}

/// Cubic regression spline realization with knots at quantiles of `points`.
pub fn cubic_rs_basis(points: &[f64], k: usize) -> Result<BasisRealization> {
    Smoother::Cubic(CubicRegression::new(points, k)?).realize(points)
}

/// Tensor product of two margins evaluated at matching rows: columns are the
/// row-wise Kronecker product (first margin slow), with one penalty per margin
/// inflated to the product space.
pub fn tensor_product(first: &BasisRealization, second: &BasisRealization) -> Result<BasisRealization> {
    if first.basis.nrows() != second.basis.nrows() {
        return Err(Error::InvalidInput("tensor margins must share evaluation rows".into()));
    }
    let (ka, kb) = (first.k(), second.k());
    let basis = row_kronecker(&first.basis, &second.basis);
    let mut penalties: Vec<DMatrix<f64>> = first
        .penalties
        .iter()
        .map(|s| kronecker(s, &DMatrix::identity(kb, kb)))
        .collect();
    penalties.extend(
        second
            .penalties
            .iter()
            .map(|s| kronecker(&DMatrix::identity(ka, ka), s)),
    );
    Ok(BasisRealization {
        null_dim: null_dim_of(ka * kb, &penalties),
        basis,
        penalties,
        linear_split: None,
    })
}

/// Null-space matrix `Z` (k × (k−1)) for a single linear constraint `c·β = 0`.
///
/// When the basis has an explicit constant column the constraint is absorbed
/// into it (`col_j − (c_j / c_const)·1`), which leaves the penalty and any
/// affine/penalized split untouched. Otherwise an orthonormal null space is
/// used.
pub fn constraint_null_space(c: &DVector<f64>, constant_col: Option<usize>) -> DMatrix<f64> {
    let k = c.len();
    if let Some(c0) = constant_col {
        if c[c0].abs() > 1e-12 * c.amax() {
            let mut z = DMatrix::zeros(k, k - 1);
            for (col, j) in (0..k).filter(|&j| j != c0).enumerate() {
                z[(j, col)] = 1.0;
                z[(c0, col)] = -c[j] / c[c0];
            }
            return z;
        }
    }
    null_space_of_rows(&DMatrix::from_row_slice(1, k, c.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_dimensions_and_null_spaces() {
        let t: Vec<f64> = (0..30).map(|i| (i % 6) as f64 * 4.0 + 2.0).collect();
        let p: Vec<f64> = (0..30).map(|i| (i / 6) as f64 * 100.0 + 50.0 + (i % 3) as f64).collect();
        let mt = cubic_rs_basis(&t, 4).unwrap();
        let mp = cubic_rs_basis(&p, 5).unwrap();
        let tp = tensor_product(&mt, &mp).unwrap();
        assert_eq!(tp.basis.ncols(), 20);
        assert_eq!(tp.penalties.len(), 2);
        for s in &tp.penalties {
            assert_eq!(s.shape(), (20, 20));
            assert!(crate::linalg::sym_eigen(s).0.min() > -1e-10 * s.norm());
        }
        assert_eq!(tp.null_dim, 4);
        // coefficient surface constant in the first margin
        let g: Vec<f64> = (0..5).map(|b| (b as f64).sin()).collect();
        let beta = DVector::from_fn(20, |i, _| g[i % 5]);
        assert!((beta.transpose() * &tp.penalties[0] * &beta)[0].abs() < 1e-10);
    }

    #[test]
    fn tensor_quadratic_forms_match_double_sums() {
        let t: Vec<f64> = (0..12).map(|i| i as f64 * 2.0).collect();
        let p: Vec<f64> = (0..12).map(|i| (i as f64).powi(2)).collect();
        let ma = cubic_rs_basis(&t, 4).unwrap();
        let mb = cubic_rs_basis(&p, 5).unwrap();
        let tp = tensor_product(&ma, &mb).unwrap();
        let theta: Vec<f64> = (0..20).map(|i| ((i * 13 + 5) % 17) as f64 / 7.0 - 1.0).collect();
        let beta = DVector::from_vec(theta.clone());
        let (sa, sb) = (&ma.penalties[0], &mb.penalties[0]);
        let mut qa = 0.0;
        let mut qb = 0.0;
        for a1 in 0..4 {
            for a2 in 0..4 {
                for b in 0..5 {
                    qa += theta[a1 * 5 + b] * sa[(a1, a2)] * theta[a2 * 5 + b];
                }
            }
        }
        for a in 0..4 {
            for b1 in 0..5 {
                for b2 in 0..5 {
                    qb += theta[a * 5 + b1] * sb[(b1, b2)] * theta[a * 5 + b2];
                }
            }
        }
        let fa = (beta.transpose() * &tp.penalties[0] * &beta)[0];
        let fb = (beta.transpose() * &tp.penalties[1] * &beta)[0];
        assert!((fa - qa).abs() < 1e-10 * qa.abs().max(1.0));
        assert!((fb - qb).abs() < 1e-10 * qb.abs().max(1.0));
    }

    #[test]
    fn constraint_absorption_routes() {
        let c = DVector::from_vec(vec![3.0, 1.0, -2.0, 0.5]);
        for z in [constraint_null_space(&c, Some(0)), constraint_null_space(&c, None)] {
            assert_eq!(z.shape(), (4, 3));
            assert!((c.transpose() * &z).norm() < 1e-12);
            assert_eq!(crate::linalg::psd_rank(&(z.transpose() * &z), 1e-12), 3);
        }
    }

    #[test]
    fn realization_null_dims() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let ps = Smoother::build(&BasisSpec::pspline(10, 0), &x).unwrap().realize(&x).unwrap();
        assert_eq!(ps.null_dim, 2);
        let ad = Smoother::build(&BasisSpec::pspline(10, 4), &x).unwrap().realize(&x).unwrap();
        assert_eq!(ad.null_dim, 2);
        assert_eq!(ad.penalties.len(), 4);
        let tp = thinplate_basis(&x, 8).unwrap();
        assert_eq!(tp.null_dim, 2);
        assert!(tp.linear_split.is_some());
        let cr = cubic_rs_basis(&x, 6).unwrap();
        assert_eq!(cr.null_dim, 2);
        let json = cr.to_json().unwrap();
        assert!(json.contains("\"rows\":30"));
    }
}
