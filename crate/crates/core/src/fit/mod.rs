//! Penalized least squares with REML smoothing-parameter selection.

mod optim;

pub use optim::{minimize, Minimum, Settings};

use std::f64::consts::{LN_10, PI};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_rank, sym_eigen, upper_tri_inverse};
use crate::model::{assemble, Dataset, DesignBlocks, Exclusion, Layout, ModelSpec, TermBlock};

/// Bound on |log10 λ| searched by [`fit_reml`].
pub const LOG10_LAMBDA_BOUND: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Starting values of log10 λ (applied to every smoothing parameter).
    pub starts: Vec<f64>,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: vec![-2.0, 0.0, 2.0],
            max_iter: 200,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub log_lik: f64,
    pub aic: f64,
    pub bic: f64,
    pub adj_r2: f64,
    /// Negative restricted log-likelihood; absent when a λ is zero.
    pub reml: Option<f64>,
    pub rss: f64,
    pub edf: f64,
    /// `tr(2F − F²)`, never below `edf`.
    pub edf1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start_log10_lambda: f64,
    pub score: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    pub starts: Vec<StartTrace>,
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub column_labels: Vec<String>,
    pub blocks: Vec<TermBlock>,
    pub penalty_labels: Vec<String>,
    /// Natural logarithm of the smoothing parameters.
    pub log_lambda: Vec<f64>,
    pub sigma2: f64,
    /// Bayesian posterior covariance of the coefficients.
    pub v_beta: DMatrix<f64>,
    pub edf: f64,
    pub block_edf: Vec<f64>,
    pub criteria: Criteria,
    pub n: usize,
    pub fitted: DVector<f64>,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn block(&self, label: &str) -> Option<&TermBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn block_beta(&self, block: usize) -> DVector<f64> {
        let b = &self.blocks[block];
        self.beta.rows(b.start, b.len).into_owned()
    }

    pub fn block_cov(&self, block: usize) -> DMatrix<f64> {
        let b = &self.blocks[block];
        self.v_beta.view((b.start, b.start), (b.len, b.len)).into_owned()
    }

    /// JSON summary; the covariance matrix is included only on request.
    pub fn write_json<W: Write>(&self, w: W, include_cov: bool) -> Result<()> {
        #[derive(Serialize)]
        struct Coef<'a> {
            label: &'a str,
            estimate: f64,
            se: f64,
        }
        #[derive(Serialize)]
        struct Lambda<'a> {
            label: &'a str,
            log_lambda: f64,
        }
        #[derive(Serialize)]
        struct Edf<'a> {
            term: &'a str,
            edf: f64,
        }
        #[derive(Serialize)]
        struct Out<'a> {
            n: usize,
            converged: bool,
            coefficients: Vec<Coef<'a>>,
            smoothing_parameters: Vec<Lambda<'a>>,
            edf: Vec<Edf<'a>>,
            sigma2: f64,
            criteria: &'a Criteria,
            diagnostics: &'a Diagnostics,
            #[serde(skip_serializing_if = "Option::is_none")]
            v_beta: Option<Vec<Vec<f64>>>,
        }
        let out = Out {
            n: self.n,
            converged: self.converged,
            coefficients: self
                .column_labels
                .iter()
                .enumerate()
                .map(|(i, l)| Coef {
                    label: l,
                    estimate: self.beta[i],
                    se: self.v_beta[(i, i)].max(0.0).sqrt(),
                })
                .collect(),
            smoothing_parameters: self
                .penalty_labels
                .iter()
                .zip(&self.log_lambda)
                .map(|(l, &v)| Lambda {
                    label: l,
                    log_lambda: v,
                })
                .collect(),
            edf: self
                .blocks
                .iter()
                .zip(&self.block_edf)
                .map(|(b, &e)| Edf {
                    term: &b.label,
                    edf: e,
                })
                .collect(),
            sigma2: self.sigma2,
            criteria: &self.criteria,
            diagnostics: &self.diagnostics,
            v_beta: include_cov.then(|| {
                (0..self.p())
                    .map(|i| self.v_beta.row(i).iter().copied().collect())
                    .collect()
            }),
        };
        serde_json::to_writer_pretty(w, &out)?;
        Ok(())
    }
}

struct Root {
    start: usize,
    len: usize,
    /// `L` with `S = LᵀL`, rows for the positive eigenvalues only.
    l: DMatrix<f64>,
}

struct Group {
    start: usize,
    len: usize,
    members: Vec<usize>,
    rank: usize,
}

/// Quantities of a penalized fit at one set of smoothing parameters.
pub struct Evaluation {
    pub beta: DVector<f64>,
    pub rss: f64,
    /// `‖y − Xβ‖² + Σ λ_k βᵀS_kβ`.
    pub penalized_rss: f64,
    r1_inv: DMatrix<f64>,
    pub log_det_a: f64,
    pub edf_per_coef: DVector<f64>,
    pub edf: f64,
    /// `tr(2F − F²)` with `F` the coefficient influence matrix; an upper
    /// companion of `edf` used as reference degrees of freedom in tests.
    pub edf1: f64,
    pub penalty_quad: Vec<f64>,
    pub trace_ainv_s: Vec<f64>,
    /// `log|Σ λ_k S_k|₊` and `tr(S⁺ S_k)`, when every λ is positive.
    pub log_det_s: Option<f64>,
    pub trace_sinv_s: Vec<f64>,
}

impl Evaluation {
    /// `(XᵀX + Σ λ_k S_k)⁻¹`.
    pub fn a_inv(&self) -> DMatrix<f64> {
        &self.r1_inv * self.r1_inv.transpose()
    }
}

/// A design and response reduced once to `R`, `Qᵀy`, so that fits at many
/// smoothing parameters cost O(p³) each.
pub struct Problem<'a> {
    pub design: &'a DesignBlocks,
    n: usize,
    p: usize,
    r: DMatrix<f64>,
    f: DVector<f64>,
    rss0: f64,
    tss: f64,
    roots: Vec<Root>,
    groups: Vec<Group>,
    /// Dimension of the null space of the total penalty.
    pub null_dim: usize,
}

impl<'a> Problem<'a> {
    pub fn new(design: &'a DesignBlocks, y: &DVector<f64>) -> Result<Self> {
        let (n, p) = design.x.shape();
        if y.len() != n {
            return Err(Error::InvalidInput(format!(
                "response has {} values for {n} design rows",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) || design.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in design or response".into()));
        }
        let qr = design.x.clone().qr();
        let m = n.min(p);
        let mut qty = y.clone();
        qr.q_tr_mul(&mut qty);
        let mut r = DMatrix::zeros(p, p);
        r.view_mut((0, 0), (m, p)).copy_from(&qr.r().rows(0, m));
        let mut f = DVector::zeros(p);
        f.rows_mut(0, m).copy_from(&qty.rows(0, m));
        let rss0 = qty.rows(m, n - m).norm_squared();
        let mean = y.mean();
        let tss = y.iter().map(|v| (v - mean).powi(2)).sum();

        let roots: Vec<Root> = design
            .penalties
            .iter()
            .map(|pb| {
                let (vals, vecs) = sym_eigen(&pb.s);
                let max = vals.iter().cloned().fold(0.0_f64, f64::max);
                let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-12 * max).collect();
                let l = DMatrix::from_fn(keep.len(), pb.dim(), |r, c| {
                    vals[keep[r]].sqrt() * vecs[(c, keep[r])]
                });
                Root {
                    start: pb.start,
                    len: pb.dim(),
                    l,
                }
            })
            .collect();
        let mut groups: Vec<Group> = Vec::new();
        for (k, pb) in design.penalties.iter().enumerate() {
            match groups.iter_mut().find(|g| g.start == pb.start) {
                Some(g) if g.len == pb.dim() => g.members.push(k),
                Some(_) => {
                    return Err(Error::InvalidInput(
                        "overlapping penalties must cover the same columns".into(),
                    ))
                }
                None => groups.push(Group {
                    start: pb.start,
                    len: pb.dim(),
                    members: vec![k],
                    rank: 0,
                }),
            }
        }
        for g in &mut groups {
            let total = g.members.iter().fold(DMatrix::zeros(g.len, g.len), |acc, &k| {
                let s = &design.penalties[k].s;
                acc + s / s.norm().max(f64::MIN_POSITIVE)
            });
            g.rank = psd_rank(&total, 1e-10);
        }
        let null_dim = p - groups.iter().map(|g| g.rank).sum::<usize>();
        Ok(Self {
            design,
            n,
            p,
            r,
            f,
            rss0,
            tss,
            roots,
            groups,
            null_dim,
        })
    }

    pub fn n_penalties(&self) -> usize {
        self.roots.len()
    }

    /// Errors with the names of confounded columns when `X` augmented with
    /// the penalties that have positive weight is rank deficient.
    pub fn check_identifiable(&self, active: &[bool]) -> Result<()> {
        let extra: usize = self
            .roots
            .iter()
            .zip(active)
            .filter(|(_, &a)| a)
            .map(|(r, _)| r.l.nrows())
            .sum();
        let mut m = DMatrix::zeros(self.p + extra, self.p);
        m.rows_mut(0, self.p).copy_from(&self.r);
        let mut row = self.p;
        for (root, _) in self.roots.iter().zip(active).filter(|(_, &a)| a) {
            let scale = root.l.norm().max(f64::MIN_POSITIVE);
            m.view_mut((row, root.start), (root.l.nrows(), root.len))
                .copy_from(&(&root.l / scale));
            row += root.l.nrows();
        }
        for mut c in m.column_iter_mut() {
            let norm = c.norm();
            if norm > 0.0 {
                c /= norm;
            }
        }
        let qr = m.col_piv_qr();
        let rr = qr.r();
        let mut order = DMatrix::from_fn(1, self.p, |_, j| j as f64);
        qr.p().permute_columns(&mut order);
        let d0 = rr[(0, 0)].abs();
        let rank = (0..self.p.min(rr.nrows()))
            .filter(|&i| rr[(i, i)].abs() > 1e-9 * d0)
            .count();
        if rank < self.p {
            let columns = (rank..self.p)
                .map(|i| self.design.column_labels[order[(0, i)] as usize].clone())
                .collect();
            return Err(Error::RankDeficient { columns });
        }
        Ok(())
    }

    /// Penalized least-squares solution at smoothing parameters `lambda`
    /// (natural scale, one per penalty).
    pub fn evaluate(&self, lambda: &[f64]) -> Result<Evaluation> {
        let p = self.p;
        if lambda.len() != self.roots.len() {
            return Err(Error::InvalidInput(format!(
                "{} smoothing parameters for {} penalties",
                lambda.len(),
                self.roots.len()
            )));
        }
        if lambda.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::NonFinite {
                log_lambda: lambda.iter().map(|l| l.ln()).collect(),
            });
        }
        let extra: usize = self.roots.iter().map(|r| r.l.nrows()).sum();
        let rows = (p + extra).max(p + 1);
        let mut m = DMatrix::zeros(rows, p + 1);
        m.view_mut((0, 0), (p, p)).copy_from(&self.r);
        m.view_mut((0, p), (p, 1)).copy_from(&self.f);
        let mut row = p;
        for (root, &lam) in self.roots.iter().zip(lambda) {
            let k = root.l.nrows();
            m.view_mut((row, root.start), (k, root.len))
                .copy_from(&(&root.l * lam.sqrt()));
            row += k;
        }
        let ra = m.qr().r();
        let r1 = ra.view((0, 0), (p, p)).into_owned();
        let g: DVector<f64> = ra.column(p).rows(0, p).into_owned();
        let resid2 = ra[(p, p)].powi(2);
        let dmax = r1.diagonal().amax();
        if r1.diagonal().iter().any(|d| d.abs() <= 1e-13 * dmax) || dmax == 0.0 {
            self.check_identifiable(&lambda.iter().map(|&l| l > 0.0).collect::<Vec<_>>())?;
            return Err(Error::RankDeficient { columns: vec![] });
        }
        let r1_inv = upper_tri_inverse(&r1).ok_or(Error::RankDeficient { columns: vec![] })?;
        let beta = &r1_inv * &g;
        let penalized_rss = self.rss0 + resid2;
        let rss = self.rss0 + (&self.f - &self.r * &beta).norm_squared();
        let log_det_a = 2.0 * r1.diagonal().iter().map(|d| d.abs().ln()).sum::<f64>();
        let rr1 = &self.r * &r1_inv;
        let k = &r1_inv * rr1.transpose();
        let edf_per_coef = DVector::from_fn(p, |j, _| (0..p).map(|i| k[(j, i)] * self.r[(i, j)]).sum());
        let edf = edf_per_coef.sum();
        let fmat = &k * &self.r;
        let edf1 = 2.0 * edf - fmat.component_mul(&fmat.transpose()).sum();
        let mut penalty_quad = Vec::with_capacity(lambda.len());
        let mut trace_ainv_s = Vec::with_capacity(lambda.len());
        for root in &self.roots {
            penalty_quad.push((&root.l * beta.rows(root.start, root.len)).norm_squared());
            trace_ainv_s.push((&root.l * r1_inv.rows(root.start, root.len)).norm_squared());
        }
        let (log_det_s, trace_sinv_s) = if lambda.iter().all(|&l| l > 0.0) {
            let mut ld = 0.0;
            let mut tr = vec![0.0; lambda.len()];
            for grp in &self.groups {
                let total = grp.members.iter().fold(DMatrix::zeros(grp.len, grp.len), |acc, &k| {
                    acc + &self.design.penalties[k].s * lambda[k]
                });
                let (vals, vecs) = sym_eigen(&total);
                for i in 0..grp.rank {
                    ld += vals[i].ln();
                }
                let top = vecs.columns(0, grp.rank);
                for &k in &grp.members {
                    let proj = top.transpose() * &self.design.penalties[k].s * top;
                    tr[k] = (0..grp.rank).map(|i| proj[(i, i)] / vals[i]).sum();
                }
            }
            (Some(ld), tr)
        } else {
            (None, vec![f64::NAN; lambda.len()])
        };
        Ok(Evaluation {
            beta,
            rss,
            penalized_rss,
            r1_inv,
            log_det_a,
            edf_per_coef,
            edf,
            edf1,
            penalty_quad,
            trace_ainv_s,
            log_det_s,
            trace_sinv_s,
        })
    }

    fn reml_from(&self, e: &Evaluation) -> Option<f64> {
        let nm = (self.n - self.null_dim) as f64;
        let ld_s = e.log_det_s?;
        Some(nm / 2.0 * ((2.0 * PI * e.penalized_rss / nm).ln() + 1.0) + 0.5 * e.log_det_a - 0.5 * ld_s)
    }

    fn require_dof(&self) -> Result<()> {
        if self.n <= self.null_dim {
            return Err(Error::InvalidInput(format!(
                "{} observations cannot identify a penalty null space of dimension {}",
                self.n, self.null_dim
            )));
        }
        Ok(())
    }

    /// Negative restricted log-likelihood at `log_lambda` (natural log),
    /// profiled over σ².
    pub fn reml_score(&self, log_lambda: &[f64]) -> Result<f64> {
        Ok(self.reml_with_gradient(log_lambda)?.0)
    }

    /// REML score and its gradient with respect to the natural-log smoothing
    /// parameters.
    pub fn reml_with_gradient(&self, log_lambda: &[f64]) -> Result<(f64, DVector<f64>)> {
        self.require_dof()?;
        let lambda: Vec<f64> = log_lambda.iter().map(|v| v.exp()).collect();
        let echo = || Error::NonFinite {
            log_lambda: log_lambda.to_vec(),
        };
        let e = self.evaluate(&lambda)?;
        let score = self.reml_from(&e).ok_or_else(echo)?;
        if !score.is_finite() {
            return Err(echo());
        }
        let nm = (self.n - self.null_dim) as f64;
        let grad = DVector::from_fn(lambda.len(), |k, _| {
            lambda[k]
                * (nm / (2.0 * e.penalized_rss) * e.penalty_quad[k] + 0.5 * e.trace_ainv_s[k]
                    - 0.5 * e.trace_sinv_s[k])
        });
        Ok((score, grad))
    }

    /// Full fit result at fixed smoothing parameters.
    pub fn fit_at(&self, lambda: &[f64]) -> Result<FitResult> {
        let active: Vec<bool> = lambda.iter().map(|&l| l > 0.0).collect();
        self.check_identifiable(&active)?;
        let e = self.evaluate(lambda)?;
        let n = self.n as f64;
        let resid_df = n - e.edf;
        let sigma2 = if resid_df > 0.0 { e.rss / resid_df } else { f64::NAN };
        let log_lik = -n / 2.0 * ((2.0 * PI * e.rss / n).ln() + 1.0);
        let criteria = Criteria {
            log_lik,
            aic: -2.0 * log_lik + 2.0 * (e.edf + 1.0),
            bic: -2.0 * log_lik + n.ln() * (e.edf + 1.0),
            adj_r2: 1.0 - (e.rss / resid_df) / (self.tss / (n - 1.0)),
            reml: if self.n > self.null_dim {
                self.reml_from(&e)
            } else {
                None
            },
            rss: e.rss,
            edf: e.edf,
            edf1: e.edf1,
        };
        let fitted = &self.design.x * &e.beta;
        let block_edf = self
            .design
            .blocks
            .iter()
            .map(|b| e.edf_per_coef.rows(b.start, b.len).sum())
            .collect();
        Ok(FitResult {
            v_beta: e.a_inv() * sigma2,
            beta: e.beta,
            column_labels: self.design.column_labels.clone(),
            blocks: self.design.blocks.clone(),
            penalty_labels: self.design.penalties.iter().map(|p| p.label.clone()).collect(),
            log_lambda: lambda.iter().map(|l| l.ln()).collect(),
            sigma2,
            edf: e.edf,
            block_edf,
            criteria,
            n: self.n,
            fitted,
            converged: true,
            diagnostics: Diagnostics::default(),
        })
    }
}

/// Penalized least-squares fit at fixed smoothing parameters (natural scale).
pub fn penalized_fit(design: &DesignBlocks, y: &DVector<f64>, lambda: &[f64]) -> Result<FitResult> {
    Problem::new(design, y)?.fit_at(lambda)
}

/// REML score at `log_lambda` (natural logarithms).
pub fn reml_score(design: &DesignBlocks, y: &DVector<f64>, log_lambda: &[f64]) -> Result<f64> {
    Problem::new(design, y)?.reml_score(log_lambda)
}

/// Fit with smoothing parameters chosen by minimizing the REML score.
pub fn fit_reml(
    design: &DesignBlocks,
    y: &DVector<f64>,
    init_log_lambda: Option<&[f64]>,
    options: &FitOptions,
) -> Result<FitResult> {
    let prob = Problem::new(design, y)?;
    let m = prob.n_penalties();
    if m == 0 {
        return prob.fit_at(&[]);
    }
    prob.require_dof()?;
    prob.check_identifiable(&vec![true; m])?;
    let bound = LOG10_LAMBDA_BOUND * LN_10;
    let settings = Settings {
        lower: -bound,
        upper: bound,
        max_iter: options.max_iter,
        grad_tol: options.grad_tol,
        max_step: 5.0,
    };
    let starts: Vec<DVector<f64>> = match init_log_lambda {
        Some(init) => {
            if init.len() != m {
                return Err(Error::InvalidInput(format!(
                    "{} initial smoothing parameters for {m} penalties",
                    init.len()
                )));
            }
            vec![DVector::from_column_slice(init)]
        }
        None => options
            .starts
            .iter()
            .map(|s| DVector::from_element(m, s * LN_10))
            .collect(),
    };
    let mut traces = Vec::new();
    let mut best: Option<Minimum> = None;
    for x0 in &starts {
        let objective = |x: &DVector<f64>| prob.reml_with_gradient(x.as_slice()).ok();
        let start_log10 = x0[0] / LN_10;
        match minimize(objective, x0, &settings) {
            Some(min) => {
                traces.push(StartTrace {
                    start_log10_lambda: start_log10,
                    score: Some(min.value),
                    iterations: min.iterations,
                    converged: min.converged,
                    message: None,
                });
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let tol = 1e-9 * (1.0 + b.value.abs());
                        min.value < b.value - tol
                            || ((min.value - b.value).abs() <= tol && min.x.norm() < b.x.norm())
                    }
                };
                if better {
                    best = Some(min);
                }
            }
            None => traces.push(StartTrace {
                start_log10_lambda: start_log10,
                score: None,
                iterations: 0,
                converged: false,
                message: prob
                    .reml_score(x0.as_slice())
                    .err()
                    .map(|e| e.to_string())
                    .or(Some("score could not be evaluated".into())),
            }),
        }
    }
    let Some(best) = best else {
        return Err(Error::OptimizerFailed(
            serde_json::to_string(&traces).unwrap_or_default(),
        ));
    };
    let lambda: Vec<f64> = best.x.iter().map(|v| v.exp()).collect();
    let mut fit = prob.fit_at(&lambda)?;
    fit.log_lambda = best.x.iter().copied().collect();
    fit.converged = best.converged;
    fit.diagnostics = Diagnostics {
        starts: traces,
        gradient: best.gradient.iter().copied().collect(),
    };
    if !fit.converged {
        log::warn!("REML optimization stalled; reporting the best point found");
    }
    Ok(fit)
}

/// A REML fit together with the layout needed to evaluate its terms on new
/// subjects.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub layout: Layout,
    pub fit: FitResult,
    pub ids: Vec<String>,
    pub excluded: Vec<Exclusion>,
    /// Mean of the exponentiated training residuals, for retransforming
    /// log-scale predictions.
    pub smearing: f64,
}

impl FittedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.layout.spec
    }

    /// Linear predictor for the complete subjects among `ids`; the others are
    /// returned as exclusions.
    pub fn predict(&self, data: &Dataset, ids: &[String]) -> Result<(Vec<String>, DVector<f64>, Vec<Exclusion>)> {
        let excluded = self.layout.incomplete(data, ids);
        let kept: Vec<String> = ids
            .iter()
            .filter(|id| !excluded.iter().any(|e| &e.subject_id == *id))
            .cloned()
            .collect();
        let x = self.layout.design(data, &kept)?;
        Ok((kept, x * &self.fit.beta, excluded))
    }
}

/// Assembles `spec` on `ids` (with listwise deletion) and fits it by REML.
pub fn fit_model(spec: &ModelSpec, data: &Dataset, ids: &[String], options: &FitOptions) -> Result<FittedModel> {
    let a = assemble(spec, data, ids)?;
    let fit = fit_reml(&a.design, &a.y, None, options)?;
    let smearing = (&a.y - &fit.fitted).map(f64::exp).mean();
    Ok(FittedModel {
        layout: a.layout,
        fit,
        ids: a.ids,
        excluded: a.excluded,
        smearing,
    })
}

/// Coefficient-function table `p_j, f_hat, se` for one block, given the basis
/// `g` with `f = g · β_block`.
pub fn write_coef_function_csv<W: Write>(
    w: W,
    fit: &FitResult,
    block: usize,
    points: &[f64],
    g: &DMatrix<f64>,
) -> Result<()> {
    let beta = fit.block_beta(block);
    let cov = fit.block_cov(block);
    let f = g * &beta;
    let var = (g * &cov).component_mul(g).column_sum();
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["p_j", "f_hat", "se"])?;
    for (i, p) in points.iter().enumerate() {
        wtr.write_record([p.to_string(), f[i].to_string(), var[i].max(0.0).sqrt().to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::difference_penalty;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, p: usize) -> (DesignBlocks, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let k = p - 2;
        let d = DesignBlocks::from_parts(
            x,
            &[("a", 2), ("s", k)],
            vec![(1, difference_penalty(k, 2).unwrap())],
        )
        .unwrap();
        (d, y)
    }

    #[test]
    fn ols_limit_and_standard_errors() {
        let (d, y) = random_problem(1, 40, 6);
        let fit = penalized_fit(&d, &y, &[0.0]).unwrap();
        let xtx = d.x.transpose() * &d.x;
        let inv = xtx.clone().try_inverse().unwrap();
        let ols = &inv * d.x.transpose() * &y;
        assert!((&fit.beta - &ols).norm() < 1e-10 * ols.norm());
        let rss = (&y - &d.x * &ols).norm_squared();
        let v = inv * (rss / (40.0 - 6.0));
        assert!((&fit.v_beta - &v).norm() < 1e-8 * v.norm());
        assert!((fit.edf - 6.0).abs() < 1e-10);
    }

    #[test]
    fn matches_normal_equations_with_penalty() {
        let (d, y) = random_problem(2, 50, 8);
        let s = d.penalties[0].embedded(8);
        let fit = penalized_fit(&d, &y, &[3.0]).unwrap();
        let a = d.x.transpose() * &d.x + &s * 3.0;
        let beta = a.clone().lu().solve(&(d.x.transpose() * &y)).unwrap();
        assert!((&fit.beta - &beta).norm() < 1e-9 * beta.norm());
        let f = a.try_inverse().unwrap() * d.x.transpose() * &d.x;
        let hat_trace = f.trace();
        assert!((fit.edf - hat_trace).abs() < 1e-9);
        let edf1 = 2.0 * hat_trace - (&f * &f).trace();
        assert!((fit.criteria.edf1 - edf1).abs() < 1e-9);
        assert!(fit.criteria.edf1 >= fit.edf && fit.criteria.edf1 <= 8.0 + 1e-9);
    }

    #[test]
    fn reml_matches_dense_formula() {
        let (d, y) = random_problem(3, 30, 7);
        let prob = Problem::new(&d, &y).unwrap();
        let lam: f64 = 0.7;
        let s = d.penalties[0].embedded(7) * lam;
        let a = d.x.transpose() * &d.x + &s;
        let beta = a.clone().cholesky().unwrap().solve(&(d.x.transpose() * &y));
        let dp = (&y - &d.x * &beta).norm_squared() + (beta.transpose() * &s * &beta)[0];
        let log_det_a = a.cholesky().unwrap().l().diagonal().map(|v| v.ln()).sum() * 2.0;
        let eig = s.symmetric_eigen().eigenvalues;
        let log_det_s: f64 = eig.iter().filter(|&&v| v > 1e-9).map(|v| v.ln()).sum();
        assert_eq!(prob.null_dim, 2 + 2);
        let nm = 30.0 - 4.0;
        let want = nm / 2.0 * ((2.0 * PI * dp / nm).ln() + 1.0) + 0.5 * log_det_a - 0.5 * log_det_s;
        let got = prob.reml_score(&[lam.ln()]).unwrap();
        assert!((got - want).abs() < 1e-9 * want.abs());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (d, y) = random_problem(4, 60, 10);
        let prob = Problem::new(&d, &y).unwrap();
        for rho in [-3.0, -0.5, 1.0, 4.0] {
            let (_, g) = prob.reml_with_gradient(&[rho]).unwrap();
            let h = 1e-4;
            let fd = (prob.reml_score(&[rho + h]).unwrap() - prob.reml_score(&[rho - h]).unwrap()) / (2.0 * h);
            assert!((g[0] - fd).abs() < 1e-5 * fd.abs().max(1e-3), "{} vs {fd}", g[0]);
        }
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = DMatrix::from_fn(20, 4, |_, _| rng.random_range(-1.0..1.0));
        let c0 = x.column(0) * 2.0;
        x.set_column(3, &c0);
        let d = DesignBlocks::from_parts(x, &[("a", 4)], vec![]).unwrap();
        let y = DVector::from_element(20, 1.0);
        match penalized_fit(&d, &y, &[]) {
            Err(Error::RankDeficient { columns }) => {
                assert_eq!(columns.len(), 1);
                assert!(columns[0] == "a.1" || columns[0] == "a.4");
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn edf_decreases_in_lambda() {
        let (d, y) = random_problem(6, 50, 12);
        let mut last = f64::INFINITY;
        for l10 in -4..=8 {
            let fit = penalized_fit(&d, &y, &[10f64.powi(l10)]).unwrap();
            assert!(fit.block_edf[1] <= last + 1e-10);
            assert!(fit.block_edf[1] >= -1e-10 && fit.block_edf[1] <= 10.0 + 1e-10);
            last = fit.block_edf[1];
        }
        assert!(last < 2.0 + 1e-3);
    }

    #[test]
    fn reml_optimum_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 80;
        let k = 12;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let b = crate::basis::bspline_matrix(&xs, k, 3, (0.0, 1.0)).unwrap();
        let y = DVector::from_fn(n, |i, _| (6.0 * xs[i]).sin() + 0.3 * rng.random_range(-1.0..1.0));
        let d = DesignBlocks::from_parts(b, &[("s", k)], vec![(0, difference_penalty(k, 2).unwrap())]).unwrap();
        let fit = fit_reml(&d, &y, None, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.diagnostics.gradient[0].abs() < 1e-5);
        assert!(fit.edf > 3.0 && fit.edf < 12.0);
    }

    #[test]
    fn json_export_lists_coefficients() {
        let (d, y) = random_problem(8, 30, 6);
        let fit = fit_reml(&d, &y, None, &FitOptions::default()).unwrap();
        let mut buf = Vec::new();
        fit.write_json(&mut buf, false).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["coefficients"].as_array().unwrap().len(), 6);
        assert!(v.get("v_beta").is_none());
        let mut buf = Vec::new();
        fit.write_json(&mut buf, true).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["v_beta"].as_array().unwrap().len(), 6);
    }
}
