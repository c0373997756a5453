//! Posterior simulation, pointwise bands for coefficient functions, the
//! approximate test for a nonlinear functional effect, and redistribution
//! scenarios.

mod scenario;

pub use scenario::{apply_scenario, Allocation, BinSelection, Scenario};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::fit::{fit_reml, Criteria, FitOptions, FitResult, FittedModel};
use crate::linalg::{quantile_sorted, sym_eigen, symmetrize};
use crate::model::{Dataset, DesignBlocks, HistSource, Term};

pub const DEFAULT_DRAWS: usize = 10_000;
const DRAW_CHUNK: usize = 1024;

/// Coefficient vectors drawn from `N(β̂, V_β)`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub draws: DMatrix<f64>,
    pub seed: u64,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }
}

/// Draws `r` coefficient vectors using the symmetric square root of `V_β`.
/// Draws are generated in fixed-size chunks, each from its own stream of the
/// seeded generator, so the result does not depend on the thread count.
pub fn sample_posterior(fit: &FitResult, r: usize, seed: u64) -> Result<PosteriorDraws> {
    let p = fit.p();
    let v = symmetrize(&fit.v_beta);
    let (vals, vecs) = sym_eigen(&v);
    let max = vals.iter().cloned().fold(0.0, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-8 * max.max(f64::MIN_POSITIVE) || !min.is_finite() {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            suggested_jitter: 1e-10 * v.trace() / p as f64,
        });
    }
    let root = &vecs * DMatrix::from_diagonal(&vals.map(|l| l.max(0.0).sqrt())) * vecs.transpose();
    let chunks: Vec<DMatrix<f64>> = (0..r.div_ceil(DRAW_CHUNK))
        .into_par_iter()
        .map(|c| {
            let rows = DRAW_CHUNK.min(r - c * DRAW_CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let z = DMatrix::from_fn(rows, p, |_, _| StandardNormal.sample(&mut rng));
            let mut d = z * &root;
            for mut row in d.row_iter_mut() {
                row += fit.beta.transpose();
            }
            d
        })
        .collect();
    let mut draws = DMatrix::zeros(r, p);
    for (c, chunk) in chunks.iter().enumerate() {
        draws
            .view_mut((c * DRAW_CHUNK, 0), (chunk.nrows(), p))
            .copy_from(chunk);
    }
    Ok(PosteriorDraws { draws, seed })
}

/// Pointwise posterior band for a coefficient function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub level: f64,
    pub points: Vec<f64>,
    pub estimate: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Band {
    pub fn excludes_zero(&self, i: usize) -> bool {
        self.lower[i] > 0.0 || self.upper[i] < 0.0
    }

    /// Maximal runs of points whose band excludes zero, as `(first, last, sign)`.
    pub fn significant_regions(&self) -> Vec<(f64, f64, i8)> {
        let mut out: Vec<(f64, f64, i8)> = Vec::new();
        let mut prev: Option<i8> = None;
        for i in 0..self.points.len() {
            let sign = if self.lower[i] > 0.0 {
                Some(1)
            } else if self.upper[i] < 0.0 {
                Some(-1)
            } else {
                None
            };
            match (sign, prev) {
                (Some(s), Some(q)) if s == q => out.last_mut().expect("open region").1 = self.points[i],
                (Some(s), _) => out.push((self.points[i], self.points[i], s)),
                _ => {}
            }
            prev = sign;
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["p", "mean", "lo", "hi", "excludes_zero"])?;
        for i in 0..self.points.len() {
            wtr.write_record([
                self.points[i].to_string(),
                self.mean[i].to_string(),
                self.lower[i].to_string(),
                self.upper[i].to_string(),
                self.excludes_zero(i).to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }
}

/// Band for `f = G β_block` at `level`, from type-7 quantiles over draws.
pub fn band_from_basis(fit: &FitResult, draws: &PosteriorDraws, block: usize, points: &[f64], g: &DMatrix<f64>, level: f64) -> Result<Band> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("credible level {level} outside (0, 1)")));
    }
    if draws.is_empty() {
        return Err(Error::InvalidInput("no posterior draws".into()));
    }
    let b = &fit.blocks[block];
    let estimate = g * fit.block_beta(block);
    let f = g * draws.draws.columns(b.start, b.len).transpose();
    let a = (1.0 - level) / 2.0;
    let mut mean = Vec::with_capacity(points.len());
    let mut lower = Vec::with_capacity(points.len());
    let mut upper = Vec::with_capacity(points.len());
    for row in f.row_iter() {
        let mut v: Vec<f64> = row.iter().copied().collect();
        mean.push(v.iter().sum::<f64>() / v.len() as f64);
        v.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&v, a));
        upper.push(quantile_sorted(&v, 1.0 - a));
    }
    Ok(Band {
        level,
        points: points.to_vec(),
        estimate: estimate.iter().copied().collect(),
        mean,
        lower,
        upper,
    })
}

/// Band for the coefficient function of a functional block at `points`
/// (typically the bin midpoints).
pub fn coef_function_band(model: &FittedModel, draws: &PosteriorDraws, block: usize, points: &[f64], level: f64) -> Result<Band> {
    let g = model.layout.coef_function_basis(block, points)?;
    band_from_basis(&model.fit, draws, block, points, &g, level)
}

/// Posterior interval for a percentage change, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval {
    pub level: f64,
    pub lower: f64,
    pub mean: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentChange {
    pub scenario: String,
    pub interval: CredibleInterval,
    /// Change implied by the point estimate `β̂`, in percent.
    pub estimate: f64,
    pub n_subjects: usize,
    /// Subjects without enough source-bin time for the scenario.
    pub skipped: Vec<String>,
}

/// Predicted cohort-mean percentage change in the response when each
/// subject's pooled histogram is modified by `scenario`. For every draw the
/// change `exp(Δη) − 1` is averaged over subjects; the interval is taken over
/// draws.
pub fn percent_change(
    model: &FittedModel,
    draws: &PosteriorDraws,
    data: &Dataset,
    ids: &[String],
    scenario: &Scenario,
    level: f64,
) -> Result<PercentChange> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("credible level {level} outside (0, 1)")));
    }
    for t in &model.spec().terms {
        let unsupported = match t {
            Term::Functional { source, .. } => *source != HistSource::Pooled,
            Term::Functional2d { .. } => true,
            _ => false,
        };
        if unsupported {
            return Err(Error::InvalidInput(format!(
                "scenarios modify the pooled histogram only; term {} is not supported",
                t.label()
            )));
        }
    }
    for b in model.layout.functional_blocks() {
        let g = model.layout.grid(b)?;
        if let Some(h) = ids.iter().find_map(|id| data.hist1d.get(id)) {
            if &h.grid != g {
                return Err(Error::GridMismatch(
                    "summaries were built on a different grid than the fitted model".into(),
                ));
            }
        }
    }
    let (complete, _, _) = model.predict(data, ids)?;
    let mut modified = data.clone();
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    for id in &complete {
        let h = &data.hist1d[id];
        match apply_scenario(h, scenario)? {
            Some(h2) => {
                modified.hist1d.insert(id.clone(), h2);
                used.push(id.clone());
            }
            None => skipped.push(id.clone()),
        }
    }
    if !skipped.is_empty() {
        log::info!(
            "scenario {}: {} subjects lack enough source time and are skipped",
            scenario.name,
            skipped.len()
        );
    }
    if used.is_empty() {
        return Err(Error::EmptyCohort(format!(
            "no subject can accommodate scenario {}",
            scenario.name
        )));
    }
    let dx = model.layout.design(&modified, &used)? - model.layout.design(data, &used)?;
    let stat = |d_eta: &DVector<f64>| -> f64 {
        100.0 * d_eta.iter().map(|v| v.exp_m1()).sum::<f64>() / d_eta.len() as f64
    };
    let estimate = stat(&(&dx * &model.fit.beta));
    let eta = &dx * draws.draws.transpose();
    let mut per_draw: Vec<f64> = eta.column_iter().map(|c| stat(&c.into_owned())).collect();
    let mean = per_draw.iter().sum::<f64>() / per_draw.len() as f64;
    per_draw.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Ok(PercentChange {
        scenario: scenario.name.clone(),
        interval: CredibleInterval {
            level,
            lower: quantile_sorted(&per_draw, a),
            mean,
            upper: quantile_sorted(&per_draw, 1.0 - a),
        },
        estimate,
        n_subjects: used.len(),
        skipped,
    })
}

pub fn write_intervals_csv<W: Write>(w: W, results: &[PercentChange]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["scenario", "level", "lower", "mean", "upper", "estimate", "n_subjects", "n_skipped"])?;
    for r in results {
        wtr.write_record([
            r.scenario.clone(),
            r.interval.level.to_string(),
            r.interval.lower.to_string(),
            r.interval.mean.to_string(),
            r.interval.upper.to_string(),
            r.estimate.to_string(),
            r.n_subjects.to_string(),
            r.skipped.len().to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Approximate likelihood-ratio test of a nonlinear functional effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityTest {
    pub statistic: f64,
    /// Reference degrees of freedom: the difference in `tr(2F − F²)`.
    pub dof: f64,
    /// Difference in effective degrees of freedom `tr(F)`.
    pub edf_difference: f64,
    /// Upper tail of a chi-square with `max(dof, 1)` degrees of freedom;
    /// approximate because both fits are penalized.
    pub p_value: Option<f64>,
    pub inconclusive: bool,
    pub linear: Criteria,
    pub full: Criteria,
}

impl NonlinearityTest {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value.is_some_and(|p| p < alpha)
    }
}

/// Compares REML fits of a design whose functional term is linear with one
/// that adds the penalized nonlinear part of the basis.
pub fn nonlinearity_test(
    linear: &DesignBlocks,
    full: &DesignBlocks,
    y: &DVector<f64>,
    options: &FitOptions,
) -> Result<NonlinearityTest> {
    if linear.n() != full.n() || linear.n() != y.len() {
        return Err(Error::InvalidInput(
            "nested designs must share the same rows".into(),
        ));
    }
    let f0 = fit_reml(linear, y, None, options)?;
    let f1 = fit_reml(full, y, None, options)?;
    Ok(lrt(&f0, &f1))
}

/// Test from two fitted nested models. The full model must add at least a
/// trace of extra flexibility, otherwise the test is inconclusive.
pub fn lrt(linear: &FitResult, full: &FitResult) -> NonlinearityTest {
    let statistic = (2.0 * (full.criteria.log_lik - linear.criteria.log_lik)).max(0.0);
    let edf_difference = full.edf - linear.edf;
    let dof = full.criteria.edf1 - linear.criteria.edf1;
    let inconclusive = !(edf_difference > 1e-6 && dof > 1e-6);
    let p_value = if inconclusive {
        None
    } else {
        ChiSquared::new(dof.max(1.0)).ok().map(|d| d.sf(statistic))
    };
    NonlinearityTest {
        statistic,
        dof,
        edf_difference,
        p_value,
        inconclusive,
        linear: linear.criteria.clone(),
        full: full.criteria.clone(),
    }
}

#[cfg(test)]
mod tests;
