//! Train/validation splits, prediction error on held-out subjects, and
//! comparison tables across model variants or term deletions.

use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_model, FitOptions, FittedModel};
use crate::model::{Dataset, Exclusion, ModelSpec, Variant};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train_ids: Vec<String>,
    pub valid_ids: Vec<String>,
    pub fraction: f64,
    pub seed: u64,
}

/// Uniform random split with `round(fraction · n)` training subjects. Both
/// parts keep the input order.
pub fn make_split(ids: &[String], fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("training fraction {fraction} outside (0, 1)")));
    }
    if ids.len() < 8 {
        return Err(Error::EmptyCohort(format!(
            "{} subjects are too few to split",
            ids.len()
        )));
    }
    let n = ids.len();
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (train, valid): (Vec<_>, Vec<_>) = ids.iter().cloned().zip(in_train).partition(|(_, t)| *t);
    Ok(Split {
        train_ids: train.into_iter().map(|(id, _)| id).collect(),
        valid_ids: valid.into_iter().map(|(id, _)| id).collect(),
        fraction,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rmspe {
    pub value: f64,
    pub n_used: usize,
    pub excluded: Vec<Exclusion>,
}

/// Root mean squared error of `exp(η̂)` (times the smearing factor when
/// `smearing` is set) against the response on the natural scale.
pub fn rmspe(model: &FittedModel, data: &Dataset, valid_ids: &[String], smearing: bool) -> Result<Rmspe> {
    if let Some(id) = valid_ids.iter().find(|id| model.ids.contains(id)) {
        return Err(Error::InvalidInput(format!(
            "subject {id} was used to train the model it validates"
        )));
    }
    let spec = model.spec();
    let mut excluded = Vec::new();
    let with_response: Vec<String> = valid_ids
        .iter()
        .filter(|id| match data.number(&spec.response, id) {
            Some(_) => true,
            None => {
                excluded.push(Exclusion {
                    subject_id: (*id).clone(),
                    reason: format!("missing {}", spec.response),
                });
                false
            }
        })
        .cloned()
        .collect();
    let (kept, eta, mut more) = model.predict(data, &with_response)?;
    excluded.append(&mut more);
    if kept.is_empty() {
        return Err(Error::EmptyCohort("no complete validation subjects".into()));
    }
    let factor = if smearing { model.smearing } else { 1.0 };
    let sse: f64 = kept
        .iter()
        .zip(eta.iter())
        .map(|(id, e)| {
            let y = data.number(&spec.response, id).expect("checked above");
            let yhat = if spec.log_response { e.exp() * factor } else { *e };
            (y - yhat).powi(2)
        })
        .sum();
    Ok(Rmspe {
        value: (sse / kept.len() as f64).sqrt(),
        n_used: kept.len(),
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub n_train: usize,
    pub edf: Option<f64>,
    pub adj_r2: Option<f64>,
    /// `AIC(reference) − AIC(model)`; positive favours the model.
    pub delta_aic: Option<f64>,
    pub delta_bic: Option<f64>,
    pub rmspe: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CompareOptions {
    pub fit: FitOptions,
    pub smearing: bool,
}

struct Outcome {
    name: String,
    result: Result<(FittedModel, Rmspe)>,
}

fn fit_all(specs: &[ModelSpec], data: &Dataset, split: &Split, opts: &CompareOptions) -> Vec<Outcome> {
    specs
        .par_iter()
        .map(|spec| Outcome {
            name: spec.name.clone(),
            result: fit_model(spec, data, &split.train_ids, &opts.fit).and_then(|m| {
                let r = rmspe(&m, data, &split.valid_ids, opts.smearing)?;
                Ok((m, r))
            }),
        })
        .collect()
}

fn rows(outcomes: Vec<Outcome>, reference: usize) -> Vec<ComparisonRow> {
    let base = outcomes[reference]
        .result
        .as_ref()
        .ok()
        .map(|(m, _)| m.fit.criteria.clone());
    let mut rows: Vec<ComparisonRow> = outcomes
        .into_iter()
        .map(|o| match o.result {
            Ok((m, r)) => {
                let c = &m.fit.criteria;
                ComparisonRow {
                    model: o.name,
                    n_train: m.fit.n,
                    edf: Some(c.edf),
                    adj_r2: Some(c.adj_r2),
                    delta_aic: base.as_ref().map(|b| b.aic - c.aic),
                    delta_bic: base.as_ref().map(|b| b.bic - c.bic),
                    rmspe: Some(r.value),
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("model {} failed: {e}", o.name);
                ComparisonRow {
                    model: o.name,
                    n_train: 0,
                    edf: None,
                    adj_r2: None,
                    delta_aic: None,
                    delta_bic: None,
                    rmspe: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    rows.sort_by(|a, b| match (a.rmspe, b.rmspe) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    rows
}

/// Fits every spec on the training part and scores it on the validation
/// part. Differences are relative to the model of variant `Base`, or to the
/// first spec when there is none. Rows are sorted by RMSPE, failed fits last.
pub fn compare_family(specs: &[ModelSpec], data: &Dataset, split: &Split, opts: &CompareOptions) -> Result<Vec<ComparisonRow>> {
    if specs.is_empty() {
        return Err(Error::Config("no models to compare".into()));
    }
    let reference = specs
        .iter()
        .position(|s| s.variant == Variant::Base)
        .unwrap_or(0);
    Ok(rows(fit_all(specs, data, split, opts), reference))
}

/// Refits `spec` with each term removed in turn; differences are relative to
/// the full model, which is included as a row.
pub fn drop_term(spec: &ModelSpec, data: &Dataset, split: &Split, opts: &CompareOptions) -> Result<Vec<ComparisonRow>> {
    if spec.terms.len() < 2 {
        return Err(Error::Config(format!(
            "model {} needs at least two terms to drop one",
            spec.name
        )));
    }
    let mut specs = vec![spec.clone()];
    specs.extend((0..spec.terms.len()).map(|i| spec.without_term(i)));
    Ok(rows(fit_all(&specs, data, split, opts), 0))
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "NA".into())
}

pub fn write_comparison_csv<W: Write>(w: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["model", "N_T", "edf", "adj_R2", "delta_AIC", "delta_BIC", "RMSPE", "error"])?;
    let s = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into());
    for r in rows {
        wtr.write_record([
            r.model.clone(),
            r.n_train.to_string(),
            s(r.edf),
            s(r.adj_r2),
            s(r.delta_aic),
            s(r.delta_bic),
            s(r.rmspe),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Fixed-width table in the column order model, N_T, edf, adj.R², ΔAIC,
/// ΔBIC, RMSPE.
pub fn format_table(rows: &[ComparisonRow]) -> String {
    let width = rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>5}  {:>6}  {:>7}  {:>8}  {:>8}  {:>7}",
        "model", "N_T", "edf", "adj.R2", "dAIC", "dBIC", "RMSPE"
    );
    for r in rows {
        let _ = write!(
            out,
            "{:<width$}  {:>5}  {:>6}  {:>7}  {:>8}  {:>8}  {:>7}",
            r.model,
            r.n_train,
            fmt_opt(r.edf, 2),
            fmt_opt(r.adj_r2, 3),
            fmt_opt(r.delta_aic, 2),
            fmt_opt(r.delta_bic, 2),
            fmt_opt(r.rmspe, 3),
        );
        if let Some(e) = &r.error {
            let _ = write!(out, "  failed: {e}");
        }
        out.push('\n');
    }
    out
}
