use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Dataset, HistSource, ModelSpec, Parameterization, Term};
use crate::basis::{constraint_null_space, Smoother};
use crate::error::{Error, Result};
use crate::linalg::{psd_rank, row_kronecker, sym_eigen};
use crate::summary::BinGrid;

/// Contiguous range of design columns belonging to one model term (or one
/// factor level of a `by` term).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermBlock {
    pub label: String,
    /// Index into the model's term list; `None` for the intercept.
    pub term: Option<usize>,
    pub start: usize,
    pub len: usize,
}

/// Penalty matrix acting on columns `start..start + s.nrows()`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyBlock {
    pub label: String,
    pub block: usize,
    pub start: usize,
    pub s: DMatrix<f64>,
}

impl PenaltyBlock {
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// The penalty embedded in a `p × p` zero matrix.
    pub fn embedded(&self, p: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(p, p);
        out.view_mut((self.start, self.start), (self.dim(), self.dim()))
            .copy_from(&self.s);
        out
    }
}

/// Full design matrix with its penalties.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlocks {
    pub x: DMatrix<f64>,
    pub column_labels: Vec<String>,
    pub blocks: Vec<TermBlock>,
    pub penalties: Vec<PenaltyBlock>,
}

impl DesignBlocks {
    /// Design with one block per column group given as `(label, len)`, and
    /// penalties given per block index. Mostly useful for tests.
    pub fn from_parts(
        x: DMatrix<f64>,
        groups: &[(&str, usize)],
        penalties: Vec<(usize, DMatrix<f64>)>,
    ) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut labels = Vec::new();
        let mut start = 0;
        for (i, (label, len)) in groups.iter().enumerate() {
            blocks.push(TermBlock {
                label: label.to_string(),
                term: Some(i),
                start,
                len: *len,
            });
            labels.extend((1..=*len).map(|k| format!("{label}.{k}")));
            start += len;
        }
        if start != x.ncols() {
            return Err(Error::InvalidInput(format!(
                "blocks cover {start} columns, design has {}",
                x.ncols()
            )));
        }
        let penalties = penalties
            .into_iter()
            .map(|(b, s)| {
                let blk = blocks.get(b).ok_or_else(|| Error::InvalidInput("no such block".into()))?;
                if s.shape() != (blk.len, blk.len) {
                    return Err(Error::InvalidInput(format!(
                        "penalty for {} must be {}×{}",
                        blk.label, blk.len, blk.len
                    )));
                }
                Ok(PenaltyBlock {
                    label: blk.label.clone(),
                    block: b,
                    start: blk.start,
                    s,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            x,
            column_labels: labels,
            blocks,
            penalties,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn block(&self, label: &str) -> Option<&TermBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }

    /// Copy restricted to the given rows.
    pub fn select_rows(&self, rows: &[usize]) -> DesignBlocks {
        DesignBlocks {
            x: self.x.select_rows(rows),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub subject_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
enum TermLayout {
    Intercept,
    Numeric {
        name: String,
    },
    Factor {
        name: String,
        levels: Vec<String>,
    },
    MeanCpm {
        midpoints: Vec<f64>,
    },
    Smooth {
        covariate: String,
        smoother: Smoother,
        z: DMatrix<f64>,
    },
    Functional {
        source: HistSource,
        grid: BinGrid,
        smoother: Smoother,
        parameterization: Parameterization,
        z: DMatrix<f64>,
        grid_basis: DMatrix<f64>,
        by: Option<(String, Vec<String>)>,
    },
    Functional2d {
        grid: BinGrid,
        hour_width: u32,
        margins: Box<(Smoother, Smoother)>,
        z: DMatrix<f64>,
        grid_basis: DMatrix<f64>,
    },
}

/// Everything needed to rebuild design rows for new subjects: factor levels,
/// smoothers and identifiability constraints fixed on the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub spec: ModelSpec,
    terms: Vec<TermLayout>,
    pub blocks: Vec<TermBlock>,
    pub penalties: Vec<PenaltyBlock>,
    pub column_labels: Vec<String>,
}

/// Result of [`assemble`]: design, response and the listwise-deletion log.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub layout: Layout,
    pub design: DesignBlocks,
    pub y: DVector<f64>,
    pub ids: Vec<String>,
    pub excluded: Vec<Exclusion>,
}

fn one_d_z<'a>(data: &'a Dataset, source: HistSource, id: &str) -> Option<&'a [f64]> {
    match source {
        HistSource::Pooled => data.hist1d.get(id)?.one_d(),
        HistSource::Weekday => data.split.get(id)?.split().map(|(wd, _)| wd.z.as_slice()),
        HistSource::Weekend => data.split.get(id)?.split().map(|(_, we)| we.z.as_slice()),
    }
}

/// `z_jm · l_m` for a two-dimensional summary, in storage order.
fn weighted_2d(data: &Dataset, id: &str) -> Option<Vec<f64>> {
    let (z, w) = data.hist2d.get(id)?.two_d()?;
    Some(z.iter().map(|v| v * w as f64).collect())
}

fn source_name(source: HistSource) -> &'static str {
    match source {
        HistSource::Pooled => "histogram",
        HistSource::Weekday | HistSource::Weekend => "weekday/weekend histogram",
    }
}

/// Reason a subject cannot enter the model, if any.
fn missing_reason(spec: &ModelSpec, data: &Dataset, id: &str, need_response: bool) -> Option<String> {
    if data.row(id).is_none() {
        return Some("no covariate record".into());
    }
    if need_response {
        match data.number(&spec.response, id) {
            None => return Some(format!("missing {}", spec.response)),
            Some(v) if spec.log_response && v <= 0.0 => {
                return Some(format!("non-positive {}", spec.response))
            }
            Some(v) if !v.is_finite() => return Some(format!("non-finite {}", spec.response)),
            _ => {}
        }
    }
    for t in &spec.terms {
        let miss = match t {
            Term::Numeric { name } => data.number(name, id).map_or(Some(name.clone()), |_| None),
            Term::Factor { name } => data.level(name, id).map_or(Some(name.clone()), |_| None),
            Term::Smooth { covariate, .. } => data
                .number(covariate, id)
                .map_or(Some(covariate.clone()), |_| None),
            Term::MeanCpm => one_d_z(data, HistSource::Pooled, id)
                .map_or(Some("histogram".into()), |_| None),
            Term::Functional { source, by, .. } => {
                if one_d_z(data, *source, id).is_none() {
                    Some(source_name(*source).into())
                } else {
                    by.as_ref()
                        .and_then(|g| data.level(g, id).map_or(Some(g.clone()), |_| None))
                }
            }
            Term::Functional2d { .. } => {
                weighted_2d(data, id).map_or(Some("two-dimensional histogram".into()), |_| None)
            }
        };
        if let Some(m) = miss {
            return Some(format!("missing {m}"));
        }
    }
    None
}

/// Ratio of the data and penalty norms for a raw block, measuring the data
/// part only in directions the penalty acts on: columns are residualized on
/// the intercept and the block's penalty null space first.
fn penalty_scale(x_raw: &DMatrix<f64>, penalties: &[DMatrix<f64>]) -> f64 {
    let (n, k) = x_raw.shape();
    let total = penalties
        .iter()
        .fold(DMatrix::zeros(k, k), |acc, s| acc + s);
    let sn = total.norm();
    if !(sn > 0.0) || n == 0 {
        return 1.0;
    }
    let rank = psd_rank(&total, 1e-10);
    let (_, vecs) = sym_eigen(&total);
    let null = vecs.columns(rank, k - rank);
    let mut u = DMatrix::from_element(n, 1 + k - rank, 1.0);
    u.columns_mut(1, k - rank).copy_from(&(x_raw * null));
    let svd = u.svd(true, false);
    let basis = svd.u.expect("left singular vectors");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
        .collect();
    let q = basis.select_columns(&keep);
    let resid = x_raw - &q * (q.transpose() * x_raw);
    let xn = (resid.transpose() * &resid).norm();
    if xn > 0.0 {
        xn / sn
    } else {
        1.0
    }
}

fn stack_rows(rows: &[&[f64]]) -> DMatrix<f64> {
    let cols = rows.first().map(|r| r.len()).unwrap_or(0);
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

fn sorted_levels(data: &Dataset, name: &str, ids: &[String]) -> Vec<String> {
    ids.iter()
        .filter_map(|id| data.level(name, id))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

struct Built {
    layout: TermLayout,
    /// (label, width) of each column block this term contributes.
    blocks: Vec<(String, usize)>,
    /// Per block: its penalties.
    penalties: Vec<Vec<DMatrix<f64>>>,
    labels: Vec<String>,
}

fn numbered(label: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{label}.{i}")).collect()
}

fn build_term(term: &Term, data: &Dataset, ids: &[String]) -> Result<Built> {
    let label = term.label();
    match term {
        Term::Numeric { name } => Ok(Built {
            layout: TermLayout::Numeric { name: name.clone() },
            blocks: vec![(label.clone(), 1)],
            penalties: vec![vec![]],
            labels: vec![label],
        }),
        Term::Factor { name } => {
            let levels = sorted_levels(data, name, ids);
            let labels: Vec<String> = levels.iter().skip(1).map(|l| format!("{name}:{l}")).collect();
            Ok(Built {
                blocks: vec![(label, labels.len())],
                penalties: vec![vec![]],
                labels,
                layout: TermLayout::Factor {
                    name: name.clone(),
                    levels,
                },
            })
        }
        Term::MeanCpm => {
            let first = ids
                .first()
                .and_then(|id| data.hist1d.get(id))
                .ok_or_else(|| Error::InvalidInput("mean cpm needs histograms".into()))?;
            Ok(Built {
                layout: TermLayout::MeanCpm {
                    midpoints: first.grid.midpoints.clone(),
                },
                blocks: vec![(label.clone(), 1)],
                penalties: vec![vec![]],
                labels: vec![label],
            })
        }
        Term::Smooth { covariate, basis } => {
            let xs: Vec<f64> = ids
                .iter()
                .map(|id| data.number(covariate, id).expect("complete rows"))
                .collect();
            let smoother = Smoother::build(basis, &xs)?;
            let b = smoother.design(&xs)?;
            let c = DVector::from_iterator(b.ncols(), b.column_iter().map(|col| col.sum()));
            let z = constraint_null_space(&c, smoother.constant_column());
            let raw = smoother.penalties();
            let scale = penalty_scale(&b, &raw);
            let pens = raw.iter().map(|s| z.transpose() * s * &z * scale).collect();
            Ok(Built {
                labels: numbered(&label, z.ncols()),
                blocks: vec![(label, z.ncols())],
                penalties: vec![pens],
                layout: TermLayout::Smooth {
                    covariate: covariate.clone(),
                    smoother,
                    z,
                },
            })
        }
        Term::Functional {
            source,
            basis,
            by,
            parameterization,
            affine_only,
        } => {
            let grid = ids
                .first()
                .and_then(|id| match source {
                    HistSource::Pooled => data.hist1d.get(id),
                    _ => data.split.get(id),
                })
                .map(|h| h.grid.clone())
                .ok_or_else(|| Error::InvalidInput("functional term needs histograms".into()))?;
            let smoother = Smoother::build(basis, &grid.midpoints)?;
            let b_full = smoother.design(&grid.midpoints)?;
            let c = match parameterization {
                Parameterization::Centered => {
                    DVector::from_iterator(b_full.ncols(), b_full.column_iter().map(|col| col.sum()))
                }
                Parameterization::DropFirstBin => b_full.row(0).transpose(),
            };
            let mut z = constraint_null_space(&c, smoother.constant_column());
            if *affine_only {
                z = z.columns(0, 1).into_owned();
            }
            let grid_basis = &b_full * &z;
            let hist_rows: Vec<&[f64]> = ids
                .iter()
                .map(|id| one_d_z(data, *source, id).expect("complete rows"))
                .collect();
            let raw = smoother.penalties();
            let scale = penalty_scale(&(stack_rows(&hist_rows) * &b_full), &raw);
            let pens: Vec<DMatrix<f64>> = if *affine_only {
                vec![]
            } else {
                raw.iter().map(|s| z.transpose() * s * &z * scale).collect()
            };
            let k = z.ncols();
            let (blocks, labels, by_layout) = match by {
                None => (vec![(label.clone(), k)], numbered(&label, k), None),
                Some(g) => {
                    let levels = sorted_levels(data, g, ids);
                    let mut blocks = Vec::new();
                    let mut labels = Vec::new();
                    for l in &levels {
                        let bl = format!("f({}|{g}={l})", source.label());
                        labels.extend(numbered(&bl, k));
                        blocks.push((bl, k));
                    }
                    (blocks, labels, Some((g.clone(), levels)))
                }
            };
            Ok(Built {
                penalties: vec![pens; blocks.len()],
                blocks,
                labels,
                layout: TermLayout::Functional {
                    source: *source,
                    grid,
                    smoother,
                    parameterization: *parameterization,
                    z,
                    grid_basis,
                    by: by_layout,
                },
            })
        }
        Term::Functional2d { basis_p, basis_t } => {
            let h0 = ids
                .first()
                .and_then(|id| data.hist2d.get(id))
                .ok_or_else(|| Error::InvalidInput("two-dimensional term needs 2D histograms".into()))?;
            let grid = h0.grid.clone();
            let (_, hour_width) = h0.two_d().expect("checked on insert");
            let n_hours = (24 / hour_width) as usize;
            let hours: Vec<f64> = (0..n_hours)
                .map(|m| (m as f64 + 0.5) * hour_width as f64)
                .collect();
            let sp = Smoother::build(basis_p, &grid.midpoints)?;
            let st = Smoother::build(basis_t, &hours)?;
            let (bp, bt) = (sp.design(&grid.midpoints)?, st.design(&hours)?);
            let j_len = grid.len();
            let rows_p = DMatrix::from_fn(j_len * n_hours, bp.ncols(), |r, c| bp[(r / n_hours, c)]);
            let rows_t = DMatrix::from_fn(j_len * n_hours, bt.ncols(), |r, c| bt[(r % n_hours, c)]);
            let b_full = row_kronecker(&rows_p, &rows_t);
            let (kp, kt) = (bp.ncols(), bt.ncols());
            let mut raw: Vec<DMatrix<f64>> = sp
                .penalties()
                .iter()
                .map(|s| s.kronecker(&DMatrix::<f64>::identity(kt, kt)))
                .collect();
            raw.extend(
                st.penalties()
                    .iter()
                    .map(|s| DMatrix::<f64>::identity(kp, kp).kronecker(s)),
            );
            let c = DVector::from_iterator(b_full.ncols(), b_full.column_iter().map(|col| col.sum()));
            let z = constraint_null_space(&c, None);
            let grid_basis = &b_full * &z;
            let zl: Vec<Vec<f64>> = ids
                .iter()
                .map(|id| weighted_2d(data, id).expect("complete rows"))
                .collect();
            let zl_refs: Vec<&[f64]> = zl.iter().map(|v| v.as_slice()).collect();
            let scale = penalty_scale(&(stack_rows(&zl_refs) * &b_full), &raw);
            let pens = raw.iter().map(|s| z.transpose() * s * &z * scale).collect();
            let k = z.ncols();
            Ok(Built {
                blocks: vec![(label.clone(), k)],
                penalties: vec![pens],
                labels: numbered(&label, k),
                layout: TermLayout::Functional2d {
                    grid,
                    hour_width,
                    margins: Box::new((sp, st)),
                    z,
                    grid_basis,
                },
            })
        }
    }
}

/// Builds the design for `spec` on the subjects `ids`, dropping subjects with
/// any missing input (listwise deletion). Bases, constraints, factor levels and
/// penalty scaling are fixed from the retained subjects.
pub fn assemble(spec: &ModelSpec, data: &Dataset, ids: &[String]) -> Result<Assembled> {
    spec.validate()?;
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for id in ids {
        match missing_reason(spec, data, id, true) {
            None => kept.push(id.clone()),
            Some(reason) => excluded.push(Exclusion {
                subject_id: id.clone(),
                reason,
            }),
        }
    }
    if !excluded.is_empty() {
        log::info!(
            "model {}: {} of {} subjects excluded for missing data",
            spec.name,
            excluded.len(),
            ids.len()
        );
    }
    if kept.is_empty() {
        return Err(Error::EmptyCohort(format!(
            "no complete subjects for model {}",
            spec.name
        )));
    }
    let layout = Layout::build(spec, data, &kept)?;
    let x = layout.design(data, &kept)?;
    let y = DVector::from_iterator(
        kept.len(),
        kept.iter().map(|id| {
            let v = data.number(&spec.response, id).expect("complete rows");
            if spec.log_response {
                v.ln()
            } else {
                v
            }
        }),
    );
    let design = DesignBlocks {
        x,
        column_labels: layout.column_labels.clone(),
        blocks: layout.blocks.clone(),
        penalties: layout.penalties.clone(),
    };
    Ok(Assembled {
        layout,
        design,
        y,
        ids: kept,
        excluded,
    })
}

impl Layout {
    pub fn build(spec: &ModelSpec, data: &Dataset, ids: &[String]) -> Result<Layout> {
        let mut terms = vec![TermLayout::Intercept];
        let mut blocks = vec![TermBlock {
            label: "(Intercept)".into(),
            term: None,
            start: 0,
            len: 1,
        }];
        let mut labels = vec!["(Intercept)".to_string()];
        let mut penalties = Vec::new();
        let mut start = 1;
        for (ti, t) in spec.terms.iter().enumerate() {
            let built = build_term(t, data, ids)?;
            for ((label, len), pens) in built.blocks.into_iter().zip(built.penalties) {
                let bi = blocks.len();
                let multi = pens.len() > 1;
                for (a, s) in pens.into_iter().enumerate() {
                    penalties.push(PenaltyBlock {
                        label: if multi {
                            format!("{label}[{}]", a + 1)
                        } else {
                            label.clone()
                        },
                        block: bi,
                        start,
                        s,
                    });
                }
                blocks.push(TermBlock {
                    label,
                    term: Some(ti),
                    start,
                    len,
                });
                start += len;
            }
            labels.extend(built.labels);
            terms.push(built.layout);
        }
        Ok(Layout {
            spec: spec.clone(),
            terms,
            blocks,
            penalties,
            column_labels: labels,
        })
    }

    pub fn p(&self) -> usize {
        self.column_labels.len()
    }

    /// Subjects among `ids` lacking an input this model needs (the response
    /// is not required).
    pub fn incomplete(&self, data: &Dataset, ids: &[String]) -> Vec<Exclusion> {
        ids.iter()
            .filter_map(|id| {
                missing_reason(&self.spec, data, id, false).map(|reason| Exclusion {
                    subject_id: id.clone(),
                    reason,
                })
            })
            .collect()
    }

    /// Design rows for `ids`, using the structure fixed at build time.
    pub fn design(&self, data: &Dataset, ids: &[String]) -> Result<DMatrix<f64>> {
        let mut x = DMatrix::zeros(ids.len(), self.p());
        for (r, id) in ids.iter().enumerate() {
            if let Some(reason) = missing_reason(&self.spec, data, id, false) {
                return Err(Error::InvalidInput(format!("subject {id}: {reason}")));
            }
            let mut col = 0;
            for t in &self.terms {
                match t {
                    TermLayout::Intercept => {
                        x[(r, col)] = 1.0;
                        col += 1;
                    }
                    TermLayout::Numeric { name } => {
                        x[(r, col)] = data.number(name, id).expect("checked");
                        col += 1;
                    }
                    TermLayout::Factor { name, levels } => {
                        let l = data.level(name, id).expect("checked");
                        let pos = levels.iter().position(|v| *v == l).ok_or_else(|| {
                            Error::InvalidInput(format!(
                                "subject {id}: level {l} of {name} was not seen when the model was built"
                            ))
                        })?;
                        if pos > 0 {
                            x[(r, col + pos - 1)] = 1.0;
                        }
                        col += levels.len().saturating_sub(1);
                    }
                    TermLayout::MeanCpm { midpoints } => {
                        let z = one_d_z(data, HistSource::Pooled, id).expect("checked");
                        x[(r, col)] = midpoints.iter().zip(z).map(|(p, z)| p * z).sum();
                        col += 1;
                    }
                    TermLayout::Smooth {
                        covariate,
                        smoother,
                        z,
                    } => {
                        let v = data.number(covariate, id).expect("checked");
                        let row = smoother.design(&[v])? * z;
                        x.view_mut((r, col), (1, z.ncols())).copy_from(&row);
                        col += z.ncols();
                    }
                    TermLayout::Functional {
                        source,
                        grid,
                        grid_basis,
                        by,
                        ..
                    } => {
                        let zh = one_d_z(data, *source, id).expect("checked");
                        if zh.len() != grid.len() {
                            return Err(Error::GridMismatch(format!("subject {id}")));
                        }
                        let k = grid_basis.ncols();
                        let offset = match by {
                            None => 0,
                            Some((g, levels)) => {
                                let l = data.level(g, id).expect("checked");
                                levels.iter().position(|v| *v == l).ok_or_else(|| {
                                    Error::InvalidInput(format!(
                                        "subject {id}: level {l} of {g} was not seen when the model was built"
                                    ))
                                })? * k
                            }
                        };
                        let row = DVector::from_column_slice(zh).transpose() * grid_basis;
                        x.view_mut((r, col + offset), (1, k)).copy_from(&row);
                        col += k * by.as_ref().map_or(1, |(_, l)| l.len());
                    }
                    TermLayout::Functional2d {
                        grid,
                        hour_width,
                        grid_basis,
                        ..
                    } => {
                        let (_, w) = data.hist2d[id].two_d().expect("checked");
                        if w != *hour_width || data.hist2d[id].grid != *grid {
                            return Err(Error::GridMismatch(format!("subject {id}")));
                        }
                        let zl = weighted_2d(data, id).expect("checked");
                        let row = DVector::from_vec(zl).transpose() * grid_basis;
                        let k = grid_basis.ncols();
                        x.view_mut((r, col), (1, k)).copy_from(&row);
                        col += k;
                    }
                }
            }
            debug_assert_eq!(col, self.p());
        }
        Ok(x)
    }

    /// Blocks that hold a one-dimensional coefficient function.
    pub fn functional_blocks(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| {
                b.term
                    .map(|t| matches!(self.terms[t + 1], TermLayout::Functional { .. }))
                    .unwrap_or(false)
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn functional(&self, block: usize) -> Result<(&BinGrid, &Smoother, &DMatrix<f64>, Parameterization)> {
        let t = self.blocks[block]
            .term
            .ok_or_else(|| Error::InvalidInput("the intercept has no coefficient function".into()))?;
        match &self.terms[t + 1] {
            TermLayout::Functional {
                grid,
                smoother,
                z,
                parameterization,
                ..
            } => Ok((grid, smoother, z, *parameterization)),
            _ => Err(Error::InvalidInput(format!(
                "{} is not a functional term",
                self.blocks[block].label
            ))),
        }
    }

    /// Bin grid of a functional block.
    pub fn grid(&self, block: usize) -> Result<&BinGrid> {
        Ok(self.functional(block)?.0)
    }

    pub fn parameterization(&self, block: usize) -> Result<Parameterization> {
        Ok(self.functional(block)?.3)
    }

    /// Matrix `G` with `f(points) = G · β_block` for a functional block.
    pub fn coef_function_basis(&self, block: usize, points: &[f64]) -> Result<DMatrix<f64>> {
        let (_, smoother, z, _) = self.functional(block)?;
        Ok(smoother.design(points)? * z)
    }

    /// Matrix `G` with `f(p_j, t_m) = G · β_block` on the two-dimensional grid,
    /// rows in bin-major order.
    pub fn coef_surface_basis(&self, block: usize) -> Result<DMatrix<f64>> {
        let t = self.blocks[block]
            .term
            .ok_or_else(|| Error::InvalidInput("the intercept has no coefficient surface".into()))?;
        match &self.terms[t + 1] {
            TermLayout::Functional2d { grid_basis, .. } => Ok(grid_basis.clone()),
            _ => Err(Error::InvalidInput(format!(
                "{} is not a two-dimensional term",
                self.blocks[block].label
            ))),
        }
    }

    /// Matrix `G` with `s(points) = G · β_block` for a scalar smooth block.
    pub fn smooth_basis(&self, block: usize, points: &[f64]) -> Result<DMatrix<f64>> {
        let t = self.blocks[block]
            .term
            .ok_or_else(|| Error::InvalidInput("the intercept is not a smooth".into()))?;
        match &self.terms[t + 1] {
            TermLayout::Smooth { smoother, z, .. } => Ok(smoother.design(points)? * z),
            _ => Err(Error::InvalidInput(format!(
                "{} is not a scalar smooth",
                self.blocks[block].label
            ))),
        }
    }
}
