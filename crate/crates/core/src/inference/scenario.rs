use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summary::{BinGrid, HistogramData, HistogramSummary};

/// Set of bins, by index or by a midpoint range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinSelection {
    Indices { bins: Vec<usize> },
    /// Bins whose midpoint lies strictly between the bounds.
    Midpoints {
        #[serde(default)]
        above: Option<f64>,
        #[serde(default)]
        below: Option<f64>,
    },
}

impl BinSelection {
    pub fn resolve(&self, grid: &BinGrid) -> Result<Vec<usize>> {
        let bins: Vec<usize> = match self {
            BinSelection::Indices { bins } => {
                if let Some(&j) = bins.iter().find(|&&j| j >= grid.len()) {
                    return Err(Error::Config(format!(
                        "bin index {j} out of range for a grid of {} bins",
                        grid.len()
                    )));
                }
                let mut b = bins.clone();
                b.sort_unstable();
                b.dedup();
                b
            }
            BinSelection::Midpoints { above, below } => grid
                .midpoints
                .iter()
                .enumerate()
                .filter(|(_, &m)| above.is_none_or(|a| m > a) && below.is_none_or(|b| m < b))
                .map(|(j, _)| j)
                .collect(),
        };
        if bins.is_empty() {
            return Err(Error::Config(format!("bin selection {self:?} is empty on this grid")));
        }
        Ok(bins)
    }
}

/// How added time is spread over the target bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    #[default]
    EqualMassPerBin,
    /// Proportional to bin width.
    EqualMassPerWidth,
}

/// Moves a daily time budget from source bins to target bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    pub minutes_moved: f64,
    pub source: BinSelection,
    pub target: BinSelection,
    pub allocation: Allocation,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::sedentary_to_above("scenario 1", 3600.0)
    }
}

impl Scenario {
    /// Fifteen minutes a day taken from the first bin and spread over bins
    /// with midpoint above `threshold`.
    pub fn sedentary_to_above(name: &str, threshold: f64) -> Self {
        Self {
            name: name.into(),
            minutes_moved: 15.0,
            source: BinSelection::Indices { bins: vec![0] },
            target: BinSelection::Midpoints {
                above: Some(threshold),
                below: None,
            },
            allocation: Allocation::EqualMassPerBin,
        }
    }

    /// The two default scenarios: above 3600 and above 6200 cpm.
    pub fn defaults() -> Vec<Scenario> {
        vec![
            Self::sedentary_to_above("scenario 1", 3600.0),
            Self::sedentary_to_above("scenario 2", 6200.0),
        ]
    }

    pub fn resolve(&self, grid: &BinGrid) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(self.minutes_moved >= 0.0) || !self.minutes_moved.is_finite() {
            return Err(Error::Config(format!(
                "scenario {}: minutes moved must be non-negative",
                self.name
            )));
        }
        let s = self.source.resolve(grid)?;
        let t = self.target.resolve(grid)?;
        if s.iter().any(|j| t.contains(j)) {
            return Err(Error::Config(format!(
                "scenario {}: source and target bins overlap",
                self.name
            )));
        }
        Ok((s, t))
    }
}

/// Applies `s` to a pooled histogram. Returns `None` when the subject has
/// less source time than the scenario moves.
pub fn apply_scenario(h: &HistogramSummary, s: &Scenario) -> Result<Option<HistogramSummary>> {
    let z = h
        .one_d()
        .ok_or_else(|| Error::InvalidInput("scenarios apply to pooled histograms".into()))?;
    let (source, target) = s.resolve(&h.grid)?;
    if s.minutes_moved == 0.0 {
        return Ok(Some(h.clone()));
    }
    let daily = h
        .daily_weartime()
        .filter(|d| *d > 0.0)
        .ok_or_else(|| Error::InvalidInput(format!("subject {} has no weartime", h.subject_id)))?;
    let m = s.minutes_moved / daily;
    let available: f64 = source.iter().map(|&j| z[j]).sum();
    if available < m {
        return Ok(None);
    }
    let mut out = z.to_vec();
    for &j in &source {
        out[j] = (z[j] - m * z[j] / available).max(0.0);
    }
    let weights: Vec<f64> = match s.allocation {
        Allocation::EqualMassPerBin => vec![1.0; target.len()],
        Allocation::EqualMassPerWidth => target.iter().map(|&j| h.grid.width(j)).collect(),
    };
    let total: f64 = weights.iter().sum();
    for (&j, w) in target.iter().zip(&weights) {
        out[j] += m * w / total;
    }
    let mut res = h.clone();
    res.data = HistogramData::OneD { z: out };
    Ok(Some(res))
}
