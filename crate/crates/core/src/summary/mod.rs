//! Histogram functional summaries of cleaned profiles.
//!
//! A one-dimensional summary holds the relative frequency of worn minutes in
//! each intensity bin. Two-dimensional summaries add an hour-of-day axis and
//! are stored as densities over hour bins, so that `Σ_j Σ_m z(j,m)·l_m = 1`.
//! Split summaries keep separate weekday and weekend histograms.

mod io;

pub use io::{
    read_grid_json, read_hist1d_csv, read_hist2d_csv, read_split_csv, write_grid_json,
    write_hist1d_csv, write_hist2d_csv, write_split_csv,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::CleanProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    /// Bins equally wide on the scale `u = c^alpha`.
    Power { alpha: f64 },
}

impl Transform {
    fn forward(self, c: f64) -> f64 {
        match self {
            Transform::Identity => c,
            Transform::Power { alpha } => c.powf(alpha),
        }
    }

    fn inverse(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Power { alpha } => u.powf(1.0 / alpha),
        }
    }
}

/// Intensity bins over counts per minute. The last bin is closed on the right
/// so that a count equal to the cap still has a bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub edges: Vec<f64>,
    pub midpoints: Vec<f64>,
    pub transform: Transform,
}

impl BinGrid {
    pub fn from_edges(edges: Vec<f64>, transform: Transform) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Config("a bin grid needs at least two edges".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) || edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Config("bin edges must be finite and strictly increasing".into()));
        }
        if let Transform::Power { alpha } = transform {
            if !(alpha > 0.0) || edges[0] < 0.0 {
                return Err(Error::Config("power transform needs alpha > 0 and edges ≥ 0".into()));
            }
        }
        let midpoints = edges
            .windows(2)
            .map(|w| transform.inverse(0.5 * (transform.forward(w[0]) + transform.forward(w[1]))))
            .collect();
        Ok(Self {
            edges,
            midpoints,
            transform,
        })
    }

    pub fn len(&self) -> usize {
        self.midpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.midpoints.is_empty()
    }

    pub fn width(&self, j: usize) -> f64 {
        self.edges[j + 1] - self.edges[j]
    }

    /// Index of the bin containing `count`, or `None` outside the grid.
    pub fn bin_of(&self, count: f64) -> Option<usize> {
        let last = *self.edges.last()?;
        if count < self.edges[0] || count > last {
            return None;
        }
        if count == last {
            return Some(self.len() - 1);
        }
        Some(self.edges.partition_point(|&e| e <= count) - 1)
    }

    /// The grid with its first bin removed.
    pub fn without_first_bin(&self) -> BinGrid {
        BinGrid {
            edges: self.edges[1..].to_vec(),
            midpoints: self.midpoints[1..].to_vec(),
            transform: self.transform,
        }
    }

    /// Indices of bins whose midpoint lies strictly above `threshold`.
    pub fn bins_above(&self, threshold: f64) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.midpoints[j] > threshold).collect()
    }
}

/// Builds the standard grid: equal-width bins of `width` up to `upper`, then a
/// single tail bin `[upper, cap]`. With a power transform the bins below
/// `upper` are equally wide on the transformed scale instead.
pub fn make_bins(width: f64, upper: f64, cap: f64, transform: Transform) -> Result<BinGrid> {
    if !(width > 0.0) || !(upper > 0.0) {
        return Err(Error::Config("bin width and upper limit must be positive".into()));
    }
    if cap <= upper {
        return Err(Error::Config(format!("cap {cap} must exceed upper edge {upper}")));
    }
    let n = upper / width;
    if (n - n.round()).abs() > 1e-9 {
        return Err(Error::Config(format!("upper edge {upper} is not a multiple of width {width}")));
    }
    let n = n.round() as usize;
    let u_upper = transform.forward(upper);
    let mut edges: Vec<f64> = (0..n)
        .map(|k| match transform {
            Transform::Identity => k as f64 * width,
            Transform::Power { .. } => transform.inverse(k as f64 * u_upper / n as f64),
        })
        .collect();
    edges.push(upper);
    edges.push(cap);
    BinGrid::from_edges(edges, transform)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideHistogram {
    pub z: Vec<f64>,
    pub weartime: usize,
    /// Set when no worn minute fell on this side; `z` is then all zero.
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HistogramData {
    OneD { z: Vec<f64> },
    /// Densities stored bin-major: `z[j * n_hours + m]`.
    TwoD { z: Vec<f64>, hour_width: u32 },
    Split {
        weekday: SideHistogram,
        weekend: SideHistogram,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub subject_id: String,
    pub grid: BinGrid,
    pub weartime_minutes: usize,
    pub valid_days: usize,
    pub data: HistogramData,
}

impl HistogramSummary {
    pub fn one_d(&self) -> Option<&[f64]> {
        match &self.data {
            HistogramData::OneD { z } => Some(z),
            _ => None,
        }
    }

    pub fn two_d(&self) -> Option<(&[f64], u32)> {
        match &self.data {
            HistogramData::TwoD { z, hour_width } => Some((z, *hour_width)),
            _ => None,
        }
    }

    pub fn split(&self) -> Option<(&SideHistogram, &SideHistogram)> {
        match &self.data {
            HistogramData::Split { weekday, weekend } => Some((weekday, weekend)),
            _ => None,
        }
    }

    /// Average worn minutes per valid day.
    pub fn daily_weartime(&self) -> Option<f64> {
        (self.valid_days > 0 && self.weartime_minutes > 0)
            .then(|| self.weartime_minutes as f64 / self.valid_days as f64)
    }

    /// Number of hour bins of a two-dimensional summary.
    pub fn n_hours(&self) -> Option<usize> {
        self.two_d().map(|(_, w)| 24 / w as usize)
    }
}

fn usable(p: &CleanProfile) -> Result<()> {
    if !p.valid {
        return Err(Error::InvalidInput(format!(
            "profile {} is invalid: {} valid days",
            p.subject_id, p.valid_days
        )));
    }
    if p.weartime_total == 0 {
        return Err(Error::InvalidInput(format!("profile {} has no weartime", p.subject_id)));
    }
    Ok(())
}

fn tally<'a>(
    grid: &BinGrid,
    minutes: impl Iterator<Item = (usize, u32)> + 'a,
    mut visit: impl FnMut(usize, usize),
) -> Result<()> {
    for (minute_of_day, count) in minutes {
        let j = grid.bin_of(count as f64).ok_or_else(|| {
            Error::InvalidInput(format!("count {count} lies outside the bin grid"))
        })?;
        visit(j, minute_of_day);
    }
    Ok(())
}

fn worn_minutes<'a>(
    p: &'a CleanProfile,
    keep_day: impl Fn(bool) -> bool + 'a,
) -> impl Iterator<Item = (usize, u32)> + 'a {
    p.days
        .iter()
        .filter(move |d| d.valid && keep_day(d.weekday))
        .flat_map(|d| {
            d.counts
                .iter()
                .enumerate()
                .filter_map(|(m, c)| c.map(|v| (m, v)))
        })
}

/// Relative frequency of worn minutes per intensity bin.
pub fn hist1d(p: &CleanProfile, grid: &BinGrid) -> Result<HistogramSummary> {
    usable(p)?;
    let mut counts = vec![0u64; grid.len()];
    tally(grid, worn_minutes(p, |_| true), |j, _| counts[j] += 1)?;
    let total = p.weartime_total as f64;
    Ok(HistogramSummary {
        subject_id: p.subject_id.clone(),
        grid: grid.clone(),
        weartime_minutes: p.weartime_total,
        valid_days: p.valid_days,
        data: HistogramData::OneD {
            z: counts.iter().map(|&c| c as f64 / total).collect(),
        },
    })
}

/// Density over intensity × hour-of-day, normalized so that `Σ z·l_m = 1`.
pub fn hist2d(p: &CleanProfile, grid: &BinGrid, hour_width: u32) -> Result<HistogramSummary> {
    if hour_width == 0 || 24 % hour_width != 0 {
        return Err(Error::Config(format!("24 is not divisible by hour width {hour_width}")));
    }
    usable(p)?;
    let n_hours = (24 / hour_width) as usize;
    let mut counts = vec![0u64; grid.len() * n_hours];
    let minutes_per_bin = 60 * hour_width as usize;
    tally(grid, worn_minutes(p, |_| true), |j, minute| {
        counts[j * n_hours + minute / minutes_per_bin] += 1
    })?;
    let norm = p.weartime_total as f64 * hour_width as f64;
    Ok(HistogramSummary {
        subject_id: p.subject_id.clone(),
        grid: grid.clone(),
        weartime_minutes: p.weartime_total,
        valid_days: p.valid_days,
        data: HistogramData::TwoD {
            z: counts.iter().map(|&c| c as f64 / norm).collect(),
            hour_width,
        },
    })
}

/// Separate weekday (Mon–Fri) and weekend histograms, each normalized by its
/// own weartime. A side without worn minutes is all zero and flagged.
pub fn hist_split(p: &CleanProfile, grid: &BinGrid) -> Result<HistogramSummary> {
    usable(p)?;
    let side = |weekday: bool| -> Result<SideHistogram> {
        let mut counts = vec![0u64; grid.len()];
        tally(grid, worn_minutes(p, move |wd| wd == weekday), |j, _| counts[j] += 1)?;
        let weartime: u64 = counts.iter().sum();
        Ok(SideHistogram {
            z: counts
                .iter()
                .map(|&c| if weartime > 0 { c as f64 / weartime as f64 } else { 0.0 })
                .collect(),
            weartime: weartime as usize,
            empty: weartime == 0,
        })
    };
    Ok(HistogramSummary {
        subject_id: p.subject_id.clone(),
        grid: grid.clone(),
        weartime_minutes: p.weartime_total,
        valid_days: p.valid_days,
        data: HistogramData::Split {
            weekday: side(true)?,
            weekend: side(false)?,
        },
    })
}

/// Mean counts per minute implied by a one-dimensional histogram.
pub fn mean_cpm(h: &HistogramSummary) -> Result<f64> {
    let z = h
        .one_d()
        .ok_or_else(|| Error::InvalidInput("mean_cpm needs a one-dimensional histogram".into()))?;
    Ok(z.iter().zip(&h.grid.midpoints).map(|(z, p)| z * p).sum())
}

/// Deletes the first bin without renormalizing the rest.
pub fn drop_first_bin(h: &HistogramSummary) -> Result<HistogramSummary> {
    let data = match &h.data {
        HistogramData::OneD { z } => HistogramData::OneD { z: z[1..].to_vec() },
        HistogramData::Split { weekday, weekend } => {
            let cut = |s: &SideHistogram| SideHistogram {
                z: s.z[1..].to_vec(),
                ..s.clone()
            };
            HistogramData::Split {
                weekday: cut(weekday),
                weekend: cut(weekend),
            }
        }
        HistogramData::TwoD { .. } => {
            return Err(Error::InvalidInput(
                "drop_first_bin applies to one-dimensional or split histograms".into(),
            ))
        }
    };
    Ok(HistogramSummary {
        grid: h.grid.without_first_bin(),
        data,
        ..h.clone()
    })
}

/// Sums a one-dimensional histogram onto a coarser grid whose edges are a
/// subset of this grid's edges.
pub fn rebin(h: &HistogramSummary, coarse: &BinGrid) -> Result<HistogramSummary> {
    let z = h
        .one_d()
        .ok_or_else(|| Error::InvalidInput("rebin needs a one-dimensional histogram".into()))?;
    let fine = &h.grid;
    if coarse.edges.first() != fine.edges.first() || coarse.edges.last() != fine.edges.last() {
        return Err(Error::GridMismatch("coarse grid must span the same range".into()));
    }
    let mut out = vec![0.0; coarse.len()];
    for (j, &zj) in z.iter().enumerate() {
        let lo = fine.edges[j];
        let k = coarse.edges.partition_point(|&e| e <= lo) - 1;
        if fine.edges[j + 1] > coarse.edges[k + 1] {
            return Err(Error::GridMismatch(format!(
                "fine bin [{}, {}) straddles a coarse edge",
                lo,
                fine.edges[j + 1]
            )));
        }
        out[k] += zj;
    }
    Ok(HistogramSummary {
        grid: coarse.clone(),
        data: HistogramData::OneD { z: out },
        ..h.clone()
    })
}

/// Pearson correlation of bin frequencies across subjects. Entries involving
/// a bin with zero variance are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCorrelation {
    pub matrix: Vec<Vec<Option<f64>>>,
}

pub fn bin_correlation(hs: &[HistogramSummary]) -> Result<BinCorrelation> {
    if hs.len() < 3 {
        return Err(Error::InvalidInput("bin correlation needs at least 3 subjects".into()));
    }
    let grid = &hs[0].grid;
    let rows: Vec<&[f64]> = hs
        .iter()
        .map(|h| {
            if h.grid != *grid {
                return Err(Error::GridMismatch(format!("subject {}", h.subject_id)));
            }
            h.one_d()
                .ok_or_else(|| Error::InvalidInput("bin correlation needs one-dimensional histograms".into()))
        })
        .collect::<Result<_>>()?;
    let j = grid.len();
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..j).map(|b| rows.iter().map(|r| r[b]).sum::<f64>() / n).collect();
    let centered: Vec<Vec<f64>> = (0..j)
        .map(|b| rows.iter().map(|r| r[b] - means[b]).collect())
        .collect();
    let ss: Vec<f64> = centered.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
    let scale = |b: usize| ss[b] > 1e-300 && ss[b].sqrt() > 1e-14 * means[b].abs().max(1e-300);
    let mut matrix = vec![vec![None; j]; j];
    for a in 0..j {
        if !scale(a) {
            continue;
        }
        matrix[a][a] = Some(1.0);
        for b in (a + 1)..j {
            if !scale(b) {
                continue;
            }
            let cov: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
            let r = (cov / (ss[a] * ss[b]).sqrt()).clamp(-1.0, 1.0);
            matrix[a][b] = Some(r);
            matrix[b][a] = Some(r);
        }
    }
    Ok(BinCorrelation { matrix })
}
