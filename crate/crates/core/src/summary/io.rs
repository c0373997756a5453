use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{BinGrid, HistogramData, HistogramSummary, SideHistogram};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().from_reader(f))
}

fn parse_f64(path: &Path, line: u64, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        message: format!("{s:?} is not a number"),
    })
}

fn bad(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

pub fn write_grid_json<W: Write>(w: W, grid: &BinGrid) -> Result<()> {
    serde_json::to_writer_pretty(w, grid)?;
    Ok(())
}

pub fn read_grid_json(path: impl AsRef<Path>) -> Result<BinGrid> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let g: BinGrid = serde_json::from_reader(f)?;
    BinGrid::from_edges(g.edges, g.transform)
}

/// `subject_id,weartime,z_1..z_J`, one row per subject.
pub fn write_hist1d_csv<W: Write>(w: W, hs: &[HistogramSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let j = hs.first().map(|h| h.grid.len()).unwrap_or(0);
    let mut header = vec!["subject_id".to_string(), "weartime".to_string()];
    header.extend((1..=j).map(|k| format!("z_{k}")));
    wtr.write_record(&header)?;
    for h in hs {
        let z = h
            .one_d()
            .ok_or_else(|| Error::InvalidInput("expected one-dimensional histograms".into()))?;
        let mut row = vec![h.subject_id.clone(), h.weartime_minutes.to_string()];
        row.extend(z.iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Reads one-dimensional histograms. `valid_days` supplies the number of valid
/// days per subject (missing entries default to 0).
pub fn read_hist1d_csv(
    path: impl AsRef<Path>,
    grid: &BinGrid,
    valid_days: &BTreeMap<String, usize>,
) -> Result<Vec<HistogramSummary>> {
    let path = path.as_ref();
    let mut rdr = open(path)?;
    let width = rdr.headers()?.len();
    if width != grid.len() + 2 {
        return Err(bad(path, 1, format!("expected {} columns for the grid", grid.len() + 2)));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec[0].to_string();
        let weartime = rec[1]
            .trim()
            .parse::<usize>()
            .map_err(|_| bad(path, line, "weartime is not an integer"))?;
        let z = rec
            .iter()
            .skip(2)
            .map(|s| parse_f64(path, line, s))
            .collect::<Result<Vec<_>>>()?;
        out.push(HistogramSummary {
            valid_days: valid_days.get(&id).copied().unwrap_or(0),
            subject_id: id,
            grid: grid.clone(),
            weartime_minutes: weartime,
            data: HistogramData::OneD { z },
        });
    }
    Ok(out)
}

/// Long format `subject_id,bin_j,hour_m,z` with 1-based indices; zero cells
/// are omitted.
pub fn write_hist2d_csv<W: Write>(w: W, hs: &[HistogramSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["subject_id", "bin_j", "hour_m", "z"])?;
    for h in hs {
        let (z, hour_width) = h
            .two_d()
            .ok_or_else(|| Error::InvalidInput("expected two-dimensional histograms".into()))?;
        let m = 24 / hour_width as usize;
        for (idx, v) in z.iter().enumerate() {
            if *v != 0.0 {
                wtr.write_record([
                    h.subject_id.as_str(),
                    &(idx / m + 1).to_string(),
                    &(idx % m + 1).to_string(),
                    &v.to_string(),
                ])?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Reads two-dimensional histograms; subjects appear in first-seen order.
/// Weartime is not part of this format and is left at 0.
pub fn read_hist2d_csv(path: impl AsRef<Path>, grid: &BinGrid, hour_width: u32) -> Result<Vec<HistogramSummary>> {
    let path = path.as_ref();
    if hour_width == 0 || 24 % hour_width != 0 {
        return Err(Error::Config(format!("24 is not divisible by hour width {hour_width}")));
    }
    let m = (24 / hour_width) as usize;
    let mut rdr = open(path)?;
    let mut order = Vec::new();
    let mut cells: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(bad(path, line, "expected 4 fields"));
        }
        let id = rec[0].to_string();
        let j: usize = rec[1].trim().parse().map_err(|_| bad(path, line, "bad bin index"))?;
        let h: usize = rec[2].trim().parse().map_err(|_| bad(path, line, "bad hour index"))?;
        if j == 0 || j > grid.len() || h == 0 || h > m {
            return Err(bad(path, line, "index out of range"));
        }
        let z = parse_f64(path, line, &rec[3])?;
        let entry = cells.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            vec![0.0; grid.len() * m]
        });
        entry[(j - 1) * m + (h - 1)] = z;
    }
    Ok(order
        .into_iter()
        .map(|id| HistogramSummary {
            data: HistogramData::TwoD {
                z: cells.remove(&id).unwrap_or_default(),
                hour_width,
            },
            subject_id: id,
            grid: grid.clone(),
            weartime_minutes: 0,
            valid_days: 0,
        })
        .collect())
}

/// `subject_id,weekday_weartime,weekend_weartime,wd_1..wd_J,we_1..we_J`.
pub fn write_split_csv<W: Write>(w: W, hs: &[HistogramSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let j = hs.first().map(|h| h.grid.len()).unwrap_or(0);
    let mut header = vec![
        "subject_id".to_string(),
        "weekday_weartime".to_string(),
        "weekend_weartime".to_string(),
    ];
    header.extend((1..=j).map(|k| format!("wd_{k}")));
    header.extend((1..=j).map(|k| format!("we_{k}")));
    wtr.write_record(&header)?;
    for h in hs {
        let (wd, we) = h
            .split()
            .ok_or_else(|| Error::InvalidInput("expected split histograms".into()))?;
        let mut row = vec![h.subject_id.clone(), wd.weartime.to_string(), we.weartime.to_string()];
        row.extend(wd.z.iter().chain(&we.z).map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

pub fn read_split_csv(
    path: impl AsRef<Path>,
    grid: &BinGrid,
    valid_days: &BTreeMap<String, usize>,
) -> Result<Vec<HistogramSummary>> {
    let path = path.as_ref();
    let j = grid.len();
    let mut rdr = open(path)?;
    if rdr.headers()?.len() != 3 + 2 * j {
        return Err(bad(path, 1, format!("expected {} columns for the grid", 3 + 2 * j)));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec[0].to_string();
        let wd_w: usize = rec[1].trim().parse().map_err(|_| bad(path, line, "bad weartime"))?;
        let we_w: usize = rec[2].trim().parse().map_err(|_| bad(path, line, "bad weartime"))?;
        let vals = rec
            .iter()
            .skip(3)
            .map(|s| parse_f64(path, line, s))
            .collect::<Result<Vec<_>>>()?;
        out.push(HistogramSummary {
            valid_days: valid_days.get(&id).copied().unwrap_or(0),
            subject_id: id,
            grid: grid.clone(),
            weartime_minutes: wd_w + we_w,
            data: HistogramData::Split {
                weekday: SideHistogram {
                    z: vals[..j].to_vec(),
                    weartime: wd_w,
                    empty: wd_w == 0,
                },
                weekend: SideHistogram {
                    z: vals[j..].to_vec(),
                    weartime: we_w,
                    empty: we_w == 0,
                },
            },
        });
    }
    Ok(out)
}
