use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::summary::HistogramSummary;

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Text(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn number(&self, row: usize) -> Option<f64> {
        match self {
            Column::Numeric(v) => v[row],
            Column::Text(_) => None,
        }
    }

    /// Value as a factor level; numbers are formatted.
    pub fn level(&self, row: usize) -> Option<String> {
        match self {
            Column::Numeric(v) => v[row].map(|x| x.to_string()),
            Column::Text(v) => v[row].clone(),
        }
    }
}

/// Covariates, responses and histogram summaries keyed by subject.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub columns: BTreeMap<String, Column>,
    pub hist1d: BTreeMap<String, HistogramSummary>,
    pub hist2d: BTreeMap<String, HistogramSummary>,
    pub split: BTreeMap<String, HistogramSummary>,
    row_of: BTreeMap<String, usize>,
}

impl Dataset {
    pub fn new(ids: Vec<String>, columns: BTreeMap<String, Column>) -> Result<Self> {
        let mut row_of = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            if row_of.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("subject {id} appears twice")));
            }
        }
        for (name, c) in &columns {
            if c.len() != ids.len() {
                return Err(Error::InvalidInput(format!(
                    "column {name} has {} values for {} subjects",
                    c.len(),
                    ids.len()
                )));
            }
        }
        Ok(Self {
            ids,
            columns,
            row_of,
            ..Default::default()
        })
    }

    fn insert(map: &mut BTreeMap<String, HistogramSummary>, hs: Vec<HistogramSummary>) -> Result<()> {
        let grid = map
            .values()
            .next()
            .or(hs.first())
            .map(|h| h.grid.clone());
        for h in hs {
            if Some(&h.grid) != grid.as_ref() {
                return Err(Error::GridMismatch(format!(
                    "subject {} uses a different bin grid",
                    h.subject_id
                )));
            }
            map.insert(h.subject_id.clone(), h);
        }
        Ok(())
    }

    pub fn with_hist1d(mut self, hs: Vec<HistogramSummary>) -> Result<Self> {
        if hs.iter().any(|h| h.one_d().is_none()) {
            return Err(Error::InvalidInput("expected one-dimensional histograms".into()));
        }
        Self::insert(&mut self.hist1d, hs)?;
        Ok(self)
    }

    pub fn with_hist2d(mut self, hs: Vec<HistogramSummary>) -> Result<Self> {
        if hs.iter().any(|h| h.two_d().is_none()) {
            return Err(Error::InvalidInput("expected two-dimensional histograms".into()));
        }
        Self::insert(&mut self.hist2d, hs)?;
        Ok(self)
    }

    pub fn with_split(mut self, hs: Vec<HistogramSummary>) -> Result<Self> {
        if hs.iter().any(|h| h.split().is_none()) {
            return Err(Error::InvalidInput("expected weekday/weekend histograms".into()));
        }
        Self::insert(&mut self.split, hs)?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, id: &str) -> Option<usize> {
        self.row_of.get(id).copied()
    }

    /// Numeric value of `name` for a subject. A missing `weartime` column falls
    /// back to the average daily weartime of the pooled histogram.
    pub fn number(&self, name: &str, id: &str) -> Option<f64> {
        let row = self.row(id)?;
        match self.columns.get(name) {
            Some(c) => c.number(row),
            None if name == "weartime" => self.hist1d.get(id).and_then(|h| h.daily_weartime()),
            None => None,
        }
    }

    pub fn level(&self, name: &str, id: &str) -> Option<String> {
        let row = self.row(id)?;
        self.columns.get(name)?.level(row)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name) || (name == "weartime" && !self.hist1d.is_empty())
    }

    /// Subset of subjects, keeping summaries for those retained.
    pub fn subset(&self, ids: &[String]) -> Result<Dataset> {
        let rows: Vec<usize> = ids
            .iter()
            .map(|id| {
                self.row(id)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown subject {id}")))
            })
            .collect::<Result<_>>()?;
        let columns = self
            .columns
            .iter()
            .map(|(k, c)| {
                let c = match c {
                    Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
                    Column::Text(v) => Column::Text(rows.iter().map(|&r| v[r].clone()).collect()),
                };
                (k.clone(), c)
            })
            .collect();
        let mut out = Dataset::new(ids.to_vec(), columns)?;
        let pick = |m: &BTreeMap<String, HistogramSummary>| {
            ids.iter()
                .filter_map(|id| m.get(id).map(|h| (id.clone(), h.clone())))
                .collect()
        };
        out.hist1d = pick(&self.hist1d);
        out.hist2d = pick(&self.hist2d);
        out.split = pick(&self.split);
        Ok(out)
    }
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

/// Reads a covariate table whose first column holds subject ids. A column is
/// numeric when every non-missing cell parses as a number; empty cells and
/// `NA` are missing.
pub fn read_covariates_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_covariates(&text, &path.display().to_string())
}

pub(crate) fn parse_covariates(text: &str, origin: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.is_empty() {
        return Err(Error::Parse {
            path: origin.into(),
            line: 1,
            message: "empty header".into(),
        });
    }
    let mut ids = Vec::new();
    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); header.len() - 1];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(Error::Parse {
                path: origin.into(),
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        ids.push(rec[0].trim().to_string());
        for (c, v) in rec.iter().skip(1).enumerate() {
            cells[c].push((!is_missing(v)).then(|| v.trim().to_string()));
        }
    }
    let columns = header
        .into_iter()
        .skip(1)
        .zip(cells)
        .map(|(name, vals)| {
            let numeric: Option<Vec<Option<f64>>> = vals
                .iter()
                .map(|v| match v {
                    None => Some(None),
                    Some(s) => s.parse::<f64>().ok().map(Some),
                })
                .collect();
            let col = match numeric {
                Some(v) => Column::Numeric(v),
                None => Column::Text(vals),
            };
            (name, col)
        })
        .collect();
    Dataset::new(ids, columns)
}

/// Writes covariates in the layout [`read_covariates_csv`] expects.
pub fn write_covariates_csv<W: std::io::Write>(w: W, data: &Dataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["subject_id".to_string()];
    header.extend(data.columns.keys().cloned());
    wtr.write_record(&header)?;
    for (row, id) in data.ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        for c in data.columns.values() {
            rec.push(match c {
                Column::Numeric(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
                Column::Text(v) => v[row].clone().unwrap_or_default(),
            });
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infers_column_types_and_missing() {
        let d = parse_covariates(
            "subject_id,fat_mass,sex,height\na,10.5,F,150\nb,NA,M,\nc,12,F,160.5\n",
            "t",
        )
        .unwrap();
        assert_eq!(d.len(), 3);
        assert!(matches!(d.columns["fat_mass"], Column::Numeric(_)));
        assert!(matches!(d.columns["sex"], Column::Text(_)));
        assert_eq!(d.number("fat_mass", "b"), None);
        assert_eq!(d.number("height", "c"), Some(160.5));
        assert_eq!(d.level("sex", "b").as_deref(), Some("M"));
    }

    #[test]
    fn round_trip_and_subset() {
        let d = parse_covariates("subject_id,x,g\na,1,u\nb,2.5,\n", "t").unwrap();
        let mut buf = Vec::new();
        write_covariates_csv(&mut buf, &d).unwrap();
        let back = parse_covariates(std::str::from_utf8(&buf).unwrap(), "t").unwrap();
        assert_eq!(back, d);
        let s = d.subset(&["b".to_string()]).unwrap();
        assert_eq!(s.number("x", "b"), Some(2.5));
        assert!(d.subset(&["zz".to_string()]).is_err());
    }

    #[test]
    fn ragged_rows_report_line() {
        let err = parse_covariates("subject_id,x\na,1\nb\n", "t");
        assert!(err.is_err());
    }
}
