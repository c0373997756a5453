use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{RawProfile, MAX_PROFILE_MINUTES};
use crate::error::{Error, Result};

/// On-disk layout of minute-epoch count files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileFormat {
    /// `subject_id,timestamp,count`, one row per minute.
    LongCsv,
    /// `subject_id,start_timestamp,c0,...,c10079`, one row per subject.
    WideCsv,
}

const TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%d %H:%M:%S",
];

pub(crate) fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub(crate) fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M").to_string()
}

fn parse_count(s: &str) -> std::result::Result<Option<u32>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<u32>()
        .map(Some)
        .map_err(|_| format!("count {s:?} is not a non-negative integer"))
}

/// Reads profiles from a file in the declared format.
pub fn read_profiles(path: impl AsRef<Path>, format: ProfileFormat) -> Result<Vec<RawProfile>> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_profiles(&text, format, &path.display().to_string())
}

/// Parses profile text. `origin` names the source in error messages.
pub fn parse_profiles(text: &str, format: ProfileFormat, origin: &str) -> Result<Vec<RawProfile>> {
    match format {
        ProfileFormat::LongCsv => parse_long(text, origin),
        ProfileFormat::WideCsv => parse_wide(text, origin),
    }
}

fn parse_err(origin: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: origin.to_string(),
        line,
        message: message.into(),
    }
}

fn check_header(origin: &str, headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(parse_err(
            origin,
            1,
            format!("expected header starting with {}", expected.join(",")),
        ));
    }
    Ok(())
}

fn parse_long(text: &str, origin: &str) -> Result<Vec<RawProfile>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    check_header(origin, reader.headers()?, &["subject_id", "timestamp", "count"])?;

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(NaiveDateTime, Option<u32>, u64)>> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(parse_err(origin, line, format!("expected 3 fields, found {}", record.len())));
        }
        let subject = record[0].trim().to_string();
        if subject.is_empty() {
            return Err(parse_err(origin, line, "empty subject_id"));
        }
        let ts = parse_timestamp(&record[1])
            .ok_or_else(|| parse_err(origin, line, format!("bad timestamp {:?}", &record[1])))?;
        let count = parse_count(&record[2]).map_err(|m| parse_err(origin, line, m))?;
        if !rows.contains_key(&subject) {
            order.push(subject.clone());
        }
        rows.entry(subject).or_default().push((ts, count, line));
    }

    order
        .into_iter()
        .map(|subject| {
            let mut entries = rows.remove(&subject).unwrap_or_default();
            entries.sort_by_key(|e| e.0);
            for w in entries.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Conflict {
                        subject: subject.clone(),
                        timestamp: super::io::format_timestamp(&w[0].0),
                    });
                }
            }
            let start = entries[0].0;
            let last = entries[entries.len() - 1].0;
            let span = (last - start).num_minutes() as usize + 1;
            if span > MAX_PROFILE_MINUTES {
                let line = entries[entries.len() - 1].2;
                return Err(parse_err(
                    origin,
                    line,
                    format!("subject {subject} spans {span} minutes (maximum {MAX_PROFILE_MINUTES})"),
                ));
            }
            let mut counts = vec![None; span];
            for (ts, c, _) in entries {
                counts[(ts - start).num_minutes() as usize] = c;
            }
            RawProfile::new(subject, start, counts)
        })
        .collect()
}

fn parse_wide(text: &str, origin: &str) -> Result<Vec<RawProfile>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    check_header(origin, &headers, &["subject_id", "start_timestamp"])?;
    let ncounts = headers.len() - 2;
    if ncounts > MAX_PROFILE_MINUTES {
        return Err(parse_err(origin, 1, "more than 10080 count columns"));
    }
    for (i, h) in headers.iter().skip(2).enumerate() {
        if h.trim() != format!("c{i}") {
            return Err(parse_err(origin, 1, format!("column {} should be c{i}", i + 3)));
        }
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(parse_err(
                origin,
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let subject = record[0].trim().to_string();
        let start = parse_timestamp(&record[1])
            .ok_or_else(|| parse_err(origin, line, format!("bad timestamp {:?}", &record[1])))?;
        if !seen.insert(subject.clone()) {
            return Err(Error::Conflict {
                subject,
                timestamp: format_timestamp(&start),
            });
        }
        let counts = record
            .iter()
            .skip(2)
            .map(parse_count)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|m| parse_err(origin, line, m))?;
        out.push(RawProfile::new(subject, start, counts)?);
    }
    Ok(out)
}

/// Writes profiles in either format. Missing minutes are written as empty
/// fields (wide) or empty counts (long).
pub fn write_profiles<W: Write>(w: W, profiles: &[RawProfile], format: ProfileFormat) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    match format {
        ProfileFormat::LongCsv => {
            wtr.write_record(["subject_id", "timestamp", "count"])?;
            for p in profiles {
                for (m, c) in p.counts.iter().enumerate() {
                    let ts = p.start + chrono::Duration::minutes(m as i64);
                    let count = c.map(|v| v.to_string()).unwrap_or_default();
                    wtr.write_record([p.subject_id.as_str(), &format_timestamp(&ts), &count])?;
                }
            }
        }
        ProfileFormat::WideCsv => {
            let mut header = vec!["subject_id".to_string(), "start_timestamp".to_string()];
            header.extend((0..MAX_PROFILE_MINUTES).map(|i| format!("c{i}")));
            wtr.write_record(&header)?;
            for p in profiles {
                let mut row = vec![p.subject_id.clone(), format_timestamp(&p.start)];
                row.extend(
                    (0..MAX_PROFILE_MINUTES)
                        .map(|i| p.counts.get(i).copied().flatten().map(|v| v.to_string()).unwrap_or_default()),
                );
                wtr.write_record(&row)?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_three_rows() {
        let text = "subject_id,timestamp,count\na,2024-01-01T08:00,0\na,2024-01-01T08:01,500\na,2024-01-01T08:02,12000\n";
        let p = parse_profiles(text, ProfileFormat::LongCsv, "t").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].counts, vec![Some(0), Some(500), Some(12000)]);
        assert_eq!(format_timestamp(&p[0].start), "2024-01-01T08:00");
    }

    #[test]
    fn long_duplicate_is_conflict() {
        let text = "subject_id,timestamp,count\na,2024-01-01T08:00,0\na,2024-01-01T08:00,5\n";
        assert!(matches!(
            parse_profiles(text, ProfileFormat::LongCsv, "t"),
            Err(Error::Conflict { .. })
        ));
    }

    #[test]
    fn long_interleaved_subjects_sorted_with_gaps() {
        let text = "subject_id,timestamp,count\n\
                    b,2024-01-01T08:02,3\n\
                    a,2024-01-01T09:01,7\n\
                    b,2024-01-01T08:00,1\n\
                    a,2024-01-01T09:00,6\n";
        let p = parse_profiles(text, ProfileFormat::LongCsv, "t").unwrap();
        let expected_b = RawProfile::new(
            "b",
            parse_timestamp("2024-01-01T08:00").unwrap(),
            vec![Some(1), None, Some(3)],
        )
        .unwrap();
        let expected_a = RawProfile::new(
            "a",
            parse_timestamp("2024-01-01T09:00").unwrap(),
            vec![Some(6), Some(7)],
        )
        .unwrap();
        assert_eq!(p, vec![expected_b, expected_a]);
    }

    #[test]
    fn malformed_row_names_line() {
        let text = "subject_id,timestamp,count\na,2024-01-01T08:00,0\na,2024-01-01T08:01,-3\n";
        match parse_profiles(text, ProfileFormat::LongCsv, "f.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wide_roundtrip() {
        let start = parse_timestamp("2024-01-01T00:00").unwrap();
        let mut counts = vec![Some(3); 20];
        counts[4] = None;
        let p = RawProfile::new("z", start, counts).unwrap();
        let mut buf = Vec::new();
        write_profiles(&mut buf, std::slice::from_ref(&p), ProfileFormat::WideCsv).unwrap();
        let back = parse_profiles(std::str::from_utf8(&buf).unwrap(), ProfileFormat::WideCsv, "t").unwrap();
        assert_eq!(back[0].counts[..20], p.counts[..]);
        assert!(back[0].counts[20..].iter().all(|c| c.is_none()));
    }
}
