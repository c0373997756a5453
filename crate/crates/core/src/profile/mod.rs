//! Minute-epoch activity profiles and the wear/validity cleaning protocol.
//!
//! Cleaning runs in four steps: zero runs longer than the non-wear block are
//! marked missing, counts above the cap are marked missing, cohort-wide day
//! statistics are computed before any exclusion, and finally each calendar day
//! and each profile is validated.

mod io;

pub use io::{parse_profiles, read_profiles, write_profiles, ProfileFormat};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: usize = 1440;
pub const DAYS_PER_PROFILE: usize = 7;
pub const MAX_PROFILE_MINUTES: usize = MINUTES_PER_DAY * DAYS_PER_PROFILE;

/// One subject's raw minute-by-minute count series. `None` marks a missing minute.
#[derive(Debug, Clone, PartialEq)]
pub struct RawProfile {
    pub subject_id: String,
    pub start: NaiveDateTime,
    pub counts: Vec<Option<u32>>,
}

impl RawProfile {
    pub fn new(subject_id: impl Into<String>, start: NaiveDateTime, counts: Vec<Option<u32>>) -> Result<Self> {
        let subject_id = subject_id.into();
        if counts.len() > MAX_PROFILE_MINUTES {
            return Err(Error::InvalidInput(format!(
                "profile {subject_id} has {} minutes (maximum {MAX_PROFILE_MINUTES})",
                counts.len()
            )));
        }
        Ok(Self {
            subject_id,
            start,
            counts,
        })
    }

    pub fn missing_minutes(&self) -> usize {
        self.counts.iter().filter(|c| c.is_none()).count()
    }

    /// Splits the series into the 7 calendar days starting at midnight of the
    /// start date. Minutes before the start time and after the end of the
    /// series are missing; minutes past the seventh calendar day are dropped.
    pub fn calendar_days(&self) -> Vec<(NaiveDate, Vec<Option<u32>>)> {
        let offset = (self.start.hour() * 60 + self.start.minute()) as usize;
        let first = self.start.date();
        (0..DAYS_PER_PROFILE)
            .map(|d| {
                let date = first + Duration::days(d as i64);
                let mut day = vec![None; MINUTES_PER_DAY];
                for (m, slot) in day.iter_mut().enumerate() {
                    let abs = d * MINUTES_PER_DAY + m;
                    if abs >= offset {
                        if let Some(&c) = self.counts.get(abs - offset) {
                            *slot = c;
                        }
                    }
                }
                (date, day)
            })
            .collect()
    }

    /// Minutes of the series that fall beyond the seventh calendar day.
    pub fn truncated_minutes(&self) -> usize {
        let offset = (self.start.hour() * 60 + self.start.minute()) as usize;
        (self.counts.len() + offset).saturating_sub(MAX_PROFILE_MINUTES)
    }
}

/// Thresholds of the cleaning protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    /// Zero runs strictly longer than this are treated as non-wear.
    pub zero_block_len: usize,
    pub min_day_mean: f64,
    pub sd_multiplier: f64,
    pub min_wear_minutes: usize,
    pub min_valid_days: usize,
    /// Counts strictly greater than this are set missing.
    pub count_cap: u32,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            zero_block_len: 10,
            min_day_mean: 150.0,
            sd_multiplier: 3.0,
            min_wear_minutes: 600,
            min_valid_days: 3,
            count_cap: 15000,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.zero_block_len > 0
            && self.min_day_mean > 0.0
            && self.sd_multiplier > 0.0
            && self.min_wear_minutes > 0
            && self.min_valid_days > 0
            && self.count_cap > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "all cleaning thresholds must be strictly positive".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DayExclusion {
    NotWorn,
    ShortWear { weartime: usize },
    LowMean { mean: f64 },
    HighMean { mean: f64 },
}

impl std::fmt::Display for DayExclusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DayExclusion::NotWorn => write!(f, "not worn"),
            DayExclusion::ShortWear { weartime } => write!(f, "weartime {weartime} min below minimum"),
            DayExclusion::LowMean { mean } => write!(f, "mean count {mean:.2} below minimum"),
            DayExclusion::HighMean { mean } => write!(f, "mean count {mean:.2} above cohort bound"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord {
    pub day_index: usize,
    pub date: NaiveDate,
    /// Monday to Friday.
    pub weekday: bool,
    pub counts: Vec<Option<u32>>,
    pub weartime: usize,
    pub valid: bool,
    pub mean: Option<f64>,
    pub exclusion: Option<DayExclusion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanProfile {
    pub subject_id: String,
    pub days: Vec<DayRecord>,
    pub weartime_total: usize,
    pub valid: bool,
    pub valid_days: usize,
}

impl CleanProfile {
    pub fn start(&self) -> NaiveDateTime {
        self.days[0].date.and_hms_opt(0, 0, 0).expect("midnight exists")
    }

    /// The 7×1440 series starting at midnight of the first day.
    pub fn series(&self) -> Vec<Option<u32>> {
        self.days.iter().flat_map(|d| d.counts.iter().copied()).collect()
    }

    pub fn missing_minutes(&self) -> usize {
        self.days
            .iter()
            .map(|d| d.counts.iter().filter(|c| c.is_none()).count())
            .sum()
    }

    /// Rebuilds a cleaned profile from a series that was already cleaned and
    /// re-emitted: days carrying any worn minute are the valid ones.
    pub fn from_cleaned(raw: &RawProfile, min_valid_days: usize) -> Self {
        let days: Vec<DayRecord> = raw
            .calendar_days()
            .into_iter()
            .enumerate()
            .map(|(i, (date, counts))| {
                let weartime = counts.iter().filter(|c| c.is_some()).count();
                DayRecord {
                    day_index: i,
                    date,
                    weekday: is_weekday(date),
                    mean: day_mean(&counts),
                    weartime,
                    valid: weartime > 0,
                    exclusion: (weartime == 0).then_some(DayExclusion::NotWorn),
                    counts,
                }
            })
            .collect();
        let valid_days = days.iter().filter(|d| d.valid).count();
        let weartime_total = days.iter().map(|d| d.weartime).sum();
        CleanProfile {
            subject_id: raw.subject_id.clone(),
            days,
            weartime_total,
            valid: valid_days >= min_valid_days,
            valid_days,
        }
    }
}

fn is_weekday(date: NaiveDate) -> bool {
    !matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

fn day_mean(counts: &[Option<u32>]) -> Option<f64> {
    let (sum, n) = counts
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), &c| (s + c as f64, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Replaces every maximal run of zeros longer than `zero_block_len` by missing.
/// A missing minute ends a run.
pub fn mark_nonwear(p: &RawProfile, cfg: &CleaningConfig) -> RawProfile {
    let mut counts = p.counts.clone();
    let mut run_start = None;
    let n = counts.len();
    for i in 0..=n {
        let is_zero = i < n && counts[i] == Some(0);
        match (is_zero, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if i - s > cfg.zero_block_len {
                    counts[s..i].iter_mut().for_each(|c| *c = None);
                }
                run_start = None;
            }
            _ => {}
        }
    }
    RawProfile {
        counts,
        ..p.clone()
    }
}

/// Sets counts strictly greater than the cap to missing.
pub fn cap_counts(p: &RawProfile, cfg: &CleaningConfig) -> RawProfile {
    let counts = p
        .counts
        .iter()
        .map(|c| c.filter(|&v| v <= cfg.count_cap))
        .collect();
    RawProfile {
        counts,
        ..p.clone()
    }
}

/// Cohort-level mean and standard deviation of per-day mean counts, pooled over
/// every calendar day with at least one worn minute, before any exclusion.
///
/// The standard deviation uses the n−1 denominator; a single day yields 0.
pub fn cohort_day_stats(profiles: &[RawProfile]) -> Result<(f64, f64)> {
    let means: Vec<f64> = profiles
        .iter()
        .flat_map(|p| p.calendar_days())
        .filter_map(|(_, day)| day_mean(&day))
        .collect();
    if means.is_empty() {
        return Err(Error::EmptyCohort(
            "no day with any worn minute in the cohort".into(),
        ));
    }
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let sd = if means.len() > 1 {
        (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((mean, sd))
}

/// Applies the day- and profile-level validity rules. Invalid days keep their
/// slot but have every minute set missing.
pub fn validate_days(
    p: &RawProfile,
    cfg: &CleaningConfig,
    global_mean: f64,
    global_sd: f64,
) -> CleanProfile {
    let upper = global_mean + cfg.sd_multiplier * global_sd;
    let days: Vec<DayRecord> = p
        .calendar_days()
        .into_iter()
        .enumerate()
        .map(|(i, (date, counts))| {
            let weartime = counts.iter().filter(|c| c.is_some()).count();
            let mean = day_mean(&counts);
            let exclusion = match mean {
                None => Some(DayExclusion::NotWorn),
                Some(_) if weartime < cfg.min_wear_minutes => {
                    Some(DayExclusion::ShortWear { weartime })
                }
                Some(m) if m < cfg.min_day_mean => Some(DayExclusion::LowMean { mean: m }),
                Some(m) if m > upper => Some(DayExclusion::HighMean { mean: m }),
                Some(_) => None,
            };
            let valid = exclusion.is_none();
            DayRecord {
                day_index: i,
                date,
                weekday: is_weekday(date),
                counts: if valid { counts } else { vec![None; MINUTES_PER_DAY] },
                weartime: if valid { weartime } else { 0 },
                valid,
                mean,
                exclusion,
            }
        })
        .collect();
    let valid_days = days.iter().filter(|d| d.valid).count();
    let weartime_total = days.iter().map(|d| d.weartime).sum();
    CleanProfile {
        subject_id: p.subject_id.clone(),
        days,
        weartime_total,
        valid: valid_days >= cfg.min_valid_days,
        valid_days,
    }
}

/// Per-subject entry of the cleaning report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject_id: String,
    pub valid: bool,
    pub valid_days: usize,
    pub weartime: usize,
    pub exclusion_reasons: Vec<String>,
    pub days: Vec<DayReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub day_index: usize,
    pub date: NaiveDate,
    pub weekday: bool,
    pub worn_minutes: usize,
    pub mean: Option<f64>,
    pub valid: bool,
    pub exclusion: Option<DayExclusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub config: CleaningConfig,
    pub global_mean: f64,
    pub global_sd: f64,
    pub n_profiles: usize,
    pub n_valid: usize,
    pub subjects: Vec<SubjectReport>,
}

impl CleaningReport {
    pub fn excluded(&self) -> impl Iterator<Item = &SubjectReport> {
        self.subjects.iter().filter(|s| !s.valid)
    }
}

/// Runs the full cleaning protocol over a cohort.
pub fn clean_cohort(
    raw: &[RawProfile],
    cfg: &CleaningConfig,
) -> Result<(Vec<CleanProfile>, CleaningReport)> {
    cfg.validate()?;
    if raw.is_empty() {
        return Err(Error::EmptyCohort("no profiles supplied".into()));
    }
    let prepared: Vec<RawProfile> = raw
        .iter()
        .map(|p| cap_counts(&mark_nonwear(p, cfg), cfg))
        .collect();
    let (global_mean, global_sd) = cohort_day_stats(&prepared)?;
    let cleaned: Vec<CleanProfile> = prepared
        .iter()
        .map(|p| validate_days(p, cfg, global_mean, global_sd))
        .collect();
    let subjects = cleaned
        .iter()
        .zip(&prepared)
        .map(|(c, p)| {
            let worn: Vec<usize> = p
                .calendar_days()
                .iter()
                .map(|(_, d)| d.iter().filter(|x| x.is_some()).count())
                .collect();
            let mut reasons = Vec::new();
            if !c.valid {
                reasons.push(format!(
                    "{} valid days (minimum {})",
                    c.valid_days, cfg.min_valid_days
                ));
            }
            SubjectReport {
                subject_id: c.subject_id.clone(),
                valid: c.valid,
                valid_days: c.valid_days,
                weartime: c.weartime_total,
                exclusion_reasons: reasons,
                days: c
                    .days
                    .iter()
                    .zip(worn)
                    .map(|(d, w)| DayReport {
                        day_index: d.day_index,
                        date: d.date,
                        weekday: d.weekday,
                        worn_minutes: w,
                        mean: d.mean,
                        valid: d.valid,
                        exclusion: d.exclusion,
                    })
                    .collect(),
            }
        })
        .collect();
    let report = CleaningReport {
        config: cfg.clone(),
        global_mean,
        global_sd,
        n_profiles: cleaned.len(),
        n_valid: cleaned.iter().filter(|c| c.valid).count(),
        subjects,
    };
    Ok((cleaned, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start() -> NaiveDateTime {
        // a Monday
        NaiveDate::from_ymd_opt(2024, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    fn raw(counts: Vec<Option<u32>>) -> RawProfile {
        RawProfile::new("s", start(), counts).unwrap()
    }

    fn some(v: &[u32]) -> Vec<Option<u32>> {
        v.iter().map(|&c| Some(c)).collect()
    }

    #[test]
    fn eleven_zeros_become_missing() {
        let mut c = vec![5];
        c.extend([0; 11]);
        c.push(7);
        let out = mark_nonwear(&raw(some(&c)), &CleaningConfig::default());
        let mut expected = vec![Some(5)];
        expected.extend([None; 11]);
        expected.push(Some(7));
        assert_eq!(out.counts, expected);
    }

    #[test]
    fn ten_zeros_are_kept() {
        let mut c = vec![5];
        c.extend([0; 10]);
        c.push(7);
        let p = raw(some(&c));
        assert_eq!(mark_nonwear(&p, &CleaningConfig::default()), p);
    }

    #[test]
    fn missing_splits_zero_runs() {
        let mut c = vec![Some(0); 9];
        c.push(None);
        c.extend(vec![Some(0); 10]);
        let p = raw(c);
        assert_eq!(mark_nonwear(&p, &CleaningConfig::default()), p);
    }

    #[test]
    fn trailing_run_is_detected() {
        let mut c = vec![Some(3)];
        c.extend(vec![Some(0); 12]);
        let out = mark_nonwear(&raw(c), &CleaningConfig::default());
        assert_eq!(out.missing_minutes(), 12);
    }

    #[test]
    fn cap_is_strict() {
        let out = cap_counts(&raw(some(&[14999, 15000, 15001])), &CleaningConfig::default());
        assert_eq!(out.counts, vec![Some(14999), Some(15000), None]);
        let empty = raw(vec![None; 5]);
        assert_eq!(cap_counts(&empty, &CleaningConfig::default()), empty);
    }

    fn worn_day(minutes: usize, value: u32) -> Vec<Option<u32>> {
        let mut d = vec![None; MINUTES_PER_DAY];
        d[..minutes].iter_mut().for_each(|c| *c = Some(value));
        d
    }

    #[test]
    fn weartime_boundary() {
        let cfg = CleaningConfig::default();
        let mut counts = worn_day(600, 200);
        counts.extend(worn_day(599, 200));
        let c = validate_days(&raw(counts), &cfg, 200.0, 1e6);
        assert!(c.days[0].valid);
        assert_eq!(c.days[0].weartime, 600);
        assert!(!c.days[1].valid);
        assert_eq!(c.days[1].exclusion, Some(DayExclusion::ShortWear { weartime: 599 }));
        assert_eq!(c.weartime_total, 600);
        assert!(!c.valid);
    }

    #[test]
    fn two_valid_days_invalidate_profile() {
        let cfg = CleaningConfig::default();
        let mut counts = worn_day(700, 300);
        counts.extend(worn_day(700, 300));
        let c = validate_days(&raw(counts.clone()), &cfg, 300.0, 10.0);
        assert_eq!(c.valid_days, 2);
        assert!(!c.valid);
        counts.extend(worn_day(700, 300));
        let c = validate_days(&raw(counts), &cfg, 300.0, 10.0);
        assert!(c.valid);
        assert_eq!(c.weartime_total, 2100);
    }

    #[test]
    fn upper_bound_uses_cohort_stats() {
        let cfg = CleaningConfig::default();
        let c = validate_days(&raw(worn_day(700, 400)), &cfg, 100.0, 99.99);
        assert_eq!(c.days[0].exclusion, Some(DayExclusion::HighMean { mean: 400.0 }));
        // mean exactly at the bound is kept
        let c = validate_days(&raw(worn_day(700, 400)), &cfg, 100.0, 100.0);
        assert!(c.days[0].valid);
    }

    #[test]
    fn day_stats_two_point() {
        let mut counts = worn_day(10, 200);
        counts.extend(worn_day(10, 400));
        let (m, sd) = cohort_day_stats(&[raw(counts)]).unwrap();
        assert_eq!(m, 300.0);
        assert!((sd - 20000f64.sqrt()).abs() < 1e-12);
        assert!(cohort_day_stats(&[]).is_err());
        let (m, sd) = cohort_day_stats(&[raw(worn_day(5, 300)), raw(worn_day(9, 300))]).unwrap();
        assert_eq!((m, sd), (300.0, 0.0));
    }

    #[test]
    fn calendar_alignment_pads_and_offsets() {
        let s = start() + Duration::minutes(60);
        let p = RawProfile::new("x", s, vec![Some(1); 3]).unwrap();
        let days = p.calendar_days();
        assert_eq!(days.len(), 7);
        assert_eq!(days[0].1[59], None);
        assert_eq!(days[0].1[60], Some(1));
        assert_eq!(days[0].1[62], Some(1));
        assert_eq!(days[0].1[63], None);
        assert_eq!(p.truncated_minutes(), 0);
        let long = RawProfile::new("y", s, vec![Some(1); MAX_PROFILE_MINUTES]).unwrap();
        assert_eq!(long.truncated_minutes(), 60);
    }

    #[test]
    fn weekend_flags() {
        let c = validate_days(&raw(vec![]), &CleaningConfig::default(), 0.0, 0.0);
        let flags: Vec<bool> = c.days.iter().map(|d| d.weekday).collect();
        assert_eq!(flags, vec![true, true, true, true, true, false, false]);
    }

    #[test]
    fn conservation_of_minutes() {
        let mut counts = worn_day(700, 300);
        counts.extend(worn_day(100, 300));
        let c = validate_days(&raw(counts), &CleaningConfig::default(), 300.0, 1.0);
        assert_eq!(c.weartime_total + c.missing_minutes(), MAX_PROFILE_MINUTES);
    }

    #[test]
    fn exhaustive_order_insensitivity_length_14() {
        let cfg = CleaningConfig::default();
        let alphabet = [0u32, 100, 16000];
        for code in 0..3usize.pow(14) {
            let mut x = code;
            let counts: Vec<Option<u32>> = (0..14)
                .map(|_| {
                    let v = alphabet[x % 3];
                    x /= 3;
                    Some(v)
                })
                .collect();
            let p = raw(counts);
            let a = cap_counts(&mark_nonwear(&p, &cfg), &cfg);
            let b = mark_nonwear(&cap_counts(&p, &cfg), &cfg);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cleaning_is_idempotent() {
        let cfg = CleaningConfig::default();
        let mut c = vec![Some(0); 30];
        c.extend(some(&[20000, 5, 0, 0]));
        let p = raw(c);
        let once = mark_nonwear(&p, &cfg);
        assert_eq!(mark_nonwear(&once, &cfg), once);
        let capped = cap_counts(&p, &cfg);
        assert_eq!(cap_counts(&capped, &cfg), capped);
    }
}
