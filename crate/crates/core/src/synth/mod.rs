//! Synthetic cohorts with known truth: minute-level profiles or histograms
//! drawn directly, covariates, and log-normal outcomes.

mod truth;

pub use truth::{pchip, CoefTruth, HUMP_DIP_ANCHORS};

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal as LogNormalDist};

use crate::error::{Error, Result};
use crate::model::{Column, Dataset};
use crate::profile::{RawProfile, MINUTES_PER_DAY};
use crate::summary::{BinGrid, HistogramData, HistogramSummary, SideHistogram};

pub const RESPONSE: &str = "fat_mass";
const COUNT_CAP: u32 = 15000;
const WAKING_HOURS: std::ops::Range<usize> = 7..22;

/// Constants of the activity generator. Intensity regimes are indexed
/// sedentary, light, moderate, vigorous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub state_logits: [f64; 4],
    pub activity_sd: f64,
    pub activity_loading: [f64; 3],
    pub state_noise_sd: f64,
    pub male_shift: [f64; 3],
    pub weekend_sd: f64,
    pub chronotype_amp: f64,
    pub medians: [f64; 3],
    pub median_sd: [f64; 3],
    pub log_sd: [f64; 3],
    pub sedentary_zero_prob: f64,
    /// Probability of staying in the current regime from one minute to the next.
    pub persistence: [f64; 4],
    pub wake_minute: usize,
    pub sleep_minute: usize,
    pub wake_jitter: usize,
    pub night_zeros: bool,
    pub nonwear_day_prob: f64,
    pub nonwear_len: (usize, usize),
    pub spike_prob: f64,
    pub valid_days: (usize, usize),
    pub daily_weartime: (f64, f64),
    pub start: NaiveDateTime,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            state_logits: [0.0, -0.6, -2.2, -3.0],
            activity_sd: 0.5,
            activity_loading: [0.6, 1.0, 1.3],
            state_noise_sd: 0.3,
            male_shift: [0.0, 0.3, 0.4],
            weekend_sd: 0.3,
            chronotype_amp: 0.4,
            medians: [450.0, 2500.0, 5500.0],
            median_sd: [0.25, 0.15, 0.15],
            log_sd: [0.6, 0.35, 0.3],
            sedentary_zero_prob: 0.5,
            persistence: [0.9, 0.8, 0.7, 0.6],
            wake_minute: 420,
            sleep_minute: 1320,
            wake_jitter: 30,
            night_zeros: true,
            nonwear_day_prob: 0.15,
            nonwear_len: (60, 240),
            spike_prob: 2e-4,
            valid_days: (5, 7),
            daily_weartime: (600.0, 800.0),
            start: NaiveDate::from_ymd_opt(2010, 1, 4)
                .expect("valid date")
                .and_hms_opt(0, 0, 0)
                .expect("valid time"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaSpec {
    Fixed { sigma: f64 },
    /// σ chosen so that the true linear predictor explains this share of the
    /// variance of the log response.
    TargetR2 { r2: f64 },
}

/// Ground truth of a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthSpec {
    pub n: usize,
    pub alpha: f64,
    pub beta_sex_male: f64,
    /// Per minute of average daily weartime.
    pub beta_weartime: f64,
    pub beta_m_obese: f64,
    /// `f2(h) = amplitude · tanh((h − center) / scale)`.
    pub f2_amplitude: f64,
    pub f2_center: f64,
    pub f2_scale: f64,
    pub f_true: CoefTruth,
    pub sigma: SigmaSpec,
    pub generator: GeneratorParams,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            n: 500,
            alpha: 15f64.ln(),
            beta_sex_male: -0.35,
            beta_weartime: -0.0005,
            beta_m_obese: 0.25,
            f2_amplitude: 0.3,
            f2_center: 153.0,
            f2_scale: 12.0,
            f_true: CoefTruth::HumpDip { amplitude: 2.0 },
            sigma: SigmaSpec::TargetR2 { r2: 0.3 },
            generator: GeneratorParams::default(),
        }
    }
}

impl TruthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("cohort size must be positive".into()));
        }
        match self.sigma {
            SigmaSpec::Fixed { sigma } if !(sigma >= 0.0) => {
                Err(Error::Config("sigma must be non-negative".into()))
            }
            SigmaSpec::TargetR2 { r2 } if !(r2 > 0.0 && r2 < 1.0) => {
                Err(Error::Config("target R² must lie in (0, 1)".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn f2(&self, height: f64) -> f64 {
        self.f2_amplitude * ((height - self.f2_center) / self.f2_scale).tanh()
    }
}

/// Per-subject draws that drive both generation levels.
#[derive(Debug, Clone, PartialEq)]
struct Traits {
    male: bool,
    m_obese: bool,
    height: f64,
    logits: [f64; 4],
    weekend_shift: f64,
    chronotype: f64,
    medians: [f64; 3],
    valid_days: usize,
    daily_weartime: f64,
}

fn subject_rng(seed: u64, subject: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject as u64 + 1);
    rng
}

fn draw_traits(g: &GeneratorParams, rng: &mut ChaCha8Rng) -> Traits {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let male = rng.random_bool(0.5);
    let m_obese = rng.random_bool(0.2);
    let height = 150.0 + if male { 6.0 } else { 0.0 } + 8.0 * std.sample(rng);
    let activity = g.activity_sd * std.sample(rng);
    let mut logits = g.state_logits;
    for s in 0..3 {
        logits[s + 1] += g.activity_loading[s] * activity
            + g.state_noise_sd * std.sample(rng)
            + if male { g.male_shift[s] } else { 0.0 };
    }
    let mut medians = g.medians;
    for s in 0..3 {
        medians[s] *= (g.median_sd[s] * std.sample(rng)).exp();
    }
    Traits {
        male,
        m_obese,
        height,
        logits,
        weekend_shift: g.weekend_sd * std.sample(rng),
        chronotype: rng.random_range(-1.0..1.0),
        medians,
        valid_days: rng.random_range(g.valid_days.0..=g.valid_days.1),
        daily_weartime: rng.random_range(g.daily_weartime.0..g.daily_weartime.1),
    }
}

/// Regime probabilities at a given hour, on weekend or weekday.
fn state_probs(g: &GeneratorParams, t: &Traits, hour: usize, weekend: bool) -> [f64; 4] {
    let tod = (hour as f64 - 14.0) / 7.0;
    let mut l = t.logits;
    for v in l.iter_mut().skip(1) {
        *v += g.chronotype_amp * t.chronotype * tod + if weekend { t.weekend_shift } else { 0.0 };
    }
    let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    [e[0] / s, e[1] / s, e[2] / s, e[3] / s]
}

/// Probability that a minute in each regime falls into each bin.
fn emission_bins(g: &GeneratorParams, t: &Traits, grid: &BinGrid) -> [Vec<f64>; 4] {
    let j_len = grid.len();
    let mut sed = vec![0.0; j_len];
    if let Some(j) = grid.bin_of(0.0) {
        sed[j] += g.sedentary_zero_prob;
    }
    for c in 1..100 {
        if let Some(j) = grid.bin_of(c as f64) {
            sed[j] += (1.0 - g.sedentary_zero_prob) / 99.0;
        }
    }
    let active = |s: usize| -> Vec<f64> {
        let d = LogNormalDist::new(t.medians[s].ln(), g.log_sd[s]).expect("valid log-normal");
        // counts are floor(X); count c lies in bin j iff X ∈ [ceil(e_j), ceil(e_{j+1}))
        let cdf = |e: f64| d.cdf(e.ceil().min(COUNT_CAP as f64 + 1.0));
        let total = cdf(COUNT_CAP as f64 + 1.0);
        (0..j_len)
            .map(|j| {
                let hi = if j + 1 == j_len {
                    COUNT_CAP as f64 + 1.0
                } else {
                    grid.edges[j + 1]
                };
                (cdf(hi) - cdf(grid.edges[j])).max(0.0) / total
            })
            .collect()
    };
    [sed, active(0), active(1), active(2)]
}

fn multinomial(rng: &mut ChaCha8Rng, n: u64, probs: &[f64], out: &mut [u64]) {
    let mut left = n;
    let mut mass = 1.0;
    for (j, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if j + 1 == probs.len() || mass <= 0.0 {
            out[j] += left;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let k = Binomial::new(left, q).expect("valid binomial").sample(rng);
        out[j] += k;
        left -= k;
        mass -= p;
    }
}

fn covariate_dataset(ids: Vec<String>, traits: &[Traits], with_weartime: bool) -> Result<Dataset> {
    let mut cols = BTreeMap::new();
    cols.insert(
        "sex".to_string(),
        Column::Text(
            traits
                .iter()
                .map(|t| Some(if t.male { "M" } else { "F" }.to_string()))
                .collect(),
        ),
    );
    cols.insert(
        "m_obese".to_string(),
        Column::Numeric(traits.iter().map(|t| Some(t.m_obese as u8 as f64)).collect()),
    );
    cols.insert(
        "height".to_string(),
        Column::Numeric(traits.iter().map(|t| Some((t.height * 10.0).round() / 10.0)).collect()),
    );
    if with_weartime {
        cols.insert(
            "weartime".to_string(),
            Column::Numeric(traits.iter().map(|t| Some(t.daily_weartime.round())).collect()),
        );
    }
    Dataset::new(ids, cols)
}

fn subject_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(4);
    (0..n).map(|i| format!("S{:0width$}", i + 1)).collect()
}

/// Covariates plus pooled, weekday/weekend and hour-of-day histograms drawn
/// without simulating minute series: worn minutes are i.i.d. from each
/// subject's regime mixture within an hour. Outcomes are not yet attached.
pub fn gen_histograms(t: &TruthSpec, grid: &BinGrid, hour_width: u32, seed: u64) -> Result<Dataset> {
    t.validate()?;
    if hour_width == 0 || 24 % hour_width != 0 {
        return Err(Error::Config(format!("24 is not divisible by hour width {hour_width}")));
    }
    let g = &t.generator;
    let ids = subject_ids(t.n);
    let j_len = grid.len();
    let n_hours = (24 / hour_width) as usize;
    let per_subject: Vec<(Traits, HistogramSummary, HistogramSummary, HistogramSummary)> = (0..t.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = subject_rng(seed, i);
            let tr = draw_traits(g, &mut rng);
            let emis = emission_bins(g, &tr, grid);
            let n_weekend = (0..tr.valid_days).filter(|d| d % 7 >= 5).count();
            let n_weekday = tr.valid_days - n_weekend;
            let first = WAKING_HOURS.start - 1 + rng.random_range(0..3);
            let last = WAKING_HOURS.end - 2 + rng.random_range(0..3);
            let weights: Vec<f64> = (0..24)
                .map(|h| {
                    let w = rng.random_range(0.6..1.4);
                    if (first..=last).contains(&h) { w } else { 0.0 }
                })
                .collect();
            let weight_sum: f64 = weights.iter().sum();
            // counts[side][hour][bin]
            let mut counts = vec![vec![vec![0u64; j_len]; 24]; 2];
            let mut probs = vec![0.0; j_len];
            for (side, days) in [(0usize, n_weekday), (1, n_weekend)] {
                if days == 0 {
                    continue;
                }
                for hour in first..=last {
                    let minutes = (tr.daily_weartime * days as f64 * weights[hour] / weight_sum).round() as u64;
                    let w = state_probs(g, &tr, hour, side == 1);
                    for (j, p) in probs.iter_mut().enumerate() {
                        *p = (0..4).map(|s| w[s] * emis[s][j]).sum();
                    }
                    multinomial(&mut rng, minutes, &probs, &mut counts[side][hour]);
                }
            }
            let side_total = |side: usize| -> Vec<u64> {
                (0..j_len)
                    .map(|j| (0..24).map(|h| counts[side][h][j]).sum())
                    .collect()
            };
            let (wd, we) = (side_total(0), side_total(1));
            let wd_n: u64 = wd.iter().sum();
            let we_n: u64 = we.iter().sum();
            let total = (wd_n + we_n) as f64;
            let norm = |v: &[u64], n: u64| -> Vec<f64> {
                v.iter()
                    .map(|&c| if n > 0 { c as f64 / n as f64 } else { 0.0 })
                    .collect()
            };
            let summary = |data| HistogramSummary {
                subject_id: ids[i].clone(),
                grid: grid.clone(),
                weartime_minutes: (wd_n + we_n) as usize,
                valid_days: tr.valid_days,
                data,
            };
            let pooled: Vec<f64> = (0..j_len).map(|j| (wd[j] + we[j]) as f64 / total).collect();
            let mut z2 = vec![0.0; j_len * n_hours];
            for side in &counts {
                for (h, row) in side.iter().enumerate() {
                    for (j, &c) in row.iter().enumerate() {
                        z2[j * n_hours + h / hour_width as usize] += c as f64;
                    }
                }
            }
            let z2 = z2.iter().map(|c| c / (total * hour_width as f64)).collect();
            let h1 = summary(HistogramData::OneD { z: pooled });
            let h2 = summary(HistogramData::TwoD { z: z2, hour_width });
            let hs = summary(HistogramData::Split {
                weekday: SideHistogram {
                    z: norm(&wd, wd_n),
                    weartime: wd_n as usize,
                    empty: wd_n == 0,
                },
                weekend: SideHistogram {
                    z: norm(&we, we_n),
                    weartime: we_n as usize,
                    empty: we_n == 0,
                },
            });
            (tr, h1, h2, hs)
        })
        .collect();
    let traits: Vec<Traits> = per_subject.iter().map(|s| s.0.clone()).collect();
    let mut h1 = Vec::with_capacity(t.n);
    let mut h2 = Vec::with_capacity(t.n);
    let mut hs = Vec::with_capacity(t.n);
    for (_, a, b, c) in per_subject {
        h1.push(a);
        h2.push(b);
        hs.push(c);
    }
    covariate_dataset(ids, &traits, false)?
        .with_hist1d(h1)?
        .with_hist2d(h2)?
        .with_split(hs)
}

/// Minute-level profiles from a Markov dwell-state generator with night-time
/// zeros, non-wear blocks and occasional implausible spikes, plus the
/// covariate table (weartime is left to the cleaning pipeline).
pub fn gen_profiles(t: &TruthSpec, seed: u64) -> Result<(Vec<RawProfile>, Dataset)> {
    t.validate()?;
    let g = &t.generator;
    let ids = subject_ids(t.n);
    let days = crate::profile::DAYS_PER_PROFILE;
    let generated: Vec<(Traits, RawProfile)> = (0..t.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = subject_rng(seed, i);
            let tr = draw_traits(g, &mut rng);
            let emit: Vec<LogNormal<f64>> = (0..3)
                .map(|s| LogNormal::new(tr.medians[s].ln(), g.log_sd[s]).expect("valid log-normal"))
                .collect();
            let mut counts = Vec::with_capacity(days * MINUTES_PER_DAY);
            let mut state = 0usize;
            for d in 0..days {
                let weekend = d % 7 >= 5;
                let jitter = |rng: &mut ChaCha8Rng| {
                    if g.wake_jitter == 0 {
                        0
                    } else {
                        rng.random_range(0..=2 * g.wake_jitter)
                    }
                };
                let wake = (g.wake_minute + jitter(&mut rng)).saturating_sub(g.wake_jitter);
                let sleep = (g.sleep_minute + jitter(&mut rng))
                    .saturating_sub(g.wake_jitter)
                    .min(MINUTES_PER_DAY);
                let nonwear = if g.nonwear_day_prob > 0.0 && rng.random_bool(g.nonwear_day_prob) {
                    let len = rng.random_range(g.nonwear_len.0..=g.nonwear_len.1);
                    let start = rng.random_range(wake..sleep.max(wake + 1));
                    Some(start..start + len)
                } else {
                    None
                };
                for m in 0..MINUTES_PER_DAY {
                    let awake = m >= wake && m < sleep;
                    if (g.night_zeros && !awake) || nonwear.as_ref().is_some_and(|r| r.contains(&m)) {
                        counts.push(Some(0));
                        continue;
                    }
                    if !rng.random_bool(g.persistence[state]) {
                        let w = state_probs(g, &tr, m / 60, weekend);
                        let others: f64 = (0..4).filter(|&s| s != state).map(|s| w[s]).sum();
                        let mut u = rng.random_range(0.0..others);
                        for s in (0..4).filter(|&s| s != state) {
                            if u < w[s] {
                                state = s;
                                break;
                            }
                            u -= w[s];
                        }
                    }
                    let c = if g.spike_prob > 0.0 && rng.random_bool(g.spike_prob) {
                        rng.random_range(COUNT_CAP + 1..=40_000)
                    } else if state == 0 {
                        if rng.random_bool(g.sedentary_zero_prob) {
                            0
                        } else {
                            rng.random_range(1..100)
                        }
                    } else {
                        emit[state - 1].sample(&mut rng).floor().min(u32::MAX as f64) as u32
                    };
                    counts.push(Some(c));
                }
            }
            let raw = RawProfile::new(ids[i].clone(), g.start, counts).expect("full-length profile");
            (tr, raw)
        })
        .collect();
    let traits: Vec<Traits> = generated.iter().map(|(t, _)| t.clone()).collect();
    let profiles = generated.into_iter().map(|(_, p)| p).collect();
    Ok((profiles, covariate_dataset(ids, &traits, false)?))
}

/// True linear predictor, noise scale and outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes {
    pub eta: Vec<Option<f64>>,
    pub y: Vec<Option<f64>>,
    pub sigma: f64,
}

/// Outcomes `y = exp(η + ε)` for every subject of `data` with complete inputs
/// (others get a missing outcome). The coefficient function enters through the
/// pooled histogram.
pub fn gen_outcomes(data: &Dataset, t: &TruthSpec, seed: u64) -> Result<Outcomes> {
    t.validate()?;
    let f_grid: Option<Vec<f64>> = data
        .hist1d
        .values()
        .next()
        .map(|h| t.f_true.on_grid(&h.grid));
    let eta: Vec<Option<f64>> = data
        .ids
        .iter()
        .map(|id| {
            let male = data.level("sex", id)? == "M";
            let m_obese = data.number("m_obese", id)?;
            let height = data.number("height", id)?;
            let wear = data.number("weartime", id)?;
            let z = data.hist1d.get(id)?.one_d()?;
            let f = f_grid.as_ref()?;
            let func: f64 = z.iter().zip(f).map(|(z, f)| z * f).sum();
            Some(
                t.alpha
                    + if male { t.beta_sex_male } else { 0.0 }
                    + t.beta_weartime * wear
                    + t.beta_m_obese * m_obese
                    + t.f2(height)
                    + func,
            )
        })
        .collect();
    let present: Vec<f64> = eta.iter().flatten().copied().collect();
    let sigma = match t.sigma {
        SigmaSpec::Fixed { sigma } => sigma,
        SigmaSpec::TargetR2 { r2 } => {
            let n = present.len() as f64;
            if n < 2.0 {
                return Err(Error::EmptyCohort("too few complete subjects to calibrate σ".into()));
            }
            let mean = present.iter().sum::<f64>() / n;
            let var = present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var * (1.0 - r2) / r2).sqrt()
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let y = eta
        .iter()
        .map(|e| {
            let eps = std.sample(&mut rng);
            e.map(|e| (e + sigma * eps).exp())
        })
        .collect();
    Ok(Outcomes { eta, y, sigma })
}

/// Adds the outcome column to a dataset.
pub fn attach_outcomes(data: &mut Dataset, outcomes: &Outcomes) {
    data.columns
        .insert(RESPONSE.to_string(), Column::Numeric(outcomes.y.clone()));
}

/// Histogram-level cohort with outcomes in one call.
pub fn gen_cohort(t: &TruthSpec, grid: &BinGrid, seed: u64) -> Result<(Dataset, Outcomes)> {
    let mut data = gen_histograms(t, grid, 1, seed)?;
    let out = gen_outcomes(&data, t, seed.wrapping_add(0x9E37_79B9_7F4A_7C15))?;
    attach_outcomes(&mut data, &out);
    Ok((data, out))
}
