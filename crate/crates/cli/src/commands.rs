use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use actihist::fit::{fit_model, write_coef_function_csv, FittedModel};
use actihist::inference::{
    band_from_basis, nonlinearity_test, percent_change, sample_posterior, write_intervals_csv, PercentChange,
};
use actihist::model::{assemble, read_covariates_csv, write_covariates_csv, Dataset, HistSource, ModelSpec, Term};
use actihist::model_select::{compare_family, drop_term, format_table, make_split, write_comparison_csv, CompareOptions};
use actihist::profile::{clean_cohort, read_profiles, write_profiles, CleanProfile, CleaningReport, ProfileFormat, RawProfile};
use actihist::summary::{
    hist1d, hist2d, hist_split, read_grid_json, read_hist1d_csv, read_hist2d_csv, read_split_csv, write_grid_json,
    write_hist1d_csv, write_hist2d_csv, write_split_csv,
};
use actihist::synth::{attach_outcomes, gen_outcomes, gen_profiles};
use actihist::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::svg;

/// Seed offset separating the outcome noise from the profile generator.
const OUTCOME_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    finish(w, path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_with(path, |w| {
        w.write_all(text.as_bytes()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

/// File-name friendly form of a model or term label.
pub fn slug(label: &str) -> String {
    let mut s = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    let s = s.trim_matches('_').to_string();
    if s.is_empty() {
        "model".into()
    } else {
        s
    }
}

/// Writes the resolved configuration next to the outputs of `command`.
pub fn echo_config(cfg: &RunConfig, command: &str) -> Result<()> {
    write_json(&cfg.out.join(format!("{command}.config.json")), cfg)
}

fn input(p: &Option<PathBuf>) -> &Path {
    RunConfig::path(p)
}

fn format_of(cfg: &RunConfig) -> ProfileFormat {
    cfg.inputs.profile_format.unwrap_or(ProfileFormat::WideCsv)
}

fn clean_and_write(cfg: &RunConfig, raw: &[RawProfile]) -> Result<(Vec<CleanProfile>, CleaningReport)> {
    let (cleaned, report) = clean_cohort(raw, &cfg.cleaning)?;
    write_json(input(&cfg.inputs.cleaning_report), &report)?;
    let kept = cleaned
        .iter()
        .filter(|c| c.valid)
        .map(|c| RawProfile::new(c.subject_id.clone(), c.start(), c.series()))
        .collect::<Result<Vec<_>>>()?;
    let path = input(&cfg.inputs.cleaned_profiles);
    write_with(path, |w| write_profiles(w, &kept, ProfileFormat::WideCsv))?;
    log::info!("{} of {} profiles valid", report.n_valid, report.n_profiles);
    for s in report.excluded() {
        log::info!("excluded {}: {}", s.subject_id, s.exclusion_reasons.join("; "));
    }
    if report.n_valid == 0 {
        return Err(Error::EmptyCohort("no profile passed the validity rules".into()));
    }
    Ok((cleaned, report))
}

pub fn clean(cfg: &RunConfig) -> Result<()> {
    let raw = read_profiles(input(&cfg.inputs.profiles), format_of(cfg))?;
    clean_and_write(cfg, &raw)?;
    Ok(())
}

pub fn summarize(cfg: &RunConfig) -> Result<()> {
    let raw = read_profiles(input(&cfg.inputs.cleaned_profiles), ProfileFormat::WideCsv)?;
    let profiles: Vec<CleanProfile> = raw
        .iter()
        .map(|r| CleanProfile::from_cleaned(r, cfg.cleaning.min_valid_days))
        .filter(|c| c.valid)
        .collect();
    if profiles.is_empty() {
        return Err(Error::EmptyCohort("no valid cleaned profile to summarize".into()));
    }
    let grid = cfg.bins.grid()?;
    let h1 = profiles
        .par_iter()
        .map(|p| hist1d(p, &grid))
        .collect::<Result<Vec<_>>>()?;
    let h2 = profiles
        .par_iter()
        .map(|p| hist2d(p, &grid, cfg.bins.hour_width))
        .collect::<Result<Vec<_>>>()?;
    let hs = profiles
        .par_iter()
        .map(|p| hist_split(p, &grid))
        .collect::<Result<Vec<_>>>()?;
    write_with(input(&cfg.inputs.grid), |w| write_grid_json(w, &grid))?;
    write_with(input(&cfg.inputs.hist1d), |w| write_hist1d_csv(w, &h1))?;
    write_with(input(&cfg.inputs.hist2d), |w| write_hist2d_csv(w, &h2))?;
    write_with(input(&cfg.inputs.split), |w| write_split_csv(w, &hs))?;
    log::info!("summarized {} profiles on {} bins", profiles.len(), grid.len());
    Ok(())
}

fn needs(models: &[&ModelSpec]) -> (bool, bool) {
    let terms = models.iter().flat_map(|m| &m.terms);
    let mut two_d = false;
    let mut split = false;
    for t in terms {
        match t {
            Term::Functional2d { .. } => two_d = true,
            Term::Functional { source, .. } if *source != HistSource::Pooled => split = true,
            _ => {}
        }
    }
    (two_d, split)
}

/// Covariates joined with the summaries the given models read.
pub fn load_dataset(cfg: &RunConfig, models: &[&ModelSpec]) -> Result<Dataset> {
    let grid = read_grid_json(input(&cfg.inputs.grid))?;
    let report_path = input(&cfg.inputs.cleaning_report);
    let valid_days: BTreeMap<String, usize> = if report_path.exists() {
        let f = File::open(report_path).map_err(|e| Error::Io {
            path: report_path.to_path_buf(),
            source: e,
        })?;
        let report: CleaningReport = serde_json::from_reader(std::io::BufReader::new(f))?;
        report
            .subjects
            .into_iter()
            .map(|s| (s.subject_id, s.valid_days))
            .collect()
    } else {
        log::warn!(
            "{} not found; weartime must then be a covariate column",
            report_path.display()
        );
        BTreeMap::new()
    };
    let mut data = read_covariates_csv(input(&cfg.inputs.covariates))?
        .with_hist1d(read_hist1d_csv(input(&cfg.inputs.hist1d), &grid, &valid_days)?)?;
    let (two_d, split) = needs(models);
    if two_d {
        data = data.with_hist2d(read_hist2d_csv(input(&cfg.inputs.hist2d), &grid, cfg.bins.hour_width)?)?;
    }
    if split {
        data = data.with_split(read_split_csv(input(&cfg.inputs.split), &grid, &valid_days)?)?;
    }
    Ok(data)
}

fn summarized_ids(data: &Dataset) -> Vec<String> {
    data.ids
        .iter()
        .filter(|id| data.hist1d.contains_key(*id))
        .cloned()
        .collect()
}

#[derive(Serialize)]
struct FitFailure<'a> {
    model: &'a str,
    error: String,
}

fn write_function_outputs(cfg: &RunConfig, fm: &FittedModel, data: &Dataset, dir: &Path, stem: &str) -> Result<()> {
    let blocks = fm.layout.functional_blocks();
    let draws = if cfg.plots.svg && !blocks.is_empty() {
        Some(sample_posterior(&fm.fit, cfg.plots.band_draws, cfg.seed)?)
    } else {
        None
    };
    for b in blocks {
        let label = &fm.layout.blocks[b].label;
        let points = fm.layout.grid(b)?.midpoints.clone();
        let g = fm.layout.coef_function_basis(b, &points)?;
        let base = format!("{stem}.{}", slug(label));
        let csv_path = dir.join(format!("{base}.csv"));
        write_with(&csv_path, |w| write_coef_function_csv(w, &fm.fit, b, &points, &g))?;
        if let Some(d) = &draws {
            let band = band_from_basis(&fm.fit, d, b, &points, &g, cfg.inference.level)?;
            let title = format!("{} {label}", fm.spec().name);
            let svg = svg::render(&svg::Curve {
                title: &title,
                x: &band.points,
                estimate: &band.estimate,
                band: Some((&band.lower, &band.upper)),
                gridlines: &cfg.plots.gridlines,
            });
            write_text(&dir.join(format!("{base}.svg")), &svg)?;
        }
    }
    for (b, blk) in fm.layout.blocks.iter().enumerate() {
        let is_2d = blk
            .term
            .is_some_and(|t| matches!(fm.spec().terms[t], Term::Functional2d { .. }));
        if !is_2d {
            continue;
        }
        let g = fm.layout.coef_surface_basis(b)?;
        let grid = data
            .hist2d
            .values()
            .next()
            .map(|h| h.grid.clone())
            .ok_or_else(|| Error::InvalidInput("two-dimensional summaries are missing".into()))?;
        let n_hours = g.nrows() / grid.len();
        let hour_width = 24 / n_hours.max(1);
        let f = &g * fm.fit.block_beta(b);
        let var = (&g * fm.fit.block_cov(b)).component_mul(&g).column_sum();
        let path = dir.join(format!("{stem}.{}.csv", slug(&blk.label)));
        write_with(&path, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["p_j", "hour", "f_hat", "se"])?;
            for (j, p) in grid.midpoints.iter().enumerate() {
                for m in 0..n_hours {
                    let r = j * n_hours + m;
                    wtr.write_record([
                        p.to_string(),
                        (m * hour_width).to_string(),
                        f[r].to_string(),
                        var[r].max(0.0).sqrt().to_string(),
                    ])?;
                }
            }
            wtr.flush().map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })
        })?;
    }
    Ok(())
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let models: Vec<&ModelSpec> = cfg.models.iter().collect();
    let data = load_dataset(cfg, &models)?;
    let ids = summarized_ids(&data);
    let dir = cfg.out.join("fit");
    let results: Vec<Result<FittedModel>> = cfg
        .models
        .par_iter()
        .map(|m| fit_model(m, &data, &ids, &cfg.fit))
        .collect();
    let mut first_error = None;
    for (m, r) in cfg.models.iter().zip(results) {
        let stem = slug(&m.name);
        match r {
            Ok(fm) => {
                let path = dir.join(format!("{stem}.json"));
                write_with(&path, |w| fm.fit.write_json(w, cfg.export_covariance))?;
                write_function_outputs(cfg, &fm, &data, &dir, &stem)?;
                log::info!(
                    "{}: n = {}, edf = {:.2}, adj. R2 = {:.3}",
                    m.name,
                    fm.fit.n,
                    fm.fit.edf,
                    fm.fit.criteria.adj_r2
                );
            }
            Err(e) => {
                log::error!("{}: {e}", m.name);
                write_json(
                    &dir.join(format!("{stem}.error.json")),
                    &FitFailure {
                        model: &m.name,
                        error: e.to_string(),
                    },
                )?;
                first_error.get_or_insert(e);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

pub fn compare(cfg: &RunConfig) -> Result<()> {
    let models: Vec<&ModelSpec> = cfg.models.iter().collect();
    let data = load_dataset(cfg, &models)?;
    let ids = summarized_ids(&data);
    let split = make_split(&ids, cfg.split.fraction, cfg.split.seed.unwrap_or(cfg.seed))?;
    let opts = CompareOptions {
        fit: cfg.fit.clone(),
        smearing: cfg.compare.smearing,
    };
    let dir = cfg.out.join("compare");
    write_json(&dir.join("split.json"), &split)?;
    let rows = compare_family(&cfg.models, &data, &split, &opts)?;
    write_with(&dir.join("comparison.csv"), |w| write_comparison_csv(w, &rows))?;
    write_text(&dir.join("comparison.txt"), &format_table(&rows))?;
    if rows.iter().all(|r| r.error.is_some()) {
        return Err(Error::OptimizerFailed("every model in the family failed to fit".into()));
    }
    if let Some(name) = &cfg.compare.drop_term {
        let spec = cfg.model(name)?;
        let rows = drop_term(spec, &data, &split, &opts)?;
        let stem = format!("drop_{}", slug(name));
        write_with(&dir.join(format!("{stem}.csv")), |w| write_comparison_csv(w, &rows))?;
        write_text(&dir.join(format!("{stem}.txt")), &format_table(&rows))?;
    }
    Ok(())
}

pub fn infer(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.model(&cfg.inference.model)?;
    let data = load_dataset(cfg, &[spec])?;
    let ids = summarized_ids(&data);
    let dir = cfg.out.join("infer");
    let fm = fit_model(spec, &data, &ids, &cfg.fit)?;
    let draws = sample_posterior(&fm.fit, cfg.inference.draws, cfg.seed)?;
    for b in fm.layout.functional_blocks() {
        let label = &fm.layout.blocks[b].label;
        let points = fm.layout.grid(b)?.midpoints.clone();
        let g = fm.layout.coef_function_basis(b, &points)?;
        let band = band_from_basis(&fm.fit, &draws, b, &points, &g, cfg.inference.level)?;
        let stem = format!("band_{}", slug(label));
        write_with(&dir.join(format!("{stem}.csv")), |w| band.write_csv(w))?;
        if cfg.plots.svg {
            let title = format!("{} {label}", spec.name);
            let svg = svg::render(&svg::Curve {
                title: &title,
                x: &band.points,
                estimate: &band.estimate,
                band: Some((&band.lower, &band.upper)),
                gridlines: &cfg.plots.gridlines,
            });
            write_text(&dir.join(format!("{stem}.svg")), &svg)?;
        }
        for (lo, hi, sign) in band.significant_regions() {
            log::info!("{label}: band excludes zero on [{lo}, {hi}] ({})", if sign > 0 { "+" } else { "-" });
        }
    }
    if !cfg.inference.scenarios.is_empty() {
        let results = cfg
            .inference
            .scenarios
            .iter()
            .map(|s| percent_change(&fm, &draws, &data, &ids, s, cfg.inference.level))
            .collect::<Result<Vec<PercentChange>>>()?;
        write_json(&dir.join("intervals.json"), &results)?;
        write_with(&dir.join("intervals.csv"), |w| write_intervals_csv(w, &results))?;
    }
    if let Some(k) = cfg.inference.nonlinearity_k {
        let base: Vec<Term> = spec.terms.iter().filter(|t| !t.is_functional()).cloned().collect();
        let (lin, full) = ModelSpec::nonlinearity_pair(&base, k);
        let a0 = assemble(&lin, &data, &ids)?;
        let a1 = assemble(&full, &data, &ids)?;
        if a0.ids != a1.ids {
            return Err(Error::InvalidInput("nested models were fitted to different subjects".into()));
        }
        let test = nonlinearity_test(&a0.design, &a1.design, &a0.y, &cfg.fit)?;
        log::info!(
            "nonlinearity: statistic {:.3} on {:.2} df, p = {:?}",
            test.statistic,
            test.dof,
            test.p_value
        );
        write_json(&dir.join("nonlinearity.json"), &test)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TruthPoint {
    p: f64,
    f: f64,
}

#[derive(Serialize)]
struct TruthReport<'a> {
    seed: u64,
    sigma: f64,
    truth: &'a actihist::synth::TruthSpec,
    coefficient_function: Vec<TruthPoint>,
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let t = &cfg.simulate;
    let (profiles, mut covariates) = gen_profiles(t, cfg.seed)?;
    let path = input(&cfg.inputs.profiles);
    write_with(path, |w| write_profiles(w, &profiles, format_of(cfg)))?;
    let (cleaned, _) = clean_cohort(&profiles, &cfg.cleaning)?;
    let grid = cfg.bins.grid()?;
    let hs = cleaned
        .par_iter()
        .filter(|c| c.valid)
        .map(|c| hist1d(c, &grid))
        .collect::<Result<Vec<_>>>()?;
    let data = covariates.clone().with_hist1d(hs)?;
    let outcomes = gen_outcomes(&data, t, cfg.seed.wrapping_add(OUTCOME_SEED_OFFSET))?;
    attach_outcomes(&mut covariates, &outcomes);
    write_with(input(&cfg.inputs.covariates), |w| write_covariates_csv(w, &covariates))?;
    let f = t.f_true.on_grid(&grid);
    write_json(
        &cfg.out.join("truth.json"),
        &TruthReport {
            seed: cfg.seed,
            sigma: outcomes.sigma,
            truth: t,
            coefficient_function: grid
                .midpoints
                .iter()
                .zip(f)
                .map(|(&p, f)| TruthPoint { p, f })
                .collect(),
        },
    )?;
    log::info!(
        "simulated {} subjects ({} with outcomes), sigma = {:.4}",
        t.n,
        outcomes.y.iter().flatten().count(),
        outcomes.sigma
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("+hist by WE"), "hist_by_we");
        assert_eq!(slug("f(hist|sex)"), "f_hist_sex");
        assert_eq!(slug("base"), "base");
        assert_eq!(slug("+2Dhist"), "2dhist");
        assert_eq!(slug("--"), "model");
    }
}
