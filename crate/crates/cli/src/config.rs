use std::path::{Path, PathBuf};

use actihist::fit::FitOptions;
use actihist::inference::{Scenario, DEFAULT_DRAWS};
use actihist::model::ModelSpec;
use actihist::model_select::DEFAULT_TRAIN_FRACTION;
use actihist::profile::{CleaningConfig, ProfileFormat};
use actihist::summary::{make_bins, BinGrid, Transform};
use actihist::synth::TruthSpec;
use actihist::{Error, Result};
use serde::{Deserialize, Serialize};

/// File locations. Unset entries default to the standard names inside the
/// output directory, so the subcommands chain without further configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Inputs {
    pub profiles: Option<PathBuf>,
    pub profile_format: Option<ProfileFormat>,
    pub covariates: Option<PathBuf>,
    pub cleaned_profiles: Option<PathBuf>,
    pub cleaning_report: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub hist1d: Option<PathBuf>,
    pub hist2d: Option<PathBuf>,
    pub split: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinConfig {
    pub width: f64,
    pub upper: f64,
    pub cap: f64,
    pub transform: Transform,
    /// Hours per time bin of the two-dimensional summary.
    pub hour_width: u32,
}

impl Default for BinConfig {
    fn default() -> Self {
        Self {
            width: 100.0,
            upper: 8000.0,
            cap: 15000.0,
            transform: Transform::Identity,
            hour_width: 1,
        }
    }
}

impl BinConfig {
    pub fn grid(&self) -> Result<BinGrid> {
        make_bins(self.width, self.upper, self.cap, self.transform)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub fraction: f64,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            fraction: DEFAULT_TRAIN_FRACTION,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    /// Multiply back-transformed predictions by the smearing factor.
    pub smearing: bool,
    /// Also run the drop-one-term table for this model.
    pub drop_term: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// Name of the model (from `models`) used for bands and scenarios.
    pub model: String,
    pub draws: usize,
    pub level: f64,
    pub scenarios: Vec<Scenario>,
    /// Thin-plate basis size of the nonlinearity test; `None` skips it.
    pub nonlinearity_k: Option<usize>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            model: "+hist".into(),
            draws: DEFAULT_DRAWS,
            level: 0.95,
            scenarios: Scenario::defaults(),
            nonlinearity_k: Some(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotConfig {
    pub svg: bool,
    /// Posterior draws behind the band drawn by `fit`.
    pub band_draws: usize,
    pub gridlines: Vec<f64>,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            svg: true,
            band_draws: 2000,
            gridlines: vec![200.0, 3600.0, 6200.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub inputs: Inputs,
    pub cleaning: CleaningConfig,
    pub bins: BinConfig,
    pub models: Vec<ModelSpec>,
    pub fit: FitOptions,
    /// Include the dense posterior covariance in fit/<model>.json.
    pub export_covariance: bool,
    pub split: SplitConfig,
    pub compare: CompareConfig,
    pub inference: InferenceConfig,
    pub plots: PlotConfig,
    pub simulate: TruthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            seed: 1,
            threads: None,
            inputs: Inputs::default(),
            cleaning: CleaningConfig::default(),
            bins: BinConfig::default(),
            models: ModelSpec::family(),
            fit: FitOptions::default(),
            export_covariance: false,
            split: SplitConfig::default(),
            compare: CompareConfig::default(),
            inference: InferenceConfig::default(),
            plots: PlotConfig::default(),
            simulate: TruthSpec::default(),
        }
    }
}

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub zero_block: Option<usize>,
    pub bins: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        if let Some(t) = o.threads {
            cfg.threads = Some(t);
        }
        if let Some(z) = o.zero_block {
            cfg.cleaning.zero_block_len = z;
        }
        if let Some(n) = o.bins {
            if n == 0 {
                return Err(Error::Config("--bins must be positive".into()));
            }
            cfg.bins.width = cfg.bins.upper / n as f64;
        }
        if let Some(out) = &o.out {
            cfg.out = out.clone();
        }
        cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fills every unset input path with its default location.
    fn resolve(&mut self) {
        let out = self.out.clone();
        let i = &mut self.inputs;
        let fill = |p: &mut Option<PathBuf>, name: &str| {
            if p.is_none() {
                *p = Some(out.join(name));
            }
        };
        fill(&mut i.profiles, "profiles.csv");
        fill(&mut i.covariates, "covariates.csv");
        fill(&mut i.cleaned_profiles, "cleaned_profiles.csv");
        fill(&mut i.cleaning_report, "cleaning_report.json");
        fill(&mut i.grid, "grid.json");
        fill(&mut i.hist1d, "hist1d.csv");
        fill(&mut i.hist2d, "hist2d.csv");
        fill(&mut i.split, "split.csv");
        if i.profile_format.is_none() {
            i.profile_format = Some(ProfileFormat::WideCsv);
        }
        if self.split.seed.is_none() {
            self.split.seed = Some(self.seed);
        }
    }

    fn validate(&self) -> Result<()> {
        self.cleaning.validate()?;
        self.bins.grid()?;
        if self.bins.hour_width == 0 || 24 % self.bins.hour_width != 0 {
            return Err(Error::Config("hour_width must divide 24".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for m in &self.models {
            m.validate()?;
            if !names.insert(m.name.as_str()) {
                return Err(Error::Config(format!("model name {} is used twice", m.name)));
            }
        }
        if self.inference.draws == 0 || self.plots.band_draws == 0 {
            return Err(Error::Config("the number of posterior draws must be positive".into()));
        }
        if !(self.inference.level > 0.0 && self.inference.level < 1.0) {
            return Err(Error::Config("credible level must lie in (0, 1)".into()));
        }
        self.simulate.validate()
    }

    pub fn path(p: &Option<PathBuf>) -> &Path {
        p.as_deref().expect("paths are resolved on load")
    }

    pub fn model(&self, name: &str) -> Result<&ModelSpec> {
        self.models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::Config(format!("no model named {name:?}")))
    }
}
