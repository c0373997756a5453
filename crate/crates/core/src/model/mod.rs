//! Model specifications, covariate data and design-matrix assembly.

mod data;
mod design;

pub use data::{read_covariates_csv, write_covariates_csv, Column, Dataset};
pub use design::{assemble, Assembled, DesignBlocks, Exclusion, Layout, PenaltyBlock, TermBlock};

use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};

/// How a functional term is made identifiable next to the intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// `Σ_j f(p_j) = 0` over the grid midpoints.
    Centered,
    /// `f(p_1) = 0`: the first bin becomes the reference level.
    #[default]
    DropFirstBin,
}

/// Which one-dimensional histogram a functional term reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistSource {
    #[default]
    Pooled,
    Weekday,
    Weekend,
}

impl HistSource {
    fn label(self) -> &'static str {
        match self {
            HistSource::Pooled => "hist",
            HistSource::Weekday => "weekday",
            HistSource::Weekend => "weekend",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Term {
    Numeric {
        name: String,
    },
    /// Treatment-coded factor; the alphabetically first level is the reference.
    Factor {
        name: String,
    },
    /// Linear effect of mean counts per minute, `γ Σ_j p_j z_j`.
    MeanCpm,
    /// Centered smooth of a scalar covariate.
    Smooth {
        covariate: String,
        basis: BasisSpec,
    },
    /// `Σ_j f(p_j) z_j` with `f` in the given basis.
    Functional {
        #[serde(default)]
        source: HistSource,
        basis: BasisSpec,
        /// Separate coefficient function per level of this factor.
        #[serde(default)]
        by: Option<String>,
        #[serde(default)]
        parameterization: Parameterization,
        /// Keep only the unpenalized linear column of a thin-plate basis.
        #[serde(default)]
        affine_only: bool,
    },
    /// `Σ_j Σ_m f(p_j, t_m) z_jm l_m` with a tensor product of cubic
    /// regression splines over intensity and hour of day.
    Functional2d {
        basis_p: BasisSpec,
        basis_t: BasisSpec,
    },
}

impl Term {
    pub fn label(&self) -> String {
        match self {
            Term::Numeric { name } | Term::Factor { name } => name.clone(),
            Term::MeanCpm => "cpm".into(),
            Term::Smooth { covariate, .. } => format!("s({covariate})"),
            Term::Functional {
                source,
                by,
                affine_only,
                ..
            } => {
                let mut s = format!("f({})", source.label());
                if let Some(g) = by {
                    s = format!("f({}|{g})", source.label());
                }
                if *affine_only {
                    s.push_str(".lin");
                }
                s
            }
            Term::Functional2d { .. } => "te(hist2d)".into(),
        }
    }

    pub fn is_functional(&self) -> bool {
        matches!(self, Term::Functional { .. } | Term::Functional2d { .. })
    }

    fn validate(&self) -> Result<()> {
        match self {
            Term::Smooth { basis, .. } => basis.validate(),
            Term::Functional {
                basis, affine_only, ..
            } => {
                basis.validate()?;
                if *affine_only && basis.kind != crate::basis::BasisKind::Thinplate {
                    return Err(Error::Config(
                        "affine_only requires a thin-plate basis".into(),
                    ));
                }
                Ok(())
            }
            Term::Functional2d { basis_p, basis_t } => {
                for b in [basis_p, basis_t] {
                    if b.kind != crate::basis::BasisKind::CubicRs {
                        return Err(Error::Config(
                            "two-dimensional terms use cubic regression spline margins".into(),
                        ));
                    }
                    b.validate()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Base,
    Hist,
    CpmLinear,
    HistByGender,
    Hist2d,
    HistWeekend,
    Custom,
}

impl Variant {
    pub const FAMILY: [Variant; 6] = [
        Variant::Base,
        Variant::Hist,
        Variant::CpmLinear,
        Variant::HistByGender,
        Variant::Hist2d,
        Variant::HistWeekend,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Hist => "+hist",
            Variant::CpmLinear => "+cpm",
            Variant::HistByGender => "+hist by gender",
            Variant::Hist2d => "+2Dhist",
            Variant::HistWeekend => "+hist by WE",
            Variant::Custom => "custom",
        }
    }
}

fn default_response() -> String {
    "fat_mass".into()
}

fn yes() -> bool {
    true
}

/// A model for the (log) response; an intercept is always included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub variant: Variant,
    #[serde(default = "default_response")]
    pub response: String,
    #[serde(default = "yes")]
    pub log_response: bool,
    pub terms: Vec<Term>,
}

/// Scalar covariates and height smooth shared by every preset.
pub fn base_terms() -> Vec<Term> {
    vec![
        Term::Factor { name: "sex".into() },
        Term::Numeric {
            name: "weartime".into(),
        },
        Term::Factor {
            name: "m_obese".into(),
        },
        Term::Smooth {
            covariate: "height".into(),
            basis: BasisSpec::thinplate(10),
        },
    ]
}

pub fn hist_term(source: HistSource, by: Option<&str>) -> Term {
    Term::Functional {
        source,
        basis: BasisSpec::pspline(20, 5),
        by: by.map(str::to_string),
        parameterization: Parameterization::DropFirstBin,
        affine_only: false,
    }
}

impl ModelSpec {
    /// The default form of one of the six model variants.
    pub fn preset(variant: Variant) -> Self {
        let mut terms = base_terms();
        match variant {
            Variant::Base | Variant::Custom => {}
            Variant::Hist => terms.push(hist_term(HistSource::Pooled, None)),
            Variant::CpmLinear => terms.push(Term::MeanCpm),
            Variant::HistByGender => terms.push(hist_term(HistSource::Pooled, Some("sex"))),
            Variant::Hist2d => terms.push(Term::Functional2d {
                basis_p: BasisSpec::cubic_rs(8),
                basis_t: BasisSpec::cubic_rs(8),
            }),
            Variant::HistWeekend => {
                terms.push(hist_term(HistSource::Weekday, None));
                terms.push(hist_term(HistSource::Weekend, None));
            }
        }
        ModelSpec {
            name: variant.tag().into(),
            variant,
            response: default_response(),
            log_response: true,
            terms,
        }
    }

    /// The six-variant comparison family, base first.
    pub fn family() -> Vec<ModelSpec> {
        Variant::FAMILY.iter().map(|&v| Self::preset(v)).collect()
    }

    /// Pair of nested models for testing whether the effect of a functional
    /// term is linear: the first keeps only the linear column of a thin-plate
    /// basis, the second adds the penalized part.
    pub fn nonlinearity_pair(base: &[Term], k: usize) -> (ModelSpec, ModelSpec) {
        let make = |affine_only: bool, name: &str| {
            let mut terms = base.to_vec();
            terms.push(Term::Functional {
                source: HistSource::Pooled,
                basis: BasisSpec::thinplate(k),
                by: None,
                parameterization: Parameterization::DropFirstBin,
                affine_only,
            });
            ModelSpec {
                name: name.into(),
                variant: Variant::Custom,
                response: default_response(),
                log_response: true,
                terms,
            }
        };
        (make(true, "linear"), make(false, "nonlinear"))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.terms {
            t.validate()?;
            if !seen.insert(t.label()) {
                return Err(Error::Config(format!(
                    "model {}: term {} appears twice",
                    self.name,
                    t.label()
                )));
            }
        }
        Ok(())
    }

    /// Copy of the model without the term at `index`.
    pub fn without_term(&self, index: usize) -> ModelSpec {
        let mut out = self.clone();
        let removed = out.terms.remove(index);
        out.name = format!("- {}", removed.label());
        out.variant = Variant::Custom;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_expected_terms() {
        let fam = ModelSpec::family();
        assert_eq!(fam.len(), 6);
        let labels: Vec<Vec<String>> = fam
            .iter()
            .map(|m| m.terms.iter().map(Term::label).collect())
            .collect();
        assert_eq!(labels[0], ["sex", "weartime", "m_obese", "s(height)"]);
        assert_eq!(labels[1].last().unwrap(), "f(hist)");
        assert_eq!(labels[3].last().unwrap(), "f(hist|sex)");
        assert_eq!(&labels[5][4..], ["f(weekday)", "f(weekend)"]);
        for m in &fam {
            m.validate().unwrap();
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let m = ModelSpec::preset(Variant::Hist2d);
        let s = serde_json::to_string(&m).unwrap();
        let back: ModelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let minimal: ModelSpec = serde_json::from_str(
            r#"{"name":"m","variant":"custom","terms":[{"type":"functional","basis":{"kind":"pspline","k":10}}]}"#,
        )
        .unwrap();
        assert!(minimal.log_response);
        assert!(matches!(
            &minimal.terms[0],
            Term::Functional { parameterization: Parameterization::DropFirstBin, .. }
        ));
    }

    #[test]
    fn affine_only_needs_thinplate() {
        let mut m = ModelSpec::preset(Variant::Custom);
        m.terms.push(Term::Functional {
            source: HistSource::Pooled,
            basis: BasisSpec::pspline(10, 0),
            by: None,
            parameterization: Parameterization::Centered,
            affine_only: true,
        });
        assert!(m.validate().is_err());
    }
}
