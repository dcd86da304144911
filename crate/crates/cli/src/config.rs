//! Scenario files: one TOML file describes one experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pointcause::simstudy::{BalanceExperiment, CoverageConfig};
use pointcause::{DgpSpec, EstimatorKind, FeatureSpec, OutcomeMode, Rect, Window};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Estimate,
    Coverage,
    Balance,
    TruthOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; the command line flag wins.
    pub threads: Option<usize>,
    /// Output directory; the command line flag wins.
    pub output: Option<PathBuf>,
    /// Write plot-ready rasters next to the tables.
    #[serde(default)]
    pub rasters: bool,
    pub dgp: Option<DgpSection>,
    pub data: Option<DataSection>,
    pub propensity: Option<PropensitySection>,
    #[serde(default)]
    pub interventions: Vec<InterventionSection>,
    pub estimator: Option<EstimatorSection>,
    pub oracle: Option<OracleSection>,
    pub coverage: Option<CoverageSection>,
    pub balance: Option<BalanceSection>,
}

fn default_seed() -> u64 {
    1
}

/// The simulation design: a spec file, or the shipped defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSection {
    pub spec: Option<PathBuf>,
    pub periods: Option<usize>,
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// `[x0, y0, x1, y1]`
    pub window: [f64; 4],
    pub treatments: PatternSource,
    pub outcomes: PatternSource,
}

/// An event CSV with header `t,x,y[,type]`, optionally filtered by type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSource {
    pub path: PathBuf,
    #[serde(rename = "type")]
    pub kind: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum PropensitySection {
    /// Fit a log-linear Poisson model with the listed features.
    Fit {
        features: Vec<FeatureSpec>,
        /// Static covariate rasters by feature name.
        #[serde(default)]
        covariates: BTreeMap<String, PathBuf>,
        resolution: Option<usize>,
    },
    /// A model saved by an earlier run.
    File {
        path: PathBuf,
        #[serde(default)]
        covariates: BTreeMap<String, PathBuf>,
        resolution: Option<usize>,
    },
    /// Homogeneous Poisson at the pooled rate.
    Homogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    Uniform,
    /// Scott-smoothed density of all observed treatment points.
    Treatments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InterventionSection {
    Homogeneous {
        name: String,
        rate: f64,
    },
    ScaledBaseline {
        name: String,
        count: f64,
        #[serde(default)]
        baseline: Baseline,
    },
    Focal {
        name: String,
        count: f64,
        focus: [f64; 2],
        precision: f64,
        #[serde(default)]
        baseline: Baseline,
    },
    Local {
        name: String,
        region: [f64; 4],
        inside: f64,
        outside: f64,
        #[serde(default)]
        baseline: Baseline,
    },
}

impl InterventionSection {
    pub fn name(&self) -> &str {
        match self {
            InterventionSection::Homogeneous { name, .. }
            | InterventionSection::ScaledBaseline { name, .. }
            | InterventionSection::Focal { name, .. }
            | InterventionSection::Local { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default = "default_windows")]
    pub windows: Vec<usize>,
    /// `[x0, y0, x1, y1]` each; empty means the whole window.
    #[serde(default)]
    pub regions: Vec<[f64; 4]>,
    /// Fixed kernel sd; defaults to the length rule.
    pub bandwidth: Option<f64>,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<EstimatorKind>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub outcome: OutcomeMode,
    /// Pairs of intervention names `[from, to]`.
    #[serde(default)]
    pub contrasts: Vec<[String; 2]>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            windows: default_windows(),
            regions: vec![],
            bandwidth: None,
            kinds: default_kinds(),
            level: default_level(),
            outcome: OutcomeMode::Smoothed,
            contrasts: vec![],
        }
    }
}

fn default_windows() -> Vec<usize> {
    vec![1]
}

fn default_kinds() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Ipw, EstimatorKind::Hajek]
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_windows")]
    pub windows: Vec<usize>,
    #[serde(default)]
    pub regions: Vec<[f64; 4]>,
}

fn default_reps() -> usize {
    100
}

/// Overrides on top of the selected profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSection {
    pub datasets: Option<usize>,
    pub lengths: Option<Vec<usize>>,
    pub windows: Option<Vec<usize>>,
    pub intensities: Option<Vec<f64>>,
    pub regions: Option<Vec<[f64; 4]>>,
    pub truth_reps: Option<usize>,
    pub variance_reps: Option<usize>,
    pub variance_windows: Option<Vec<usize>>,
    pub levels: Option<Vec<f64>>,
    pub modes: Option<Vec<OutcomeMode>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceSection {
    pub replicates: Option<usize>,
    pub truncation_quantile: Option<f64>,
    pub fitted_weights: Option<bool>,
    pub feature: Option<String>,
}

pub fn rect(r: &[f64; 4]) -> Rect {
    Rect::new(r[0], r[1], r[2], r[3])
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks that the sections the mode needs are present and sane, before
    /// any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let need = |present: bool, key: &str| {
            if present {
                Ok(())
            } else {
                Err(CliError::Config(format!("mode {:?} needs the [{key}] section", self.mode)))
            }
        };
        if self.threads == Some(0) {
            return Err(CliError::Config("threads: must be at least 1".into()));
        }
        match self.mode {
            Mode::Simulate | Mode::Coverage | Mode::Balance => {}
            Mode::Estimate => {
                need(self.data.is_some(), "data")?;
                need(self.propensity.is_some(), "propensity")?;
                need(!self.interventions.is_empty(), "interventions")?;
            }
            Mode::TruthOracle => {
                need(!self.interventions.is_empty(), "interventions")?;
            }
        }
        if let Some(d) = &self.data {
            let w = d.window;
            Window::new(w[0], w[1], w[2], w[3]).map_err(|e| CliError::Config(format!("data.window: {e}")))?;
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, h) in self.interventions.iter().enumerate() {
            if !names.insert(h.name().to_string()) {
                return Err(CliError::Config(format!("interventions[{i}].name: duplicate name {:?}", h.name())));
            }
        }
        if let Some(e) = &self.estimator {
            if e.windows.is_empty() || e.windows.contains(&0) {
                return Err(CliError::Config("estimator.windows: need one or more M >= 1".into()));
            }
            if e.kinds.is_empty() {
                return Err(CliError::Config("estimator.kinds: empty".into()));
            }
            if !(e.level > 0.0 && e.level < 1.0) {
                return Err(CliError::Config(format!("estimator.level: {} outside (0, 1)", e.level)));
            }
            if let Some(b) = e.bandwidth {
                if !(b > 0.0 && b.is_finite()) {
                    return Err(CliError::Config(format!("estimator.bandwidth: {b} is not positive")));
                }
            }
            for (i, [a, b]) in e.contrasts.iter().enumerate() {
                for n in [a, b] {
                    if !names.contains(n) {
                        return Err(CliError::Config(format!("estimator.contrasts[{i}]: no intervention named {n:?}")));
                    }
                }
            }
        }
        if let Some(o) = &self.oracle {
            if o.reps == 0 || o.windows.is_empty() || o.windows.contains(&0) {
                return Err(CliError::Config("oracle: reps and windows must be positive".into()));
            }
        }
        Ok(())
    }

    /// The design for simulation modes.
    pub fn dgp_spec(&self, base: &Path) -> Result<DgpSpec, CliError> {
        let section = self.dgp.clone().unwrap_or_default();
        let mut spec = match &section.spec {
            Some(p) => DgpSpec::load(&resolve(base, p)).map_err(|e| CliError::Config(format!("dgp.spec: {e}")))?,
            None => DgpSpec::default_spec(),
        };
        if let Some(n) = section.periods {
            spec.periods = n;
        }
        if let Some(n) = section.burn_in {
            spec.burn_in = n;
        }
        spec.validate().map_err(|e| CliError::Config(format!("dgp: {e}")))?;
        Ok(spec)
    }

    pub fn coverage_config(&self, profile: Profile) -> CoverageConfig {
        let mut c = match profile {
            Profile::Desk => CoverageConfig::desk(),
            Profile::Full => CoverageConfig::full(),
        };
        c.seed = self.seed;
        if let Some(s) = &self.coverage {
            macro_rules! set {
                ($($f:ident),*) => { $( if let Some(v) = &s.$f { c.$f = v.clone(); } )* };
            }
            set!(datasets, lengths, windows, intensities, truth_reps, variance_reps, variance_windows, levels, modes);
            if let Some(r) = &s.regions {
                c.regions = r.iter().map(rect).collect();
            }
        }
        c
    }

    pub fn balance_experiment(&self) -> BalanceExperiment {
        let mut b = BalanceExperiment {
            seed: self.seed,
            ..Default::default()
        };
        if let Some(s) = &self.balance {
            if let Some(v) = s.replicates {
                b.replicates = v;
            }
            if let Some(v) = s.truncation_quantile {
                b.truncation_quantile = v;
            }
            if let Some(v) = s.fitted_weights {
                b.fitted_weights = v;
            }
            if let Some(v) = &s.feature {
                b.feature = v.clone();
            }
        }
        b
    }
}

/// Paths in a config are relative to the config file.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
