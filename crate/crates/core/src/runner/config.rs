use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::mcmc::ChainConfig;
use crate::models::ModelSpec;
use crate::scenario::{scenario_grid, EvidenceSize, OutlierMode, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl Profile {
    pub fn chains(self) -> ChainConfig {
        match self {
            Profile::Desk => ChainConfig::desk(),
            Profile::Paper => ChainConfig::paper(),
        }
    }

    pub fn replicates(self) -> usize {
        match self {
            Profile::Desk => 100,
            Profile::Paper => 1_000,
        }
    }
}

/// Scenario selection. Explicit ids and factor predicates combine with AND;
/// an empty filter selects the whole grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_between: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_within: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outlier: Option<Vec<OutlierMode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<Vec<EvidenceSize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_has_os: Option<Vec<bool>>,
}

fn close_to_any(x: f64, set: &[f64]) -> bool {
    set.iter().any(|v| (v - x).abs() < 1e-9)
}

impl ScenarioFilter {
    pub fn matches(&self, id: usize, s: &ScenarioSpec) -> bool {
        self.ids.as_ref().is_none_or(|v| v.contains(&id))
            && self.cv_between.as_ref().is_none_or(|v| close_to_any(s.cv_between, v))
            && self.cv_within.as_ref().is_none_or(|v| close_to_any(s.cv_within, v))
            && self.outlier.as_ref().is_none_or(|v| v.contains(&s.outlier))
            && self.size.as_ref().is_none_or(|v| v.contains(&s.size))
            && self.target_has_os.as_ref().is_none_or(|v| v.contains(&s.target_has_os))
    }

    /// Selected scenario ids in ascending order.
    pub fn resolve(&self) -> Vec<usize> {
        scenario_grid().iter().enumerate().filter(|(i, s)| self.matches(*i, s)).map(|(i, _)| i).collect()
    }

    /// Parses `all`, an id list such as `0,3,10-19`, or factor predicates
    /// such as `size=large;outlier=none,extreme_non_target;cv_b=0.3,0.5`.
    pub fn parse(text: &str) -> Result<Self, RunError> {
        let text = text.trim();
        let mut f = ScenarioFilter::default();
        if text.is_empty() || text == "all" {
            return Ok(f);
        }
        if !text.contains('=') {
            let mut ids = Vec::new();
            for part in text.split(',').map(str::trim) {
                let bad = || RunError::Config(format!("bad scenario id `{part}`"));
                if let Some((a, b)) = part.split_once('-') {
                    let (a, b): (usize, usize) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                    if a > b {
                        return Err(bad());
                    }
                    ids.extend(a..=b);
                } else {
                    ids.push(part.parse().map_err(|_| bad())?);
                }
            }
            f.ids = Some(ids);
            return Ok(f);
        }
        for pred in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) =
                pred.split_once('=').ok_or_else(|| RunError::Config(format!("expected key=value, got `{pred}`")))?;
            let values: Vec<&str> = values.split(',').map(str::trim).collect();
            let floats = |vs: &[&str]| -> Result<Vec<f64>, RunError> {
                vs.iter()
                    .map(|v| v.parse::<f64>().map_err(|_| RunError::Config(format!("bad number `{v}` in `{pred}`"))))
                    .collect()
            };
            let named = |v: &str| serde_json::Value::String(v.to_string());
            match key.trim() {
                "cv_b" | "cv_between" => f.cv_between = Some(floats(&values)?),
                "cv_w" | "cv_within" => f.cv_within = Some(floats(&values)?),
                "outlier" => {
                    let v: Result<Vec<OutlierMode>, _> =
                        values.iter().map(|v| serde_json::from_value(named(v))).collect();
                    f.outlier = Some(v.map_err(|_| RunError::Config(format!("unknown outlier mode in `{pred}`")))?);
                }
                "size" => {
                    let v: Result<Vec<EvidenceSize>, _> =
                        values.iter().map(|v| serde_json::from_value(named(v))).collect();
                    f.size = Some(v.map_err(|_| RunError::Config(format!("unknown evidence size in `{pred}`")))?);
                }
                "target_os" | "target_has_os" => {
                    let v: Result<Vec<bool>, _> = values.iter().map(|v| v.parse()).collect();
                    f.target_has_os =
                        Some(v.map_err(|_| RunError::Config(format!("expected true/false in `{pred}`")))?);
                }
                other => return Err(RunError::Config(format!("unknown scenario factor `{other}`"))),
            }
        }
        Ok(f)
    }
}

/// Log-normal heterogeneity of the nuisance rates across indications and
/// studies.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceSetting {
    #[default]
    Off,
    /// Outlier-target scenarios only, at a CV equal to their between-indication CV.
    OutlierTargetPreset,
    /// Every selected scenario at the given CV.
    Cv(f64),
}

impl NuisanceSetting {
    pub fn apply(self, spec: ScenarioSpec) -> ScenarioSpec {
        let nuisance_cv = match self {
            NuisanceSetting::Off => None,
            NuisanceSetting::OutlierTargetPreset => {
                (spec.outlier == OutlierMode::ModerateTarget).then_some(spec.cv_between)
            }
            NuisanceSetting::Cv(cv) => Some(cv),
        };
        ScenarioSpec { nuisance_cv, ..spec }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainOverrides {
    pub n_chains: Option<usize>,
    pub burn_in: Option<usize>,
    pub samples: Option<usize>,
    pub thin: Option<usize>,
    pub spread: Option<f64>,
    pub split_rhat: Option<bool>,
}

impl ChainOverrides {
    fn merge(self, over: ChainOverrides) -> ChainOverrides {
        ChainOverrides {
            n_chains: over.n_chains.or(self.n_chains),
            burn_in: over.burn_in.or(self.burn_in),
            samples: over.samples.or(self.samples),
            thin: over.thin.or(self.thin),
            spread: over.spread.or(self.spread),
            split_rhat: over.split_rhat.or(self.split_rhat),
        }
    }

    fn apply(&self, base: ChainConfig) -> ChainConfig {
        ChainConfig {
            n_chains: self.n_chains.unwrap_or(base.n_chains),
            burn_in: self.burn_in.unwrap_or(base.burn_in),
            samples: self.samples.unwrap_or(base.samples),
            thin: self.thin.unwrap_or(base.thin),
            spread: self.spread.unwrap_or(base.spread),
            split_rhat: self.split_rhat.unwrap_or(base.split_rhat),
        }
    }
}

/// The JSON configuration file. Every field is optional; command-line flags
/// are parsed into the same shape and take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub profile: Option<Profile>,
    pub master_seed: Option<u64>,
    pub replicates: Option<usize>,
    pub scenarios: Option<ScenarioFilter>,
    pub models: Option<Vec<String>>,
    pub chains: Option<ChainOverrides>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub resume: Option<bool>,
    pub dump_datasets: Option<bool>,
    pub nuisance: Option<NuisanceSetting>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }

    /// Values in `over` replace those in `self`.
    pub fn merge(self, over: ConfigFile) -> ConfigFile {
        let chains = match (self.chains, over.chains) {
            (Some(a), Some(b)) => Some(a.merge(b)),
            (a, b) => b.or(a),
        };
        ConfigFile {
            profile: over.profile.or(self.profile),
            master_seed: over.master_seed.or(self.master_seed),
            replicates: over.replicates.or(self.replicates),
            scenarios: over.scenarios.or(self.scenarios),
            models: over.models.or(self.models),
            chains,
            out: over.out.or(self.out),
            workers: over.workers.or(self.workers),
            resume: over.resume.or(self.resume),
            dump_datasets: over.dump_datasets.or(self.dump_datasets),
            nuisance: over.nuisance.or(self.nuisance),
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_240_101;

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub master_seed: u64,
    pub replicates: usize,
    pub scenarios: Vec<usize>,
    pub models: Vec<String>,
    pub chains: ChainConfig,
    pub out: PathBuf,
    pub workers: usize,
    pub resume: bool,
    pub dump_datasets: bool,
    pub nuisance: NuisanceSetting,
}

impl RunConfig {
    pub fn from_file(cf: ConfigFile) -> Result<Self, RunError> {
        let profile = cf.profile.unwrap_or_default();
        let chains = cf.chains.unwrap_or_default().apply(profile.chains());
        chains.validate().map_err(|e| RunError::Config(e.to_string()))?;
        let scenarios = cf.scenarios.unwrap_or_default().resolve();
        if scenarios.is_empty() {
            return Err(RunError::Config("scenario filter selects no scenarios".into()));
        }
        let all: Vec<String> = ModelSpec::all().iter().map(|m| m.id()).collect();
        let models = match cf.models {
            None => all.clone(),
            Some(list) => {
                if let Some(bad) = list.iter().find(|m| !all.contains(m)) {
                    return Err(RunError::Config(format!("unknown model id `{bad}`")));
                }
                all.iter().filter(|m| list.contains(m)).cloned().collect()
            }
        };
        if models.is_empty() {
            return Err(RunError::Config("model filter selects no models".into()));
        }
        let replicates = cf.replicates.unwrap_or(profile.replicates());
        if replicates == 0 {
            return Err(RunError::Config("replicates must be at least 1".into()));
        }
        let workers = cf.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if workers == 0 {
            return Err(RunError::Config("workers must be at least 1".into()));
        }
        if let Some(NuisanceSetting::Cv(cv)) = cf.nuisance {
            if !(cv >= 0.0 && cv.is_finite()) {
                return Err(RunError::Config(format!("nuisance CV must be non-negative, got {cv}")));
            }
        }
        Ok(RunConfig {
            master_seed: cf.master_seed.unwrap_or(DEFAULT_SEED),
            replicates,
            scenarios,
            models,
            chains,
            out: cf.out.unwrap_or_else(|| PathBuf::from("results")),
            workers,
            resume: cf.resume.unwrap_or(false),
            dump_datasets: cf.dump_datasets.unwrap_or(false),
            nuisance: cf.nuisance.unwrap_or_default(),
        })
    }

    /// Fields that determine the simulated numbers; a resumed run must match
    /// these exactly.
    pub fn identity(&self) -> RunIdentity {
        RunIdentity {
            master_seed: self.master_seed,
            replicates: self.replicates,
            scenarios: self.scenarios.clone(),
            models: self.models.clone(),
            chains: self.chains,
            nuisance: self.nuisance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunIdentity {
    pub master_seed: u64,
    pub replicates: usize,
    pub scenarios: Vec<usize>,
    pub models: Vec<String>,
    pub chains: ChainConfig,
    pub nuisance: NuisanceSetting,
}
