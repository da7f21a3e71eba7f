//! The 18 synthesis models and their target-indication predictions.
//!
//! A model is assembled from one or two component fits: a univariate fit of
//! one endpoint, or a bivariate surrogacy fit paired with a univariate PFS
//! fit. Components are identified by a stable key so that models sharing a
//! component on the same dataset can reuse one fit.

pub mod bivariate;
pub mod univariate;

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mcmc::{self, ChainConfig, ConvergenceOption, Draws, McmcError, ParamSummary};
use crate::rng::{SimRng, StreamKey};
use crate::scenario::MultiIndicationDataset;
use crate::stats;
use crate::trial::Endpoint;

pub use bivariate::{BivariateData, BivariateModel, SurrogacySharing};
pub use univariate::{Sharing, TauMode, UnivariateData, UnivariateModel, UnivariateOptions};

/// SD of the normal priors on all location parameters.
pub const LOCATION_SD: f64 = 10.0;
/// Half-normal scale of the priors on all SD parameters.
pub const SCALE_PRIOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Ip,
    Cp,
    Rp,
    Mcip,
    Mrip,
    BiCp,
    BiRp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Matching {
    Matched,
    Unmatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub tau_mode: TauMode,
    /// Source of the target PFS effect; bivariate families only.
    pub matching: Option<Matching>,
}

impl ModelSpec {
    pub fn all() -> Vec<ModelSpec> {
        let mut out = Vec::with_capacity(18);
        for family in [Family::Ip, Family::Cp, Family::Rp, Family::Mcip, Family::Mrip] {
            for tau_mode in [TauMode::Common, TauMode::Independent] {
                out.push(ModelSpec { family, tau_mode, matching: None });
            }
        }
        for matching in [Matching::Unmatched, Matching::Matched] {
            for family in [Family::BiCp, Family::BiRp] {
                for tau_mode in [TauMode::Common, TauMode::Independent] {
                    out.push(ModelSpec { family, tau_mode, matching: Some(matching) });
                }
            }
        }
        out
    }

    pub fn id(&self) -> String {
        let fam = match self.family {
            Family::Ip => "ip",
            Family::Cp => "cp",
            Family::Rp => "rp",
            Family::Mcip => "mcip",
            Family::Mrip => "mrip",
            Family::BiCp => "bicp",
            Family::BiRp => "birp",
        };
        let tau = match self.tau_mode {
            TauMode::Common => "tau",
            TauMode::Independent => "tauj",
        };
        match self.matching {
            None => format!("{fam}_{tau}"),
            Some(Matching::Unmatched) => format!("{fam}_um_{tau}"),
            Some(Matching::Matched) => format!("{fam}_m_{tau}"),
        }
    }

    pub fn from_id(id: &str) -> Option<ModelSpec> {
        Self::all().into_iter().find(|m| m.id() == id)
    }

    pub fn is_bivariate(&self) -> bool {
        matches!(self.family, Family::BiCp | Family::BiRp)
    }

    pub fn is_mixture(&self) -> bool {
        matches!(self.family, Family::Mcip | Family::Mrip)
    }

    /// Univariate component on `endpoint` for this model.
    fn univariate_component(&self) -> Component {
        let (sharing, mixture, endpoint) = match (self.family, self.matching) {
            (Family::Ip, _) => (Sharing::Independent, false, Endpoint::Os),
            (Family::Cp, _) => (Sharing::Common, false, Endpoint::Os),
            (Family::Rp, _) => (Sharing::Random, false, Endpoint::Os),
            (Family::Mcip, _) => (Sharing::Common, true, Endpoint::Os),
            (Family::Mrip, _) => (Sharing::Random, true, Endpoint::Os),
            (_, Some(Matching::Unmatched)) | (_, None) => (Sharing::Independent, false, Endpoint::Pfs),
            (Family::BiCp, Some(Matching::Matched)) => (Sharing::Common, false, Endpoint::Pfs),
            (Family::BiRp, Some(Matching::Matched)) => (Sharing::Random, false, Endpoint::Pfs),
        };
        Component::Univariate { endpoint, sharing, mixture, tau_mode: self.tau_mode }
    }

    fn surrogacy_component(&self) -> Option<Component> {
        match self.family {
            Family::BiCp => Some(Component::Bivariate(SurrogacySharing::Common)),
            Family::BiRp => Some(Component::Bivariate(SurrogacySharing::Random)),
            _ => None,
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// One MCMC fit that a model prediction draws on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Univariate { endpoint: Endpoint, sharing: Sharing, mixture: bool, tau_mode: TauMode },
    Bivariate(SurrogacySharing),
}

impl Component {
    /// Stable name, also used to derive the fit's random stream.
    pub fn key(&self) -> String {
        match self {
            Component::Univariate { endpoint, sharing, mixture, tau_mode } => {
                let e = match endpoint {
                    Endpoint::Os => "os",
                    Endpoint::Pfs => "pfs",
                };
                let s = match (sharing, mixture) {
                    (Sharing::Independent, _) => "ip",
                    (Sharing::Common, false) => "cp",
                    (Sharing::Random, false) => "rp",
                    (Sharing::Common, true) => "mcip",
                    (Sharing::Random, true) => "mrip",
                };
                let t = match tau_mode {
                    TauMode::Common => "tau",
                    TauMode::Independent => "tauj",
                };
                format!("{e}:{s}_{t}")
            }
            Component::Bivariate(SurrogacySharing::Common) => "bi:cp".into(),
            Component::Bivariate(SurrogacySharing::Random) => "bi:rp".into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("target prediction not estimable: {0}")]
    NotEstimable(String),
    #[error("no usable data for {0}")]
    NoData(String),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
}

#[derive(Debug, Clone)]
pub struct ComponentFit {
    pub draws: Draws,
    pub summary: Vec<ParamSummary>,
    pub option1: bool,
    /// Whether the target indication has data in this fit.
    pub target_in_fit: bool,
}

impl ComponentFit {
    fn rhat_ok(&self, names: &[String]) -> bool {
        mcmc::check_convergence(&self.summary, ConvergenceOption::PredictionParams, names)
            && names.iter().all(|n| self.summary.iter().any(|s| &s.name == n))
    }

    fn pooled(&self, name: &str) -> Vec<f64> {
        self.draws.pooled_by_name(name).unwrap_or_else(|| panic!("parameter {name} missing from fit"))
    }
}

pub fn fit_component(
    component: &Component,
    data: &MultiIndicationDataset,
    cfg: &ChainConfig,
    key: StreamKey,
) -> Result<ComponentFit, ModelError> {
    let (draws, target_in_fit) = match component {
        Component::Univariate { endpoint, sharing, mixture, tau_mode } => {
            let ud = UnivariateData::from_dataset(data, *endpoint);
            if ud.n_groups() == 0 {
                return Err(ModelError::NoData(component.key()));
            }
            let has = ud.has(data.target);
            let model = UnivariateModel::new(ud, *sharing, *mixture, *tau_mode);
            (mcmc::run_chains(&model, cfg, key)?, has)
        }
        Component::Bivariate(sharing) => {
            let bd = BivariateData::from_dataset(data);
            if bd.studies.is_empty() {
                return Err(ModelError::NoData(component.key()));
            }
            let has = bd.has(data.target);
            let model = BivariateModel::new(bd, *sharing);
            (mcmc::run_chains(&model, cfg, key)?, has)
        }
    };
    let summary = mcmc::summarize(&draws, cfg.split_rhat);
    let option1 = mcmc::check_convergence(&summary, ConvergenceOption::AllParams, &[]);
    Ok(ComponentFit { draws, summary, option1, target_in_fit })
}

/// Component fits for one dataset, computed on first use.
pub struct FitCache<'a> {
    data: &'a MultiIndicationDataset,
    cfg: ChainConfig,
    stream: Box<dyn Fn(&str) -> StreamKey + Sync + 'a>,
    fits: HashMap<String, Result<ComponentFit, ModelError>>,
}

impl<'a> FitCache<'a> {
    /// `stream(key)` gives the random stream for the component named `key`.
    pub fn new(
        data: &'a MultiIndicationDataset,
        cfg: ChainConfig,
        stream: impl Fn(&str) -> StreamKey + Sync + 'a,
    ) -> Self {
        Self { data, cfg, stream: Box::new(stream), fits: HashMap::new() }
    }

    pub fn get(&mut self, component: &Component) -> Result<&ComponentFit, ModelError> {
        let key = component.key();
        if !self.fits.contains_key(&key) {
            let fit = fit_component(component, self.data, &self.cfg, (self.stream)(&key));
            self.fits.insert(key.clone(), fit);
        }
        self.fits[&key].as_ref().map_err(Clone::clone)
    }

    pub fn data(&self) -> &MultiIndicationDataset {
        self.data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPrediction {
    pub draws: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    /// R-hat below threshold for every model parameter of every component.
    pub option1: bool,
    /// R-hat below threshold for the parameters entering the prediction.
    pub option2: bool,
}

impl TargetPrediction {
    fn from_draws(draws: Vec<f64>, option1: bool, option2: bool) -> Self {
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: stats::mean(&draws),
            sd: stats::variance(&draws).max(0.0).sqrt(),
            q025: stats::quantile_sorted(&sorted, 0.025),
            q975: stats::quantile_sorted(&sorted, 0.975),
            draws,
            option1,
            option2,
        }
    }
}

/// Parameters of a univariate component that feed the target prediction.
fn univariate_prediction_set(component: &Component, fit: &ComponentFit, target: usize) -> Vec<String> {
    let Component::Univariate { sharing, mixture, .. } = component else { unreachable!() };
    match sharing {
        Sharing::Common => vec!["D".into()],
        Sharing::Independent => vec![format!("D[{target}]")],
        Sharing::Random if fit.target_in_fit => {
            vec![if *mixture { format!("D_ex[{target}]") } else { format!("D[{target}]") }]
        }
        Sharing::Random => vec!["m_d".into(), "eps".into()],
    }
}

/// Target draws from a univariate component. Missing target data in an
/// exchangeable model falls back to the predictive distribution.
fn univariate_target_draws(
    component: &Component,
    fit: &ComponentFit,
    target: usize,
    rng: &mut SimRng,
) -> Result<Vec<f64>, ModelError> {
    let Component::Univariate { sharing, mixture, .. } = component else { unreachable!() };
    match sharing {
        Sharing::Common => Ok(fit.pooled("D")),
        Sharing::Independent if !fit.target_in_fit => {
            Err(ModelError::NotEstimable("independent model without target data".into()))
        }
        Sharing::Independent => Ok(fit.pooled(&format!("D[{target}]"))),
        Sharing::Random if fit.target_in_fit => {
            let name = if *mixture { format!("D_ex[{target}]") } else { format!("D[{target}]") };
            Ok(fit.pooled(&name))
        }
        Sharing::Random => {
            let m = fit.pooled("m_d");
            let e = fit.pooled("eps");
            Ok(m.iter().zip(&e).map(|(m, e)| m + e * mcmc::kernels::std_normal(rng)).collect())
        }
    }
}

/// Predicted target OS effect for `spec`. `rng` drives predictive draws and
/// the random pairing of draws across independent fits.
pub fn predict_target(
    spec: &ModelSpec,
    cache: &mut FitCache<'_>,
    rng: &mut SimRng,
) -> Result<TargetPrediction, ModelError> {
    let target = cache.data().target;
    let uni = spec.univariate_component();
    let uni_fit = cache.get(&uni)?.clone();
    if !spec.is_bivariate() {
        let draws = univariate_target_draws(&uni, &uni_fit, target, rng)?;
        let set = univariate_prediction_set(&uni, &uni_fit, target);
        return Ok(TargetPrediction::from_draws(draws, uni_fit.option1, uni_fit.rhat_ok(&set)));
    }

    let d_pfs = univariate_target_draws(&uni, &uni_fit, target, rng)?;
    let pfs_set = univariate_prediction_set(&uni, &uni_fit, target);
    let sur = spec.surrogacy_component().expect("bivariate family");
    let sur_fit = cache.get(&sur)?;
    let (g0, g1, sur_set) = match (spec.family, sur_fit.target_in_fit) {
        (Family::BiRp, false) => {
            let names: Vec<String> = ["beta0", "beta1", "xi0", "xi1"].map(String::from).to_vec();
            let b0 = sur_fit.pooled("beta0");
            let b1 = sur_fit.pooled("beta1");
            let x0 = sur_fit.pooled("xi0");
            let x1 = sur_fit.pooled("xi1");
            let g0 = b0.iter().zip(&x0).map(|(b, x)| b + x * mcmc::kernels::std_normal(rng)).collect();
            let g1 = b1.iter().zip(&x1).map(|(b, x)| b + x * mcmc::kernels::std_normal(rng)).collect();
            (g0, g1, names)
        }
        _ => {
            let [n0, n1] = match spec.family {
                Family::BiCp => ["gamma0".to_string(), "gamma1".to_string()],
                _ => [format!("gamma0[{target}]"), format!("gamma1[{target}]")],
            };
            let g0 = sur_fit.pooled(&n0);
            let g1 = sur_fit.pooled(&n1);
            (g0, g1, vec![n0, n1])
        }
    };
    let option1 = uni_fit.option1 && sur_fit.option1;
    let option2 = uni_fit.rhat_ok(&pfs_set) && sur_fit.rhat_ok(&sur_set);

    // Independent runs: pair each surrogacy draw with a random PFS draw.
    let mut order: Vec<usize> = (0..d_pfs.len()).collect();
    order.shuffle(rng);
    let n = g0.len().min(order.len());
    let draws = (0..n).map(|k| g0[k] + g1[k] * d_pfs[order[k]]).collect();
    Ok(TargetPrediction::from_draws(draws, option1, option2))
}
