//! Scenario grid, treatment-effect sampling and dataset assembly.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::msm::{self, EstimandSpec, MsmParams};
use crate::rng::{seed_for, StreamRole};
use crate::trial::{analyse_study, simulate_study, DesignError, DesignTargets, StudyDesign, StudyResult};

/// Mean treatment multiplier on the natural scale.
pub const MU_M: f64 = 0.6;

/// Coefficient-of-variation levels used for both heterogeneity factors.
pub const CV_LEVELS: [f64; 5] = [0.0, 0.07, 0.15, 0.30, 0.50];

pub const MAX_RESIMULATIONS: u32 = 100;

const MODERATE_Z: f64 = 1.96;
const EXTREME_Z: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierMode {
    None,
    ModerateNonTarget,
    ExtremeNonTarget,
    ModerateTarget,
}

impl OutlierMode {
    pub const ALL: [OutlierMode; 4] =
        [OutlierMode::None, OutlierMode::ModerateNonTarget, OutlierMode::ExtremeNonTarget, OutlierMode::ModerateTarget];

    pub fn as_str(self) -> &'static str {
        match self {
            OutlierMode::None => "none",
            OutlierMode::ModerateNonTarget => "moderate_non_target",
            OutlierMode::ExtremeNonTarget => "extreme_non_target",
            OutlierMode::ModerateTarget => "moderate_target",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceSize {
    Small,
    Medium,
    Large,
}

impl EvidenceSize {
    pub const ALL: [EvidenceSize; 3] = [EvidenceSize::Small, EvidenceSize::Medium, EvidenceSize::Large];

    pub fn shape(self) -> EvidenceShape {
        let non_target: &[usize] = match self {
            EvidenceSize::Small => &[3, 2, 1],
            EvidenceSize::Medium => &[7, 3, 3, 2, 1],
            EvidenceSize::Large => &[9, 8, 6, 3, 2, 1, 1],
        };
        let mut studies = non_target.to_vec();
        studies.push(1);
        EvidenceShape { studies }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceSize::Small => "small",
            EvidenceSize::Medium => "medium",
            EvidenceSize::Large => "large",
        }
    }
}

/// Studies per indication; the last indication is the target with one study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceShape {
    pub studies: Vec<usize>,
}

impl EvidenceShape {
    pub fn n_indications(&self) -> usize {
        self.studies.len()
    }

    pub fn target(&self) -> usize {
        self.studies.len() - 1
    }

    pub fn n_studies(&self) -> usize {
        self.studies.iter().sum()
    }

    /// Second-largest non-target indication, earliest on ties.
    pub fn outlier_indication(&self) -> usize {
        let mut idx: Vec<usize> = (0..self.target()).collect();
        idx.sort_by(|&a, &b| self.studies[b].cmp(&self.studies[a]));
        idx[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub cv_between: f64,
    pub cv_within: f64,
    pub outlier: OutlierMode,
    pub size: EvidenceSize,
    pub target_has_os: bool,
    /// CV of independent log-normal multipliers on the nuisance rates.
    #[serde(default)]
    pub nuisance_cv: Option<f64>,
}

impl ScenarioSpec {
    pub fn sigma_between(&self) -> f64 {
        sigma_from_cv(self.cv_between)
    }

    pub fn sigma_within(&self) -> f64 {
        sigma_from_cv(self.cv_within)
    }

    /// An outlier mode with no between-indication spread places the outlier
    /// on the mean, so it is not an outlier at all.
    pub fn degenerate_outlier(&self) -> bool {
        self.outlier != OutlierMode::None && self.cv_between == 0.0
    }

    pub fn with_target_os(self, target_has_os: bool) -> Self {
        Self { target_has_os, ..self }
    }
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cv_b={} cv_w={} outlier={} size={} target_os={}",
            self.cv_between,
            self.cv_within,
            self.outlier.as_str(),
            self.size.as_str(),
            self.target_has_os
        )?;
        if let Some(cv) = self.nuisance_cv {
            write!(f, " nuisance_cv={cv}")?;
        }
        Ok(())
    }
}

/// The full factorial grid in lexicographic factor order; the position of a
/// spec is its scenario id.
pub fn scenario_grid() -> Vec<ScenarioSpec> {
    let mut out = Vec::with_capacity(600);
    for &cv_between in &CV_LEVELS {
        for &cv_within in &CV_LEVELS {
            for outlier in OutlierMode::ALL {
                for size in EvidenceSize::ALL {
                    for target_has_os in [false, true] {
                        out.push(ScenarioSpec {
                            cv_between,
                            cv_within,
                            outlier,
                            size,
                            target_has_os,
                            nuisance_cv: None,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Id of the scenario that differs from `scenario_id` only in reporting
/// target OS. Both scenarios share simulated data.
pub fn with_os_twin(scenario_id: usize) -> usize {
    scenario_id | 1
}

pub fn sigma_from_cv(cv: f64) -> f64 {
    cv * MU_M.ln().abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledEffects {
    pub mu_m: f64,
    pub sigma_b: f64,
    pub sigma_w: f64,
    pub m_j: Vec<f64>,
    pub m_ji: Vec<Vec<f64>>,
    pub outlier_indication: Option<usize>,
}

pub fn sample_effects<R: Rng + ?Sized>(spec: &ScenarioSpec, shape: &EvidenceShape, rng: &mut R) -> SampledEffects {
    let mu = MU_M.ln();
    let sb = spec.sigma_between();
    let sw = spec.sigma_within();
    let outlier = match spec.outlier {
        OutlierMode::None => None,
        OutlierMode::ModerateNonTarget => Some((shape.outlier_indication(), MODERATE_Z)),
        OutlierMode::ExtremeNonTarget => Some((shape.outlier_indication(), EXTREME_Z)),
        OutlierMode::ModerateTarget => Some((shape.target(), MODERATE_Z)),
    };
    let mut m_j = Vec::with_capacity(shape.n_indications());
    let mut m_ji = Vec::with_capacity(shape.n_indications());
    for (j, &n) in shape.studies.iter().enumerate() {
        // The draw is always made so that streams line up across outlier modes.
        let z: f64 = rng.sample(StandardNormal);
        let ln_mj = match outlier {
            Some((o, k)) if o == j => mu + k * sb,
            _ => mu + sb * z,
        };
        m_j.push(ln_mj.exp());
        m_ji.push(
            (0..n)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    (ln_mj + sw * z).exp()
                })
                .collect(),
        );
    }
    SampledEffects { mu_m: MU_M, sigma_b: sb, sigma_w: sw, m_j, m_ji, outlier_indication: outlier.map(|o| o.0) }
}

/// Nuisance rates per indication and per study.
#[derive(Debug, Clone, PartialEq)]
struct Nuisance {
    indication: Vec<MsmParams>,
    study: Vec<Vec<MsmParams>>,
}

fn sample_nuisance<R: Rng + ?Sized>(cv: Option<f64>, base: &MsmParams, shape: &EvidenceShape, rng: &mut R) -> Nuisance {
    let Some(cv) = cv.filter(|&c| c > 0.0) else {
        return Nuisance {
            indication: vec![*base; shape.n_indications()],
            study: shape.studies.iter().map(|&n| vec![*base; n]).collect(),
        };
    };
    // Mean-one log-normal multiplier with the requested natural-scale CV.
    let s = (1.0 + cv * cv).ln().sqrt();
    let mult = |rng: &mut R, p: &MsmParams| -> MsmParams {
        let mut f = || (s * rng.sample::<f64, _>(StandardNormal) - 0.5 * s * s).exp();
        MsmParams { lambda01: p.lambda01 * f(), lambda02: p.lambda02 * f(), delta: (p.delta * f()).max(1.0), m: p.m }
    };
    let mut indication = Vec::new();
    let mut study = Vec::new();
    for &n in &shape.studies {
        let ind = mult(rng, base);
        study.push((0..n).map(|_| mult(rng, &ind)).collect());
        indication.push(ind);
    }
    Nuisance { indication, study }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("study {study} of indication {indication}: no estimable Cox fit after {attempts} attempts")]
    ResimulationExhausted { indication: usize, study: usize, attempts: u32 },
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Msm(#[from] msm::MsmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiIndicationDataset {
    pub studies: Vec<StudyResult>,
    pub n_indications: usize,
    pub target: usize,
    pub true_m_j: Vec<f64>,
    /// Time-averaged OS log hazard ratio of the target indication.
    pub truth: f64,
    /// Number of studies that needed re-simulation.
    pub resimulated: usize,
}

impl MultiIndicationDataset {
    pub fn target_study(&self) -> &StudyResult {
        self.studies.iter().find(|s| s.indication == self.target).expect("target study present")
    }

    /// Copy with the target's OS estimate withheld.
    pub fn without_target_os(&self) -> Self {
        let mut d = self.clone();
        for s in d.studies.iter_mut().filter(|s| s.indication == d.target) {
            s.lhr_os = None;
            s.se_os = None;
        }
        d
    }
}

/// Where a dataset's random streams come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetSeed {
    pub master: u64,
    pub scenario_id: usize,
    pub replicate: usize,
}

/// Simulates every study of one replicate and reduces it to study-level
/// estimates. Degenerate Cox fits re-simulate the study on a fresh stream.
pub fn build_dataset(
    spec: &ScenarioSpec,
    seed: DatasetSeed,
    base: &MsmParams,
    targets: &DesignTargets,
) -> Result<MultiIndicationDataset, ScenarioError> {
    let shape = spec.size.shape();
    let mut rng = seed_for(seed.master, seed.scenario_id, seed.replicate, &StreamRole::Effects).rng();
    let effects = sample_effects(spec, &shape, &mut rng);
    let nuisance = sample_nuisance(spec.nuisance_cv, base, &shape, &mut rng);

    let target = shape.target();
    let mut studies = Vec::with_capacity(shape.n_studies());
    let mut resimulated = 0;
    let mut index = 0;
    for (j, &n) in shape.studies.iter().enumerate() {
        for i in 0..n {
            let control = nuisance.study[j][i].with_m(1.0);
            let design = StudyDesign::for_control(&control, targets)?;
            let params = control.with_m(effects.m_ji[j][i]);
            let mut est = None;
            for attempt in 0..MAX_RESIMULATIONS {
                let role = StreamRole::Study { index, attempt };
                let mut srng = seed_for(seed.master, seed.scenario_id, seed.replicate, &role).rng();
                let recs = simulate_study(&params, &design, &mut srng);
                if let Ok(e) = analyse_study(&recs) {
                    resimulated += (attempt > 0) as usize;
                    est = Some(e);
                    break;
                }
            }
            let est = est.ok_or(ScenarioError::ResimulationExhausted {
                indication: j,
                study: i,
                attempts: MAX_RESIMULATIONS,
            })?;
            let report_os = j != target || spec.target_has_os;
            studies.push(StudyResult {
                indication: j,
                study: i,
                lhr_pfs: est.pfs.lhr,
                se_pfs: est.pfs.se,
                lhr_os: report_os.then_some(est.os.lhr),
                se_os: report_os.then_some(est.os.se),
            });
            index += 1;
        }
    }

    let truth = target_truth(&nuisance.indication[target], effects.m_j[target], targets)?;
    Ok(MultiIndicationDataset {
        studies,
        n_indications: shape.n_indications(),
        target,
        true_m_j: effects.m_j,
        truth,
        resimulated,
    })
}

/// Estimand for an indication with control parameters `control` and
/// indication-level multiplier `m_j`.
pub fn target_truth(control: &MsmParams, m_j: f64, targets: &DesignTargets) -> Result<f64, msm::MsmError> {
    let followup = msm::solve_followup(&control.with_m(1.0), targets.event_fraction)?;
    Ok(msm::true_estimand(&control.with_m(m_j), &EstimandSpec::new(followup)))
}

pub const DATASET_HEADER: [&str; 11] = [
    "scenario_id",
    "replicate",
    "indication",
    "study",
    "is_target",
    "lhr_pfs",
    "se_pfs",
    "lhr_os",
    "se_os",
    "true_m_j",
    "truth_estimand",
];

pub fn write_dataset_csv<W: Write>(
    writer: &mut csv::Writer<W>,
    scenario_id: usize,
    replicate: usize,
    data: &MultiIndicationDataset,
) -> csv::Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in &data.studies {
        writer.write_record([
            scenario_id.to_string(),
            replicate.to_string(),
            s.indication.to_string(),
            s.study.to_string(),
            (s.indication == data.target).to_string(),
            s.lhr_pfs.to_string(),
            s.se_pfs.to_string(),
            opt(s.lhr_os),
            opt(s.se_os),
            data.true_m_j[s.indication].to_string(),
            data.truth.to_string(),
        ])?;
    }
    Ok(())
}
