//! Two-arm trial simulation from the illness-death model and study-level
//! estimation of log hazard ratios.

mod cox;
mod design;
mod simulate;

pub use cox::{cox_lhr, CoxError, CoxFit, SurvivalObs};
pub use design::{lachin_foulkes_n, DesignError, DesignTargets, StudyDesign};
pub use simulate::{
    analyse_study, simulate_patient, simulate_study, write_patients_csv, Endpoint, PatientRecord, StudyEstimates,
};

use serde::{Deserialize, Serialize};

/// Study-level log hazard ratio estimates as reported to a synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub indication: usize,
    pub study: usize,
    pub lhr_pfs: f64,
    pub se_pfs: f64,
    pub lhr_os: Option<f64>,
    pub se_os: Option<f64>,
}
