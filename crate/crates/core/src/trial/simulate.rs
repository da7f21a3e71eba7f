use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::cox::{cox_lhr, CoxError, CoxFit, SurvivalObs};
use super::design::StudyDesign;
use crate::msm::{Arm, MsmParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub arm: Arm,
    pub pfs_time: f64,
    pub pfs_event: bool,
    pub os_time: f64,
    pub os_event: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Pfs,
    Os,
}

impl PatientRecord {
    pub fn project(&self, endpoint: Endpoint) -> SurvivalObs {
        let (time, event) = match endpoint {
            Endpoint::Pfs => (self.pfs_time, self.pfs_event),
            Endpoint::Os => (self.os_time, self.os_event),
        };
        SurvivalObs { time, event, treated: self.arm == Arm::Treatment }
    }
}

/// Draws one patient's `(progression time, death time)`.
pub fn simulate_patient<R: Rng + ?Sized>(p: &MsmParams, arm: Arm, rng: &mut R) -> (Option<f64>, f64) {
    let a = p.progression_rate(arm);
    let b = p.lambda02;
    let e: f64 = rng.sample(Exp1);
    let t0 = e / (a + b);
    let u: f64 = rng.random();
    if u * (a + b) < a {
        let e2: f64 = rng.sample(Exp1);
        (Some(t0), t0 + e2 / p.lambda12())
    } else {
        (None, t0)
    }
}

/// Simulates a 1:1 study: control patients first, then treatment.
///
/// PFS ends at progression or death, whichever comes first. Both endpoints are
/// censored at the design follow-up.
pub fn simulate_study<R: Rng + ?Sized>(p: &MsmParams, design: &StudyDesign, rng: &mut R) -> Vec<PatientRecord> {
    let per_arm = design.n_total / 2;
    let tau = design.followup;
    let mut out = Vec::with_capacity(2 * per_arm);
    for arm in Arm::BOTH {
        for _ in 0..per_arm {
            let (prog, death) = simulate_patient(p, arm, rng);
            let state0 = prog.unwrap_or(death);
            out.push(PatientRecord {
                arm,
                pfs_time: state0.min(tau),
                pfs_event: state0 <= tau,
                os_time: death.min(tau),
                os_event: death <= tau,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyEstimates {
    pub pfs: CoxFit,
    pub os: CoxFit,
}

/// Cox fits on both endpoints.
pub fn analyse_study(records: &[PatientRecord]) -> Result<StudyEstimates, CoxError> {
    let fit = |e| {
        let obs: Vec<SurvivalObs> = records.iter().map(|r| r.project(e)).collect();
        cox_lhr(&obs)
    };
    Ok(StudyEstimates { pfs: fit(Endpoint::Pfs)?, os: fit(Endpoint::Os)? })
}

pub fn write_patients_csv<W: Write>(writer: W, records: &[PatientRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["arm", "pfs_time", "pfs_event", "os_time", "os_event"])?;
    for r in records {
        let arm = match r.arm {
            Arm::Control => "control",
            Arm::Treatment => "treatment",
        };
        w.write_record([
            arm.to_string(),
            r.pfs_time.to_string(),
            (r.pfs_event as u8).to_string(),
            r.os_time.to_string(),
            (r.os_event as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
