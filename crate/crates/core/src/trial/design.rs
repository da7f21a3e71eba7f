use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::msm::{self, MsmError, MsmParams};
use crate::stats::normal_quantile;

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("alternative hazard ratio must lie in (0, 1), got {0}")]
    InvalidHazardRatio(f64),
    #[error("invalid design input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Msm(#[from] MsmError),
}

/// Power-calculation targets shared by every simulated study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignTargets {
    /// Two-sided type-1 error.
    pub alpha: f64,
    pub power: f64,
    pub hr_alt: f64,
    /// Fraction of control-arm patients dead at the end of follow-up.
    pub event_fraction: f64,
}

impl Default for DesignTargets {
    fn default() -> Self {
        Self { alpha: 0.05, power: 0.90, hr_alt: 0.7, event_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    /// Total patients, split 1:1 between arms.
    pub n_total: usize,
    /// Administrative censoring time in months.
    pub followup: f64,
}

impl StudyDesign {
    pub fn new(n_total: usize, followup: f64) -> Result<Self, DesignError> {
        if n_total < 4 || !n_total.is_multiple_of(2) {
            return Err(DesignError::Invalid(format!("n_total must be even and >= 4, got {n_total}")));
        }
        if followup.is_nan() || followup <= 0.0 {
            return Err(DesignError::Invalid(format!("followup must be positive, got {followup}")));
        }
        Ok(Self { n_total, followup })
    }

    /// Follow-up from the control event-fraction rule, then Lachin-Foulkes
    /// sizing with the exponential OS rate that reproduces that fraction.
    pub fn for_control(control: &MsmParams, targets: &DesignTargets) -> Result<Self, DesignError> {
        let followup = msm::solve_followup(control, targets.event_fraction)?;
        let rate = -(1.0 - targets.event_fraction).ln() / followup;
        let n_total = lachin_foulkes_n(rate, targets, followup)?;
        Ok(Self { n_total, followup })
    }
}

/// Lachin-Foulkes total sample size for a balanced two-arm exponential
/// comparison with instant accrual, no dropout and fixed follow-up.
pub fn lachin_foulkes_n(control_rate: f64, targets: &DesignTargets, followup: f64) -> Result<usize, DesignError> {
    let hr = targets.hr_alt;
    if !(hr > 0.0 && hr < 1.0) {
        return Err(DesignError::InvalidHazardRatio(hr));
    }
    if !(control_rate > 0.0 && followup > 0.0) {
        return Err(DesignError::Invalid("rate and follow-up must be positive".into()));
    }
    if !(targets.alpha > 0.0 && targets.alpha < 1.0 && targets.power > 0.0 && targets.power < 1.0) {
        return Err(DesignError::Invalid("alpha and power must lie in (0, 1)".into()));
    }
    let (q_e, q_c) = (0.5, 0.5);
    let lambda_c = control_rate;
    let lambda_e = hr * lambda_c;
    let p_event = |rate: f64| 1.0 - (-rate * followup).exp();
    let lambda_bar = q_e * lambda_e + q_c * lambda_c;
    let eta_null = (1.0 / q_e + 1.0 / q_c) / p_event(lambda_bar);
    let eta_alt = 1.0 / (q_e * p_event(lambda_e)) + 1.0 / (q_c * p_event(lambda_c));
    let z_alpha = normal_quantile(1.0 - targets.alpha / 2.0);
    let z_beta = normal_quantile(targets.power);
    let n = (z_alpha * eta_null.sqrt() + z_beta * eta_alt.sqrt()).powi(2) / hr.ln().powi(2);
    Ok(2 * (n / 2.0).ceil() as usize)
}
