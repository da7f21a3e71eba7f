//! Closed-form quantities of the three-state illness-death model.
//!
//! States: 0 = progression-free, 1 = progressed, 2 = dead. Transition rates
//! are `a` (0 -> 1, the arm-effective progression rate), `b` (0 -> 2) and
//! `c = delta * b` (1 -> 2). All times are in months.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Days per month used to convert the day-based estimand grid.
pub const DAYS_PER_MONTH: f64 = 30.4375;

/// Pre-progression death rate shared by every study (per month).
pub const DEFAULT_LAMBDA02: f64 = 0.0102;

#[derive(Debug, Error, PartialEq)]
pub enum MsmError {
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("event fraction must lie in (0, 1), got {0}")]
    InvalidEventFraction(f64),
    #[error("root finder did not converge after {0} bisection steps")]
    NoConvergence(usize),
    #[error("calibration failed for {label}: {reason}")]
    Calibration { label: String, reason: String },
    #[error("no rows to aggregate")]
    EmptyInput,
}

/// Multi-state model parameters for one context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsmParams {
    pub lambda01: f64,
    pub lambda02: f64,
    pub delta: f64,
    pub m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treatment];
}

impl MsmParams {
    pub fn new(lambda01: f64, lambda02: f64, delta: f64, m: f64) -> Result<Self, MsmError> {
        let check = |name, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(MsmError::InvalidParameter { name, value })
            }
        };
        // lambda01 = 0 is allowed: it is the no-progression limit.
        check("lambda01", lambda01, lambda01 >= 0.0)?;
        check("lambda02", lambda02, lambda02 > 0.0)?;
        check("delta", delta, delta >= 1.0)?;
        check("m", m, m > 0.0)?;
        Ok(Self { lambda01, lambda02, delta, m })
    }

    /// Mean control-arm parameters of the simulation (`m` = 0.6).
    pub fn base() -> Self {
        Self { lambda01: 0.097, lambda02: DEFAULT_LAMBDA02, delta: 6.32, m: 0.6 }
    }

    pub fn with_m(self, m: f64) -> Self {
        Self { m, ..self }
    }

    pub fn lambda12(&self) -> f64 {
        self.delta * self.lambda02
    }

    pub fn progression_rate(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.lambda01,
            Arm::Treatment => self.lambda01 * self.m,
        }
    }

    fn rates(&self, arm: Arm) -> (f64, f64, f64) {
        (self.progression_rate(arm), self.lambda02, self.lambda12())
    }
}

/// `(P00(t), P01(t))`, stable through `c = a + b` via `expm1`.
fn occupancy(a: f64, b: f64, c: f64, t: f64) -> (f64, f64) {
    let p00 = (-(a + b) * t).exp();
    let k = c - a - b;
    let p01 = if k.abs() < 1e-10 {
        a * t * p00
    } else {
        // a (e^{-(a+b)t} - e^{-ct}) / (c - a - b), factored around the slower
        // of the two exponentials so neither factor overflows.
        let slow = (-(c.min(a + b)) * t).exp();
        a * slow * (-(-k.abs() * t).exp_m1()) / k.abs()
    };
    (p00, p01)
}

/// Overall survival `S(t) = P00(t) + P01(t)`.
pub fn os_survival(p: &MsmParams, arm: Arm, t: f64) -> f64 {
    let (a, b, c) = p.rates(arm);
    let (p00, p01) = occupancy(a, b, c, t);
    p00 + p01
}

/// Progression-free survival `P00(t)`.
pub fn pfs_survival(p: &MsmParams, arm: Arm, t: f64) -> f64 {
    let (a, b, _) = p.rates(arm);
    (-(a + b) * t).exp()
}

/// OS hazard `f(t)/S(t)` with `f = b P00 + c P01`.
///
/// Written as `(b + c r) / (1 + r)` with `r = P01/P00` so that it stays finite
/// when both occupancies underflow.
pub fn os_hazard(p: &MsmParams, arm: Arm, t: f64) -> f64 {
    let (a, b, c) = p.rates(arm);
    let k = c - a - b;
    let r = if k.abs() < 1e-10 { a * t } else { a * (-(-k * t).exp_m1()) / k };
    if !r.is_finite() {
        return c;
    }
    (b + c * r) / (1.0 + r)
}

/// Time-constant log hazard ratio for PFS.
pub fn lhr_pfs(p: &MsmParams) -> f64 {
    ((p.lambda01 * p.m + p.lambda02) / (p.lambda01 + p.lambda02)).ln()
}

/// Log hazard ratio for OS at time `t`.
pub fn lhr_os(p: &MsmParams, t: f64) -> f64 {
    (os_hazard(p, Arm::Treatment, t) / os_hazard(p, Arm::Control, t)).ln()
}

const MAX_BISECTIONS: usize = 200;

/// Solves `S(t) = target` for a survival curve decreasing in `t` on `[lo, hi]`.
fn bisect_decreasing(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64, MsmError> {
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if (v - target).abs() < tol || hi - lo <= f64::EPSILON * mid {
            return Ok(mid);
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(MsmError::NoConvergence(MAX_BISECTIONS))
}

/// Follow-up time at which `event_fraction` of control-arm patients have died.
pub fn solve_followup(control: &MsmParams, event_fraction: f64) -> Result<f64, MsmError> {
    if !(event_fraction > 0.0 && event_fraction < 1.0) {
        return Err(MsmError::InvalidEventFraction(event_fraction));
    }
    let target = 1.0 - event_fraction;
    // The OS hazard never drops below lambda02, so S(t) <= exp(-lambda02 t)
    // and the upper end of the bracket is already below the target.
    let hi = 10.0 * (1.0 / target).ln() / control.lambda02;
    bisect_decreasing(|t| os_survival(control, Arm::Control, t), target, 1e-9, hi, 1e-12)
}

/// Discretisation and weighting of the time-averaged OS log hazard ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimandSpec {
    /// Width of one averaging interval, in days.
    pub interval_days: f64,
    /// Study follow-up in months.
    pub followup: f64,
    /// Fraction of patients randomised to treatment.
    pub allocation: f64,
}

impl EstimandSpec {
    pub fn new(followup: f64) -> Self {
        Self { interval_days: 1.5, followup, allocation: 0.5 }
    }
}

/// Event-weighted average of the OS log hazard ratio over `[0, followup]`.
///
/// Each interval contributes its midpoint log hazard ratio, weighted by the
/// expected number of deaths in the interval pooled over both arms.
pub fn true_estimand(p: &MsmParams, spec: &EstimandSpec) -> f64 {
    if p.m == 1.0 {
        return 0.0;
    }
    let width = spec.interval_days / DAYS_PER_MONTH;
    let alloc = [1.0 - spec.allocation, spec.allocation];
    let surv =
        |t: f64| -> f64 { alloc[0] * os_survival(p, Arm::Control, t) + alloc[1] * os_survival(p, Arm::Treatment, t) };
    let mut num = 0.0;
    let mut den = 0.0;
    let mut t0 = 0.0;
    let mut s0 = 1.0;
    while t0 < spec.followup {
        let t1 = (t0 + width).min(spec.followup);
        let s1 = surv(t1);
        let w = s0 - s1;
        num += w * lhr_os(p, 0.5 * (t0 + t1));
        den += w;
        t0 = t1;
        s0 = s1;
    }
    num / den
}

/// One study's control-arm medians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub cancer_type: String,
    #[serde(default)]
    pub publication: String,
    #[serde(default)]
    pub line: String,
    pub median_pfs: f64,
    pub median_os: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibrated {
    pub lambda01: f64,
    pub lambda12: f64,
    pub delta: f64,
}

/// Back-solves transition rates from control-arm median PFS and OS.
///
/// `lambda01 = ln 2 / median_pfs - lambda02`, then `lambda12` is the rate that
/// puts the OS median at `median_os`.
pub fn calibrate_from_medians(row: &CalibrationRow, lambda02: f64) -> Result<Calibrated, MsmError> {
    calibrate_inner(row, lambda02, None)
}

/// Like [`calibrate_from_medians`] but reproduces a table printed to
/// `decimals` places: `lambda01` is rounded before solving for `lambda12`,
/// `lambda12` is rounded, and `delta` is the ratio of the rounded rates.
pub fn calibrate_reported(row: &CalibrationRow, lambda02: f64, decimals: i32) -> Result<Calibrated, MsmError> {
    calibrate_inner(row, lambda02, Some(decimals))
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (x * s).round() / s
}

fn calibrate_inner(row: &CalibrationRow, lambda02: f64, decimals: Option<i32>) -> Result<Calibrated, MsmError> {
    let fail = |reason: String| MsmError::Calibration {
        label: format!("{} {}", row.cancer_type, row.publication).trim().to_string(),
        reason,
    };
    if !(row.median_pfs > 0.0 && row.median_os > row.median_pfs) {
        return Err(fail(format!("need 0 < median_pfs < median_os, got {} and {}", row.median_pfs, row.median_os)));
    }
    let mut lambda01 = std::f64::consts::LN_2 / row.median_pfs - lambda02;
    if let Some(d) = decimals {
        lambda01 = round_to(lambda01, d);
    }
    if lambda01 <= 0.0 {
        return Err(fail(format!("median PFS {} implies lambda01 <= 0", row.median_pfs)));
    }
    let surv_at_median = |lambda12: f64| {
        let (p00, p01) = occupancy(lambda01, lambda02, lambda12, row.median_os);
        p00 + p01
    };
    if surv_at_median(0.0) <= 0.5 {
        return Err(fail("OS median unreachable even without post-progression deaths".into()));
    }
    let mut hi = 1.0;
    while surv_at_median(hi) > 0.5 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(fail("no post-progression rate matches the OS median".into()));
        }
    }
    let mut lambda12 = bisect_decreasing(surv_at_median, 0.5, 0.0, hi, 1e-13)?;
    if let Some(d) = decimals {
        lambda12 = round_to(lambda12, d);
    }
    Ok(Calibrated { lambda01, lambda12, delta: lambda12 / lambda02 })
}

/// Reads calibration rows from CSV with header
/// `cancer_type,publication,line,median_pfs,median_os`.
pub fn read_calibration_csv<R: std::io::Read>(reader: R) -> Result<Vec<CalibrationRow>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

/// Geometric mean over indications of the per-indication geometric means.
///
/// Rows are `(indication, lambda01, delta)`; each indication gets equal weight
/// regardless of its number of studies. Returns `(mu_lambda01, mu_delta)`.
pub fn aggregate_indication_means(rows: &[(String, f64, f64)]) -> Result<(f64, f64), MsmError> {
    if rows.is_empty() {
        return Err(MsmError::EmptyInput);
    }
    let mut groups: Vec<(&str, Vec<(f64, f64)>)> = Vec::new();
    for (ind, l01, d) in rows {
        match groups.iter_mut().find(|(g, _)| g == ind) {
            Some((_, v)) => v.push((l01.ln(), d.ln())),
            None => groups.push((ind, vec![(l01.ln(), d.ln())])),
        }
    }
    let k = groups.len() as f64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for (_, v) in &groups {
        let n = v.len() as f64;
        s1 += v.iter().map(|x| x.0).sum::<f64>() / n;
        s2 += v.iter().map(|x| x.1).sum::<f64>() / n;
    }
    Ok(((s1 / k).exp(), (s2 / k).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    M,
    Lambda01,
    Lambda02,
    Delta,
}

/// `(LHR PFS, LHR OS at t)` for each grid value of one parameter.
pub fn surrogacy_sweep(base: &MsmParams, vary: SweepParam, grid: &[f64], t: f64) -> Vec<(f64, f64)> {
    grid.iter()
        .map(|&v| {
            let mut p = *base;
            match vary {
                SweepParam::M => p.m = v,
                SweepParam::Lambda01 => p.lambda01 = v,
                SweepParam::Lambda02 => p.lambda02 = v,
                SweepParam::Delta => p.delta = v,
            }
            (lhr_pfs(&p), lhr_os(&p, t))
        })
        .collect()
}
