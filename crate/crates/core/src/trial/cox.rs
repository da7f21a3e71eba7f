use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoxError {
    #[error("no events")]
    NoEvents,
    #[error("all events fall in one arm")]
    SingleArmEvents,
    #[error("Newton-Raphson failed to converge after {0} iterations")]
    NotConverged(usize),
}

/// One patient projected onto a single endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalObs {
    pub time: f64,
    pub event: bool,
    pub treated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxFit {
    pub lhr: f64,
    pub se: f64,
    pub iterations: usize,
    pub events: usize,
}

const MAX_ITER: usize = 50;
const GRAD_TOL: f64 = 1e-8;

/// Risk-set counts at one distinct event time.
struct EventTime {
    at_risk_ctrl: f64,
    at_risk_trt: f64,
    deaths: f64,
    deaths_trt: f64,
}

fn log_pl(times: &[EventTime], beta: f64) -> f64 {
    let e = beta.exp();
    times.iter().map(|g| g.deaths_trt * beta - g.deaths * (g.at_risk_ctrl + e * g.at_risk_trt).ln()).sum()
}

fn score_info(times: &[EventTime], beta: f64) -> (f64, f64) {
    let e = beta.exp();
    let mut u = 0.0;
    let mut info = 0.0;
    for g in times {
        let p = e * g.at_risk_trt / (g.at_risk_ctrl + e * g.at_risk_trt);
        u += g.deaths_trt - g.deaths * p;
        info += g.deaths * p * (1.0 - p);
    }
    (u, info)
}

/// Cox partial-likelihood estimate of the treatment log hazard ratio.
///
/// Breslow handling of ties. Newton-Raphson from zero with step halving
/// whenever a step fails to increase the partial likelihood; converged once
/// the score per event is below 1e-8.
pub fn cox_lhr(obs: &[SurvivalObs]) -> Result<CoxFit, CoxError> {
    let total_events = obs.iter().filter(|o| o.event).count();
    if total_events == 0 {
        return Err(CoxError::NoEvents);
    }
    let trt_events = obs.iter().filter(|o| o.event && o.treated).count();
    if trt_events == 0 || trt_events == total_events {
        return Err(CoxError::SingleArmEvents);
    }

    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.sort_unstable_by(|&a, &b| obs[b].time.total_cmp(&obs[a].time));

    let mut times = Vec::with_capacity(total_events);
    let (mut n0, mut n1) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let t = obs[order[i]].time;
        let (mut d, mut d1) = (0.0, 0.0);
        while i < order.len() && obs[order[i]].time == t {
            let o = &obs[order[i]];
            if o.treated {
                n1 += 1.0;
            } else {
                n0 += 1.0;
            }
            if o.event {
                d += 1.0;
                if o.treated {
                    d1 += 1.0;
                }
            }
            i += 1;
        }
        if d > 0.0 {
            times.push(EventTime { at_risk_ctrl: n0, at_risk_trt: n1, deaths: d, deaths_trt: d1 });
        }
    }

    let tol = GRAD_TOL * total_events as f64;
    let mut beta = 0.0;
    let mut ll = log_pl(&times, beta);
    for iter in 0..MAX_ITER {
        let (u, info) = score_info(&times, beta);
        if !(info > 0.0 && info.is_finite()) {
            return Err(CoxError::NotConverged(iter));
        }
        if u.abs() <= tol {
            return Ok(CoxFit { lhr: beta, se: info.sqrt().recip(), iterations: iter, events: total_events });
        }
        let mut step = u / info;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = beta + step;
            let cand_ll = log_pl(&times, cand);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs() {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || step.abs() < 1e-14 {
            // No further progress is possible in floating point.
            let (u, info) = score_info(&times, beta);
            if u.abs() <= tol.max(1e-6 * total_events as f64) && info > 0.0 {
                return Ok(CoxFit { lhr: beta, se: info.sqrt().recip(), iterations: iter + 1, events: total_events });
            }
            return Err(CoxError::NotConverged(iter + 1));
        }
    }
    Err(CoxError::NotConverged(MAX_ITER))
}
