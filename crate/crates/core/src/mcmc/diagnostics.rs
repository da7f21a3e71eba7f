use serde::{Deserialize, Serialize};

use super::Draws;
use crate::stats;

pub const RHAT_THRESHOLD: f64 = 1.1;

/// Potential scale reduction factor from the between/within chain variances.
/// With `split`, each chain is halved first.
pub fn gelman_rubin(chains: &[&[f64]], split: bool) -> f64 {
    let halves: Vec<&[f64]>;
    let chains = if split {
        halves = chains
            .iter()
            .flat_map(|c| {
                let h = c.len() / 2;
                [&c[..h], &c[c.len() - h..]]
            })
            .collect();
        &halves[..]
    } else {
        chains
    };
    let m = chains.len() as f64;
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0) as f64;
    assert!(m >= 2.0 && n >= 2.0, "need at least two chains of two draws");
    let means: Vec<f64> = chains.iter().map(|c| stats::mean(c)).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = chains.iter().map(|c| stats::variance(c)).sum::<f64>() / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
    pub rhat: f64,
}

pub fn summarize_values(name: &str, pooled: &[f64], rhat: f64) -> ParamSummary {
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    ParamSummary {
        name: name.to_string(),
        mean: stats::mean(pooled),
        sd: stats::variance(pooled).max(0.0).sqrt(),
        q025: stats::quantile_sorted(&sorted, 0.025),
        q500: stats::quantile_sorted(&sorted, 0.5),
        q975: stats::quantile_sorted(&sorted, 0.975),
        rhat,
    }
}

pub fn summarize(draws: &Draws, split: bool) -> Vec<ParamSummary> {
    (0..draws.n_params())
        .map(|p| {
            let chains = draws.param_chains(p);
            let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
            let rhat = if draws.n_chains() >= 2 { gelman_rubin(&refs, split) } else { f64::NAN };
            summarize_values(&draws.names()[p], &chains.concat(), rhat)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvergenceOption {
    /// Every model parameter except mixture indicators.
    AllParams,
    /// Only the parameters entering the target prediction.
    PredictionParams,
}

/// Mixture indicators carry no R-hat requirement.
pub fn is_indicator(name: &str) -> bool {
    name.starts_with("c[")
}

pub fn check_convergence(summary: &[ParamSummary], option: ConvergenceOption, prediction_set: &[String]) -> bool {
    summary
        .iter()
        .filter(|s| match option {
            ConvergenceOption::AllParams => !is_indicator(&s.name),
            ConvergenceOption::PredictionParams => prediction_set.iter().any(|p| p == &s.name),
        })
        .all(|s| s.rhat < RHAT_THRESHOLD)
}
