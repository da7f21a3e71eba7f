//! Performance measures over replicates, each with a Monte Carlo SE.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    Failed,
}

/// One model's prediction for one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub scenario_id: usize,
    pub replicate: usize,
    pub model_id: String,
    pub status: FitStatus,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub q025: Option<f64>,
    pub q975: Option<f64>,
    pub truth: f64,
    pub option1: bool,
    pub option2: bool,
    /// Posterior SD of the independent common-tau prediction on the same
    /// dataset with target OS reported.
    pub ref_sd: Option<f64>,
    pub message: String,
}

impl ReplicateOutcome {
    /// Counted in the performance measures.
    pub fn usable(&self) -> bool {
        self.status == FitStatus::Ok && self.option2 && self.mean.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub mcse: f64,
}

pub fn bias(pairs: &[(f64, f64)]) -> Option<Estimate> {
    if pairs.len() < 2 {
        return None;
    }
    let errors: Vec<f64> = pairs.iter().map(|(est, truth)| est - truth).collect();
    let n = errors.len() as f64;
    let mean = stats::mean(&errors);
    // SD with divisor n, so that errors of +-e give an MCSE of e / sqrt(2).
    let sd = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    Some(Estimate { value: mean, mcse: sd / n.sqrt() })
}

/// `intervals[k] = (lower, upper, truth)`.
pub fn coverage(intervals: &[(f64, f64, f64)]) -> Option<Estimate> {
    if intervals.is_empty() {
        return None;
    }
    let n = intervals.len() as f64;
    let hits = intervals.iter().filter(|(lo, hi, t)| lo <= t && t <= hi).count() as f64;
    let p = hits / n;
    Some(Estimate { value: p, mcse: (p * (1.0 - p) / n).sqrt() })
}

pub fn empirical_se(estimates: &[f64]) -> Option<Estimate> {
    if estimates.len() < 2 {
        return None;
    }
    let n = estimates.len() as f64;
    let se = stats::variance(estimates).sqrt();
    Some(Estimate { value: se, mcse: se / (2.0 * (n - 1.0)).sqrt() })
}

/// Mean of per-replicate ratios `sd / reference sd`.
pub fn splitting_se_ratio(pairs: &[(f64, f64)]) -> Option<Estimate> {
    if pairs.is_empty() {
        return None;
    }
    let ratios: Vec<f64> = pairs.iter().map(|(sd, r)| sd / r).collect();
    let n = ratios.len() as f64;
    let mcse = if ratios.len() > 1 { stats::variance(&ratios).sqrt() / n.sqrt() } else { f64::NAN };
    Some(Estimate { value: stats::mean(&ratios), mcse })
}

/// All four measures for one group of outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub bias: Option<Estimate>,
    pub coverage: Option<Estimate>,
    pub empirical_se: Option<Estimate>,
    pub splitting_se_ratio: Option<Estimate>,
    pub n_used: usize,
    pub n_dropped: usize,
}

pub fn group_metrics<'a>(outcomes: impl IntoIterator<Item = &'a ReplicateOutcome>) -> GroupMetrics {
    let mut used = Vec::new();
    let mut dropped = 0;
    for o in outcomes {
        if o.usable() {
            used.push(o);
        } else {
            dropped += 1;
        }
    }
    let means: Vec<f64> = used.iter().map(|o| o.mean.unwrap()).collect();
    let pairs: Vec<(f64, f64)> = used.iter().map(|o| (o.mean.unwrap(), o.truth)).collect();
    let intervals: Vec<(f64, f64, f64)> = used.iter().filter_map(|o| Some((o.q025?, o.q975?, o.truth))).collect();
    let sd_pairs: Vec<(f64, f64)> = used.iter().filter_map(|o| Some((o.sd?, o.ref_sd?))).collect();
    GroupMetrics {
        bias: bias(&pairs),
        coverage: coverage(&intervals),
        empirical_se: empirical_se(&means),
        splitting_se_ratio: splitting_se_ratio(&sd_pairs),
        n_used: used.len(),
        n_dropped: dropped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scenario_id: usize,
    pub model_id: String,
    pub metric: String,
    pub value: Option<f64>,
    pub mcse: Option<f64>,
    pub n_used: usize,
    pub n_dropped: usize,
}

pub const METRIC_NAMES: [&str; 4] = ["bias", "coverage", "empirical_se", "splitting_se_ratio"];

/// Metrics per (scenario, model), in scenario then model-id order.
pub fn aggregate(outcomes: &[ReplicateOutcome]) -> Vec<MetricRow> {
    let mut groups: BTreeMap<(usize, &str), Vec<&ReplicateOutcome>> = BTreeMap::new();
    for o in outcomes {
        groups.entry((o.scenario_id, o.model_id.as_str())).or_default().push(o);
    }
    let mut rows = Vec::new();
    for ((scenario_id, model_id), members) in groups {
        let g = group_metrics(members);
        let values = [g.bias, g.coverage, g.empirical_se, g.splitting_se_ratio];
        for (name, est) in METRIC_NAMES.iter().zip(values) {
            rows.push(MetricRow {
                scenario_id,
                model_id: model_id.to_string(),
                metric: name.to_string(),
                value: est.map(|e| e.value),
                mcse: est.map(|e| e.mcse).filter(|m| m.is_finite()),
                n_used: g.n_used,
                n_dropped: g.n_dropped,
            });
        }
    }
    rows
}

pub fn write_metrics_csv<W: Write>(writer: W, rows: &[MetricRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario_id", "model_id", "metric", "value", "mcse", "n_used", "n_dropped"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.scenario_id.to_string(),
            r.model_id.clone(),
            r.metric.clone(),
            opt(r.value),
            opt(r.mcse),
            r.n_used.to_string(),
            r.n_dropped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
