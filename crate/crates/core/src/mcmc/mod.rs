//! Multi-chain MCMC runner, update kernels and convergence diagnostics.
//!
//! A [`Model`] supplies initial states and one full sweep of updates; the
//! runner handles chains, burn-in, thinning and storage. Each chain draws from
//! its own stream, so results do not depend on how chains are scheduled.

pub mod diagnostics;
pub mod kernels;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{SimRng, StreamKey};

pub use diagnostics::{check_convergence, gelman_rubin, summarize, ConvergenceOption, ParamSummary, RHAT_THRESHOLD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McmcError {
    #[error("invalid chain configuration: {0}")]
    Config(String),
    #[error("non-finite value for {param} in chain {chain} at iteration {iteration}")]
    NonFinite { param: String, chain: usize, iteration: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    /// Retained iterations per chain, before thinning.
    pub samples: usize,
    pub thin: usize,
    /// Distance between chain starting points, in prior standard deviations.
    pub spread: f64,
    /// Use split chains for R-hat.
    #[serde(default)]
    pub split_rhat: bool,
}

impl ChainConfig {
    pub fn desk() -> Self {
        Self { n_chains: 3, burn_in: 5_000, samples: 15_000, thin: 1, spread: 0.5, split_rhat: false }
    }

    pub fn paper() -> Self {
        Self { burn_in: 50_000, samples: 150_000, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<(), McmcError> {
        if self.n_chains < 2 {
            return Err(McmcError::Config("at least two chains are needed for R-hat".into()));
        }
        if self.burn_in == 0 || self.samples == 0 || self.thin == 0 {
            return Err(McmcError::Config("burn-in, samples and thin must be positive".into()));
        }
        if self.samples / self.thin < 10 {
            return Err(McmcError::Config("fewer than 10 retained draws per chain".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.samples / self.thin
    }
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Where one chain starts relative to the prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitPoint {
    /// Signed offset in prior SDs; symmetric around zero across chains.
    pub offset: f64,
}

impl InitPoint {
    pub fn for_chain(chain: usize, n_chains: usize, spread: f64) -> Self {
        Self { offset: (chain as f64 - (n_chains as f64 - 1.0) / 2.0) * spread }
    }

    pub fn location(&self, prior_mean: f64, prior_sd: f64) -> f64 {
        prior_mean + self.offset * prior_sd
    }

    /// Scale parameters are dispersed multiplicatively.
    pub fn scale(&self, prior_scale: f64) -> f64 {
        prior_scale * self.offset.exp()
    }
}

pub trait Model: Sync {
    type State: Send;

    fn param_names(&self) -> Vec<String>;

    fn init(&self, at: InitPoint, rng: &mut SimRng) -> Self::State;

    /// One full sweep. `adapt` is set during burn-in only.
    fn update(&self, state: &mut Self::State, adapt: bool, rng: &mut SimRng);

    /// Appends the current parameter values in `param_names` order.
    fn record(&self, state: &Self::State, out: &mut Vec<f64>);
}

/// Retained draws, stored chain by chain with parameters innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    names: Vec<String>,
    n_chains: usize,
    n_iter: usize,
    values: Vec<f64>,
}

impl Draws {
    pub fn new(names: Vec<String>, n_chains: usize, n_iter: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), names.len() * n_chains * n_iter);
        Self { names, n_chains, n_iter, values }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn n_iter(&self) -> usize {
        self.n_iter
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, chain: usize, iter: usize, param: usize) -> f64 {
        self.values[(chain * self.n_iter + iter) * self.names.len() + param]
    }

    pub fn param_chains(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains).map(|c| (0..self.n_iter).map(|i| self.get(c, i, param)).collect()).collect()
    }

    /// All draws of one parameter, chains concatenated in order.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        let p = self.names.len();
        self.values.iter().skip(param).step_by(p).copied().collect()
    }

    pub fn pooled_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.index(name).map(|i| self.pooled(i))
    }

    pub fn total(&self) -> usize {
        self.n_chains * self.n_iter
    }
}

fn run_one<M: Model>(
    model: &M,
    names: &[String],
    cfg: &ChainConfig,
    chain: usize,
    key: StreamKey,
) -> Result<Vec<f64>, McmcError> {
    let mut rng = key.child(chain as u64).rng();
    let at = InitPoint::for_chain(chain, cfg.n_chains, cfg.spread);
    let mut state = model.init(at, &mut rng);
    for _ in 0..cfg.burn_in {
        model.update(&mut state, true, &mut rng);
    }
    let p = names.len();
    let mut out = Vec::with_capacity(cfg.retained() * p);
    for it in 0..cfg.retained() * cfg.thin {
        model.update(&mut state, false, &mut rng);
        if (it + 1) % cfg.thin == 0 {
            let start = out.len();
            model.record(&state, &mut out);
            debug_assert_eq!(out.len() - start, p);
            if let Some(k) = out[start..].iter().position(|v| !v.is_finite()) {
                return Err(McmcError::NonFinite { param: names[k].clone(), chain, iteration: it });
            }
        }
    }
    Ok(out)
}

/// Runs `cfg.n_chains` chains of `model`, chain `c` on stream `key.child(c)`.
pub fn run_chains<M: Model>(model: &M, cfg: &ChainConfig, key: StreamKey) -> Result<Draws, McmcError> {
    cfg.validate()?;
    let names = model.param_names();
    let chains: Result<Vec<Vec<f64>>, McmcError> =
        (0..cfg.n_chains).into_par_iter().map(|c| run_one(model, &names, cfg, c, key)).collect();
    let values = chains?.concat();
    Ok(Draws::new(names, cfg.n_chains, cfg.retained(), values))
}

#[cfg(test)]
mod tests {
    use super::kernels::{draw_conjugate_normal, slice_half_normal_scale};
    use super::*;
    use crate::stats;

    /// Normal mean with known variance, conjugate prior.
    struct NormalMean {
        ys: Vec<f64>,
        sigma2: f64,
        prior_var: f64,
    }

    impl Model for NormalMean {
        type State = f64;
        fn param_names(&self) -> Vec<String> {
            vec!["mu".into()]
        }
        fn init(&self, at: InitPoint, _: &mut SimRng) -> f64 {
            at.location(0.0, self.prior_var.sqrt())
        }
        fn update(&self, s: &mut f64, _: bool, rng: &mut SimRng) {
            let w = self.ys.len() as f64 / self.sigma2;
            let ybar = if self.ys.is_empty() { 0.0 } else { stats::mean(&self.ys) };
            *s = draw_conjugate_normal(0.0, self.prior_var, ybar, w, rng);
        }
        fn record(&self, s: &f64, out: &mut Vec<f64>) {
            out.push(*s);
        }
    }

    /// A half-normal scale with no data.
    struct PriorOnly;

    impl Model for PriorOnly {
        type State = f64;
        fn param_names(&self) -> Vec<String> {
            vec!["s".into()]
        }
        fn init(&self, at: InitPoint, _: &mut SimRng) -> f64 {
            at.scale(0.5)
        }
        fn update(&self, s: &mut f64, _: bool, rng: &mut SimRng) {
            *s = slice_half_normal_scale(*s, 0.5, |_| 0.0, rng);
        }
        fn record(&self, s: &f64, out: &mut Vec<f64>) {
            out.push(*s);
        }
    }

    fn short() -> ChainConfig {
        ChainConfig { burn_in: 500, samples: 5_000, ..ChainConfig::desk() }
    }

    #[test]
    fn conjugate_model_matches_closed_form() {
        let m = NormalMean { ys: vec![1.0, 2.0, 0.5, 1.5], sigma2: 1.0, prior_var: 100.0 };
        let draws = run_chains(&m, &short(), StreamKey::root(1)).unwrap();
        let xs = draws.pooled(0);
        let prec: f64 = 0.01 + 4.0;
        let (mean, sd) = (5.0 / prec, prec.recip().sqrt());
        let mcse = sd / (xs.len() as f64).sqrt();
        assert!((stats::mean(&xs) - mean).abs() < 3.0 * mcse);
        assert!((stats::variance(&xs).sqrt() / sd - 1.0).abs() < 0.03);
    }

    #[test]
    fn zero_data_reproduces_prior() {
        let draws = run_chains(&PriorOnly, &short(), StreamKey::root(2)).unwrap();
        let mut xs = draws.pooled(0);
        // thin to near-independence before a KS comparison with the half-normal
        xs = xs.into_iter().step_by(10).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 2.0 * stats::normal_cdf(x / 0.5) - 1.0;
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        let crit = 1.949 / n.sqrt();
        assert!(d < crit, "D = {d}, crit = {crit}");

        let m = NormalMean { ys: vec![], sigma2: 1.0, prior_var: 4.0 };
        let draws = run_chains(&m, &short(), StreamKey::root(3)).unwrap();
        let xs = draws.pooled(0);
        assert!((stats::variance(&xs) / 4.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn bit_identical_reruns() {
        let m = NormalMean { ys: vec![0.3], sigma2: 0.5, prior_var: 100.0 };
        let a = run_chains(&m, &short(), StreamKey::root(4)).unwrap();
        let b = run_chains(&m, &short(), StreamKey::root(4)).unwrap();
        assert_eq!(a, b);
        let c = run_chains(&m, &short(), StreamKey::root(5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn layout_and_thinning() {
        let m = NormalMean { ys: vec![0.3], sigma2: 0.5, prior_var: 100.0 };
        let cfg = ChainConfig { thin: 5, ..short() };
        let d = run_chains(&m, &cfg, StreamKey::root(6)).unwrap();
        assert_eq!(d.n_iter(), 1000);
        assert_eq!(d.total(), 3000);
        assert_eq!(d.param_chains(0).concat(), d.pooled(0));
    }

    #[test]
    fn init_points_are_symmetric() {
        let pts: Vec<f64> = (0..3).map(|c| InitPoint::for_chain(c, 3, 0.5).offset).collect();
        assert_eq!(pts, vec![-0.5, 0.0, 0.5]);
        assert!(ChainConfig { n_chains: 1, ..ChainConfig::desk() }.validate().is_err());
    }
}
