//! Univariate random-effects synthesis of one endpoint across indications,
//! including the two mixture variants.
//!
//! Study-level true effects are integrated out analytically, so study `i` in
//! indication `j` contributes `y_ij ~ N(mu_j, s_ij^2 + tau_j^2)`. Indication
//! means are then conjugate given the scales, and the scales are slice sampled.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LOCATION_SD, SCALE_PRIOR};
use crate::mcmc::kernels::{draw_beta, draw_conjugate_normal, slice_half_normal_scale, std_normal};
use crate::mcmc::{InitPoint, Model};
use crate::rng::SimRng;
use crate::scenario::MultiIndicationDataset;
use crate::stats::normal_ln_pdf;
use crate::trial::Endpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sharing {
    Independent,
    Common,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TauMode {
    Common,
    Independent,
}

/// Study estimates grouped by indication. Indications without data are left
/// out; `ids` keeps the original indication numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateData {
    pub ids: Vec<usize>,
    start: Vec<usize>,
    pub y: Vec<f64>,
    pub s2: Vec<f64>,
}

impl UnivariateData {
    /// `groups[k] = (indication id, [(estimate, standard error)])`.
    pub fn from_groups(groups: &[(usize, Vec<(f64, f64)>)]) -> Self {
        let mut ids = Vec::new();
        let mut start = vec![0];
        let mut y = Vec::new();
        let mut s2 = Vec::new();
        for (id, studies) in groups.iter().filter(|g| !g.1.is_empty()) {
            ids.push(*id);
            for &(est, se) in studies {
                y.push(est);
                s2.push(se * se);
            }
            start.push(y.len());
        }
        Self { ids, start, y, s2 }
    }

    pub fn from_dataset(data: &MultiIndicationDataset, endpoint: Endpoint) -> Self {
        let groups: Vec<(usize, Vec<(f64, f64)>)> = (0..data.n_indications)
            .map(|j| {
                let studies = data
                    .studies
                    .iter()
                    .filter(|s| s.indication == j)
                    .filter_map(|s| match endpoint {
                        Endpoint::Pfs => Some((s.lhr_pfs, s.se_pfs)),
                        Endpoint::Os => s.lhr_os.zip(s.se_os),
                    })
                    .collect();
                (j, studies)
            })
            .collect();
        Self::from_groups(&groups)
    }

    pub fn n_groups(&self) -> usize {
        self.ids.len()
    }

    pub fn has(&self, indication: usize) -> bool {
        self.ids.contains(&indication)
    }

    fn range(&self, g: usize) -> std::ops::Range<usize> {
        self.start[g]..self.start[g + 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnivariateOptions {
    /// SD of the normal priors on locations.
    pub location_sd: f64,
    /// Half-normal scale of the priors on SDs.
    pub scale_prior: f64,
    pub fixed_tau: Option<f64>,
    pub fixed_eps: Option<f64>,
    pub fixed_p: Option<f64>,
}

impl Default for UnivariateOptions {
    fn default() -> Self {
        Self { location_sd: LOCATION_SD, scale_prior: SCALE_PRIOR, fixed_tau: None, fixed_eps: None, fixed_p: None }
    }
}

#[derive(Debug, Clone)]
pub struct UnivariateModel {
    pub data: UnivariateData,
    pub sharing: Sharing,
    pub mixture: bool,
    pub tau_mode: TauMode,
    pub opts: UnivariateOptions,
}

#[derive(Debug, Clone)]
pub struct UniState {
    tau: Vec<f64>,
    /// Common location (CP, MCIP).
    shared: f64,
    /// Per-indication location: IP and RP means, MRIP exchangeable component.
    d: Vec<f64>,
    /// Independent mixture component.
    d_ind: Vec<f64>,
    c: Vec<bool>,
    p: f64,
    m: f64,
    eps: f64,
    ybar: Vec<f64>,
    w: Vec<f64>,
    resid2: Vec<f64>,
}

/// `sum ln(v_i)` with one logarithm per block of eight terms.
#[inline]
fn sum_ln(vs: impl Iterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    let mut prod = 1.0;
    let mut k = 0;
    for v in vs {
        prod *= v;
        k += 1;
        if k == 8 {
            acc += prod.ln();
            prod = 1.0;
            k = 0;
        }
    }
    acc + prod.ln()
}

impl UnivariateModel {
    pub fn new(data: UnivariateData, sharing: Sharing, mixture: bool, tau_mode: TauMode) -> Self {
        assert!(!(mixture && sharing == Sharing::Independent), "mixtures need a sharing component");
        Self { data, sharing, mixture, tau_mode, opts: UnivariateOptions::default() }
    }

    pub fn with_options(mut self, opts: UnivariateOptions) -> Self {
        self.opts = opts;
        self
    }

    fn n_tau(&self) -> usize {
        match self.tau_mode {
            TauMode::Common => 1,
            TauMode::Independent => self.data.n_groups(),
        }
    }

    fn tau_of(&self, s: &UniState, g: usize) -> f64 {
        match self.tau_mode {
            TauMode::Common => s.tau[0],
            TauMode::Independent => s.tau[g],
        }
    }

    /// Parameter name for the location that the target prediction reads.
    pub fn location_name(&self, indication: usize) -> String {
        match (self.sharing, self.mixture) {
            (Sharing::Common, _) => "D".into(),
            (Sharing::Random, true) => format!("D_ex[{indication}]"),
            _ => format!("D[{indication}]"),
        }
    }

    fn mean_of(&self, s: &UniState, g: usize) -> f64 {
        match (self.sharing, self.mixture) {
            (Sharing::Independent, _) | (Sharing::Random, false) => s.d[g],
            (Sharing::Common, false) => s.shared,
            (Sharing::Common, true) => {
                if s.c[g] {
                    s.shared
                } else {
                    s.d_ind[g]
                }
            }
            (Sharing::Random, true) => {
                if s.c[g] {
                    s.d[g]
                } else {
                    s.d_ind[g]
                }
            }
        }
    }

    fn refresh_summaries(&self, s: &mut UniState) {
        for g in 0..self.data.n_groups() {
            let t2 = self.tau_of(s, g).powi(2);
            let (mut w, mut wy) = (0.0, 0.0);
            for i in self.data.range(g) {
                let prec = 1.0 / (self.data.s2[i] + t2);
                w += prec;
                wy += prec * self.data.y[i];
            }
            s.w[g] = w;
            s.ybar[g] = wy / w;
        }
    }

    fn update_locations(&self, s: &mut UniState, rng: &mut SimRng) {
        let l2 = self.opts.location_sd.powi(2);
        let ng = self.data.n_groups();
        match (self.sharing, self.mixture) {
            (Sharing::Independent, _) => {
                for g in 0..ng {
                    s.d[g] = draw_conjugate_normal(0.0, l2, s.ybar[g], s.w[g], rng);
                }
            }
            (Sharing::Common, false) => {
                let w: f64 = s.w.iter().sum();
                let ybar = s.w.iter().zip(&s.ybar).map(|(w, y)| w * y).sum::<f64>() / w;
                s.shared = draw_conjugate_normal(0.0, l2, ybar, w, rng);
            }
            (Sharing::Random, false) => {
                let e2 = s.eps * s.eps;
                for g in 0..ng {
                    s.d[g] = draw_conjugate_normal(s.m, e2, s.ybar[g], s.w[g], rng);
                }
                self.update_hyper(s, rng);
            }
            (Sharing::Common, true) => {
                for g in 0..ng {
                    let (yb, vw) = (s.ybar[g], 1.0 / s.w[g]);
                    let lw1 = s.p.ln() + normal_ln_pdf(yb, s.shared, vw);
                    let lw0 = (1.0 - s.p).ln() + normal_ln_pdf(yb, 0.0, l2 + vw);
                    s.c[g] = choose(lw1, lw0, rng);
                    s.d_ind[g] = if s.c[g] {
                        self.opts.location_sd * std_normal(rng)
                    } else {
                        draw_conjugate_normal(0.0, l2, yb, s.w[g], rng)
                    };
                }
                let (mut w, mut wy) = (0.0, 0.0);
                for g in (0..ng).filter(|&g| s.c[g]) {
                    w += s.w[g];
                    wy += s.w[g] * s.ybar[g];
                }
                let ybar = if w > 0.0 { wy / w } else { 0.0 };
                s.shared = draw_conjugate_normal(0.0, l2, ybar, w, rng);
                self.update_p(s, rng);
            }
            (Sharing::Random, true) => {
                let e2 = s.eps * s.eps;
                for g in 0..ng {
                    let (yb, vw) = (s.ybar[g], 1.0 / s.w[g]);
                    let lw1 = s.p.ln() + normal_ln_pdf(yb, s.m, e2 + vw);
                    let lw0 = (1.0 - s.p).ln() + normal_ln_pdf(yb, 0.0, l2 + vw);
                    s.c[g] = choose(lw1, lw0, rng);
                    if s.c[g] {
                        s.d[g] = draw_conjugate_normal(s.m, e2, yb, s.w[g], rng);
                        s.d_ind[g] = self.opts.location_sd * std_normal(rng);
                    } else {
                        s.d_ind[g] = draw_conjugate_normal(0.0, l2, yb, s.w[g], rng);
                    }
                }
                // Exchangeable components of indications outside the shared
                // branch are integrated out of the hyperparameter update and
                // redrawn afterwards.
                self.update_hyper_active(s, rng);
                for g in (0..ng).filter(|&g| !s.c[g]) {
                    s.d[g] = s.m + s.eps * std_normal(rng);
                }
                self.update_p(s, rng);
            }
        }
    }

    /// Mean and SD of the exchangeable distribution given the components `d`.
    fn update_hyper(&self, s: &mut UniState, rng: &mut SimRng) {
        let l2 = self.opts.location_sd.powi(2);
        let j = s.d.len() as f64;
        let dbar = s.d.iter().sum::<f64>() / j;
        s.m = draw_conjugate_normal(0.0, l2, dbar, j / (s.eps * s.eps), rng);
        if self.opts.fixed_eps.is_none() {
            let ss: f64 = s.d.iter().map(|d| (d - s.m).powi(2)).sum();
            s.eps = slice_half_normal_scale(s.eps, self.opts.scale_prior, |e| -j * e.ln() - 0.5 * ss / (e * e), rng);
        }
    }

    fn update_hyper_active(&self, s: &mut UniState, rng: &mut SimRng) {
        let l2 = self.opts.location_sd.powi(2);
        let active: Vec<f64> = s.d.iter().zip(&s.c).filter(|(_, &c)| c).map(|(d, _)| *d).collect();
        let j = active.len() as f64;
        let dbar = if active.is_empty() { 0.0 } else { active.iter().sum::<f64>() / j };
        s.m = draw_conjugate_normal(0.0, l2, dbar, j / (s.eps * s.eps), rng);
        if self.opts.fixed_eps.is_none() {
            if active.is_empty() {
                s.eps = (self.opts.scale_prior * std_normal(rng)).abs();
            } else {
                let ss: f64 = active.iter().map(|d| (d - s.m).powi(2)).sum();
                s.eps =
                    slice_half_normal_scale(s.eps, self.opts.scale_prior, |e| -j * e.ln() - 0.5 * ss / (e * e), rng);
            }
        }
    }

    fn update_p(&self, s: &mut UniState, rng: &mut SimRng) {
        if self.opts.fixed_p.is_some() {
            return;
        }
        let k = s.c.iter().filter(|&&c| c).count() as f64;
        s.p = draw_beta(1.0 + k, 1.0 + s.c.len() as f64 - k, rng);
    }

    fn update_tau(&self, s: &mut UniState, rng: &mut SimRng) {
        if self.opts.fixed_tau.is_some() {
            return;
        }
        for g in 0..self.data.n_groups() {
            let mu = self.mean_of(s, g);
            for i in self.data.range(g) {
                s.resid2[i] = (self.data.y[i] - mu).powi(2);
            }
        }
        let data = &self.data;
        let resid2 = &s.resid2;
        let loglik = |range: std::ops::Range<usize>, t: f64| -> f64 {
            let t2 = t * t;
            let quad: f64 = range.clone().map(|i| resid2[i] / (data.s2[i] + t2)).sum();
            -0.5 * (sum_ln(range.map(|i| data.s2[i] + t2)) + quad)
        };
        match self.tau_mode {
            TauMode::Common => {
                let all = 0..data.y.len();
                s.tau[0] = slice_half_normal_scale(s.tau[0], self.opts.scale_prior, |t| loglik(all.clone(), t), rng);
            }
            TauMode::Independent => {
                for g in 0..data.n_groups() {
                    let r = data.range(g);
                    s.tau[g] = slice_half_normal_scale(s.tau[g], self.opts.scale_prior, |t| loglik(r.clone(), t), rng);
                }
            }
        }
    }
}

#[inline]
fn choose(lw1: f64, lw0: f64, rng: &mut SimRng) -> bool {
    if lw1 == f64::NEG_INFINITY {
        return false;
    }
    if lw0 == f64::NEG_INFINITY {
        return true;
    }
    let p1 = 1.0 / (1.0 + (lw0 - lw1).exp());
    rng.random::<f64>() < p1
}

impl Model for UnivariateModel {
    type State = UniState;

    fn param_names(&self) -> Vec<String> {
        let ids = &self.data.ids;
        let mut names = Vec::new();
        match (self.sharing, self.mixture) {
            (Sharing::Common, _) => names.push("D".to_string()),
            (Sharing::Independent, _) | (Sharing::Random, false) => names.extend(ids.iter().map(|j| format!("D[{j}]"))),
            (Sharing::Random, true) => names.extend(ids.iter().map(|j| format!("D_ex[{j}]"))),
        }
        if self.mixture {
            names.extend(ids.iter().map(|j| format!("D_ind[{j}]")));
            names.extend(ids.iter().map(|j| format!("c[{j}]")));
            if self.opts.fixed_p.is_none() {
                names.push("p".into());
            }
        }
        if self.sharing == Sharing::Random {
            names.push("m_d".into());
            if self.opts.fixed_eps.is_none() {
                names.push("eps".into());
            }
        }
        if self.opts.fixed_tau.is_none() {
            match self.tau_mode {
                TauMode::Common => names.push("tau".into()),
                TauMode::Independent => names.extend(ids.iter().map(|j| format!("tau[{j}]"))),
            }
        }
        names
    }

    fn init(&self, at: InitPoint, _rng: &mut SimRng) -> UniState {
        let ng = self.data.n_groups();
        let loc = at.location(0.0, self.opts.location_sd);
        let tau0 = self.opts.fixed_tau.unwrap_or_else(|| at.scale(self.opts.scale_prior));
        let mut s = UniState {
            tau: vec![tau0; self.n_tau()],
            shared: loc,
            d: vec![loc; ng],
            d_ind: vec![loc; ng],
            c: vec![true; ng],
            p: self.opts.fixed_p.unwrap_or(0.5),
            m: loc,
            eps: self.opts.fixed_eps.unwrap_or_else(|| at.scale(self.opts.scale_prior)),
            ybar: vec![0.0; ng],
            w: vec![0.0; ng],
            resid2: vec![0.0; self.data.y.len()],
        };
        self.refresh_summaries(&mut s);
        s
    }

    fn update(&self, s: &mut UniState, _adapt: bool, rng: &mut SimRng) {
        self.update_locations(s, rng);
        self.update_tau(s, rng);
        self.refresh_summaries(s);
    }

    fn record(&self, s: &UniState, out: &mut Vec<f64>) {
        match (self.sharing, self.mixture) {
            (Sharing::Common, _) => out.push(s.shared),
            _ => out.extend_from_slice(&s.d),
        }
        if self.mixture {
            out.extend_from_slice(&s.d_ind);
            out.extend(s.c.iter().map(|&c| c as u8 as f64));
            if self.opts.fixed_p.is_none() {
                out.push(s.p);
            }
        }
        if self.sharing == Sharing::Random {
            out.push(s.m);
            if self.opts.fixed_eps.is_none() {
                out.push(s.eps);
            }
        }
        if self.opts.fixed_tau.is_none() {
            out.extend_from_slice(&s.tau);
        }
    }
}
