//! Bivariate PFS/OS surrogacy synthesis.
//!
//! The true OS effect of each study is integrated out, leaving
//! `Y_O | Y_P, d_P ~ N(g0 + g1 d_P + rho k (Y_P - d_P), s_O^2 (1 - rho^2) + psi^2)`
//! with `k = s_O / s_P`. True PFS effects and the surrogacy coefficients are
//! conjugate, scales are slice sampled and `rho` takes adaptive random-walk
//! steps on the logit scale.

use serde::{Deserialize, Serialize};

use super::{LOCATION_SD, SCALE_PRIOR};
use crate::mcmc::kernels::{draw_conjugate_normal, slice_half_normal_scale, std_normal, AdaptiveRw};
use crate::mcmc::{InitPoint, Model};
use crate::rng::SimRng;
use crate::scenario::MultiIndicationDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurrogacySharing {
    Common,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedStudy {
    pub group: usize,
    pub study: usize,
    pub y_pfs: f64,
    pub se_pfs: f64,
    pub y_os: f64,
    pub se_os: f64,
}

/// Studies reporting both endpoints. Studies with PFS only carry no
/// information on the surrogacy parameters and are left out.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateData {
    pub ids: Vec<usize>,
    pub studies: Vec<PairedStudy>,
}

impl BivariateData {
    pub fn from_dataset(data: &MultiIndicationDataset) -> Self {
        let mut ids = Vec::new();
        let mut studies = Vec::new();
        for s in &data.studies {
            let (Some(y_os), Some(se_os)) = (s.lhr_os, s.se_os) else { continue };
            let group = match ids.iter().position(|&j| j == s.indication) {
                Some(g) => g,
                None => {
                    ids.push(s.indication);
                    ids.len() - 1
                }
            };
            studies.push(PairedStudy { group, study: s.study, y_pfs: s.lhr_pfs, se_pfs: s.se_pfs, y_os, se_os });
        }
        Self { ids, studies }
    }

    pub fn has(&self, indication: usize) -> bool {
        self.ids.contains(&indication)
    }
}

#[derive(Debug, Clone)]
pub struct BivariateModel {
    pub data: BivariateData,
    pub sharing: SurrogacySharing,
    pub location_sd: f64,
    pub scale_prior: f64,
    /// Fixes `psi` (all indications) at this value.
    pub fixed_psi: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BiState {
    d_pfs: Vec<f64>,
    g0: Vec<f64>,
    g1: Vec<f64>,
    psi: Vec<f64>,
    beta: [f64; 2],
    xi: [f64; 2],
    rho: f64,
    rho_rw: AdaptiveRw,
}

impl BivariateModel {
    pub fn new(data: BivariateData, sharing: SurrogacySharing) -> Self {
        Self { data, sharing, location_sd: LOCATION_SD, scale_prior: SCALE_PRIOR, fixed_psi: None }
    }

    fn n_coef(&self) -> usize {
        match self.sharing {
            SurrogacySharing::Common => 1,
            SurrogacySharing::Random => self.data.ids.len(),
        }
    }

    fn coef_index(&self, group: usize) -> usize {
        match self.sharing {
            SurrogacySharing::Common => 0,
            SurrogacySharing::Random => group,
        }
    }

    /// Names of the surrogacy coefficients used for `indication`.
    pub fn coefficient_names(&self, indication: usize) -> [String; 2] {
        match self.sharing {
            SurrogacySharing::Common => ["gamma0".into(), "gamma1".into()],
            SurrogacySharing::Random => [format!("gamma0[{indication}]"), format!("gamma1[{indication}]")],
        }
    }

    /// Conditional OS observation and its variance for study `i`.
    #[inline]
    fn conditional(&self, s: &BiState, i: usize, rho: f64, psi: f64) -> (f64, f64) {
        let st = &self.data.studies[i];
        let k = st.se_os / st.se_pfs;
        let z = st.y_os - rho * k * (st.y_pfs - s.d_pfs[i]);
        (z, st.se_os * st.se_os * (1.0 - rho * rho) + psi * psi)
    }

    fn update_d_pfs(&self, s: &mut BiState, rng: &mut SimRng) {
        let l2 = self.location_sd.powi(2);
        for (i, st) in self.data.studies.iter().enumerate() {
            let c = self.coef_index(st.group);
            let k = st.se_os / st.se_pfs;
            let a = s.g1[c] - s.rho * k;
            let v = st.se_os * st.se_os * (1.0 - s.rho * s.rho) + s.psi[c].powi(2);
            let resid = st.y_os - s.rho * k * st.y_pfs - s.g0[c];
            let vp = st.se_pfs * st.se_pfs;
            let prec = 1.0 / l2 + 1.0 / vp + a * a / v;
            let mean = (st.y_pfs / vp + a * resid / v) / prec;
            s.d_pfs[i] = mean + prec.recip().sqrt() * std_normal(rng);
        }
    }

    /// Draws `(g0, g1)` for coefficient set `c` from its bivariate normal
    /// full conditional.
    fn update_coef(&self, s: &mut BiState, c: usize, prior_mean: [f64; 2], prior_var: [f64; 2], rng: &mut SimRng) {
        let mut p = [[1.0 / prior_var[0], 0.0], [0.0, 1.0 / prior_var[1]]];
        let mut b = [prior_mean[0] / prior_var[0], prior_mean[1] / prior_var[1]];
        for (i, st) in self.data.studies.iter().enumerate() {
            if self.coef_index(st.group) != c {
                continue;
            }
            let (z, v) = self.conditional(s, i, s.rho, s.psi[c]);
            let x = s.d_pfs[i];
            p[0][0] += 1.0 / v;
            p[0][1] += x / v;
            p[1][1] += x * x / v;
            b[0] += z / v;
            b[1] += x * z / v;
        }
        p[1][0] = p[0][1];
        let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        let cov = [[p[1][1] / det, -p[0][1] / det], [-p[1][0] / det, p[0][0] / det]];
        let mean = [cov[0][0] * b[0] + cov[0][1] * b[1], cov[1][0] * b[0] + cov[1][1] * b[1]];
        // Cholesky factor of the covariance.
        let l00 = cov[0][0].sqrt();
        let l10 = cov[1][0] / l00;
        let l11 = (cov[1][1] - l10 * l10).max(0.0).sqrt();
        let (e0, e1) = (std_normal(rng), std_normal(rng));
        s.g0[c] = mean[0] + l00 * e0;
        s.g1[c] = mean[1] + l10 * e0 + l11 * e1;
    }

    fn loglik_psi(&self, s: &BiState, c: usize, psi: f64) -> f64 {
        let mut ll = 0.0;
        for (i, st) in self.data.studies.iter().enumerate() {
            if self.coef_index(st.group) != c {
                continue;
            }
            let (z, v) = self.conditional(s, i, s.rho, psi);
            let r = z - s.g0[c] - s.g1[c] * s.d_pfs[i];
            ll -= 0.5 * (v.ln() + r * r / v);
        }
        ll
    }

    fn loglik_rho(&self, s: &BiState, rho: f64) -> f64 {
        let mut ll = 0.0;
        for (i, st) in self.data.studies.iter().enumerate() {
            let c = self.coef_index(st.group);
            let (z, v) = self.conditional(s, i, rho, s.psi[c]);
            let r = z - s.g0[c] - s.g1[c] * s.d_pfs[i];
            ll -= 0.5 * (v.ln() + r * r / v);
        }
        ll
    }

    fn update_rho(&self, s: &mut BiState, adapt: bool, rng: &mut SimRng) {
        // logit scale; the Jacobian of the uniform prior is rho (1 - rho)
        let target = |u: f64, st: &BiState| {
            let rho = 1.0 / (1.0 + (-u).exp());
            if !(rho > 0.0 && rho < 1.0) {
                return f64::NEG_INFINITY;
            }
            self.loglik_rho(st, rho) + rho.ln() + (1.0 - rho).ln()
        };
        let u = (s.rho / (1.0 - s.rho)).ln();
        let fu = target(u, s);
        let mut rw = s.rho_rw.clone();
        let (u, _) = rw.step(u, fu, |x| target(x, s), adapt, rng);
        s.rho_rw = rw;
        s.rho = 1.0 / (1.0 + (-u).exp());
    }
}

impl Model for BivariateModel {
    type State = BiState;

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        match self.sharing {
            SurrogacySharing::Common => {
                names.extend(["gamma0", "gamma1"].map(String::from));
                if self.fixed_psi.is_none() {
                    names.push("psi".into());
                }
            }
            SurrogacySharing::Random => {
                names.extend(self.data.ids.iter().map(|j| format!("gamma0[{j}]")));
                names.extend(self.data.ids.iter().map(|j| format!("gamma1[{j}]")));
                if self.fixed_psi.is_none() {
                    names.extend(self.data.ids.iter().map(|j| format!("psi[{j}]")));
                }
                names.extend(["beta0", "beta1", "xi0", "xi1"].map(String::from));
            }
        }
        names.push("rho".into());
        names.extend(self.data.studies.iter().map(|s| format!("d_pfs[{}.{}]", self.data.ids[s.group], s.study)));
        names
    }

    fn init(&self, at: InitPoint, _rng: &mut SimRng) -> BiState {
        let nc = self.n_coef();
        let loc = at.location(0.0, self.location_sd);
        let scale = at.scale(self.scale_prior);
        BiState {
            d_pfs: self.data.studies.iter().map(|s| s.y_pfs).collect(),
            g0: vec![loc; nc],
            g1: vec![loc; nc],
            psi: vec![self.fixed_psi.unwrap_or(scale); nc],
            beta: [loc; 2],
            xi: [scale; 2],
            rho: 1.0 / (1.0 + (-at.offset).exp()),
            rho_rw: AdaptiveRw::new(0.5),
        }
    }

    fn update(&self, s: &mut BiState, adapt: bool, rng: &mut SimRng) {
        let l2 = self.location_sd.powi(2);
        let nc = self.n_coef();
        for c in 0..nc {
            let (pm, pv) = match self.sharing {
                SurrogacySharing::Common => ([0.0; 2], [l2; 2]),
                SurrogacySharing::Random => (s.beta, [s.xi[0].powi(2), s.xi[1].powi(2)]),
            };
            self.update_coef(s, c, pm, pv, rng);
        }
        if self.sharing == SurrogacySharing::Random {
            let n = nc as f64;
            for (k, g) in [&s.g0, &s.g1].into_iter().enumerate() {
                let gbar = g.iter().sum::<f64>() / n;
                s.beta[k] = draw_conjugate_normal(0.0, l2, gbar, n / s.xi[k].powi(2), rng);
                let ss: f64 = g.iter().map(|x| (x - s.beta[k]).powi(2)).sum();
                s.xi[k] = slice_half_normal_scale(s.xi[k], self.scale_prior, |x| -n * x.ln() - 0.5 * ss / (x * x), rng);
            }
        }
        if self.fixed_psi.is_none() {
            for c in 0..nc {
                let psi = slice_half_normal_scale(s.psi[c], self.scale_prior, |p| self.loglik_psi(s, c, p), rng);
                s.psi[c] = psi;
            }
        }
        self.update_rho(s, adapt, rng);
        self.update_d_pfs(s, rng);
    }

    fn record(&self, s: &BiState, out: &mut Vec<f64>) {
        out.extend_from_slice(&s.g0);
        out.extend_from_slice(&s.g1);
        if self.fixed_psi.is_none() {
            out.extend_from_slice(&s.psi);
        }
        if self.sharing == SurrogacySharing::Random {
            out.extend_from_slice(&s.beta);
            out.extend_from_slice(&s.xi);
        }
        out.push(s.rho);
        out.extend_from_slice(&s.d_pfs);
    }
}
