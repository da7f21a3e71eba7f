//! Update kernels shared by the synthesis models.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::rng::SimRng;

#[inline]
pub fn std_normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Posterior `(mean, variance)` of a normal mean with prior `N(m0, v0)` and a
/// likelihood summarised by precision `w` around `ybar`.
#[inline]
pub fn conjugate_normal(m0: f64, v0: f64, ybar: f64, w: f64) -> (f64, f64) {
    let prec = 1.0 / v0 + w;
    let mean = (m0 / v0 + w * ybar) / prec;
    (mean, 1.0 / prec)
}

#[inline]
pub fn draw_conjugate_normal(m0: f64, v0: f64, ybar: f64, w: f64, rng: &mut SimRng) -> f64 {
    let (m, v) = conjugate_normal(m0, v0, ybar, w);
    m + v.sqrt() * std_normal(rng)
}

pub fn draw_beta(a: f64, b: f64, rng: &mut SimRng) -> f64 {
    Beta::new(a, b).expect("positive beta parameters").sample(rng)
}

const MAX_STEP_OUT: usize = 32;
const MAX_SHRINK: usize = 200;

/// Univariate slice sampler with stepping out (Neal 2003). `fx` is `logf(x)`.
/// Returns the new point and its log density.
pub fn slice_sample<F: FnMut(f64) -> f64>(x: f64, fx: f64, w: f64, mut logf: F, rng: &mut SimRng) -> (f64, f64) {
    let level = fx + rng.random::<f64>().ln();
    let mut lo = x - w * rng.random::<f64>();
    let mut hi = lo + w;
    let j = (MAX_STEP_OUT as f64 * rng.random::<f64>()) as usize;
    let mut k = MAX_STEP_OUT - 1 - j;
    for _ in 0..j {
        if logf(lo) <= level {
            break;
        }
        lo -= w;
    }
    while k > 0 && logf(hi) > level {
        hi += w;
        k -= 1;
    }
    for _ in 0..MAX_SHRINK {
        let cand = lo + (hi - lo) * rng.random::<f64>();
        let fc = logf(cand);
        if fc > level {
            return (cand, fc);
        }
        if cand < x {
            lo = cand;
        } else {
            hi = cand;
        }
    }
    (x, fx)
}

/// Slice update of a positive scale `s` with half-normal prior, working on
/// `ln s`. `loglik(s)` is the log likelihood as a function of the scale.
pub fn slice_half_normal_scale<F: FnMut(f64) -> f64>(s: f64, prior_scale: f64, mut loglik: F, rng: &mut SimRng) -> f64 {
    let inv2 = 0.5 / (prior_scale * prior_scale);
    let mut target = |u: f64| {
        let s = u.exp();
        if !s.is_finite() || s == 0.0 {
            return f64::NEG_INFINITY;
        }
        loglik(s) - s * s * inv2 + u
    };
    let u0 = s.ln();
    let f0 = target(u0);
    slice_sample(u0, f0, 1.0, target, rng).0.exp()
}

/// Random-walk Metropolis with a scale tuned only while `adapt` is set.
#[derive(Debug, Clone)]
pub struct AdaptiveRw {
    pub scale: f64,
    accepted: u32,
    proposed: u32,
    total_accepted: u64,
    total_proposed: u64,
}

const ADAPT_BATCH: u32 = 50;
const TARGET_ACCEPT: f64 = 0.44;

impl AdaptiveRw {
    pub fn new(scale: f64) -> Self {
        Self { scale, accepted: 0, proposed: 0, total_accepted: 0, total_proposed: 0 }
    }

    /// One Metropolis step on `x`; `fx` is the current log target.
    pub fn step<F: FnMut(f64) -> f64>(
        &mut self,
        x: f64,
        fx: f64,
        mut logf: F,
        adapt: bool,
        rng: &mut SimRng,
    ) -> (f64, f64) {
        let cand = x + self.scale * std_normal(rng);
        let fc = logf(cand);
        let accept = fc.is_finite() && rng.random::<f64>().ln() < fc - fx;
        if adapt {
            self.proposed += 1;
            self.accepted += accept as u32;
            if self.proposed == ADAPT_BATCH {
                let rate = self.accepted as f64 / ADAPT_BATCH as f64;
                self.scale *= ((rate - TARGET_ACCEPT) * 2.0).exp();
                self.proposed = 0;
                self.accepted = 0;
            }
        } else {
            self.total_proposed += 1;
            self.total_accepted += accept as u64;
        }
        if accept {
            (cand, fc)
        } else {
            (x, fx)
        }
    }

    /// Acceptance rate after adaptation stopped.
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.total_proposed > 0).then(|| self.total_accepted as f64 / self.total_proposed as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use crate::stats;

    #[test]
    fn conjugate_update_matches_closed_form() {
        let mut rng = StreamKey::root(1).rng();
        let (m0, v0, ybar, w) = (0.3, 4.0, -1.2, 9.0);
        let (m, v) = conjugate_normal(m0, v0, ybar, w);
        let xs: Vec<f64> = (0..100_000).map(|_| draw_conjugate_normal(m0, v0, ybar, w, &mut rng)).collect();
        assert!((stats::mean(&xs) - m).abs() < 0.01 * m.abs().max(v.sqrt()));
        assert!((stats::variance(&xs) / v - 1.0).abs() < 0.01 * 2.0);
    }

    #[test]
    fn slice_preserves_half_normal() {
        let mut rng = StreamKey::root(2).rng();
        let scale = 0.5;
        let mut s = 1.0;
        let n = 100_000;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            s = slice_half_normal_scale(s, scale, |_| 0.0, &mut rng);
            xs.push(s);
        }
        let expect = (2.0 / std::f64::consts::PI).sqrt() * scale;
        let sd = scale * (1.0 - 2.0 / std::f64::consts::PI).sqrt();
        // slice chains are close to independent here; allow for mild autocorrelation
        let mcse = 2.0 * sd / (n as f64).sqrt();
        assert!((stats::mean(&xs) - expect).abs() < 3.0 * mcse, "{}", stats::mean(&xs));
    }

    #[test]
    fn adaptive_rw_targets_acceptance() {
        let mut rng = StreamKey::root(3).rng();
        let mut rw = AdaptiveRw::new(50.0);
        let logf = |x: f64| -0.5 * x * x;
        let (mut x, mut fx) = (0.0, 0.0);
        for i in 0..20_000 {
            (x, fx) = rw.step(x, fx, logf, i < 5_000, &mut rng);
        }
        let rate = rw.acceptance_rate().unwrap();
        assert!((0.2..=0.6).contains(&rate), "{rate}");
    }
}
