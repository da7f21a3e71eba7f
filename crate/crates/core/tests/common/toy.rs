//! A two-indication, three-study dataset with fixed SDs, and posterior
//! moments of each univariate model's target prediction by brute-force
//! numerical integration on a grid.

use multind_core::mcmc::{run_chains, ChainConfig};
use multind_core::models::univariate::{Sharing, TauMode, UnivariateData, UnivariateModel, UnivariateOptions};
use multind_core::rng::StreamKey;

pub const TAU: f64 = 0.1;
pub const EPS: f64 = 0.2;
pub const TARGET: usize = 1;
/// Location prior SD in the mixture checks; a proper independent component
/// keeps the mixture weights well defined.
pub const MIXTURE_LOCATION_SD: f64 = 1.0;

const LO: f64 = -7.0;
const HI: f64 = 7.0;
const N: usize = 1401;

pub fn studies() -> Vec<(usize, Vec<(f64, f64)>)> {
    vec![(0, vec![(-0.5, 0.15), (-0.3, 0.2)]), (1, vec![(-0.1, 0.2)])]
}

fn npdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn grid() -> Vec<f64> {
    (0..N).map(|k| LO + (HI - LO) * k as f64 / (N - 1) as f64).collect()
}

fn trapz(f: &[f64]) -> f64 {
    let h = (HI - LO) / (N - 1) as f64;
    h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[N - 1]))
}

/// Likelihood of indication `g`'s studies given its mean, with study-level
/// effects integrated out.
fn lik(g: usize, mu: f64) -> f64 {
    studies()[g].1.iter().map(|&(y, s)| npdf(y, mu, s * s + TAU * TAU)).product()
}

/// Unnormalised density on the grid -> (mass, mean, second moment).
fn moments(xs: &[f64], dens: &[f64]) -> (f64, f64, f64) {
    let z = trapz(dens);
    let m1: Vec<f64> = xs.iter().zip(dens).map(|(x, d)| x * d).collect();
    let m2: Vec<f64> = xs.iter().zip(dens).map(|(x, d)| x * x * d).collect();
    (z, trapz(&m1) / z, trapz(&m2) / z)
}

/// Combine components `(mass, mean, second moment)` weighted by mass.
fn mix(parts: &[(f64, f64, f64)]) -> (f64, f64) {
    let z: f64 = parts.iter().map(|p| p.0).sum();
    let m: f64 = parts.iter().map(|p| p.0 * p.1).sum::<f64>() / z;
    let m2: f64 = parts.iter().map(|p| p.0 * p.2).sum::<f64>() / z;
    (m, (m2 - m * m).sqrt())
}

/// Beta(1,1) prior probability of a given indicator vector with `k` ones out of `n`.
fn indicator_prior(k: usize, n: usize) -> f64 {
    // B(k+1, n-k+1) = k! (n-k)! / (n+1)!
    let f = |m: usize| (1..=m).map(|i| i as f64).product::<f64>();
    f(k) * f(n - k) / f(n + 1)
}

/// Posterior mean and SD of the target prediction by grid integration.
pub fn oracle(sharing: Sharing, mixture: bool) -> (f64, f64) {
    let xs = grid();
    let l2 = if mixture { MIXTURE_LOCATION_SD.powi(2) } else { 100.0 };
    let e2 = EPS * EPS;
    let lik0: Vec<f64> = xs.iter().map(|&x| lik(0, x)).collect();
    let lik1: Vec<f64> = xs.iter().map(|&x| lik(1, x)).collect();
    // For each m on the grid, int N(d; m, eps^2) L(d) dd.
    let smooth = |l: &[f64], active: bool| -> Vec<f64> {
        xs.iter()
            .map(|&m| {
                if !active {
                    return 1.0;
                }
                let f: Vec<f64> = xs.iter().zip(l).map(|(&d, &li)| npdf(d, m, e2) * li).collect();
                trapz(&f)
            })
            .collect()
    };
    // Marginal likelihood of an indication in the independent branch.
    let ind = |l: &[f64]| trapz(&xs.iter().zip(l).map(|(&x, &li)| npdf(x, 0.0, l2) * li).collect::<Vec<_>>());

    match (sharing, mixture) {
        (Sharing::Independent, _) => {
            let dens: Vec<f64> = xs.iter().zip(&lik1).map(|(&x, l)| npdf(x, 0.0, l2) * l).collect();
            let (_, m, m2) = moments(&xs, &dens);
            (m, (m2 - m * m).sqrt())
        }
        (Sharing::Common, false) => {
            let dens: Vec<f64> = (0..N).map(|k| npdf(xs[k], 0.0, l2) * lik0[k] * lik1[k]).collect();
            let (_, m, m2) = moments(&xs, &dens);
            (m, (m2 - m * m).sqrt())
        }
        (Sharing::Random, false) => {
            let a0 = smooth(&lik0, true);
            // density of D1: int N(m;0,l2) A0(m) N(D1; m, e2) L1(D1) dm
            let dens: Vec<f64> = (0..N)
                .map(|k| {
                    let f: Vec<f64> = (0..N).map(|i| npdf(xs[i], 0.0, l2) * a0[i] * npdf(xs[k], xs[i], e2)).collect();
                    trapz(&f) * lik1[k]
                })
                .collect();
            let (_, m, m2) = moments(&xs, &dens);
            (m, (m2 - m * m).sqrt())
        }
        (Sharing::Common, true) => {
            let mut parts = Vec::new();
            for c0 in [false, true] {
                for c1 in [false, true] {
                    let k = c0 as usize + c1 as usize;
                    let mut w = indicator_prior(k, 2);
                    if !c0 {
                        w *= ind(&lik0);
                    }
                    if !c1 {
                        w *= ind(&lik1);
                    }
                    let dens: Vec<f64> = (0..N)
                        .map(|i| npdf(xs[i], 0.0, l2) * if c0 { lik0[i] } else { 1.0 } * if c1 { lik1[i] } else { 1.0 })
                        .collect();
                    let (z, m, m2) = moments(&xs, &dens);
                    parts.push((w * z, m, m2));
                }
            }
            mix(&parts)
        }
        (Sharing::Random, true) => {
            let mut parts = Vec::new();
            for c0 in [false, true] {
                let a0 = smooth(&lik0, c0);
                for c1 in [false, true] {
                    let k = c0 as usize + c1 as usize;
                    let mut w = indicator_prior(k, 2);
                    if !c0 {
                        w *= ind(&lik0);
                    }
                    if !c1 {
                        w *= ind(&lik1);
                    }
                    let dens: Vec<f64> = (0..N)
                        .map(|k| {
                            let f: Vec<f64> =
                                (0..N).map(|i| npdf(xs[i], 0.0, l2) * a0[i] * npdf(xs[k], xs[i], e2)).collect();
                            trapz(&f) * if c1 { lik1[k] } else { 1.0 }
                        })
                        .collect();
                    let (z, m, m2) = moments(&xs, &dens);
                    parts.push((w * z, m, m2));
                }
            }
            mix(&parts)
        }
    }
}

/// Posterior mean and SD of the target prediction from the sampler, run
/// with the desk chain settings.
pub fn sampled(sharing: Sharing, mixture: bool, tau_mode: TauMode, seed: u64) -> (f64, f64) {
    let opts = UnivariateOptions {
        location_sd: if mixture { MIXTURE_LOCATION_SD } else { 10.0 },
        fixed_tau: Some(TAU),
        fixed_eps: Some(EPS),
        ..Default::default()
    };
    let model =
        UnivariateModel::new(UnivariateData::from_groups(&studies()), sharing, mixture, tau_mode).with_options(opts);
    let name = model.location_name(TARGET);
    let draws = run_chains(&model, &ChainConfig::desk(), StreamKey::root(seed)).unwrap();
    let xs = draws.pooled_by_name(&name).unwrap();
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, sd)
}

pub const MODELS: [(&str, Sharing, bool); 5] = [
    ("ip", Sharing::Independent, false),
    ("cp", Sharing::Common, false),
    ("rp", Sharing::Random, false),
    ("mcip", Sharing::Common, true),
    ("mrip", Sharing::Random, true),
];
