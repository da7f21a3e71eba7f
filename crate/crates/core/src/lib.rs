//! Simulation engine for multi-indication evidence synthesis.
//!
//! Datasets of study-level log hazard ratios are generated from an
//! illness-death model ([`msm`], [`trial`], [`scenario`]), analysed with
//! Bayesian synthesis models ([`models`], fitted by [`mcmc`]), and the
//! target-indication predictions are scored against the true estimand
//! ([`metrics`]). [`runner`] ties the pieces into a reproducible pipeline.

pub mod mcmc;
pub mod metrics;
pub mod models;
pub mod msm;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod stats;
pub mod trial;

pub use msm::{Arm, EstimandSpec, MsmParams};
