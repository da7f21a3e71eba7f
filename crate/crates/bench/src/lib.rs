//! Shared inputs for the benchmarks.

use multind_core::mcmc::ChainConfig;
use multind_core::msm::MsmParams;
use multind_core::scenario::{
    build_dataset, scenario_grid, DatasetSeed, EvidenceSize, MultiIndicationDataset, OutlierMode,
};
use multind_core::trial::DesignTargets;

/// Chains short enough for repeated timing; per-sweep cost is what matters.
pub fn bench_chains() -> ChainConfig {
    ChainConfig { burn_in: 500, samples: 1_500, ..ChainConfig::desk() }
}

/// One replicate of a large evidence base with moderate heterogeneity.
pub fn large_dataset() -> MultiIndicationDataset {
    let (id, spec) = scenario_grid()
        .into_iter()
        .enumerate()
        .find(|(_, s)| {
            s.size == EvidenceSize::Large
                && s.outlier == OutlierMode::None
                && s.cv_between == 0.15
                && s.cv_within == 0.07
                && s.target_has_os
        })
        .expect("grid contains the scenario");
    let seed = DatasetSeed { master: 1, scenario_id: id, replicate: 0 };
    build_dataset(&spec, seed, &MsmParams::base(), &DesignTargets::default()).expect("dataset builds")
}
