//! End-to-end pipeline: datasets, model fits, per-replicate outcomes,
//! aggregated metrics, and the files that record them.
//!
//! Work units are (scenario, replicate) pairs run on a bounded thread pool.
//! Each finished unit is appended to `journal.jsonl`; the final CSV files are
//! written from the journal in sorted order, so they do not depend on the
//! worker count or on whether the run was resumed.
//!
//! Output directory layout:
//!
//! | file | contents |
//! |------|----------|
//! | `outcomes.csv` | one row per (scenario, replicate, model) prediction |
//! | `metrics.csv` | `scenario_id,model_id,metric,value,mcse,n_used,n_dropped` |
//! | `scenarios.csv` | factor levels of the selected scenarios |
//! | `manifest.json` | configuration, completion status, timings |
//! | `journal.jsonl` | append-only unit records used for resume |
//! | `datasets/` | study-level datasets, when requested |

mod config;
mod journal;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    ChainOverrides, ConfigFile, NuisanceSetting, Profile, RunConfig, RunIdentity, ScenarioFilter, DEFAULT_SEED,
};
pub use journal::{Journal, NotEstimable, UnitRecord};

use crate::mcmc::ChainConfig;
use crate::metrics::{self, FitStatus, MetricRow, ReplicateOutcome};
use crate::models::{predict_target, FitCache, ModelError, ModelSpec, TargetPrediction};
use crate::msm::MsmParams;
use crate::rng::{seed_for, StreamRole};
use crate::scenario::{
    build_dataset, scenario_grid, with_os_twin, write_dataset_csv, DatasetSeed, MultiIndicationDataset, ScenarioError,
    ScenarioSpec, DATASET_HEADER,
};
use crate::trial::DesignTargets;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
        move |source| RunError::Io { path: path.to_path_buf(), source }
    }

    fn csv(path: &Path) -> impl FnOnce(csv::Error) -> RunError + '_ {
        move |e| RunError::Io { path: path.to_path_buf(), source: io::Error::other(e) }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Io { .. } => 3,
        }
    }
}

/// What one unit needs besides its (scenario, replicate) address.
#[derive(Debug, Clone)]
pub struct UnitContext {
    pub master_seed: u64,
    pub chains: ChainConfig,
    pub models: Vec<ModelSpec>,
    pub nuisance: NuisanceSetting,
    pub base: MsmParams,
    pub targets: DesignTargets,
}

impl UnitContext {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            master_seed: cfg.master_seed,
            chains: cfg.chains,
            models: cfg.models.iter().map(|m| ModelSpec::from_id(m).expect("validated model id")).collect(),
            nuisance: cfg.nuisance,
            base: MsmParams::base(),
            targets: DesignTargets::default(),
        }
    }

    pub fn spec(&self, scenario_id: usize) -> ScenarioSpec {
        self.nuisance.apply(scenario_grid()[scenario_id])
    }

    /// The dataset analysed in `scenario_id`. Both members of a with/without
    /// target-OS pair share one simulation; the without member withholds the
    /// target's OS estimate.
    pub fn dataset(&self, scenario_id: usize, replicate: usize) -> Result<MultiIndicationDataset, ScenarioError> {
        let spec = self.spec(scenario_id);
        let full = self.full_dataset(scenario_id, replicate)?;
        Ok(if spec.target_has_os { full } else { full.without_target_os() })
    }

    fn full_dataset(&self, scenario_id: usize, replicate: usize) -> Result<MultiIndicationDataset, ScenarioError> {
        let twin = with_os_twin(scenario_id);
        let spec = self.spec(scenario_id).with_target_os(true);
        let seed = DatasetSeed { master: self.master_seed, scenario_id: twin, replicate };
        build_dataset(&spec, seed, &self.base, &self.targets)
    }

    /// Fits every model of the context to one replicate.
    pub fn evaluate(&self, scenario_id: usize, replicate: usize) -> (UnitRecord, Option<MultiIndicationDataset>) {
        let start = Instant::now();
        let spec = self.spec(scenario_id);
        let (seed_master, rep) = (self.master_seed, replicate);
        let mut outcomes = Vec::new();
        let mut not_estimable = Vec::new();

        let full = match self.full_dataset(scenario_id, replicate) {
            Ok(d) => d,
            Err(e) => {
                for m in &self.models {
                    outcomes.push(failed(scenario_id, replicate, m, f64::NAN, None, e.to_string()));
                }
                let rec = UnitRecord {
                    scenario_id,
                    replicate,
                    outcomes,
                    not_estimable,
                    resimulated: 0,
                    seconds: start.elapsed().as_secs_f64(),
                };
                return (rec, None);
            }
        };

        // Reference SE: the independent common-tau model on the dataset with
        // target OS, fitted on the with-OS member's streams so both members
        // of a pair see the same reference.
        let stripped = full.without_target_os();
        let twin = with_os_twin(scenario_id);
        let mut full_cache = FitCache::new(&full, self.chains, move |key| {
            seed_for(seed_master, twin, rep, &StreamRole::Fit(key.into()))
        });
        let reference = ModelSpec::from_id("ip_tau").expect("reference model");
        let mut rng = seed_for(seed_master, twin, rep, &StreamRole::Compose(reference.id())).rng();
        let ref_sd = match predict_target(&reference, &mut full_cache, &mut rng) {
            Ok(p) if p.option2 => Some(p.sd),
            _ => None,
        };

        let mut own_cache;
        let cache = if spec.target_has_os {
            &mut full_cache
        } else {
            own_cache = FitCache::new(&stripped, self.chains, move |key| {
                seed_for(seed_master, scenario_id, rep, &StreamRole::Fit(key.into()))
            });
            &mut own_cache
        };
        let truth = full.truth;
        for m in &self.models {
            let mut rng = seed_for(seed_master, scenario_id, rep, &StreamRole::Compose(m.id())).rng();
            match predict_target(m, cache, &mut rng) {
                Ok(p) => outcomes.push(succeeded(scenario_id, replicate, m, truth, ref_sd, p)),
                Err(ModelError::NotEstimable(reason) | ModelError::NoData(reason)) => {
                    not_estimable.push(NotEstimable { model_id: m.id(), reason })
                }
                Err(e @ ModelError::Mcmc(_)) => {
                    outcomes.push(failed(scenario_id, replicate, m, truth, ref_sd, e.to_string()))
                }
            }
        }
        let data = cache.data().clone();
        let rec = UnitRecord {
            scenario_id,
            replicate,
            outcomes,
            not_estimable,
            resimulated: full.resimulated,
            seconds: start.elapsed().as_secs_f64(),
        };
        (rec, Some(data))
    }
}

fn succeeded(
    scenario_id: usize,
    replicate: usize,
    m: &ModelSpec,
    truth: f64,
    ref_sd: Option<f64>,
    p: TargetPrediction,
) -> ReplicateOutcome {
    ReplicateOutcome {
        scenario_id,
        replicate,
        model_id: m.id(),
        status: FitStatus::Ok,
        mean: Some(p.mean),
        sd: Some(p.sd),
        q025: Some(p.q025),
        q975: Some(p.q975),
        truth,
        option1: p.option1,
        option2: p.option2,
        ref_sd,
        message: String::new(),
    }
}

fn failed(
    scenario_id: usize,
    replicate: usize,
    m: &ModelSpec,
    truth: f64,
    ref_sd: Option<f64>,
    message: String,
) -> ReplicateOutcome {
    ReplicateOutcome {
        scenario_id,
        replicate,
        model_id: m.id(),
        status: FitStatus::Failed,
        mean: None,
        sd: None,
        q025: None,
        q975: None,
        truth,
        option1: false,
        option2: false,
        ref_sd,
        message,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelStatus {
    Ok,
    Failed,
    NotEstimable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitStatus {
    pub scenario_id: usize,
    pub replicate: usize,
    pub models: BTreeMap<String, ModelStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: RunStatus,
    pub code_version: String,
    pub config: RunIdentity,
    pub workers: usize,
    pub started_unix: u64,
    pub updated_unix: u64,
    pub wall_seconds: f64,
    pub units_total: usize,
    pub units_done: usize,
    pub units_resumed: usize,
    pub fits_failed: usize,
    pub not_estimable: usize,
    pub unit_seconds_mean: f64,
    pub unit_seconds_max: f64,
    pub error: Option<String>,
    pub completion: Vec<UnitStatus>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(RunError::io(path))?;
        serde_json::from_str(&text)
            .map_err(|e| RunError::Config(format!("unreadable manifest {}: {e}", path.display())))
    }
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outcomes: Vec<ReplicateOutcome>,
    pub metrics: Vec<MetricRow>,
    pub units: usize,
    pub units_resumed: usize,
    pub fits_failed: usize,
    pub not_estimable: usize,
    pub out: PathBuf,
}

impl RunSummary {
    /// 0 when every fit succeeded, 2 when some failed.
    pub fn exit_code(&self) -> i32 {
        if self.fits_failed > 0 {
            2
        } else {
            0
        }
    }
}

pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const SCENARIOS_FILE: &str = "scenarios.csv";

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    run_with_progress(cfg, |_, _, _| {})
}

/// Runs `cfg`, calling `progress(record, done, total)` after each unit.
pub fn run_with_progress(
    cfg: &RunConfig,
    progress: impl Fn(&UnitRecord, usize, usize) + Sync,
) -> Result<RunSummary, RunError> {
    let out = cfg.out.as_path();
    fs::create_dir_all(out).map_err(RunError::io(out))?;
    let manifest_path = out.join(MANIFEST_FILE);
    if cfg.resume && manifest_path.exists() {
        let prev = Manifest::load(&manifest_path)?;
        if prev.config != cfg.identity() {
            return Err(RunError::Config(
                "resume requested but the configuration differs from the interrupted run".into(),
            ));
        }
    }
    if cfg.dump_datasets {
        let d = out.join("datasets");
        fs::create_dir_all(&d).map_err(RunError::io(&d))?;
    }

    let journal_path = out.join(JOURNAL_FILE);
    let (journal, done) = Journal::open(&journal_path, cfg.resume).map_err(RunError::io(&journal_path))?;
    let units: Vec<(usize, usize)> =
        cfg.scenarios.iter().flat_map(|&s| (0..cfg.replicates).map(move |r| (s, r))).collect();
    let total = units.len();
    let resumed = done.len();
    let pending: Vec<(usize, usize)> = units.iter().copied().filter(|k| !done.contains_key(k)).collect();

    let started = Instant::now();
    let started_unix = unix_now();
    let mut manifest = Manifest {
        status: RunStatus::Running,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.identity(),
        workers: cfg.workers,
        started_unix,
        updated_unix: started_unix,
        wall_seconds: 0.0,
        units_total: total,
        units_done: resumed,
        units_resumed: resumed,
        fits_failed: 0,
        not_estimable: 0,
        unit_seconds_mean: 0.0,
        unit_seconds_max: 0.0,
        error: None,
        completion: Vec::new(),
    };
    fill_completion(&mut manifest, done.values());
    write_json(&manifest_path, &manifest)?;

    let ctx = UnitContext::new(cfg);
    let shared = Mutex::new((journal, done));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| RunError::Config(format!("cannot start worker pool: {e}")))?;
    let result: Result<(), RunError> = pool.install(|| {
        pending.par_iter().try_for_each(|&(s, r)| {
            let (rec, data) = ctx.evaluate(s, r);
            if let (true, Some(data)) = (cfg.dump_datasets, data) {
                dump_dataset(out, s, r, &data)?;
            }
            let mut guard = shared.lock().expect("journal lock");
            let (journal, done) = &mut *guard;
            journal.append(&rec).map_err(RunError::io(journal.path()))?;
            done.insert(rec.key(), rec);
            progress(&done[&(s, r)], done.len(), total);
            Ok(())
        })
    });
    let (_, done) = shared.into_inner().expect("journal lock");

    fill_completion(&mut manifest, done.values());
    manifest.wall_seconds = started.elapsed().as_secs_f64();
    manifest.updated_unix = unix_now();
    if let Err(e) = result {
        manifest.status = RunStatus::Aborted;
        manifest.error = Some(e.to_string());
        // Best effort: the journal already holds everything needed to resume.
        let _ = write_json(&manifest_path, &manifest);
        return Err(e);
    }

    let mut outcomes: Vec<ReplicateOutcome> = done.values().flat_map(|r| r.outcomes.iter().cloned()).collect();
    let order: BTreeMap<String, usize> = ModelSpec::all().iter().enumerate().map(|(i, m)| (m.id(), i)).collect();
    outcomes.sort_by_key(|o| (o.scenario_id, o.replicate, order[&o.model_id]));
    let metrics_rows = metrics::aggregate(&outcomes);

    write_outcomes_csv(&out.join(OUTCOMES_FILE), &outcomes)?;
    let metrics_path = out.join(METRICS_FILE);
    let f = File::create(&metrics_path).map_err(RunError::io(&metrics_path))?;
    metrics::write_metrics_csv(BufWriter::new(f), &metrics_rows).map_err(RunError::csv(&metrics_path))?;
    write_scenarios_csv(&out.join(SCENARIOS_FILE), &cfg.scenarios, &ctx)?;

    manifest.status = RunStatus::Complete;
    write_json(&manifest_path, &manifest)?;

    Ok(RunSummary {
        units: total,
        units_resumed: resumed,
        fits_failed: manifest.fits_failed,
        not_estimable: manifest.not_estimable,
        outcomes,
        metrics: metrics_rows,
        out: out.to_path_buf(),
    })
}

fn fill_completion<'a>(m: &mut Manifest, records: impl Iterator<Item = &'a UnitRecord>) {
    let mut completion = Vec::new();
    let (mut failed, mut ne, mut secs, mut max) = (0, 0, 0.0, 0.0f64);
    for r in records {
        let mut models = BTreeMap::new();
        for o in &r.outcomes {
            let st = match o.status {
                FitStatus::Ok => ModelStatus::Ok,
                FitStatus::Failed => {
                    failed += 1;
                    ModelStatus::Failed
                }
            };
            models.insert(o.model_id.clone(), st);
        }
        for n in &r.not_estimable {
            ne += 1;
            models.insert(n.model_id.clone(), ModelStatus::NotEstimable);
        }
        secs += r.seconds;
        max = max.max(r.seconds);
        completion.push(UnitStatus { scenario_id: r.scenario_id, replicate: r.replicate, models });
    }
    m.units_done = completion.len();
    m.fits_failed = failed;
    m.not_estimable = ne;
    m.unit_seconds_mean = if completion.is_empty() { 0.0 } else { secs / completion.len() as f64 };
    m.unit_seconds_max = max;
    m.completion = completion;
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| RunError::Io { path: path.into(), source: e.into() })?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text + "\n").map_err(RunError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(RunError::io(path))
}

pub fn write_outcomes_csv(path: &Path, outcomes: &[ReplicateOutcome]) -> Result<(), RunError> {
    let f = File::create(path).map_err(RunError::io(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    for o in outcomes {
        w.serialize(o).map_err(RunError::csv(path))?;
    }
    if outcomes.is_empty() {
        w.write_record(OUTCOME_HEADER).map_err(RunError::csv(path))?;
    }
    w.flush().map_err(RunError::io(path))
}

pub const OUTCOME_HEADER: [&str; 13] = [
    "scenario_id",
    "replicate",
    "model_id",
    "status",
    "mean",
    "sd",
    "q025",
    "q975",
    "truth",
    "option1",
    "option2",
    "ref_sd",
    "message",
];

pub fn read_outcomes_csv(path: &Path) -> Result<Vec<ReplicateOutcome>, RunError> {
    let mut r = csv::Reader::from_path(path).map_err(RunError::csv(path))?;
    r.deserialize().collect::<Result<Vec<_>, _>>().map_err(RunError::csv(path))
}

fn write_scenarios_csv(path: &Path, ids: &[usize], ctx: &UnitContext) -> Result<(), RunError> {
    let f = File::create(path).map_err(RunError::io(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    let header = ["scenario_id", "cv_between", "cv_within", "outlier", "size", "target_has_os", "nuisance_cv"];
    w.write_record(header).map_err(RunError::csv(path))?;
    for &id in ids {
        let s = ctx.spec(id);
        w.write_record([
            id.to_string(),
            s.cv_between.to_string(),
            s.cv_within.to_string(),
            s.outlier.as_str().to_string(),
            s.size.as_str().to_string(),
            s.target_has_os.to_string(),
            s.nuisance_cv.map(|c| c.to_string()).unwrap_or_default(),
        ])
        .map_err(RunError::csv(path))?;
    }
    w.flush().map_err(RunError::io(path))
}

fn dump_dataset(out: &Path, s: usize, r: usize, data: &MultiIndicationDataset) -> Result<(), RunError> {
    let path = out.join("datasets").join(format!("s{s:03}_r{r:04}.csv"));
    let f = File::create(&path).map_err(RunError::io(&path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    w.write_record(DATASET_HEADER).map_err(RunError::csv(&path))?;
    write_dataset_csv(&mut w, s, r, data).map_err(RunError::csv(&path))?;
    w.flush().map_err(RunError::io(&path))
}
