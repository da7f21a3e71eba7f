use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use multind_core::metrics;
use multind_core::msm::{
    self, aggregate_indication_means, calibrate_from_medians, calibrate_reported, read_calibration_csv, MsmParams,
};
use multind_core::runner::{
    self, ChainOverrides, ConfigFile, NuisanceSetting, Profile, RunConfig, RunError, ScenarioFilter, UnitContext,
};
use multind_core::scenario::{scenario_grid, write_dataset_csv, DATASET_HEADER};
use multind_core::trial::{DesignTargets, StudyDesign};

#[derive(Parser)]
#[command(name = "multind", version, about = "Multi-indication evidence synthesis simulation study")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate datasets, fit models and write outcomes, metrics and a manifest.
    Run(RunArgs),
    /// List scenarios and their factor levels.
    Grid {
        /// Scenario filter, as for `run --scenarios`.
        #[arg(long, default_value = "all")]
        scenarios: String,
    },
    /// Back-solve illness-death rates from control-arm medians.
    Calibrate {
        /// CSV with columns cancer_type,publication,line,median_pfs,median_os.
        csv: PathBuf,
        #[arg(long, default_value_t = msm::DEFAULT_LAMBDA02)]
        lambda02: f64,
        /// Round intermediate rates to this many decimals, as in a printed table.
        #[arg(long)]
        decimals: Option<i32>,
    },
    /// Write the study-level dataset of one (scenario, replicate).
    Dataset {
        #[arg(long)]
        scenario: usize,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        #[arg(long, default_value_t = runner::DEFAULT_SEED)]
        seed: u64,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Design and true estimand for one set of illness-death parameters.
    Estimand {
        #[arg(long, default_value_t = 0.6)]
        m: f64,
        #[arg(long)]
        lambda01: Option<f64>,
        #[arg(long)]
        lambda02: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Recompute metrics.csv from an outcomes.csv.
    Metrics {
        outcomes: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `all`, ids such as `0,4,10-19`, or predicates such as
    /// `size=large;outlier=none;target_os=true;cv_b=0,0.07`.
    #[arg(long)]
    scenarios: Option<String>,
    /// Comma-separated model ids.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Continue an interrupted run in the same output directory.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Also write each analysed dataset under `datasets/`.
    #[arg(long)]
    dump_datasets: bool,
    /// Nuisance-rate heterogeneity: `off`, `preset` or a CV.
    #[arg(long)]
    nuisance: Option<String>,
    /// Suppress per-unit progress on standard error.
    #[arg(long, short)]
    quiet: bool,
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, RunError> {
        let base = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let chains = ChainOverrides {
            n_chains: self.chains,
            burn_in: self.burn_in,
            samples: self.samples,
            thin: self.thin,
            ..Default::default()
        };
        let nuisance = match self.nuisance.as_deref() {
            None => None,
            Some("off") => Some(NuisanceSetting::Off),
            Some("preset") => Some(NuisanceSetting::OutlierTargetPreset),
            Some(cv) => Some(NuisanceSetting::Cv(
                cv.parse().map_err(|_| RunError::Config(format!("bad --nuisance value `{cv}`")))?,
            )),
        };
        let flags = ConfigFile {
            profile: self.profile.map(|p| match p {
                ProfileArg::Desk => Profile::Desk,
                ProfileArg::Paper => Profile::Paper,
            }),
            master_seed: self.seed,
            replicates: self.replicates,
            scenarios: self.scenarios.as_deref().map(ScenarioFilter::parse).transpose()?,
            models: self.models.clone(),
            chains: Some(chains),
            out: self.out.clone(),
            workers: self.workers,
            resume: self.resume.then_some(true),
            dump_datasets: self.dump_datasets.then_some(true),
            nuisance,
        };
        RunConfig::from_file(base.merge(flags))
    }
}

fn run(args: &RunArgs) -> i32 {
    let cfg = match args.to_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let quiet = args.quiet;
    let result = runner::run_with_progress(&cfg, |rec, done, total| {
        if !quiet {
            eprintln!(
                "[{done}/{total}] scenario {} replicate {}: {} fits in {:.1}s",
                rec.scenario_id,
                rec.replicate,
                rec.outcomes.len(),
                rec.seconds
            );
        }
    });
    match result {
        Ok(sum) => {
            eprintln!(
                "{} units ({} resumed), {} outcome rows, {} not estimable, {} failed fits -> {}",
                sum.units,
                sum.units_resumed,
                sum.outcomes.len(),
                sum.not_estimable,
                sum.fits_failed,
                sum.out.display()
            );
            sum.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn grid(filter: &str) -> Result<()> {
    let f = ScenarioFilter::parse(filter)?;
    let grid = scenario_grid();
    let mut out = csv::Writer::from_writer(io::stdout().lock());
    out.write_record(["scenario_id", "cv_between", "cv_within", "outlier", "size", "target_has_os"])?;
    for id in f.resolve() {
        let s = grid[id];
        out.write_record([
            id.to_string(),
            s.cv_between.to_string(),
            s.cv_within.to_string(),
            s.outlier.as_str().into(),
            s.size.as_str().into(),
            s.target_has_os.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn calibrate(path: &Path, lambda02: f64, decimals: Option<i32>) -> Result<()> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let rows = read_calibration_csv(file)?;
    let mut out = csv::Writer::from_writer(io::stdout().lock());
    out.write_record(["cancer_type", "publication", "lambda01", "lambda12", "delta"])?;
    let mut agg = Vec::new();
    for r in &rows {
        let c = match decimals {
            Some(d) => calibrate_reported(r, lambda02, d)?,
            None => calibrate_from_medians(r, lambda02)?,
        };
        out.write_record([
            r.cancer_type.clone(),
            r.publication.clone(),
            format!("{:.4}", c.lambda01),
            format!("{:.4}", c.lambda12),
            format!("{:.4}", c.delta),
        ])?;
        agg.push((r.cancer_type.clone(), c.lambda01, c.delta));
    }
    out.flush()?;
    let (l01, delta) = aggregate_indication_means(&agg)?;
    eprintln!("indication-weighted geometric means: lambda01 = {l01:.4}, delta = {delta:.4}");
    Ok(())
}

fn dataset(scenario: usize, replicate: usize, seed: u64, out: Option<&PathBuf>) -> Result<()> {
    if scenario >= scenario_grid().len() {
        bail!("scenario id {scenario} out of range");
    }
    let cfg = RunConfig::from_file(ConfigFile { master_seed: Some(seed), workers: Some(1), ..Default::default() })?;
    let data = UnitContext::new(&cfg).dataset(scenario, replicate)?;
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(DATASET_HEADER)?;
    write_dataset_csv(&mut w, scenario, replicate, &data)?;
    w.flush()?;
    Ok(())
}

fn estimand(m: f64, lambda01: Option<f64>, lambda02: Option<f64>, delta: Option<f64>) -> Result<()> {
    let b = MsmParams::base();
    let p =
        MsmParams::new(lambda01.unwrap_or(b.lambda01), lambda02.unwrap_or(b.lambda02), delta.unwrap_or(b.delta), m)?;
    let targets = DesignTargets::default();
    let design = StudyDesign::for_control(&p.with_m(1.0), &targets)?;
    let value = msm::true_estimand(&p, &msm::EstimandSpec::new(design.followup));
    println!("lambda01 = {}, lambda02 = {}, delta = {}, m = {}", p.lambda01, p.lambda02, p.delta, p.m);
    println!("follow-up (months)   {:.4}", design.followup);
    println!("patients per study   {}", design.n_total);
    println!("log HR, PFS          {:.6}", msm::lhr_pfs(&p));
    println!("true OS estimand     {value:.6}");
    Ok(())
}

fn recompute_metrics(outcomes: &Path, out: Option<&PathBuf>) -> Result<()> {
    let rows = metrics::aggregate(&runner::read_outcomes_csv(outcomes)?);
    match out {
        Some(p) => metrics::write_metrics_csv(BufWriter::new(File::create(p)?), &rows)?,
        None => metrics::write_metrics_csv(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => return ExitCode::from(run(args) as u8),
        Command::Grid { scenarios } => grid(scenarios),
        Command::Calibrate { csv, lambda02, decimals } => calibrate(csv, *lambda02, *decimals),
        Command::Dataset { scenario, replicate, seed, out } => dataset(*scenario, *replicate, *seed, out.as_ref()),
        Command::Estimand { m, lambda01, lambda02, delta } => estimand(*m, *lambda01, *lambda02, *delta),
        Command::Metrics { outcomes, out } => recompute_metrics(outcomes, out.as_ref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
