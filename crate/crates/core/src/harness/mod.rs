//! Experiment orchestration: TOML configs, seeded ensembles on a worker
//! pool, run directories with CSV/JSON/binary artifacts and a hashed
//! MANIFEST.
//!
//! Ensembles map over seeds in parallel and collect in seed order, so every
//! reduction sees the same operands in the same order whatever the thread
//! count.

mod config;
mod experiments;
mod io;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    ConventionFlags, CounterexampleSection, DirichletSection, Experiment, ExperimentConfig, HydroSection, ModelGrid,
    PhiSection, PotentialSpec, RateModelSpec, RateSection, RoundtripSection, SimulateSection, SkeletonSection,
    SupexSection, Tolerances, TwoBlockSection,
};
pub use experiments::{random_potential, ExperimentOutput};
pub use io::{
    decode_snapshots, encode_snapshots, manifest_text, resolve_out_dir, sha256_hex, verify_manifest, Artifact,
    ArtifactSet, PlotSeries, MANIFEST_NAME,
};

use crate::lattice_sim::SimError;
use crate::rate_functional::RateFnError;
use crate::rates::RateError;
use crate::skeleton_pde::PdeError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
}

impl HarnessError {
    /// 2 for anything the user can fix in the config (including an unusable
    /// output directory), 3 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io(_) => 2,
            HarnessError::Numerical(_) => 3,
        }
    }
}

impl From<RateError> for HarnessError {
    fn from(e: RateError) -> Self {
        match e {
            RateError::InvalidRate(_) | RateError::InvalidArgument(_) | RateError::Domain(_) => {
                HarnessError::Config(e.to_string())
            }
            _ => HarnessError::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Rate(r) => r.into(),
            SimError::Overflow(_) => HarnessError::Numerical(e.to_string()),
            _ => HarnessError::Config(e.to_string()),
        }
    }
}

impl From<PdeError> for HarnessError {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::Rate(r) => r.into(),
            PdeError::InvalidArgument(_) => HarnessError::Config(e.to_string()),
            _ => HarnessError::Numerical(e.to_string()),
        }
    }
}

impl From<RateFnError> for HarnessError {
    fn from(e: RateFnError) -> Self {
        match e {
            RateFnError::Pde(p) => p.into(),
            RateFnError::Rate(r) => r.into(),
            RateFnError::InvalidArgument(_) => HarnessError::Config(e.to_string()),
            _ => HarnessError::Numerical(e.to_string()),
        }
    }
}

/// SplitMix64 of `(base, stream)`: independent seeds for sub-streams.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_seconds: f64,
    pub versions: BTreeMap<String, String>,
    /// Deterministic given config and seeds.
    pub summary: serde_json::Value,
    pub plots: Vec<PlotSeries>,
}

/// Overrides applied on top of a loaded config.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub threads: Option<usize>,
}

/// Runs the experiment and returns its outputs without touching the disk.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    match config.experiment {
        Experiment::Phi => experiments::phi(config),
        Experiment::Simulate => experiments::simulate_ensemble(config, &pool),
        Experiment::HydroCheck => experiments::hydro_check(config, &pool),
        Experiment::SupexCheck => experiments::supex_check(config, &pool),
        Experiment::TwoBlock => experiments::two_block(config, &pool),
        Experiment::Counterexample => experiments::counterexample(config),
        Experiment::SolveSkeleton => experiments::solve_skeleton_run(config),
        Experiment::Rate => experiments::rate(config),
        Experiment::Roundtrip => experiments::roundtrip(config, &pool),
    }
}

/// Plot-ready text files for the record's series.
pub fn emit_plot_data(record: &RunRecord) -> ArtifactSet {
    let mut set = ArtifactSet::new();
    for p in &record.plots {
        set.add(p.file_name(), p.render());
    }
    set
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>, HarnessError> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| HarnessError::Io(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

/// Runs `config` and writes `config.toml`, `summary.json`, the
/// experiment's artifacts, plot files, `run.json` and `MANIFEST` into the
/// run directory.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunRecord, HarnessError> {
    let mut config = config.clone();
    if let Some(s) = &opts.seeds {
        config.seeds = s.clone();
    }
    if let Some(t) = opts.threads {
        config.threads = t;
    }
    let out_dir = resolve_out_dir(opts.out_dir.as_deref(), config.out_dir.as_deref(), config.experiment.as_str());
    std::fs::create_dir_all(&out_dir).map_err(|e| io::io_err(&out_dir, e))?;
    let start = Instant::now();
    let out = execute(&config)?;
    let wall = start.elapsed().as_secs_f64();
    let mut versions = BTreeMap::new();
    versions.insert("zrplab".to_string(), env!("CARGO_PKG_VERSION").to_string());
    let mut record = RunRecord {
        config: config.clone(),
        out_dir: out_dir.clone(),
        artifacts: Vec::new(),
        wall_clock_seconds: wall,
        versions,
        summary: out.summary,
        plots: out.plots,
    };
    let mut files = out.artifacts;
    files.add("config.toml", config.to_toml_string()?);
    files.add("summary.json", to_json(&record.summary)?);
    let plots = emit_plot_data(&record);
    for path in plots.paths() {
        files.add(path.to_string(), plots.get(path).expect("listed").to_vec());
    }
    let mut artifacts = files.write_all(&out_dir)?;
    record.artifacts = artifacts.clone();
    let run_json = to_json(&record)?;
    let run_path = out_dir.join("run.json");
    std::fs::write(&run_path, &run_json).map_err(|e| io::io_err(&run_path, e))?;
    artifacts.push(Artifact { path: "run.json".into(), sha256: sha256_hex(&run_json), bytes: run_json.len() as u64 });
    let manifest = manifest_text(&artifacts);
    let mpath = out_dir.join(MANIFEST_NAME);
    std::fs::write(&mpath, manifest).map_err(|e| io::io_err(&mpath, e))?;
    record.artifacts = artifacts;
    Ok(record)
}

/// Loads a config file and runs it.
pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunRecord, HarnessError> {
    run(&ExperimentConfig::load(path)?, opts)
}
