use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use zrplab::harness::{run_file, Experiment, ExperimentConfig, HarnessError, RunOptions};

/// Zero-range process hydrodynamics lab.
#[derive(Debug, Parser)]
#[command(name = "zrplab", version)]
struct Cli {
    /// One of: phi, simulate, hydro-check, supex-check, two-block,
    /// counterexample, solve-skeleton, rate, roundtrip.
    experiment: String,
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Run directory; overrides the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; overrides the config's `seeds`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads, 0 for one per core.
    #[arg(long)]
    threads: Option<usize>,
}

fn main_inner(cli: Cli) -> Result<(), HarnessError> {
    let experiment: Experiment = cli.experiment.parse()?;
    let config = ExperimentConfig::load(&cli.config)?;
    if config.experiment != experiment {
        return Err(HarnessError::Config(format!(
            "{} is a `{}` config, not `{experiment}`",
            cli.config.display(),
            config.experiment
        )));
    }
    let opts = RunOptions { out_dir: cli.out, seeds: cli.seeds, threads: cli.threads };
    let record = run_file(&cli.config, &opts)?;
    println!("{}", record.out_dir.display());
    println!("{:#}", record.summary);
    eprintln!("done in {:.2}s", record.wall_clock_seconds);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zrplab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
