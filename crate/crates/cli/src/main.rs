use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use mixrg_cli::config::FieldError;
use mixrg_cli::output::{write_atomic, write_sweep};
use mixrg_cli::{run, verify, ConfigError, Experiment, ExperimentConfig, RawConfig, Suite};

const EXIT_INVALID: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "mixrg", version, about = "Renormalization and decoding experiments on noisy toric-code states")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides any config key, e.g. `--set grid.p=0.05,0.1`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate a one-parameter flow map and record fidelities.
    Flow,
    /// Dense-state identity checks.
    Lab {
        #[command(subcommand)]
        action: LabAction,
    },
    /// Anyon density under repeated renormalization.
    RgDecoder {
        #[command(subcommand)]
        action: SweepAction,
    },
    /// Agreement of truncated and global matching on a block.
    Tmwpm {
        #[command(subcommand)]
        action: SweepAction,
    },
    /// Logical failure rate of the global matching decoder.
    Decode {
        #[command(subcommand)]
        action: SweepAction,
    },
    /// Run a check suite: lab, matching-oracle or all.
    Verify {
        #[arg(default_value = "all")]
        suite: Suite,
    },
}

#[derive(Subcommand)]
enum LabAction {
    Verify,
}

#[derive(Subcommand)]
enum SweepAction {
    Sweep,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_INVALID),
            };
        }
    };
    let outcome = match cli.command {
        Command::Flow => sweep(&cli.common, Experiment::Flow),
        Command::RgDecoder { .. } => sweep(&cli.common, Experiment::RgDecoder),
        Command::Tmwpm { .. } => sweep(&cli.common, Experiment::Tmwpm),
        Command::Decode { .. } => sweep(&cli.common, Experiment::Decode),
        Command::Lab { .. } => run_suite(&cli.common, Suite::Lab),
        Command::Verify { suite } => run_suite(&cli.common, suite),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn field(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(vec![FieldError {
        field: field.to_string(),
        message: message.into(),
    }])
}

fn load(common: &Common, experiment: Experiment) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = match &common.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    raw.apply_env(std::env::vars())?;
    for item in &common.set {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| field("--set", format!("expected KEY=VALUE, found `{item}`")))?;
        raw.set(key.trim(), value.trim())?;
    }
    match raw.get("experiment") {
        None => raw.set("experiment", experiment.name())?,
        Some(name) if name == experiment.name() => {}
        Some(name) => return Err(field("experiment", format!("config is for `{name}`, subcommand runs `{}`", experiment.name()))),
    }
    if let Some(seed) = common.seed {
        raw.set("seed", &seed.to_string())?;
    }
    if let Some(workers) = common.workers {
        raw.set("workers", &workers.to_string())?;
    }
    if let Some(out) = &common.out {
        raw.set("out", &out.display().to_string())?;
    }
    ExperimentConfig::from_raw(&raw)
}

fn sweep(common: &Common, experiment: Experiment) -> Result<ExitCode, CliError> {
    let config = load(common, experiment)?;
    let result = run(&config);
    let artifacts = write_sweep(&result, &config.out).map_err(|source| CliError::Write {
        path: config.out.clone(),
        source,
    })?;
    for e in &result.errors {
        eprintln!("cell {} failed: {}", e.cell, e.message);
    }
    for (name, value) in &result.estimates {
        eprintln!("{name} = {value:.6}");
    }
    eprintln!(
        "{} rows from {} cells in {:.1} s -> {}, {}",
        result.rows.len(),
        result.cells,
        result.metadata.wall_time_s,
        artifacts.csv.display(),
        artifacts.json.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_suite(common: &Common, suite: Suite) -> Result<ExitCode, CliError> {
    let report = verify(suite);
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    if let Some(dir) = &common.out {
        let path = Path::new(dir).join(format!("verify-{}.json", suite.name()));
        write_atomic(&path, &json).map_err(|source| CliError::Write { path, source })?;
    }
    println!("{}", String::from_utf8_lossy(&json).trim_end());
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    })
}
