//! Batch CLI over the experiment layer.
//!
//! Exit codes: 0 success, 1 configuration problem (unreadable or invalid
//! config, bad CLI input), 2 model or artifact failure at run time.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coex::experiment::{
    self, compare_files, diagnostics, fit_table_csv, parse_config, STANDARD_FIT_RADII_M,
};

/// Directory artifacts land in unless `--out-dir` overrides it.
const OUT_DIR_ENV: &str = "COEX_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "coex",
    about = "Broadcast-delivery experiments: analytical sweeps, slot-level simulation, CSV artifacts",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a scenario config and write its CSV artifacts.
    Run(RunArgs),
    /// Check a scenario config and list every problem found.
    Validate { config: PathBuf },
    /// Print inverse-area fit coefficients as CSV.
    Fit(FitArgs),
    /// Join an analytical CSV and a Monte Carlo CSV into a comparison table.
    Compare { analytical: PathBuf, montecarlo: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory; defaults to $COEX_OUT_DIR, then the working directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Disc radius in meters.
    #[arg(long, required_unless_present = "all")]
    radius: Option<f64>,
    /// Emit the whole standard radius ladder instead.
    #[arg(long)]
    all: bool,
}

fn read_config(path: &Path) -> Result<experiment::ScenarioConfig, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read {}: {e}", path.display());
        ExitCode::from(1)
    })?;
    parse_config(&text).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(1)
    })
}

fn run(args: &RunArgs) -> ExitCode {
    let cfg = match read_config(&args.config) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };
    let problems = diagnostics(&cfg);
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("{}: {p}", args.config.display());
        }
        return ExitCode::from(1);
    }
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    match experiment::run(&cfg, &out_dir) {
        Ok(artifacts) => {
            println!("{}", artifacts.analytical.display());
            for path in [&artifacts.montecarlo, &artifacts.comparison, &artifacts.fit_table]
                .into_iter()
                .flatten()
            {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(2)
        }
    }
}

fn validate(config: &Path) -> ExitCode {
    let cfg = match read_config(config) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };
    let problems = diagnostics(&cfg);
    if problems.is_empty() {
        println!("{}: ok", config.display());
        return ExitCode::SUCCESS;
    }
    for p in &problems {
        println!("{}: {p}", config.display());
    }
    ExitCode::from(1)
}

fn fit(args: &FitArgs) -> ExitCode {
    let radii: Vec<f64> = if args.all {
        STANDARD_FIT_RADII_M.to_vec()
    } else {
        vec![args.radius.expect("clap enforces --radius unless --all")]
    };
    match fit_table_csv(&radii) {
        Ok(csv) => {
            print!("{csv}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fit failed: {e}");
            ExitCode::from(2)
        }
    }
}

fn compare(analytical: &Path, montecarlo: &Path) -> ExitCode {
    match compare_files(analytical, montecarlo) {
        Ok(csv) => {
            print!("{csv}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("compare failed: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(&args),
        Command::Validate { config } => validate(&config),
        Command::Fit(args) => fit(&args),
        Command::Compare { analytical, montecarlo } => compare(&analytical, &montecarlo),
    }
}
