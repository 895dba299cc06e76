use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qcond_cli::{catalog_text, external_seed, run_path, RunOptions};

/// Runs a named simulation experiment from an INI config and writes CSV
/// tables plus metadata.json to the output directory.
#[derive(Parser, Debug)]
#[command(name = "qcond", version)]
struct Args {
    /// Experiment configuration (INI).
    #[arg(long, required_unless_present = "list")]
    config: Option<PathBuf>,

    /// Master seed; overrides QCOND_SEED and the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,

    /// Override a config value, e.g. --set measurement.k=0.5 (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,

    /// Print the experiment catalog and exit.
    #[arg(long)]
    list: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list {
        print!("{}", catalog_text());
        return ExitCode::SUCCESS;
    }
    let env = std::env::var("QCOND_SEED").ok();
    let result = external_seed(args.seed, env.as_deref()).and_then(|seed| {
        let opts = RunOptions { seed, overrides: args.overrides, workers: args.workers };
        run_path(args.config.as_deref().expect("clap enforces --config"), &args.out, &opts)
    });
    match result {
        Ok(report) => {
            println!("{}: wrote {} files to {}", report.experiment, report.files.len() + 1, args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
