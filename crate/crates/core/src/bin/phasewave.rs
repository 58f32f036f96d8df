use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phasewave::experiment::{list_presets, preset, run, ExperimentConfig, RunOptions, RunStatus};
use phasewave::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_ORACLE: u8 = 4;

#[derive(Parser)]
#[command(name = "phasewave", version, about = "Phase-shifted network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run(RunArgs),
    /// Print the embedded presets.
    ListPresets,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Name of an embedded preset.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Treat an under-resolved reference grid as an error.
    #[arg(long)]
    strict: bool,
    #[arg(long, short)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListPresets => match list_presets() {
            Ok(table) => {
                print!("{table}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Run(args) => run_cmd(args),
    }
}

fn run_cmd(args: RunArgs) -> ExitCode {
    let cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::from_file(path),
        (None, Some(name)) => preset(name),
        (None, None) => unreachable!("clap requires one of --config / --preset"),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let opts = RunOptions {
        seed: args.seed,
        epochs: args.epochs,
        out_dir: args.out_dir,
        threads: args.threads,
        strict: args.strict,
        quiet: args.quiet,
    };
    match run(&cfg, &opts) {
        Ok(report) => {
            let r = &report.record;
            for m in &r.metrics {
                println!("{:<32} {:<14.6e} [{}]", m.name, m.value, m.oracle);
            }
            for c in &r.checks {
                let bound = match (c.min, c.max) {
                    (Some(lo), Some(hi)) => format!("in [{lo}, {hi}]"),
                    (Some(lo), None) => format!(">= {lo}"),
                    (None, Some(hi)) => format!("<= {hi}"),
                    (None, None) => String::new(),
                };
                println!(
                    "check {} {}: {}",
                    c.metric,
                    bound,
                    if c.passed { "pass" } else { "FAIL" }
                );
            }
            println!("artifacts in {}", report.out_dir.display());
            match r.status {
                RunStatus::Ok => ExitCode::SUCCESS,
                RunStatus::Diverged => {
                    for n in &r.notes {
                        eprintln!("{n}");
                    }
                    ExitCode::from(EXIT_DIVERGED)
                }
                RunStatus::CheckFailed => ExitCode::from(EXIT_ORACLE),
            }
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
