use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vacpump_cli::config::{self, ConfigSource, Format};
use vacpump_cli::{export, presets, run, CliError, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "vacpump", version, about = "Phonon pumping by a modulated ultrastrong-coupling vacuum")]
struct Cli {
    /// Worker threads for sweep points (default: all cores; env VACPUMP_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its outputs.
    Run {
        /// TOML config; optional when --preset is given.
        config: Option<PathBuf>,
        /// Start from a built-in preset; the config file and --set apply on top.
        #[arg(long)]
        preset: Option<String>,
        /// Override a config key, e.g. --set params.g=1e-3 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Output directory (overrides output.directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated formats (overrides output.formats).
        #[arg(long, value_delimiter = ',')]
        format: Option<Vec<String>>,
    },
    /// Built-in presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Check a config and print its effective form.
    Validate {
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names.
    List,
    /// Print a preset as TOML.
    Show { name: String },
}

fn workers(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV}: `{v}` is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = workers(cli.workers)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    match cli.command {
        Command::Presets { action: PresetAction::List } => {
            for (name, summary) in presets::summaries() {
                println!("{name:<8} {summary}");
            }
        }
        Command::Presets { action: PresetAction::Show { name } } => {
            let c = presets::preset(&name)
                .ok_or_else(|| CliError::Config(format!("unknown preset `{name}`; available: {}", presets::names().join(", "))))?;
            print!("{}", c.to_toml());
        }
        Command::Validate { config, preset, sets } => {
            let c = config::load(&ConfigSource { path: config.as_deref(), preset: preset.as_deref(), sets: &sets })?;
            print!("{}", c.resolved()?.to_toml());
        }
        Command::Run { config, preset, sets, out, format } => {
            let mut c = config::load(&ConfigSource { path: config.as_deref(), preset: preset.as_deref(), sets: &sets })?;
            if let Some(dir) = out {
                c.output.directory = dir;
            }
            if let Some(f) = format {
                c.output.formats = f.iter().map(|s| s.parse::<Format>()).collect::<Result<_, _>>()?;
                c.validate()?;
            }
            let record = run(&c)?;
            for e in &record.errors {
                log::warn!("{e}");
            }
            let files = export::export(&record, &record.config.output.directory, &record.config.output.formats)?;
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
