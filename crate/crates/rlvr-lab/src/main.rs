//! Command-line entry point: train runs from config files, compare finished
//! runs, and materialize preset config families.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rlvr_lab::compare::{compare_to_file, CompareError};
use rlvr_lab::config::ExperimentConfig;
use rlvr_lab::presets::preset;
use rlvr_lab::runner::{run_to_dir, RunError};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "rlvr-lab", about = "Desk-scale RLVR advantage-shaping laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write run artifacts.
    Train {
        /// Path to a TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate finished run directories into one comparison table.
    Compare {
        /// Two or more run directories.
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a preset's resolved config files.
    Preset {
        /// Preset family name.
        name: String,
        /// Directory for the emitted config files.
        #[arg(long)]
        out: PathBuf,
    },
}

fn train(config_path: &PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), u8> {
    let body = fs::read_to_string(config_path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", config_path.display());
        EXIT_IO
    })?;
    let mut config = ExperimentConfig::from_toml(&body).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    if let Some(seed) = seed {
        config.run.seeds = vec![seed];
    }
    if let Some(out) = out {
        config.run.output_dir = out.display().to_string();
    }
    let out_root = PathBuf::from(&config.run.output_dir);
    for &seed in &config.run.seeds.clone() {
        let dir = out_root.join(format!("{}-seed{}", config.run.name, seed));
        run_to_dir(&config, seed, &dir).map_err(|e| match e {
            RunError::Config(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
            RunError::Io { .. } => {
                eprintln!("error: {e}");
                EXIT_IO
            }
        })?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn run_compare(dirs: &[PathBuf], out: &PathBuf) -> Result<(), u8> {
    compare_to_file(dirs, out).map_err(|e| {
        eprintln!("error: {e}");
        match e {
            CompareError::Io { .. } => EXIT_IO,
            _ => EXIT_CONFIG,
        }
    })?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run_preset(name: &str, out: &PathBuf) -> Result<(), u8> {
    let family = preset(name).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    fs::create_dir_all(out).map_err(|e| {
        eprintln!("error: cannot create {}: {e}", out.display());
        EXIT_IO
    })?;
    for config in family {
        let path = out.join(format!("{}.toml", config.run.name));
        fs::write(&path, config.to_toml()).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", path.display());
            EXIT_IO
        })?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train { config, seed, out } => train(config, *seed, out.clone()),
        Command::Compare { dirs, out } => run_compare(dirs, out),
        Command::Preset { name, out } => run_preset(name, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
