use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use topoflock_cli::config::{parse_config, RunConfig, REGISTRY};
use topoflock_cli::runner;

#[derive(Parser)]
#[command(name = "topoflock", version, about = "Rank-based flocking simulator")]
struct Cli {
    /// Suppress per-run progress lines.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration file and write its artifacts.
    Run {
        /// TOML run configuration.
        config: PathBuf,
        /// Directory for the artifacts (overrides the config).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every configuration matching a glob, each into its own
    /// subdirectory named after the config file.
    Sweep {
        /// Glob over TOML configuration files.
        pattern: String,
        /// Base directory; each run lands in `<base>/<config-stem>/`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run seed applied to every configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the built-in scenarios with their models and parameters.
    ListScenarios,
}

fn load_config(path: &PathBuf) -> Result<RunConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run_one(
    path: &PathBuf,
    output_dir: Option<&PathBuf>,
    seed: Option<u64>,
    quiet: bool,
) -> Result<()> {
    let mut config = load_config(path)?;
    if let Some(dir) = output_dir {
        config.output_dir = Some(dir.display().to_string());
    }
    if let Some(seed) = seed {
        config.seed = Some(seed);
    }
    runner::execute(&config, quiet).with_context(|| format!("running {}", path.display()))?;
    Ok(())
}

fn sweep(
    pattern: &str,
    output_dir: Option<&PathBuf>,
    seed: Option<u64>,
    quiet: bool,
) -> Result<()> {
    let base = output_dir.cloned().unwrap_or_else(|| PathBuf::from("out"));
    let mut paths: Vec<PathBuf> =
        glob::glob(pattern).context("invalid glob pattern")?.filter_map(|p| p.ok()).collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no configuration files match \"{pattern}\"");
    }
    let mut failures = Vec::new();
    for path in &paths {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string());
        let dir = base.join(stem);
        if let Err(err) = run_one(path, Some(&dir), seed, quiet) {
            eprintln!("error: {err:#}");
            failures.push(path.display().to_string());
        }
    }
    if !failures.is_empty() {
        bail!("{} of {} runs failed: {}", failures.len(), paths.len(), failures.join(", "));
    }
    Ok(())
}

fn list_scenarios() {
    for info in REGISTRY {
        let models: Vec<&str> = info.models.iter().map(|m| m.name()).collect();
        println!("{}", info.name);
        println!("  {}", info.summary);
        println!("  models: {} (default {})", models.join(", "), models[0]);
        if !info.params.is_empty() {
            println!("  parameters: {}", info.params.join(", "));
        }
        println!("  dt = {}, t_end = {}", info.default_dt, info.default_t_end);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, output_dir, seed } => {
            run_one(config, output_dir.as_ref(), *seed, cli.quiet)
        }
        Command::Sweep { pattern, output_dir, seed } => {
            sweep(pattern, output_dir.as_ref(), *seed, cli.quiet)
        }
        Command::ListScenarios => {
            list_scenarios();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
