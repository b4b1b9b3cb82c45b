use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use skewfit::commands::{compare_command, fit_command, simulate_command, study_command};
use skewfit::config::{Preset, RunConfig};
use skewfit::io::to_json;

#[derive(Parser)]
#[command(name = "skewfit", version, about = "Bayesian fitting and comparison of skew-t models by population Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from the [simulate] section and write it as CSV.
    Simulate(Common),
    /// Fit one model and write its report.
    Fit(Common),
    /// Fit all candidate models and report posterior model probabilities.
    Compare(Common),
    /// Repeat simulate + compare for each generating model.
    Study(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override particles and iterations with a named preset.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall time in fit reports (makes reports run-dependent).
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn load(&self) -> skewfit::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(PresetArg::Desk) = self.preset {
            cfg.apply_preset(Preset::Desk);
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        Ok(cfg)
    }
}

fn emit(cfg: &RunConfig, json: String) -> skewfit::Result<()> {
    match &cfg.output {
        Some(path) => std::fs::write(path, json)?,
        None => print!("{json}"),
    }
    Ok(())
}

fn run(cli: Cli) -> skewfit::Result<()> {
    let start = Instant::now();
    match cli.command {
        Command::Simulate(args) => {
            let mut cfg = args.load()?;
            if cfg.output.is_none() {
                cfg.output = Some(PathBuf::from("simulated.csv"));
            }
            let data = simulate_command(&cfg)?;
            log::info!("wrote {} rows to {}", data.n(), cfg.output.as_ref().unwrap().display());
        }
        Command::Fit(args) => {
            let cfg = args.load()?;
            let mut report = fit_command(&cfg)?;
            if args.timing {
                report.wall_time_secs = Some(start.elapsed().as_secs_f64());
            }
            emit(&cfg, to_json(&report)?)?;
        }
        Command::Compare(args) => {
            let cfg = args.load()?;
            let mut report = compare_command(&cfg)?;
            if args.timing {
                let secs = start.elapsed().as_secs_f64();
                report.fits.iter_mut().for_each(|f| f.wall_time_secs = Some(secs));
            }
            emit(&cfg, to_json(&report)?)?;
        }
        Command::Study(args) => {
            let cfg = args.load()?;
            let report = study_command(&cfg)?;
            emit(&cfg, to_json(&report)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
