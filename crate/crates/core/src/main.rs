use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use eplnet::experiment::{run_experiment, write_report, Command, DatasetSource, ExperimentConfig};
use eplnet::modulation::NeuromodSchedule;
use eplnet::Error;

/// Runs one experiment protocol and writes its metric tables, rasters and manifest.
#[derive(Debug, Parser)]
#[command(name = "eplnet", version)]
struct Cli {
    /// train-test, sweep-noise, neuromod, prime, benchmark, continuous or fewshot
    command: String,
    /// TOML experiment config; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset manifest path, or `synthetic`
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    noise_p: Option<f64>,
    /// Trials per odor per sweep point
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    held_noise: Option<bool>,
    /// Five comma-separated threshold factors
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
    #[arg(long)]
    prime_fraction: Option<f64>,
    /// Run trials on one thread
    #[arg(long)]
    sequential: bool,
}

fn configure(cli: &Cli) -> eplnet::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.dataset.as_deref() {
        Some("synthetic") => {
            if !matches!(cfg.dataset, DatasetSource::Synthetic(_)) {
                cfg.dataset = DatasetSource::default();
            }
        }
        Some(path) => cfg.dataset = DatasetSource::Manifest { path: path.into() },
        None => {}
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if cli.noise_p.is_some() {
        cfg.noise_p = cli.noise_p;
    }
    if let Some(n) = cli.trials {
        cfg.trials = n;
    }
    if let Some(h) = cli.held_noise {
        cfg.held_noise = h;
    }
    if let Some(s) = &cli.schedule {
        cfg.schedule = NeuromodSchedule::new(s)?;
    }
    if cli.prime_fraction.is_some() {
        cfg.prime_fraction = cli.prime_fraction;
    }
    if cli.sequential {
        cfg.exec = eplnet::parallel::ExecMode::Sequential;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> eplnet::Result<()> {
    let command: Command = cli.command.parse()?;
    let cfg = configure(cli)?;
    let report = run_experiment(&cfg, command)?;
    write_report(&report, &cfg.out)?;
    if let Some(acc) = report.metric("accuracy").or_else(|| report.metrics.first()) {
        print!("{}", acc.to_csv()?);
    }
    eprintln!("wrote {} (config {})", cfg.out.display(), &report.config_hash[..12]);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code().clamp(1, 255) as u8
}
