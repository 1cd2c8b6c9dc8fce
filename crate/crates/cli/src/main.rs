use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mwphoton::config::{parse_config, ScenarioConfig};
use mwphoton::exec::Parallel;
use mwphoton::io::{RunDir, Summary};
use mwphoton::scenarios::{Runner, SCENARIOS};

#[derive(Parser)]
#[command(name = "mwphoton", version, about = "Shaped microwave single-photon source simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; the built-in device is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the shot simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Integrator step in ns.
    #[arg(long, global = true)]
    dt: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Emit one shaped photon and analyse it.
    Simulate,
    /// Symmetry score over pulse length and amplitude.
    SweepSymmetry,
    /// Square-pulse Stark-shift calibration.
    CalibrateStark,
    /// Drive-frequency correction from the photon spectrum.
    CalibrateFrequency,
    /// Active reset of the thermal excited-state population.
    Reset,
    /// Detector model and state reconstruction.
    Tomography,
    /// Reproduce a named figure.
    Scenario {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(SCENARIOS))]
        name: String,
    },
    /// Print the fully resolved configuration.
    ShowConfig,
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(p) => parse_config(p).with_context(|| format!("configuration {}", p.display()))?,
        None => ScenarioConfig::measured(),
    };
    if let Some(seed) = common.seed {
        cfg.tomography.seed = seed;
    }
    if let Some(dt) = common.dt {
        cfg.simulation.dt = dt;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Summary> {
    let cfg = load(&cli.common)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.to_toml_string());
        return Ok(Summary::new("show-config", None));
    }
    let exec = Parallel::new(cli.common.threads)?;
    log::info!("using {} threads, writing to {}", exec.threads(), cfg.output.dir.display());
    let runner = Runner::new(&cfg, &exec, RunDir::create(&cfg.output.dir)?)?;
    match &cli.command {
        Command::Simulate => runner.simulate(),
        Command::SweepSymmetry => runner.sweep(),
        Command::CalibrateStark => runner.calibrate_stark(),
        Command::CalibrateFrequency => runner.calibrate_frequency(),
        Command::Reset => runner.reset(),
        Command::Tomography => runner.tomography(),
        Command::Scenario { name } => runner.scenario(name),
        Command::ShowConfig => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(summary) => {
            for a in &summary.assertions {
                println!("{} {}: {}", if a.passed { "ok  " } else { "FAIL" }, a.name, a.detail);
            }
            for (k, v) in &summary.metrics {
                println!("{k} = {v}");
            }
            if summary.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
