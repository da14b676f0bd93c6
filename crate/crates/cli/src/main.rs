use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use darkmode_cli::preset::{Scale, ScenarioConfig, ScenarioKind};
use darkmode_cli::{exit_code, scenario, Manifest};
use darkmode_core::{Error, Result};

#[derive(Parser)]
#[command(name = "darkmode", version, about = "Dark-mode optomechanical GUP detector simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long, env = "DARKMODE_OUT")]
    out: Option<PathBuf>,
    /// Parameter scale; overrides the configuration file.
    #[arg(long)]
    scale: Option<Scale>,
    /// Parameter override, `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and store it.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the trajectory as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Demodulate a stored trajectory and estimate its dark-mode spectrum.
    Analyze {
        /// Trajectory container written by `simulate`.
        input: PathBuf,
        #[arg(long, env = "DARKMODE_OUT")]
        out: Option<PathBuf>,
        /// Also write the slow amplitudes as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Run the measurement protocol over the power grid and fit β_NL.
    Protocol {
        #[command(flatten)]
        common: Common,
    },
    /// Resolution sweep over β_NL, or single runs over one parameter with --over.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `key=lo:hi:n` for a linear sweep of one parameter.
        #[arg(long)]
        over: Option<String>,
    },
    /// Run a named scenario.
    Scenario {
        name: ScenarioKind,
        #[command(flatten)]
        common: Common,
    },
    /// Resolve a configuration file and print its dimensionless parameters.
    Validate {
        path: PathBuf,
    },
}

fn load(common: &Common, scenario: Option<ScenarioKind>) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::from_text(&std::fs::read_to_string(path)?)?,
        None => ScenarioConfig::new(ScenarioKind::Custom, Scale::Desk),
    };
    if let Some(s) = scenario {
        cfg.scenario = s;
    }
    if let Some(s) = common.scale {
        cfg.scale = s;
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    for o in &common.overrides {
        cfg.set(o)?;
    }
    Ok(cfg)
}

fn parse_range(spec: &str) -> Result<(String, Vec<f64>)> {
    let bad = || Error::Config(format!("--over `{spec}` is not of the form key=lo:hi:n"));
    let (key, range) = spec.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n < 2 {
        return Err(bad());
    }
    let values = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    Ok((key.trim().to_string(), values))
}

fn default_out() -> PathBuf {
    PathBuf::from("darkmode-out")
}

fn run(cli: Cli) -> Result<Option<Manifest>> {
    match cli.command {
        Command::Simulate { common, csv } => Ok(Some(scenario::simulate_command(&load(&common, None)?, csv)?)),
        Command::Analyze { input, out, csv } => Ok(Some(scenario::analyze_command(
            &input,
            &out.unwrap_or_else(default_out),
            csv,
        )?)),
        Command::Protocol { common } => Ok(Some(scenario::protocol_command(&load(&common, None)?, common.workers)?)),
        Command::Sweep { common, over } => {
            let cfg = load(&common, None)?;
            Ok(Some(match over {
                Some(spec) => {
                    let (key, values) = parse_range(&spec)?;
                    scenario::parameter_sweep(&cfg, &key, &values, common.workers)?
                }
                None => scenario::sweep_command(&cfg, common.workers)?,
            }))
        }
        Command::Scenario { name, common } => Ok(Some(scenario::run_scenario(&load(&common, Some(name))?, common.workers)?)),
        Command::Validate { path } => {
            let text = std::fs::read_to_string(&path)?;
            scenario::validate_text(&text, std::io::stdout().lock())?;
            Ok(None)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Some(m)) => {
            println!("{}", m.path(darkmode_cli::manifest::MANIFEST_NAME).display());
            if m.is_partial() {
                let _ = writeln!(std::io::stderr(), "{} run(s) failed; see the manifest", m.failures.len());
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
