use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use besd_cli::config::ExperimentConfig;
use besd_cli::experiment::run_experiment;
use besd_cli::plot::{emit_plots, load};
use besd_cli::ratio::{default_window, ratio_report, RatioSettings};
use besd_core::besd::{split_log, RunState};
use besd_core::envs::DomainId;
use besd_core::shaping::SubgoalDesign;

/// Exit status of `plot` when there is nothing to draw.
const NOTHING_TO_DO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "besd",
    version,
    about = "Cost-aware search for subgoal shaping designs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method and seed, writing logs and summary.csv.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Steps-to-goal (or reward) ratio of a design against scratch Q-learning.
    Ratios {
        #[arg(long, default_value = "GW10")]
        domain: String,
        /// Design coordinates, comma separated; omit for the null design.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            conflicts_with = "log"
        )]
        theta: Option<Vec<f64>>,
        /// Take the final recommendation of a run log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Experiment config supplying the domain, shaping and agent settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Training interactions; defaults to the largest episode length.
        #[arg(long)]
        tau: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score curves and recommendation paths from run logs.
    Plot {
        logs: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Rebuild a BESD, EI or LCB run from its log and print its state.
    Replay { log: PathBuf },
    /// Print the default configuration of a domain.
    Config {
        #[arg(long, default_value = "GW10")]
        domain: String,
    },
}

fn parse_domain(s: &str) -> Result<DomainId> {
    DomainId::ALL
        .into_iter()
        .find(|d| d.as_str().eq_ignore_ascii_case(s))
        .with_context(|| format!("unknown domain `{s}`"))
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    ExperimentConfig::from_json(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn last_recommendation(path: &Path) -> Result<Vec<f64>> {
    let records = load(path)?;
    let (_, obs) = split_log(&records)?;
    match obs.iter().rev().find_map(|o| o.theta_rec.clone()) {
        Some(theta) => Ok(theta),
        None => bail!("{} holds no recommendation", path.display()),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut cfg = read_config(&config)?;
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            let output = run_experiment(&cfg, &out)?;
            for cell in &output.cells {
                println!("{}", cell.log_path.display());
            }
            println!("{}", output.summary_path.display());
        }
        Command::Ratios {
            domain,
            theta,
            log,
            config,
            trials,
            tau,
            window,
            seed,
        } => {
            let cfg = match config {
                Some(p) => read_config(&p)?,
                None => ExperimentConfig::defaults(parse_domain(&domain)?),
            };
            let dist = cfg.distribution();
            let space = cfg.space()?;
            let theta = match (theta, log) {
                (Some(t), _) => Some(t),
                (None, Some(p)) => Some(last_recommendation(&p)?),
                (None, None) => None,
            };
            let design = match theta {
                Some(t) => space.design(&t)?,
                None => SubgoalDesign::none(),
            };
            let settings = RatioSettings {
                tau: tau.unwrap_or(cfg.tau_max()),
                window: window.unwrap_or(default_window(cfg.domain)),
                trials,
                seed,
            };
            let report = ratio_report(&dist, &design, &settings, &cfg.ql)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Plot { logs, out } => {
            let files = emit_plots(&logs, &out)?;
            if files.is_empty() {
                eprintln!("no logs given, nothing to plot");
                return Ok(ExitCode::from(NOTHING_TO_DO));
            }
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Replay { log } => {
            let records = load(&log)?;
            let (header, _) = split_log(&records)?;
            if !["BESD", "EI", "LCB"].contains(&header.method.as_str()) {
                bail!(
                    "{} is a {} log; replay needs a BESD, EI or LCB run",
                    log.display(),
                    header.method
                );
            }
            let state = RunState::replay(&records)
                .with_context(|| format!("replaying {}", log.display()))?;
            let summary = serde_json::json!({
                "method": state.method.name(),
                "seed": state.seed,
                "observations": state.history.len(),
                "iterations": state.iterations(),
                "cumulativeCost": state.cumulative_cost,
                "remainingBudget": state.remaining_budget(),
                "recommendation": state.reported_theta(),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Config { domain } => {
            println!(
                "{}",
                ExperimentConfig::defaults(parse_domain(&domain)?).to_json()?
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
