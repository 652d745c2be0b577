//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use bellsim_core::par::Execution;

use crate::config::{Scenario, ScenarioConfig};
use crate::error::Result;
use crate::scenarios;

#[derive(Debug, Parser)]
#[command(name = "bellsim", version, about = "Two-photon non-local entanglement simulator")]
pub struct Cli {
    /// JSON scenario config; missing fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub svg: bool,
    /// Run scans on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coincidence dip against delay for both alignment benches.
    HomScan,
    /// Coincidence fringes against the interferometer phase.
    PhaseScan,
    /// Simulated CHSH run with Poisson counts.
    Chsh,
    /// CHSH statistic from a CSV of counts or correlations.
    Analyze { input: PathBuf },
    /// Fidelity of the conditional state with the target Bell state.
    StateCheck,
}

impl Command {
    fn scenario(&self) -> Scenario {
        match self {
            Command::HomScan => Scenario::HomScan,
            Command::PhaseScan => Scenario::PhaseScan,
            Command::Chsh => Scenario::ChshRun,
            Command::Analyze { .. } => Scenario::Analyze,
            Command::StateCheck => Scenario::StateCheck,
        }
    }
}

/// Config file plus command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    cfg.scenario = Some(cli.command.scenario());
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.display().to_string();
    }
    cfg.svg |= cli.svg;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the subcommand and returns the lines to print.
pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    let cfg = resolve_config(cli)?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let dir = PathBuf::from(&cfg.out_dir);
    let mut lines = Vec::new();
    let files = match &cli.command {
        Command::HomScan => {
            let r = scenarios::run_hom_scan(&cfg, exec)?;
            lines.push(format!(
                "visibility alice={:.6} bob={:.6}",
                r.alice.visibility, r.bob.visibility
            ));
            scenarios::write_hom_scan(&cfg, &r, &dir)?
        }
        Command::PhaseScan => {
            let r = scenarios::run_phase_scan(&cfg, exec)?;
            lines.push(format!("phi0={:.9}", r.phi0));
            if let Some(fits) = &r.fits {
                for (name, f) in scenarios::PHASE_COLUMNS.iter().zip(fits) {
                    lines.push(format!("{name} visibility={:.6} phase0={:.6}", f.visibility, f.phase0));
                }
            }
            scenarios::write_phase_scan(&cfg, &r, &dir)?
        }
        Command::Chsh => {
            let r = scenarios::run_chsh(&cfg, exec)?;
            let s = &r.run.result;
            lines.push(format!(
                "S={:.6} sigma_S={:.6} n_sigma={:.2} analytic_S={:.6}",
                s.s_value, s.sigma_s, s.n_sigma_violation, r.analytic_s
            ));
            scenarios::write_chsh(&cfg, &r, &dir)?
        }
        Command::Analyze { input } => {
            let s = scenarios::run_analyze(&cfg, input)?;
            lines.push(format!(
                "S={:.6} sigma_S={:.6} n_sigma={:.2}",
                s.s_value, s.sigma_s, s.n_sigma_violation
            ));
            scenarios::write_analyze(&cfg, &s, &dir)?
        }
        Command::StateCheck => {
            let r = scenarios::run_state_check(&cfg, exec)?;
            lines.push(format!(
                "{} fidelity={:.12} threshold={} E(45,45)={:.6}",
                if r.pass { "PASS" } else { "FAIL" },
                r.fidelity,
                r.threshold,
                r.e_45_45
            ));
            scenarios::write_state_check(&cfg, &r, &dir)?
        }
    };
    lines.extend(files.iter().map(|f| format!("wrote {}", f.display())));
    Ok(lines)
}
