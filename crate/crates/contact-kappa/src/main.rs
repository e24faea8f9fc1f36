//! CLI entry point: `contact-kappa <experiment> --config <path>`.
//!
//! Exit codes: 0 all declared tolerances met, 1 tolerance failure,
//! 2 configuration error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use contact_kappa::config::{Experiment, RunConfig};
use contact_kappa::run::run;

#[derive(Parser, Debug)]
#[command(
    name = "contact-kappa",
    about = "Geodesic curvature and distance asymptotics on 3D contact sub-Riemannian structures"
)]
struct Cli {
    /// Experiment to run; must match the config's `experiment` field.
    #[arg(value_parser = parse_experiment)]
    experiment: Experiment,

    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output directory for summary.json and samples.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Seed for randomized checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    match s {
        "check-structure" => Ok(Experiment::CheckStructure),
        "curve" => Ok(Experiment::Curve),
        "geodesic" => Ok(Experiment::Geodesic),
        "distance" => Ok(Experiment::Distance),
        "expand" => Ok(Experiment::Expand),
        "theta" => Ok(Experiment::Theta),
        "jacobi-asymptotics" => Ok(Experiment::JacobiAsymptotics),
        "deviation-limit" => Ok(Experiment::DeviationLimit),
        other => Err(format!("unknown experiment '{other}'")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let config = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if config.experiment != cli.experiment {
        eprintln!(
            "error: config experiment '{}' does not match subcommand '{}'",
            config.experiment.name(),
            cli.experiment.name()
        );
        return ExitCode::from(2);
    }
    // validate the configured objects before running numerics
    if let Err(e) = config.structure.build() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }

    match run(&config, &cli.out, cli.seed) {
        Ok(report) => {
            for c in &report.checks {
                println!(
                    "[{}] {}: {:.6e} (threshold {:.3e})",
                    if c.pass { "pass" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                );
            }
            if report.pass {
                println!("{}: all checks passed", report.experiment);
                ExitCode::SUCCESS
            } else {
                eprintln!("{}: tolerance failure", report.experiment);
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
