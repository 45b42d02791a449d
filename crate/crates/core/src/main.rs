//! Command-line entry point: experiment drivers and model inspection.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hdmr_adp::harness::{
    run_bandit, run_randmin, write_bandit_csv, write_randmin_csv, BanditConfig, RandminConfig,
};
use hdmr_adp::model_io::load_model;
use hdmr_adp::Error;

#[derive(Parser)]
#[command(name = "hdmr-adp", version, about = "HDMR decomposition and approximate dynamic programming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Random-instance minimization study (bounds vs. exact scan).
    Randmin {
        /// JSON experiment configuration.
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for report.csv and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-horizon bandit replication (exact vs. HDMR policies).
    Bandit {
        #[arg(long)]
        config: PathBuf,
        /// Override the simulation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for report.csv, report.json, and stage models.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Model file utilities.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Print the axes and component magnitudes of a saved model.
    Inspect { file: PathBuf },
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn write_reports(
    out: Option<&Path>,
    csv: impl FnOnce(&mut dyn std::io::Write) -> Result<(), Error>,
    json: &impl serde::Serialize,
) -> Result<(), Error> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut file = std::fs::File::create(dir.join("report.csv"))?;
            csv(&mut file)?;
            let text = serde_json::to_string_pretty(json)?;
            std::fs::write(dir.join("report.json"), text)?;
        }
        None => {
            let mut stdout = std::io::stdout();
            csv(&mut stdout)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Randmin { config, seed, out } => {
            let mut cfg: RandminConfig = read_config(&config)?;
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            let report = run_randmin(&cfg)?;
            write_reports(out.as_deref(), |w| write_randmin_csv(&report, w), &report)?;
            eprintln!(
                "randmin: {} seeds, mean scaled lower bound {:.4}, mean scaled upper bounds {:?}",
                report.seeds.len(),
                report.mean_scaled_lower,
                report.mean_scaled_upper
            );
        }
        Command::Bandit { config, seed, out } => {
            let mut cfg: BanditConfig = read_config(&config)?;
            if let Some(seed) = seed {
                cfg.simulation_seed = seed;
            }
            let report = run_bandit(&cfg, out.as_deref())?;
            write_reports(out.as_deref(), |w| write_bandit_csv(&report, w), &report)?;
            for r in &report.results {
                eprintln!(
                    "bandit: {} mean payoff {:.4} (stderr {:.4})",
                    r.policy, r.mean_payoff, r.std_error
                );
            }
        }
        Command::Model { command } => match command {
            ModelCommand::Inspect { file } => {
                let model = load_model(&file)?;
                let d = model.domain().dim();
                println!("axes: {:?}", model.domain().axis_sizes());
                println!("g0: {}", model.g0());
                for m in 0..d {
                    let norm = model.first_order(m).iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    println!("g_{}: max |entry| {}", m + 1, norm);
                }
                let mut k = 0;
                for m in 0..d {
                    for n in m + 1..d {
                        let norm = model.second_order_tables()[k]
                            .iter()
                            .fold(0.0f64, |a, v| a.max(v.abs()));
                        println!("g_{}_{}: max |entry| {}", m + 1, n + 1, norm);
                        k += 1;
                    }
                }
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) => ExitCode::from(2),
                Error::BudgetExceeded { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
