use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use deepo_core::acceptance;
use deepo_core::harness::{self, Algorithm, ExperimentConfig};

#[derive(Parser)]
#[command(name = "deepo", version, about = "DeePO / PFDeePO experiment runner")]
struct Cli {
    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the offline dataset and write it as CSV.
    OfflineGen {
        /// Experiment config (JSON); the built-in reference setup when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one algorithm and write its trace.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// deepo, deepo-noprobe or pfdeepo; defaults to the config's algorithm.
        #[arg(long)]
        alg: Option<Algorithm>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all three algorithms and write CSVs plus states.svg and minsvd.svg.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the acceptance suite; exits non-zero if any check fails.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the reference config as JSON.
    DefaultConfig,
}

fn load(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::OfflineGen { config, out } => {
            let cfg = load(config.as_deref(), cli.seed)?;
            let ds = harness::generate_offline_for(&cfg)?;
            ds.save_csv(&out)?;
            eprintln!("wrote {} samples to {}", ds.len(), out.display());
        }
        Command::Run { config, alg, out } => {
            let cfg = load(config.as_deref(), cli.seed)?;
            let alg = alg.unwrap_or(cfg.algorithm);
            let res = harness::run_algorithm(&cfg, alg)?;
            harness::emit_csv(&res.trace, &out)?;
            eprintln!(
                "wrote {} rows to {}",
                res.trace.records.len(),
                out.display()
            );
        }
        Command::Compare { config, out_dir } => {
            let cfg = load(config.as_deref(), cli.seed)?;
            harness::compare(&cfg, &out_dir)?;
            eprintln!("wrote comparison to {}", out_dir.display());
        }
        Command::Verify { config } => {
            let cfg = load(config.as_deref(), cli.seed)?;
            let results = acceptance::run_all(&cfg);
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!(
                "{}/{} criteria passed",
                results.len() - failed,
                results.len()
            );
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::DefaultConfig => println!("{}", ExperimentConfig::default().to_json()),
    }
    Ok(ExitCode::SUCCESS)
}
