use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ecdlab::config::{ConventionName, ExperimentConfig, ExperimentKind};
use ecdlab::{run_with_threads, write_results, LabError};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ecdlab", version, about = "Effective counterdiabatic driving experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Literal,
    Sqrt,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for sweep points; 0 uses all cores.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_enum)]
        norm_convention: Option<ConventionArg>,
    },
    /// List the available experiments.
    ListExperiments,
    /// Check a config file without running it.
    Validate { config: PathBuf },
}

fn execute(cli: Cli) -> Result<(), LabError> {
    match cli.command {
        Command::ListExperiments => {
            for e in ExperimentKind::ALL {
                println!("{:<18} {}", e.name(), e.description());
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("{}: ok ({})", config.display(), cfg.kind());
            Ok(())
        }
        Command::Run { config, out, threads, norm_convention } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(c) = norm_convention {
                cfg.norm_convention = Some(match c {
                    ConventionArg::Literal => ConventionName::Literal,
                    ConventionArg::Sqrt => ConventionName::Sqrt,
                });
            }
            if let Some(t) = threads {
                cfg.threads = Some(t);
            }
            let dir = out
                .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out").join(cfg.kind().name()));
            let started = std::time::Instant::now();
            let results = run_with_threads(&cfg, cfg.threads.unwrap_or(0))?;
            let meta = BTreeMap::from([("source_config".to_string(), json!(config.display().to_string()))]);
            let files = write_results(&dir, &cfg, &results, meta)?;
            log::info!("{} finished in {:.2?}", cfg.kind(), started.elapsed());
            println!("{} rows -> {}", results.rows.len(), dir.display());
            for f in files {
                println!("  {}", f.display());
            }
            for (k, v) in &results.summary {
                println!("{k} = {v}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
