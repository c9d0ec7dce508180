use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hymflow_cli::pipeline::{self, Overrides};
use hymflow_cli::{apply_overrides, parse_config, CliError};

/// Batch laboratory for Hermitian-Yang-Mills flows on flat complex tori.
#[derive(Parser)]
#[command(name = "hymflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override flow.dt from the config
    #[arg(long, global = true)]
    dt: Option<f64>,

    /// Override flow.t_end from the config
    #[arg(long, global = true)]
    t_end: Option<f64>,

    /// Override output.dir from the config
    #[arg(long, global = true)]
    out: Option<String>,

    /// Override run.seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the base-metric residual profile (Gauduchon / Astheno / Kähler)
    VerifyMetric { config: PathBuf },
    /// Run a flow and emit diagnostics CSV, checkpoint and verdict summary
    Run { config: PathBuf },
    /// One-shot diagnostics of a stored checkpoint
    Diagnose {
        checkpoint: PathBuf,
        /// Evaluate the kernel-weighted monotone quantity over a short
        /// continuation of the flow
        #[arg(long)]
        phi: bool,
        /// Scaled local-energy exceedance scan
        #[arg(long)]
        sigma_scan: bool,
    },
    /// Integrate both flow formulations and compare them via the gauge link
    CompareFlows { config: PathBuf },
}

fn load(path: &PathBuf, ov: &Overrides) -> Result<hymflow_cli::RunConfig, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    apply_overrides(&mut cfg, ov);
    Ok(cfg)
}

fn main() -> ExitCode {
    // HYMFLOW_THREADS caps the data-parallel width of field transforms.
    if let Ok(v) = std::env::var("HYMFLOW_THREADS") {
        if let Ok(nt) = v.parse::<usize>() {
            hymflow_core::set_parallel_width(nt.max(1));
        }
    }

    let cli = Cli::parse();
    let ov = Overrides {
        dt: cli.dt,
        t_end: cli.t_end,
        out: cli.out.clone(),
        seed: cli.seed,
    };

    let result = match &cli.command {
        Command::VerifyMetric { config } => {
            load(config, &ov).and_then(|cfg| pipeline::verify_metric(&cfg))
        }
        Command::Run { config } => load(config, &ov).and_then(|cfg| pipeline::run_pipeline(&cfg)),
        Command::CompareFlows { config } => {
            load(config, &ov).and_then(|cfg| pipeline::compare_flows(&cfg))
        }
        Command::Diagnose {
            checkpoint,
            phi,
            sigma_scan,
        } => pipeline::diagnose(checkpoint, *phi, *sigma_scan),
    };

    match result {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            ExitCode::from(report.exit_code as u8)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
