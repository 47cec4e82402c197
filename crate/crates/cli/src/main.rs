use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lgpose::commands::{run_batch, run_estimate, run_eval, run_simulate};
use lgpose::CliError;

#[derive(Parser)]
#[command(name = "lgpose", version, about = "Lower-body pose from three IMUs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic ground truth (truth.csv) and sensor data (imu.csv).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the filter over an imu.csv and write est.csv.
    Estimate {
        #[arg(long)]
        imu: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pose table whose first row is used as the initial state.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Compare an estimate with a reference and write a metrics JSON.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate, estimate and score several seeds in parallel.
    Batch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        trials: usize,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out } => run_simulate(&config, &out),
        Command::Estimate { imu, config, out, init } => {
            let est = run_estimate(&imu, &config, &out, init.as_deref())?;
            eprintln!("{} frames in {:.1} ms", est.rows.len(), est.runtime_ms);
            Ok(())
        }
        Command::Eval { est, reference, out } => {
            let report = run_eval(&est, &reference, &out)?;
            eprintln!(
                "knee RMSE {:.2}° / {:.2}°",
                report.rmse_deg["knee_l"], report.rmse_deg["knee_r"]
            );
            Ok(())
        }
        Command::Batch { config, out, trials, threads } => {
            let summary = run_batch(&config, &out, trials, threads)?;
            if let Some(s) = summary.rmse_deg.get("knee_l") {
                eprintln!("{trials} trials, left knee RMSE {:.2} ± {:.2}°", s.mean, s.std);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lgpose: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
