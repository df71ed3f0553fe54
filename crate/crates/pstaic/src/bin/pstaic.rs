//! Command-line front end: simulate datasets, run restorations, and emit
//! comparative metric tables.
//!
//! Exit codes: 0 success, 1 user error (bad flags, missing or invalid
//! files), 2 solver failure.

use clap::{Parser, Subcommand, ValueEnum};
use pstaic::bench::{
    collect_rows, format_report, run_restore_job, simulate_manifest, write_plots, JobManifest,
    ReportFormat,
};
use pstaic::io::read_json;
use pstaic::prox::BoxSet;
use pstaic::restore::{Algorithm, RestoreConfig};
use pstaic::weights::TauPolicy;
use pstaic::{admm::AdmmConfig, Error};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pstaic", version, about = "Spatio-temporal image restoration with joint weight estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground-truth and degraded volumes from a manifest.
    Simulate {
        /// JSON manifest of phantoms, degradations, and the sweep grid.
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for the dataset tree.
        #[arg(long)]
        out: PathBuf,
    },
    /// Restore one degraded volume.
    Restore {
        /// Which model drives the restoration.
        #[arg(long, value_enum)]
        algo: Algo,
        /// Single regularization weight (relative to the data scale).
        #[arg(long, conflicts_with = "sweep")]
        lambda: Option<f64>,
        /// Comma-separated sweep grid; requires --truth for scoring.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
        /// Barrier strength.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Scale the barrier by the motion content of the previous
        /// estimate instead of keeping it constant.
        #[arg(long)]
        motion_tau: bool,
        /// Penalty parameter of the inner solver.
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        /// Outer alternations.
        #[arg(long = "iters-outer", default_value_t = 10)]
        iters_outer: usize,
        /// Inner iteration budget per outer step.
        #[arg(long = "iters-inner", default_value_t = 50)]
        iters_inner: usize,
        /// Degraded input volume (expects sidecar.json next to it).
        #[arg(long = "in")]
        input: PathBuf,
        /// Ground-truth volume for sweep scoring and metrics.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Output directory for restored volume, trajectories, and row.
        #[arg(long)]
        out: PathBuf,
        /// Fixed weight for the pinned-weight mode.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Spatial weighting of the first-order baseline.
        #[arg(long, default_value_t = 1.0)]
        kappa1: f64,
        /// Temporal weighting of the first-order baseline.
        #[arg(long, default_value_t = 1.0)]
        kappa2: f64,
        /// Upper pixel bound, in peak-normalized units.
        #[arg(long = "box-upper", default_value_t = 1.5)]
        box_upper: f64,
    },
    /// Aggregate result rows into a comparative table.
    Report {
        /// Directory scanned recursively for row.csv files.
        #[arg(long = "in")]
        input: PathBuf,
        /// Table format.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Also render weight/cost trajectory plots per job.
        #[arg(long)]
        plots: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Pstaic,
    Pictv,
    Staic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Diverged(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> pstaic::Result<()> {
    match cli.command {
        Command::Simulate { manifest, out } => {
            let manifest: JobManifest = read_json(&manifest)?;
            let sidecars = simulate_manifest(&manifest, &out)?;
            println!("simulated {} dataset cells under {}", sidecars.len(), out.display());
            Ok(())
        }
        Command::Restore {
            algo,
            lambda,
            sweep,
            tau,
            motion_tau,
            rho,
            iters_outer,
            iters_inner,
            input,
            truth,
            out,
            alpha,
            kappa1,
            kappa2,
            box_upper,
        } => {
            let algorithm = match algo {
                Algo::Pstaic => Algorithm::Pstaic,
                Algo::Pictv => Algorithm::Pictv { kappa1, kappa2 },
                Algo::Staic => Algorithm::StaicFixed { alpha_s: alpha },
            };
            let lambdas = match (lambda, sweep) {
                (Some(l), None) => vec![l],
                (None, Some(grid)) => grid,
                (None, None) => pstaic::bench::default_lambda_grid(),
                (Some(_), Some(_)) => unreachable!("clap conflict"),
            };
            let cfg = RestoreConfig {
                lambda: lambdas[0],
                tau: if motion_tau {
                    TauPolicy::MotionAdaptive(tau)
                } else {
                    TauPolicy::Constant(tau)
                },
                admm: AdmmConfig {
                    rho,
                    max_iters: iters_inner,
                    eps_pri: None,
                },
                n_outer: iters_outer,
                box_set: BoxSet::new(0.0, box_upper)?,
                algorithm,
            };
            let row = run_restore_job(&input, truth.as_deref(), &out, &cfg, &lambdas)?;
            println!(
                "{}: na {:.2} lambda {} snr {:.2} dB ssim {:.4} alpha {:.4} ({:.1}s)",
                row.algorithm,
                row.na,
                row.best_lambda,
                row.snr_db,
                row.ssim,
                row.alpha_s_final,
                row.runtime_seconds
            );
            Ok(())
        }
        Command::Report { input, format, plots } => {
            let rows = collect_rows(&input)?;
            let fmt = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Md => ReportFormat::Markdown,
            };
            let table = format_report(&rows, fmt)?;
            let ext = match format {
                Format::Csv => "csv",
                Format::Md => "md",
            };
            let table_path = input.join(format!("table.{ext}"));
            std::fs::write(&table_path, &table)?;
            print!("{table}");
            if plots {
                let n = write_plots(&input)?;
                println!("rendered {n} trajectory plot pairs");
            }
            Ok(())
        }
    }
}
