use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use parampath_cli::commands::{self, OutputPaths};

/// Construct, certify, and export continuous parameter-space paths for
/// over-parameterized fully connected networks.
#[derive(Parser)]
#[command(name = "parampath", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Connect two parameter points by a certified bounded-loss path.
    Connect {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        theta_prime: PathBuf,
        /// Width regime: lin-data, wide-first, or all-wide.
        #[arg(long, default_value = "lin-data")]
        theorem: String,
        /// Meeting-point loss target.
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Certification samples per segment (>= 16).
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bias-search candidates per column.
        #[arg(long, default_value_t = 256)]
        budget: usize,
        #[arg(long, default_value_t = 201)]
        trace_points: usize,
        #[arg(long)]
        out_path: Option<PathBuf>,
        #[arg(long)]
        out_cert: Option<PathBuf>,
        #[arg(long)]
        out_trace: Option<PathBuf>,
    },
    /// Build a descent path from one point down to a target loss.
    Descend {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        theta: PathBuf,
        /// Width regime: no-bad-valley or all-wide.
        #[arg(long, default_value = "no-bad-valley")]
        theorem: String,
        /// Index of the wide hidden layer (no-bad-valley only).
        #[arg(long, default_value_t = 1)]
        wide_layer: usize,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        budget: usize,
        #[arg(long, default_value_t = 201)]
        trace_points: usize,
        #[arg(long)]
        out_path: Option<PathBuf>,
        #[arg(long)]
        out_cert: Option<PathBuf>,
        #[arg(long)]
        out_trace: Option<PathBuf>,
    },
    /// Build a constant-loss ray of unbounded parameter norm.
    Ray {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        theta: PathBuf,
        /// Width regime: lin-data or wide-first.
        #[arg(long, default_value = "lin-data")]
        theorem: String,
        #[arg(long, default_value_t = 1e3)]
        scale_max: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 201)]
        trace_points: usize,
        #[arg(long)]
        out_path: Option<PathBuf>,
        #[arg(long)]
        out_cert: Option<PathBuf>,
        #[arg(long)]
        out_trace: Option<PathBuf>,
    },
    /// Run the built-in invariant suites (optionally certify a manifest too).
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Instances per randomized suite.
        #[arg(long, default_value_t = 8)]
        instances: usize,
        /// Existing path manifest to certify as an extra suite.
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long, requires = "path")]
        spec: Option<PathBuf>,
        #[arg(long, requires = "path")]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long)]
        out_report: Option<PathBuf>,
    },
    /// Train two networks, then compare the straight-line loss scan with the
    /// constructed path's certified trace.
    Barrier {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Width regime: wide-first or all-wide.
        #[arg(long, default_value = "wide-first")]
        theorem: String,
        #[arg(long, default_value_t = 1e-4)]
        train_target: f64,
        #[arg(long, default_value_t = 50_000)]
        train_steps: usize,
        #[arg(long, default_value_t = 1e-2)]
        learning_rate: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        budget: usize,
        #[arg(long, default_value_t = 201)]
        trace_points: usize,
        /// Two-column comparison trace (t, loss_linear, loss_constructed).
        #[arg(long)]
        out_trace: Option<PathBuf>,
        #[arg(long)]
        out_path: Option<PathBuf>,
        #[arg(long)]
        out_cert: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Connect {
            spec,
            data,
            theta,
            theta_prime,
            theorem,
            epsilon,
            tol,
            samples,
            seed,
            budget,
            trace_points,
            out_path,
            out_cert,
            out_trace,
        } => commands::cmd_connect(
            &spec,
            &data,
            &theta,
            &theta_prime,
            &theorem,
            epsilon,
            tol,
            samples,
            seed,
            budget,
            trace_points,
            &OutputPaths {
                path: out_path,
                cert: out_cert,
                trace: out_trace,
            },
        ),
        Command::Descend {
            spec,
            data,
            theta,
            theorem,
            wide_layer,
            epsilon,
            tol,
            samples,
            seed,
            budget,
            trace_points,
            out_path,
            out_cert,
            out_trace,
        } => commands::cmd_descend(
            &spec,
            &data,
            &theta,
            &theorem,
            wide_layer,
            epsilon,
            tol,
            samples,
            seed,
            budget,
            trace_points,
            &OutputPaths {
                path: out_path,
                cert: out_cert,
                trace: out_trace,
            },
        ),
        Command::Ray {
            spec,
            data,
            theta,
            theorem,
            scale_max,
            tol,
            samples,
            seed,
            trace_points,
            out_path,
            out_cert,
            out_trace,
        } => commands::cmd_ray(
            &spec,
            &data,
            &theta,
            &theorem,
            scale_max,
            tol,
            samples,
            seed,
            trace_points,
            &OutputPaths {
                path: out_path,
                cert: out_cert,
                trace: out_trace,
            },
        ),
        Command::Verify {
            seed,
            instances,
            path,
            spec,
            data,
            tol,
            samples,
            out_report,
        } => {
            let manifest = match (&path, &spec, &data) {
                (Some(p), Some(s), Some(d)) => Some((p.as_path(), s.as_path(), d.as_path())),
                (Some(_), _, _) => {
                    eprintln!("error: --path requires --spec and --data");
                    return ExitCode::from(commands::EXIT_HYPOTHESIS as u8);
                }
                _ => None,
            };
            commands::cmd_verify(seed, instances, manifest, tol, samples, out_report.as_deref())
        }
        Command::Barrier {
            spec,
            data,
            theorem,
            train_target,
            train_steps,
            learning_rate,
            tol,
            samples,
            seed,
            budget,
            trace_points,
            out_trace,
            out_path,
            out_cert,
        } => commands::cmd_barrier(
            &spec,
            &data,
            &theorem,
            train_target,
            train_steps,
            learning_rate,
            tol,
            samples,
            seed,
            budget,
            trace_points,
            out_trace.as_deref(),
            &OutputPaths {
                path: out_path,
                cert: out_cert,
                trace: None,
            },
        ),
    };
    ExitCode::from(code as u8)
}
