//! Thin command-line front end; all logic lives in the library.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use polgrad::cli;

#[derive(Parser)]
#[command(
    name = "polgrad",
    about = "Model-based policy gradient training and diagnostics",
    long_about = "Model-based policy gradient training and diagnostics.\n\n\
        Experiments are described by a TOML config file with [env], [model],\n\
        [policy], [reward], [train] and optional [study] sections plus a\n\
        mandatory top-level `seed`. Every command is deterministic given the\n\
        config and seed. Set POLGRAD_THREADS to cap worker parallelism."
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run batch gradient ascent and write run_log.csv plus per-iteration
    /// theta_####.json checkpoints.
    #[command(long_about = "Run batch gradient ascent.\n\n\
        Writes to --out:\n  \
        run_log.csv with columns: iter,mean_reward,grad_norm,rms_error,clamp_events,wall_time_s\n  \
        theta_0000.json .. theta_KKKK.json policy checkpoints (one per iteration).\n\n\
        wall_time_s is the only column that varies between reruns of the same\n\
        config and seed.")]
    Train {
        /// Experiment config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Suppress progress output.
        #[arg(long)]
        quiet: bool,
    },
    /// Check the gradient estimators against each other and against central
    /// finite differences; nonzero exit if any enforced check fails.
    #[command(long_about = "Check the gradient estimators on the configured experiment.\n\n\
        Reports max relative errors for:\n  \
        (i)   forward vs backward estimator forms (tol 1e-10)\n  \
        (ii)  true-Jacobian estimate vs central finite differences (tol 1e-5)\n  \
        (iii) model-based estimate vs the same oracle (tol 1e-5 when the\n        \
        model equals the env; reported as expected bias otherwise).")]
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Measure gradient bias, estimator variance and Hessian norm across
    /// horizons and fit growth regimes.
    #[command(long_about = "Run the configured horizon scaling study.\n\n\
        Writes to --out:\n  \
        scaling.csv with columns: study,horizon,seed,value\n    \
        (study = bias | variance | variance_dev | hessian)\n  \
        scaling_summary.csv with columns: study,regime,exp_slope,exp_intercept,\n    \
        exp_r2,poly_slope,poly_intercept,poly_r2,residual,truncated_at")]
    Scaling {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Reproduce the scalar closed-form studies (hessian, blowup, variance)
    /// as CSV tables with reference columns beside measured values.
    #[command(long_about = "Reproduce the built-in scalar studies.\n\n\
        --case hessian: hessian.csv (gain,horizon,t,delta_ref,delta_fd) and\n      \
        hessian_summary.csv (gain,horizon,kappa_ref,kappa_fd)\n  \
        --case blowup: blowup.csv\n      \
        (variant,t,tprime,lhs,term_b,term_a,residual,lhs_closed_form)\n  \
        --case variance: variance_vs_horizon.csv and variance_vs_batch.csv\n      \
        (horizon,batch,measured_var,reference_var)")]
    Example {
        /// One of: hessian, blowup, variance.
        #[arg(long)]
        case: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

fn configure_threads() {
    if let Ok(value) = std::env::var("POLGRAD_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build_global();
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let args = Args::parse();
    let outcome = match args.command {
        Command::Train {
            config,
            out,
            seed,
            quiet,
        } => cli::cmd_train(&config, &out, seed, quiet).map(|()| true),
        Command::Gradcheck {
            config,
            seed,
            quiet,
        } => cli::cmd_gradcheck(&config, seed, quiet).map(|report| report.passed()),
        Command::Scaling {
            config,
            out,
            seed,
            quiet,
        } => cli::cmd_scaling(&config, &out, seed, quiet).map(|()| true),
        Command::Example { case, out, quiet } => case
            .parse::<cli::ExampleCase>()
            .and_then(|case| cli::cmd_example(case, &out, quiet))
            .map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
