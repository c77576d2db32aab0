//! `emdyn`: fit finite mixtures by alternating-maximization, then interrogate
//! the iteration as a dynamical system — descent diagnostics, stability
//! certificates, convergence-rate bounds, and basin maps. All randomness is
//! seeded; identical invocations produce byte-identical reports (up to the
//! wall-clock field in the manifest).

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{Floors, InitSpec};
use em_dynamics::error::Error;
use em_dynamics::{Family, IterationBudget, LyapunovUnits};

#[derive(Parser)]
#[command(name = "emdyn", version, about)]
struct Cli {
    /// Seed for every random draw of the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Solver configuration JSON (max_iters, step_tol, delta, inner_ascent).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Ball radius for the constrained update map (selects delta-EM).
    #[arg(long, global = true)]
    delta: Option<f64>,

    /// Units for descent values (the raw-likelihood form underflows for
    /// large datasets, so log units are the default).
    #[arg(long, global = true, value_enum, default_value_t = UnitsArg::Log)]
    units: UnitsArg,

    /// Smallest admissible gaussian variance.
    #[arg(long, global = true, default_value_t = 1e-8)]
    variance_floor: f64,

    /// Smallest admissible mixture weight.
    #[arg(long, global = true, default_value_t = 1e-6)]
    weight_floor: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitsArg {
    Likelihood,
    Log,
}

impl From<UnitsArg> for LyapunovUnits {
    fn from(u: UnitsArg) -> Self {
        match u {
            UnitsArg::Likelihood => LyapunovUnits::Likelihood,
            UnitsArg::Log => LyapunovUnits::LogLikelihood,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    GaussianDiag,
    Poisson,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::GaussianDiag => Family::GaussianDiag,
            FamilyArg::Poisson => Family::Poisson,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset from a parameter file.
    Synth {
        /// Generating parameters (JSON).
        #[arg(long)]
        params: PathBuf,
        /// Number of observations.
        #[arg(long)]
        n: usize,
    },
    /// Fit a mixture and record the full trajectory with diagnostics.
    Fit {
        /// Dataset CSV.
        #[arg(long)]
        data: PathBuf,
        /// Initial parameters (JSON). Alternative to --init-seed.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Derive the initial point from the data with this seed.
        #[arg(long)]
        init_seed: Option<u64>,
        /// Model family for --init-seed.
        #[arg(long, value_enum)]
        family: Option<FamilyArg>,
        /// Component count for --init-seed.
        #[arg(long)]
        components: Option<usize>,
    },
    /// Recompute descent diagnostics for a recorded state sequence.
    Diagnose {
        #[arg(long)]
        data: PathBuf,
        /// states.csv from a previous fit.
        #[arg(long)]
        states: PathBuf,
        /// Reference point (JSON); defaults to the best recorded state.
        #[arg(long)]
        theta_star: Option<PathBuf>,
        #[arg(long, value_enum)]
        family: Option<FamilyArg>,
        #[arg(long)]
        components: Option<usize>,
    },
    /// Classify an equilibrium candidate and certify its stability constants.
    Stability {
        #[arg(long)]
        data: PathBuf,
        /// Candidate point (JSON).
        #[arg(long)]
        theta_star: PathBuf,
        /// Sampling ball radius.
        #[arg(long, default_value_t = 0.25)]
        radius: f64,
        /// Probe count for the constants.
        #[arg(long, default_value_t = 256)]
        samples: usize,
        /// Geometric shells for the envelope numerator.
        #[arg(long, default_value_t = 8)]
        shells: usize,
    },
    /// Sample initializations around a center and map where they converge.
    Basin {
        #[arg(long)]
        data: PathBuf,
        /// Center point (JSON).
        #[arg(long)]
        center: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        stop_tol: f64,
        #[arg(long, default_value_t = 1e-5)]
        merge_radius: f64,
    },
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::InvalidSpec(_)
        | Error::InvalidParams(_)
        | Error::InvalidData(_)
        | Error::Io(_) => 2,
        Error::NonFiniteLikelihood { .. }
        | Error::NonFiniteIterate { .. }
        | Error::NonFiniteEval { .. }
        | Error::InvalidState { .. }
        | Error::InsufficientRateData { .. }
        | Error::NotLocalMaxInBall { .. } => 3,
    }
}

fn dispatch(cli: Cli) -> em_dynamics::Result<()> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| Error::InvalidSpec("--out <dir> is required".into()))?;
    let floors = Floors {
        variance_floor: cli.variance_floor,
        weight_floor: cli.weight_floor,
    };
    let units: LyapunovUnits = cli.units.into();

    match &cli.command {
        Command::Synth { params, n } => {
            commands::cmd_synth(params, *n, cli.seed, &out, &floors)
        }
        Command::Fit { data, params, init_seed, family, components } => {
            let init = InitSpec {
                params: params.as_deref(),
                init_seed: *init_seed,
                family: family.map(Into::into),
                components: *components,
            };
            commands::cmd_fit(
                data,
                &init,
                cli.config.as_deref(),
                cli.delta,
                units,
                Some(cli.seed),
                &out,
                &floors,
            )
        }
        Command::Diagnose { data, states, theta_star, family, components } => {
            commands::cmd_diagnose(
                data,
                states,
                theta_star.as_deref(),
                family.map(Into::into),
                *components,
                units,
                &out,
                &floors,
            )
        }
        Command::Stability { data, theta_star, radius, samples, shells } => {
            commands::cmd_stability(
                data, theta_star, *radius, *samples, *shells, cli.seed, units, &out, &floors,
            )
        }
        Command::Basin {
            data,
            center,
            radius,
            samples,
            max_iters,
            stop_tol,
            merge_radius,
        } => commands::cmd_basin(
            data,
            center,
            *radius,
            *samples,
            cli.seed,
            cli.delta,
            IterationBudget { max_steps: *max_iters, stop_tol: *stop_tol },
            *merge_radius,
            &out,
            &floors,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
