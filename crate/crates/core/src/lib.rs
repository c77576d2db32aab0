//! Finite-mixture estimation viewed as a discrete-time dynamical system.
//!
//! The crate fits Gaussian and Poisson mixtures by iterating the classic
//! alternating update `θ_{k+1} = argmax_θ Q(θ, θ_k)` — or its
//! ball-constrained variant, which maximizes the same surrogate over a
//! δ-ball around the current point — and treats the iteration as a map whose
//! orbits can be interrogated: descent values along trajectories, fixed-point
//! and stationarity certificates, empirical convergence rates with
//! exponential-envelope bounds, and basin-of-attraction sampling.
//!
//! With the default `parallel` feature the observation sweeps and sampling
//! loops run on rayon; disabling it falls back to sequential loops with
//! bit-identical output.

pub mod em;
pub mod error;
mod exec;
pub mod harness;
pub mod io;
pub mod lyapunov;
pub mod models;
mod numeric;
pub mod rng;
pub mod stability;

pub use em::{
    constrained_q_maximize, delta_em_step, em_step, run, InnerAscentConfig, IterationRecord,
    SolverConfig, TerminalStatus, Trajectory,
};
pub use error::{Error, Result};
pub use harness::{
    basin_sample, find_limit_points, iterate_map, Assignment, BasinReport, InitOutcome,
    IterationBudget, LimitPoint, MapSystem,
};
pub use lyapunov::{
    ascent_certificate, diagnose_states, diagnose_trajectory, lyapunov_decrement,
    lyapunov_value, q_decomposition_residual, AscentCertificate, DiagnosticRow, LyapunovUnits,
};
pub use models::{
    log_likelihood, m_step, observation_log_likelihood, param_distance, posterior_entropy,
    posterior_kl, q_function, responsibilities, Dataset, Family, MixtureParams, ModelSpec,
    Responsibilities, StepFlags,
};
pub use numeric::{l2_distance, l2_norm};
pub use stability::{
    classify_equilibrium, estimate_rate, exponential_constants, exponential_constants_with,
    gamma_from_constants, mixture_system, numeric_gradient, numeric_hessian,
    sample_params_in_ball, verify_exponential_trace, Classification, ClassifyOptions,
    ExpConstants, SamplingPlan, ScalarSystem, ShellStat, StabilityCertificate, TangentBasis,
    TraceReport,
};
