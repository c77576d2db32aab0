//! The descent function `V(θ) = L(θ*) − L(θ)` and its decrement along an
//! iteration map, plus the decomposition residual and ascent certificates
//! that make the monotonicity argument checkable.
//!
//! `V` is exposed in two unit systems: raw likelihood differences
//! (evaluated against a common log scale so the difference keeps its
//! leading digits) and log-likelihood differences, which stay in range for
//! datasets large enough that `exp(log L)` underflows.

use serde::{Deserialize, Serialize};

use crate::em::Trajectory;
use crate::error::Result;
use crate::models::{
    log_likelihood, posterior_entropy, posterior_kl, q_function, Dataset, MixtureParams,
    ModelSpec,
};
use crate::numeric::{exp_diff, l2_distance};

/// Unit system for `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovUnits {
    /// Differences of the raw likelihood. Underflows once `exp(log L)`
    /// leaves f64 range (roughly n ≳ 200 at desk scale).
    Likelihood,
    /// Differences of the log-likelihood.
    LogLikelihood,
}

fn v_from_logs(ll_star: f64, ll: f64, units: LyapunovUnits) -> f64 {
    match units {
        LyapunovUnits::Likelihood => exp_diff(ll_star, ll),
        LyapunovUnits::LogLikelihood => ll_star - ll,
    }
}

/// `V(θ) = L(θ*) − L(θ)` in the chosen units; exactly zero at the reference.
pub fn lyapunov_value(
    spec: &ModelSpec,
    theta: &MixtureParams,
    theta_star: &MixtureParams,
    data: &Dataset,
    units: LyapunovUnits,
) -> Result<f64> {
    let ll_star = log_likelihood(spec, theta_star, data)?;
    let ll = log_likelihood(spec, theta, data)?;
    Ok(v_from_logs(ll_star, ll, units))
}

/// `ΔV(θ) = V(F(θ)) − V(θ)`; non-positive whenever the map ascends the
/// likelihood.
pub fn lyapunov_decrement<F>(
    spec: &ModelSpec,
    theta: &MixtureParams,
    theta_star: &MixtureParams,
    data: &Dataset,
    units: LyapunovUnits,
    step: F,
) -> Result<f64>
where
    F: Fn(&MixtureParams) -> Result<MixtureParams>,
{
    let next = step(theta)?;
    let v_next = lyapunov_value(spec, &next, theta_star, data, units)?;
    let v_here = lyapunov_value(spec, theta, theta_star, data, units)?;
    Ok(v_next - v_here)
}

/// `Q(θ,θ') − (log L(θ) − D(θ'‖θ) − H(θ'))`; an identity, so the result is
/// numerical noise.
pub fn q_decomposition_residual(
    spec: &ModelSpec,
    theta: &MixtureParams,
    anchor: &MixtureParams,
    data: &Dataset,
) -> Result<f64> {
    let q = q_function(spec, theta, anchor, data)?;
    let ll = log_likelihood(spec, theta, data)?;
    let kl = posterior_kl(spec, anchor, theta, data)?;
    let h = posterior_entropy(spec, anchor, data)?;
    Ok(q - (ll - kl - h))
}

/// Both sides of the per-step ascent inequality
/// `log L(F(θ)) ≥ log L(θ) + D(θ ‖ F(θ))`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AscentCertificate {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

pub fn ascent_certificate<F>(
    spec: &ModelSpec,
    theta: &MixtureParams,
    data: &Dataset,
    step: F,
) -> Result<AscentCertificate>
where
    F: Fn(&MixtureParams) -> Result<MixtureParams>,
{
    let next = step(theta)?;
    let lhs = log_likelihood(spec, &next, data)?;
    let rhs = log_likelihood(spec, theta, data)? + posterior_kl(spec, theta, &next, data)?;
    Ok(AscentCertificate { lhs, rhs, slack: lhs - rhs })
}

/// One diagnosed trajectory row.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub k: usize,
    pub log_likelihood: f64,
    pub step_norm: f64,
    pub ascent_slack: f64,
    pub kl_to_next: f64,
    pub v: f64,
    pub dv: f64,
}

/// Recompute likelihoods, ascent certificates and the descent values for a
/// recorded orbit. With no explicit reference, the best-likelihood state of
/// the orbit serves as `θ*`.
pub fn diagnose_states(
    spec: &ModelSpec,
    states: &[Vec<f64>],
    data: &Dataset,
    theta_star: Option<&MixtureParams>,
    units: LyapunovUnits,
) -> Result<Vec<DiagnosticRow>> {
    let params: Vec<MixtureParams> = states
        .iter()
        .map(|s| MixtureParams::from_flat_clamped(spec, s))
        .collect::<Result<_>>()?;
    let lls: Vec<f64> = params
        .iter()
        .map(|p| log_likelihood(spec, p, data))
        .collect::<Result<_>>()?;
    let ll_star = match theta_star {
        Some(p) => log_likelihood(spec, p, data)?,
        None => lls.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };

    let n = states.len();
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let step_norm = if k == 0 { 0.0 } else { l2_distance(&states[k], &states[k - 1]) };
        let (slack, kl) = if k + 1 < n {
            let kl = posterior_kl(spec, &params[k], &params[k + 1], data)?;
            (lls[k + 1] - lls[k] - kl, kl)
        } else {
            (0.0, 0.0)
        };
        let v = v_from_logs(ll_star, lls[k], units);
        let dv = if k + 1 < n { v_from_logs(ll_star, lls[k + 1], units) - v } else { 0.0 };
        rows.push(DiagnosticRow {
            k,
            log_likelihood: lls[k],
            step_norm,
            ascent_slack: slack,
            kl_to_next: kl,
            v,
            dv,
        });
    }
    Ok(rows)
}

/// Convenience wrapper over a solver trajectory.
pub fn diagnose_trajectory(
    spec: &ModelSpec,
    trajectory: &Trajectory,
    data: &Dataset,
    theta_star: Option<&MixtureParams>,
    units: LyapunovUnits,
) -> Result<Vec<DiagnosticRow>> {
    diagnose_states(spec, &trajectory.states(), data, theta_star, units)
}
