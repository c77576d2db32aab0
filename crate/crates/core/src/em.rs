//! The iteration maps and the solver loop.
//!
//! `em_step` is the closed-form full update; `delta_em_step` maximizes the
//! same objective over a closed ball of radius delta around the current
//! point, falling back to projected gradient ascent when the full update
//! leaves the ball. `run` iterates either map to a fixed tolerance and
//! records per-iteration diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    log_likelihood, m_step, posterior_kl, q_with_responsibilities, responsibilities, Dataset,
    MixtureParams, ModelSpec, Responsibilities, StepFlags,
};
use crate::numeric::{l2_distance, l2_norm};
use crate::stability::numeric_gradient;

/// Settings for the projected gradient ascent inside a ball-constrained step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InnerAscentConfig {
    #[serde(default = "defaults::inner_max_steps")]
    pub max_steps: usize,
    /// Initial step length; `None` means a quarter of the ball radius.
    #[serde(default)]
    pub init_step: Option<f64>,
    #[serde(default = "defaults::inner_shrink")]
    pub shrink: f64,
    #[serde(default = "defaults::inner_grad_tol")]
    pub grad_tol: f64,
}

impl Default for InnerAscentConfig {
    fn default() -> Self {
        InnerAscentConfig {
            max_steps: defaults::inner_max_steps(),
            init_step: None,
            shrink: defaults::inner_shrink(),
            grad_tol: defaults::inner_grad_tol(),
        }
    }
}

/// Solver settings. `delta: None` runs the full update; `Some(δ)` restricts
/// every step to the closed δ-ball around the current iterate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    #[serde(default = "defaults::step_tol")]
    pub step_tol: f64,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub inner_ascent: InnerAscentConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: defaults::max_iters(),
            step_tol: defaults::step_tol(),
            delta: None,
            inner_ascent: InnerAscentConfig::default(),
        }
    }
}

mod defaults {
    pub fn max_iters() -> usize {
        1000
    }
    pub fn step_tol() -> f64 {
        1e-10
    }
    pub fn inner_max_steps() -> usize {
        200
    }
    pub fn inner_shrink() -> f64 {
        0.5
    }
    pub fn inner_grad_tol() -> f64 {
        1e-10
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidSpec("max_iters must be at least 1".into()));
        }
        if self.step_tol.is_nan() || self.step_tol <= 0.0 {
            return Err(Error::InvalidSpec("step_tol must be positive".into()));
        }
        if let Some(d) = self.delta {
            if d.is_nan() || d <= 0.0 {
                return Err(Error::InvalidSpec("delta must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Converged,
    MaxIters,
    Degenerate,
}

/// One row of a trajectory: the state, its log-likelihood, the length of the
/// step that produced it, and the ascent diagnostics of the step it emits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub state: Vec<f64>,
    pub log_likelihood: f64,
    /// ‖θ_k − θ_{k−1}‖; zero for the initial record.
    pub step_norm: f64,
    /// log L(θ_{k+1}) − log L(θ_k) − D(θ_k ‖ θ_{k+1}); zero on the last record.
    pub ascent_slack: f64,
    /// D(θ_k ‖ θ_{k+1}); zero on the last record.
    pub kl_to_next: f64,
}

/// The recorded orbit of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    pub status: TerminalStatus,
    pub final_params: MixtureParams,
}

impl Trajectory {
    pub fn states(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.state.clone()).collect()
    }

    pub fn final_log_likelihood(&self) -> f64 {
        self.records.last().map(|r| r.log_likelihood).unwrap_or(f64::NAN)
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

/// Full update: the closed-form maximizer of `Q(·, θ_k)`.
pub fn em_step(spec: &ModelSpec, current: &MixtureParams, data: &Dataset) -> Result<MixtureParams> {
    m_step(spec, current, data)
}

/// Ball-constrained update: maximizes `Q(·, θ_k)` over the closed δ-ball
/// around the current point. Returns the input with the stalled flag set
/// when no improving point is found.
pub fn delta_em_step(
    spec: &ModelSpec,
    current: &MixtureParams,
    data: &Dataset,
    delta: f64,
    inner: &InnerAscentConfig,
) -> Result<MixtureParams> {
    constrained_q_maximize(spec, current, data, delta, inner)
}

/// Engine of [`delta_em_step`]: accept the full update when it lands inside
/// the ball; otherwise run projected gradient ascent from the radial
/// projection of the full update, backtracking until the objective improves.
pub fn constrained_q_maximize(
    spec: &ModelSpec,
    current: &MixtureParams,
    data: &Dataset,
    delta: f64,
    inner: &InnerAscentConfig,
) -> Result<MixtureParams> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidSpec("delta must be positive".into()));
    }
    let full = m_step(spec, current, data)?;
    let center = current.flatten();
    let full_flat = full.flatten();
    if l2_distance(&center, &full_flat) <= delta {
        return Ok(full);
    }

    let resp = responsibilities(spec, current, data)?;
    let q_of = |flat: &[f64]| -> Result<(MixtureParams, f64)> {
        let params = MixtureParams::from_flat_clamped(spec, flat)?;
        let q = q_with_responsibilities(spec, &params, &resp, data)?;
        Ok((params, q))
    };
    let project = |v: &[f64]| -> Vec<f64> {
        let dist = l2_distance(&center, v);
        if dist <= delta {
            return v.to_vec();
        }
        let scale = delta / dist;
        center.iter().zip(v).map(|(c, x)| c + scale * (x - c)).collect()
    };

    let q_base = q_with_responsibilities(spec, current, &resp, data)?;
    let mut x = project(&full_flat);
    let (mut best_params, mut q_x) = q_of(&x)?;
    let init_step = inner.init_step.unwrap_or(delta / 4.0);

    for _ in 0..inner.max_steps {
        let grad = match numeric_gradient(
            |v| q_of(v).map(|(_, q)| q).unwrap_or(f64::NAN),
            &x,
            1e-6,
        ) {
            Ok(g) => g,
            Err(_) => break,
        };
        let gnorm = l2_norm(&grad);
        if gnorm < inner.grad_tol {
            break;
        }
        let dir: Vec<f64> = grad.iter().map(|g| g / gnorm).collect();
        let mut t = init_step;
        let mut improved = false;
        while t > 1e-16 * delta {
            let proposal: Vec<f64> =
                x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
            let candidate = project(&proposal);
            match q_of(&candidate) {
                Ok((params, q)) if q > q_x => {
                    // re-measure after clamping; the repaired point may sit a
                    // hair outside the ball, in which case re-project once
                    let flat = params.flatten();
                    if l2_distance(&center, &flat) <= delta * (1.0 + 1e-12) {
                        x = flat;
                        best_params = params;
                        q_x = q;
                        improved = true;
                        break;
                    }
                    let (params, q) = q_of(&project(&flat))?;
                    if q > q_x {
                        x = params.flatten();
                        best_params = params;
                        q_x = q;
                        improved = true;
                        break;
                    }
                    t *= inner.shrink;
                }
                _ => t *= inner.shrink,
            }
        }
        if !improved {
            break;
        }
    }

    if q_x > q_base {
        Ok(best_params)
    } else {
        Ok(current.clone().with_flags(StepFlags { stalled: true, ..current.flags() }))
    }
}

fn apply_step(
    spec: &ModelSpec,
    current: &MixtureParams,
    data: &Dataset,
    config: &SolverConfig,
) -> Result<MixtureParams> {
    match config.delta {
        None => em_step(spec, current, data),
        Some(delta) => delta_em_step(spec, current, data, delta, &config.inner_ascent),
    }
}

/// Iterate the configured map from `initial` until the parameter step drops
/// below `step_tol`, the iteration budget runs out, or a degenerate update
/// appears.
pub fn run(
    spec: &ModelSpec,
    initial: &MixtureParams,
    data: &Dataset,
    config: &SolverConfig,
) -> Result<Trajectory> {
    config.validate()?;
    initial.validate(spec)?;
    let ll0 = log_likelihood(spec, initial, data)
        .map_err(|e| wrap_nonfinite_at(e, 0, initial))?;

    let mut records = vec![IterationRecord {
        k: 0,
        state: initial.flatten(),
        log_likelihood: ll0,
        step_norm: 0.0,
        ascent_slack: 0.0,
        kl_to_next: 0.0,
    }];
    let mut current = initial.clone();
    let mut ll_cur = ll0;
    let mut status = TerminalStatus::MaxIters;

    for k in 1..=config.max_iters {
        let next = apply_step(spec, &current, data, config)
            .map_err(|e| wrap_nonfinite_at(e, k, &current))?;
        let ll_next = log_likelihood(spec, &next, data)
            .map_err(|e| wrap_nonfinite_at(e, k, &next))?;
        let kl = posterior_kl(spec, &current, &next, data)?;
        let step_norm = l2_distance(&records.last().unwrap().state, &next.flatten());

        let last = records.last_mut().unwrap();
        last.ascent_slack = ll_next - ll_cur - kl;
        last.kl_to_next = kl;
        records.push(IterationRecord {
            k,
            state: next.flatten(),
            log_likelihood: ll_next,
            step_norm,
            ascent_slack: 0.0,
            kl_to_next: 0.0,
        });

        let degenerate = next.is_degenerate();
        current = next;
        ll_cur = ll_next;
        if degenerate {
            status = TerminalStatus::Degenerate;
            break;
        }
        if step_norm < config.step_tol {
            status = TerminalStatus::Converged;
            break;
        }
    }

    Ok(Trajectory { records, status, final_params: current })
}

fn wrap_nonfinite_at(e: Error, iteration: usize, state: &MixtureParams) -> Error {
    match e {
        Error::NonFiniteLikelihood { observation } => Error::NonFiniteIterate {
            iteration,
            detail: format!(
                "likelihood overflowed at observation {observation}; iterate {:?}",
                state.flatten()
            ),
        },
        other => other,
    }
}

/// Helper used by tests and responsibilities consumers: anchor
/// responsibilities for a given point.
pub fn anchor_responsibilities(
    spec: &ModelSpec,
    params: &MixtureParams,
    data: &Dataset,
) -> Result<Responsibilities> {
    responsibilities(spec, params, data)
}
