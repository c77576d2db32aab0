//! Equilibrium classification, convergence-rate estimation, and
//! exponential-stability constants.
//!
//! Everything here works on flattened parameter vectors. Because the
//! flattening keeps all K mixture weights, the feasible set is a slice of an
//! affine subspace; curvature questions (Hessian definiteness, the `a`
//! constant) are therefore posed on the tangent subspace of that slice,
//! which removes the spurious zero mode of the redundant weight coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::lyapunov::LyapunovUnits;
use crate::models::{
    log_likelihood, posterior_kl, Dataset, MixtureParams, ModelSpec,
};
use crate::numeric::{exp_diff, l2_distance, l2_norm};
use crate::rng::indexed_rng;
use rand::Rng;
use rand_distr::StandardNormal;

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

/// Central-difference gradient with per-coordinate relative step
/// `h · (1 + |x_i|)`.
pub fn numeric_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let hi = h * (1.0 + x[i].abs());
        probe[i] = x[i] + hi;
        let fp = f(&probe);
        probe[i] = x[i] - hi;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteEval { point: probe });
        }
        grad[i] = (fp - fm) / (2.0 * hi);
    }
    Ok(grad)
}

/// Central-difference Hessian, symmetrized as `(H + Hᵀ)/2`.
pub fn numeric_hessian<F>(f: F, x: &[f64], h: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> f64,
{
    let p = x.len();
    let steps: Vec<f64> = x.iter().map(|xi| h * (1.0 + xi.abs())).collect();
    let f0 = f(x);
    if !f0.is_finite() {
        return Err(Error::NonFiniteEval { point: x.to_vec() });
    }
    let mut hess = vec![vec![0.0; p]; p];
    let mut probe = x.to_vec();
    for i in 0..p {
        probe[i] = x[i] + steps[i];
        let fp = f(&probe);
        probe[i] = x[i] - steps[i];
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteEval { point: probe });
        }
        hess[i][i] = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
        for j in (i + 1)..p {
            let mut eval = |si: f64, sj: f64| {
                probe[i] = x[i] + si * steps[i];
                probe[j] = x[j] + sj * steps[j];
                let v = f(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let fpp = eval(1.0, 1.0);
            let fpm = eval(1.0, -1.0);
            let fmp = eval(-1.0, 1.0);
            let fmm = eval(-1.0, -1.0);
            if ![fpp, fpm, fmp, fmm].iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteEval { point: probe });
            }
            let v = (fpp - fpm - fmp + fmm) / (4.0 * steps[i] * steps[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    Ok(hess)
}

fn sym_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let q = m.len();
    let dm = nalgebra::DMatrix::from_fn(q, q, |i, j| 0.5 * (m[i][j] + m[j][i]));
    dm.symmetric_eigen().eigenvalues.iter().copied().collect()
}

// ---------------------------------------------------------------------------
// tangent subspace of the feasible slice
// ---------------------------------------------------------------------------

/// Orthonormal basis of the directions a constrained parameter point may
/// actually move in.
pub struct TangentBasis {
    cols: Vec<Vec<f64>>,
    ambient: usize,
}

impl TangentBasis {
    /// All of R^p; used for unconstrained scalar fields.
    pub fn euclidean(dim: usize) -> Self {
        let cols = (0..dim)
            .map(|i| {
                let mut v = vec![0.0; dim];
                v[i] = 1.0;
                v
            })
            .collect();
        TangentBasis { cols, ambient: dim }
    }

    /// Sum-zero directions on the weight block (a Helmert basis) plus free
    /// directions on every other coordinate.
    pub fn simplex_tangent(spec: &ModelSpec) -> Self {
        let p = spec.flat_dim();
        let k = spec.weight_block().end;
        let mut cols = Vec::with_capacity(p - 1);
        for j in 1..k {
            let norm = (j as f64 * (j as f64 + 1.0)).sqrt();
            let mut v = vec![0.0; p];
            for item in v.iter_mut().take(j) {
                *item = 1.0 / norm;
            }
            v[j] = -(j as f64) / norm;
            cols.push(v);
        }
        for i in k..p {
            let mut v = vec![0.0; p];
            v[i] = 1.0;
            cols.push(v);
        }
        TangentBasis { cols, ambient: p }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn tangent_dim(&self) -> usize {
        self.cols.len()
    }

    /// Map tangent coordinates to an ambient displacement.
    pub fn embed(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient];
        for (zi, col) in z.iter().zip(&self.cols) {
            for (o, c) in out.iter_mut().zip(col) {
                *o += zi * c;
            }
        }
        out
    }

    /// Restrict a symmetric ambient matrix to the tangent subspace: `Bᵀ H B`.
    pub fn reduce(&self, h: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let q = self.cols.len();
        let p = self.ambient;
        // tmp = H B
        let mut tmp = vec![vec![0.0; q]; p];
        for i in 0..p {
            for (c, col) in self.cols.iter().enumerate() {
                tmp[i][c] = (0..p).map(|j| h[i][j] * col[j]).sum();
            }
        }
        let mut out = vec![vec![0.0; q]; q];
        for (r, col) in self.cols.iter().enumerate() {
            for c in 0..q {
                out[r][c] = (0..p).map(|i| col[i] * tmp[i][c]).sum();
            }
        }
        out
    }
}

fn sample_direction(basis: &TangentBasis, rng: &mut impl Rng) -> Vec<f64> {
    let q = basis.tangent_dim();
    loop {
        let z: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
        let norm = l2_norm(&z);
        if norm > 1e-12 {
            return basis.embed(&z.iter().map(|v| v / norm).collect::<Vec<_>>());
        }
    }
}

/// Uniform draw from the tangent ball of the given radius around `center`.
pub fn sample_ball_point(
    basis: &TangentBasis,
    center: &[f64],
    radius: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let dir = sample_direction(basis, rng);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / basis.tangent_dim() as f64);
    center.iter().zip(&dir).map(|(c, d)| c + r * d).collect()
}

fn sample_shell_point(
    basis: &TangentBasis,
    center: &[f64],
    inner: f64,
    outer: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let dir = sample_direction(basis, rng);
    let u: f64 = rng.random();
    let r = inner + u * (outer - inner);
    center.iter().zip(&dir).map(|(c, d)| c + r * d).collect()
}

/// Valid mixture point sampled in the tangent ball around a reference point,
/// with floors re-applied.
pub fn sample_params_in_ball(
    spec: &ModelSpec,
    center: &MixtureParams,
    radius: f64,
    rng: &mut impl Rng,
) -> Result<MixtureParams> {
    let basis = TangentBasis::simplex_tangent(spec);
    let raw = sample_ball_point(&basis, &center.flatten(), radius, rng);
    MixtureParams::from_flat_clamped(spec, &raw)
}

// ---------------------------------------------------------------------------
// equilibrium classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// Fixed point of the full map with negative-definite tangent Hessian.
    MleCandidate,
    /// Stationary with negative-definite tangent Hessian, but not a fixed
    /// point of the full map.
    LocalMax,
    Saddle,
    NonStationary,
    /// A floor constraint is active; curvature claims are not made.
    Boundary,
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyOptions {
    pub grad_tol: f64,
    pub fixed_point_tol: f64,
    pub eig_margin: f64,
    pub grad_h: f64,
    pub hess_h: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            grad_tol: 1e-5,
            fixed_point_tol: 1e-8,
            eig_margin: 1e-10,
            grad_h: 1e-5,
            hess_h: 1e-4,
        }
    }
}

/// Everything we can certify about one equilibrium candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub theta_star: Vec<f64>,
    pub fixed_point_residual: f64,
    pub is_fixed_point: bool,
    pub grad_norm: f64,
    pub hessian_max_eigenvalue: Option<f64>,
    pub classification: Classification,
    pub constants: Option<ExpConstants>,
    pub empirical_rate: Option<f64>,
    pub rate_bound: Option<f64>,
    pub bound_satisfied: Option<bool>,
}

fn clamped_log_likelihood<'a>(spec: &'a ModelSpec, data: &'a Dataset) -> impl Fn(&[f64]) -> f64 + 'a {
    move |v: &[f64]| {
        MixtureParams::from_flat_clamped(spec, v)
            .and_then(|p| log_likelihood(spec, &p, data))
            .unwrap_or(f64::NAN)
    }
}

/// Classify a candidate point: fixed-point residual under the full map,
/// gradient norm, and the top eigenvalue of the tangent-restricted Hessian
/// of the log-likelihood.
pub fn classify_equilibrium(
    spec: &ModelSpec,
    theta_star: &MixtureParams,
    data: &Dataset,
    opts: &ClassifyOptions,
) -> Result<StabilityCertificate> {
    theta_star.validate(spec)?;
    let x = theta_star.flatten();
    let stepped = crate::em::em_step(spec, theta_star, data)?;
    let residual = l2_distance(&x, &stepped.flatten());
    let is_fixed_point = residual <= opts.fixed_point_tol;

    let f = clamped_log_likelihood(spec, data);
    let grad_norm = l2_norm(&numeric_gradient(&f, &x, opts.grad_h)?);

    if theta_star.on_boundary(spec) {
        return Ok(StabilityCertificate {
            theta_star: x,
            fixed_point_residual: residual,
            is_fixed_point,
            grad_norm,
            hessian_max_eigenvalue: None,
            classification: Classification::Boundary,
            constants: None,
            empirical_rate: None,
            rate_bound: None,
            bound_satisfied: None,
        });
    }

    let hess = numeric_hessian(&f, &x, opts.hess_h)?;
    let basis = TangentBasis::simplex_tangent(spec);
    let eigs = sym_eigenvalues(&basis.reduce(&hess));
    let hmax = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let classification = if grad_norm > opts.grad_tol {
        Classification::NonStationary
    } else if hmax < -opts.eig_margin {
        if is_fixed_point {
            Classification::MleCandidate
        } else {
            Classification::LocalMax
        }
    } else {
        Classification::Saddle
    };

    Ok(StabilityCertificate {
        theta_star: x,
        fixed_point_residual: residual,
        is_fixed_point,
        grad_norm,
        hessian_max_eigenvalue: Some(hmax),
        classification,
        constants: None,
        empirical_rate: None,
        rate_bound: None,
        bound_satisfied: None,
    })
}

// ---------------------------------------------------------------------------
// convergence rate
// ---------------------------------------------------------------------------

/// Median of the last (up to ten) usable ratios
/// `‖θ_{k+1}−θ*‖ / ‖θ_k−θ*‖`; ratios whose denominator is below 1e-13 are
/// discarded.
pub fn estimate_rate(states: &[Vec<f64>], theta_star: &[f64]) -> Result<f64> {
    let dists: Vec<f64> = states.iter().map(|s| l2_distance(s, theta_star)).collect();
    let mut ratios = Vec::new();
    for w in dists.windows(2) {
        if w[0] >= 1e-13 {
            ratios.push(w[1] / w[0]);
        }
    }
    if ratios.len() < 3 {
        return Err(Error::InsufficientRateData { valid: ratios.len() });
    }
    let tail_start = ratios.len().saturating_sub(10);
    let mut tail = ratios[tail_start..].to_vec();
    tail.sort_by(f64::total_cmp);
    let m = tail.len();
    Ok(if m % 2 == 1 { tail[m / 2] } else { 0.5 * (tail[m / 2 - 1] + tail[m / 2]) })
}

// ---------------------------------------------------------------------------
// exponential-stability constants
// ---------------------------------------------------------------------------

/// How the constants are sampled. Shell radii fall geometrically by powers
/// of two from `radius`; with the default 8 shells the innermost boundary is
/// `radius / 256`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub radius: f64,
    pub n_samples: usize,
    pub n_shells: usize,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn new(radius: f64, n_samples: usize, seed: u64) -> Self {
        SamplingPlan { radius, n_samples, n_shells: 8, seed }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShellStat {
    pub outer: f64,
    pub inner: f64,
    pub max_ratio: f64,
    pub n_samples: usize,
}

/// The certified constants: quadratic upper bound `a`, quadratic decrement
/// bound `b`, the shell supremum `d`, the decay exponent `γ` (defined when
/// `a > b > 0`) and the envelope prefactor `c = d/a`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpConstants {
    pub units: LyapunovUnits,
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub gamma: Option<f64>,
    pub gamma_note: Option<String>,
    pub c: f64,
    pub plan: SamplingPlan,
    pub shell_stats: Vec<ShellStat>,
}

/// `γ = log a − log(a−b)`, defined when `a > b > 0`.
pub fn gamma_from_constants(a: f64, b: f64) -> Option<f64> {
    (a > b && b > 0.0).then(|| a.ln() - (a - b).ln())
}

pub type ScalarFn<'a> = Box<dyn Fn(&[f64]) -> Result<f64> + Sync + 'a>;
pub type VectorFn<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a>;

/// A scalar field with a step map, abstracting the mixture likelihood so the
/// constants engine can also run on injected analytic objectives.
pub struct ScalarSystem<'a> {
    pub dim: usize,
    /// Log of the objective.
    pub log_objective: ScalarFn<'a>,
    /// The iteration map whose decrement defines `b`.
    pub step: VectorFn<'a>,
    /// Posterior KL from a point to its image, when the system has one.
    pub kl_to_step: Option<ScalarFn<'a>>,
    /// Projection of a raw probe onto the feasible set.
    pub repair: VectorFn<'a>,
}

/// Mixture adapter for the constants engine.
pub fn mixture_system<'a>(spec: &'a ModelSpec, data: &'a Dataset) -> ScalarSystem<'a> {
    ScalarSystem {
        dim: spec.flat_dim(),
        log_objective: Box::new(move |v| {
            let p = MixtureParams::from_flat_clamped(spec, v)?;
            log_likelihood(spec, &p, data)
        }),
        step: Box::new(move |v| {
            let p = MixtureParams::from_flat_clamped(spec, v)?;
            Ok(crate::em::em_step(spec, &p, data)?.flatten())
        }),
        kl_to_step: Some(Box::new(move |v| {
            let p = MixtureParams::from_flat_clamped(spec, v)?;
            let next = crate::em::em_step(spec, &p, data)?;
            posterior_kl(spec, &p, &next, data)
        })),
        repair: Box::new(move |v| {
            Ok(MixtureParams::from_flat_clamped(spec, v)?.flatten())
        }),
    }
}

struct ProbeStat {
    lambda_min: f64,
    b_term: Option<f64>,
    excess: f64,
}

/// Sample the constants for an arbitrary scalar system.
///
/// `a` comes from the most negative sampled eigenvalue of the objective
/// Hessian over the ball (center included), `b` from the worst sampled
/// decrement-to-distance² ratio, and `d` from the running maximum of
/// `V/‖θ−θ*‖` over geometrically shrinking shells (reported per shell so a
/// non-stabilizing maximum is visible). Fails if any probe beats the
/// center's objective beyond numerical slack.
pub fn exponential_constants_with(
    system: &ScalarSystem<'_>,
    basis: &TangentBasis,
    theta_star: &[f64],
    plan: &SamplingPlan,
    units: LyapunovUnits,
    hess_h: f64,
) -> Result<ExpConstants> {
    if plan.radius.is_nan() || plan.radius <= 0.0 || plan.n_samples == 0 || plan.n_shells == 0 {
        return Err(Error::InvalidSpec("sampling plan needs positive radius and counts".into()));
    }
    let ll_star = (system.log_objective)(theta_star)?;
    let slack = 1e-8 * (1.0 + ll_star.abs());

    let objective = |v: &[f64]| (system.log_objective)(v).unwrap_or(f64::NAN);

    let lambda_min_at = |point: &[f64]| -> Result<f64> {
        let hess_l = numeric_hessian(objective, point, hess_h)?;
        let reduced = match units {
            LyapunovUnits::LogLikelihood => basis.reduce(&hess_l),
            LyapunovUnits::Likelihood => {
                // ∇²L = L (∇²ℓ + ∇ℓ ∇ℓᵀ) with ℓ = log L
                let grad = numeric_gradient(objective, point, hess_h)?;
                let ll = (system.log_objective)(point)?;
                let scale = ll.exp();
                let p = point.len();
                let mut h = vec![vec![0.0; p]; p];
                for i in 0..p {
                    for j in 0..p {
                        h[i][j] = scale * (hess_l[i][j] + grad[i] * grad[j]);
                    }
                }
                basis.reduce(&h)
            }
        };
        Ok(sym_eigenvalues(&reduced).into_iter().fold(f64::INFINITY, f64::min))
    };

    let probe_stat = |i: usize| -> Result<ProbeStat> {
        let mut rng = indexed_rng(plan.seed, i as u64);
        let raw = sample_ball_point(basis, theta_star, plan.radius, &mut rng);
        let point = (system.repair)(&raw)?;
        let dist = l2_distance(&point, theta_star);
        let ll = (system.log_objective)(&point)?;
        let excess = ll - ll_star;
        let lambda_min = lambda_min_at(&point)?;
        let b_term = if dist < 1e-13 {
            None
        } else {
            let numerator = match (units, &system.kl_to_step) {
                (LyapunovUnits::LogLikelihood, Some(kl)) => kl(&point)?,
                (LyapunovUnits::LogLikelihood, None) => {
                    let next = (system.step)(&point)?;
                    (system.log_objective)(&next)? - ll
                }
                (LyapunovUnits::Likelihood, _) => {
                    let next = (system.step)(&point)?;
                    let ll_next = (system.log_objective)(&next)?;
                    exp_diff(ll_next, ll)
                }
            };
            Some(numerator / (dist * dist))
        };
        Ok(ProbeStat { lambda_min, b_term, excess })
    };

    let stats: Vec<Result<ProbeStat>> = exec::map_indices(plan.n_samples, probe_stat);
    let mut lambda_min = lambda_min_at(theta_star)?;
    let mut b = f64::INFINITY;
    let mut worst_excess: f64 = 0.0;
    for s in stats {
        let s = s?;
        lambda_min = lambda_min.min(s.lambda_min);
        if let Some(t) = s.b_term {
            b = b.min(t);
        }
        worst_excess = worst_excess.max(s.excess);
    }
    if worst_excess > slack {
        return Err(Error::NotLocalMaxInBall { excess: worst_excess });
    }
    if !b.is_finite() {
        b = 0.0;
    }
    let a = -0.5 * lambda_min;

    // shell supremum of V / distance, outermost shell first
    let per_shell = (plan.n_samples / plan.n_shells).max(1);
    let shell_probe = |idx: usize| -> Result<(usize, f64, f64)> {
        let s = idx / per_shell;
        let outer = plan.radius * 0.5f64.powi(s as i32);
        let inner = 0.5 * outer;
        let mut rng = indexed_rng(plan.seed, (plan.n_samples + 1 + idx) as u64);
        let raw = sample_shell_point(basis, theta_star, inner, outer, &mut rng);
        let point = (system.repair)(&raw)?;
        let dist = l2_distance(&point, theta_star);
        let ll = (system.log_objective)(&point)?;
        let v = match units {
            LyapunovUnits::LogLikelihood => ll_star - ll,
            LyapunovUnits::Likelihood => exp_diff(ll_star, ll),
        };
        let ratio = if dist < 1e-13 { f64::NEG_INFINITY } else { v / dist };
        Ok((s, ratio, ll - ll_star))
    };
    let shell_results: Vec<Result<(usize, f64, f64)>> =
        exec::map_indices(per_shell * plan.n_shells, shell_probe);
    let mut shell_stats: Vec<ShellStat> = (0..plan.n_shells)
        .map(|s| ShellStat {
            outer: plan.radius * 0.5f64.powi(s as i32),
            inner: plan.radius * 0.5f64.powi(s as i32 + 1),
            max_ratio: f64::NEG_INFINITY,
            n_samples: 0,
        })
        .collect();
    for r in shell_results {
        let (s, ratio, excess) = r?;
        if excess > slack {
            return Err(Error::NotLocalMaxInBall { excess });
        }
        shell_stats[s].max_ratio = shell_stats[s].max_ratio.max(ratio);
        shell_stats[s].n_samples += 1;
    }
    let d = shell_stats
        .iter()
        .map(|s| s.max_ratio)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);

    let gamma = gamma_from_constants(a, b);
    let gamma_note = if gamma.is_none() {
        Some(if a.is_nan() || a <= 0.0 {
            format!("a = {a:e} is not positive")
        } else if b.is_nan() || b <= 0.0 {
            format!("b = {b:e} is not positive")
        } else {
            format!("a = {a:e} does not exceed b = {b:e}")
        })
    } else {
        None
    };

    Ok(ExpConstants {
        units,
        a,
        b,
        d,
        gamma,
        gamma_note,
        c: d / a,
        plan: *plan,
        shell_stats,
    })
}

/// Mixture front end: constants for a classified local maximum of the
/// likelihood under the full update map.
pub fn exponential_constants(
    spec: &ModelSpec,
    theta_star: &MixtureParams,
    data: &Dataset,
    plan: &SamplingPlan,
    units: LyapunovUnits,
) -> Result<ExpConstants> {
    let system = mixture_system(spec, data);
    let basis = TangentBasis::simplex_tangent(spec);
    exponential_constants_with(&system, &basis, &theta_star.flatten(), plan, units, 1e-4)
}

// ---------------------------------------------------------------------------
// exponential envelope check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceReport {
    pub holds: bool,
    pub first_violation: Option<usize>,
}

/// Check the exponential envelope `‖θ_k − θ*‖ ≤ c · e^{−γk}` along a
/// recorded orbit.
///
/// The prefactor carries norm units (it is `d/a`, a ratio of a linear-in-norm
/// and a quadratic-in-norm constant), so the envelope is absolute: orbits
/// must start within distance `c` of the reference for the bound to be
/// satisfiable at `k = 0`.
pub fn verify_exponential_trace(
    states: &[Vec<f64>],
    theta_star: &[f64],
    c: f64,
    gamma: f64,
) -> TraceReport {
    for (k, s) in states.iter().enumerate() {
        let bound = c * (-gamma * k as f64).exp();
        if l2_distance(s, theta_star) > bound * (1.0 + 1e-12) {
            return TraceReport { holds: false, first_violation: Some(k) };
        }
    }
    TraceReport { holds: true, first_violation: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{em_step, run, SolverConfig};
    use crate::models::param_distance;
    use crate::rng::seeded_rng;
    use rand_distr::{Distribution, Normal};

    fn separated_dataset(n_half: usize, seed: u64) -> Dataset {
        let mut rng = seeded_rng(seed);
        let lo = Normal::new(-3.0, 1.0).unwrap();
        let hi = Normal::new(3.0, 1.0).unwrap();
        let mut rows = Vec::new();
        for _ in 0..n_half {
            rows.push(vec![lo.sample(&mut rng)]);
            rows.push(vec![hi.sample(&mut rng)]);
        }
        Dataset::new(rows).unwrap()
    }

    fn moderate_dataset(n_half: usize, seed: u64) -> Dataset {
        let mut rng = seeded_rng(seed);
        let lo = Normal::new(-1.5, 1.0).unwrap();
        let hi = Normal::new(1.5, 1.0).unwrap();
        let mut rows = Vec::new();
        for _ in 0..n_half {
            rows.push(vec![lo.sample(&mut rng)]);
            rows.push(vec![hi.sample(&mut rng)]);
        }
        Dataset::new(rows).unwrap()
    }

    fn fit_separated(spec: &ModelSpec, data: &Dataset) -> MixtureParams {
        let start = MixtureParams::gaussian(
            spec,
            vec![0.5, 0.5],
            vec![vec![-2.5], vec![2.5]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        run(spec, &start, data, &SolverConfig::default()).unwrap().final_params
    }

    #[test]
    fn gradient_exact_on_quadratic() {
        // f(x) = xᵀ A x with A = [[2, 1], [1, 3]]
        let f = |v: &[f64]| 2.0 * v[0] * v[0] + 2.0 * v[0] * v[1] + 3.0 * v[1] * v[1];
        let x = [0.7, -1.2];
        let g = numeric_gradient(f, &x, 1e-5).unwrap();
        assert!((g[0] - (4.0 * x[0] + 2.0 * x[1])).abs() < 1e-8);
        assert!((g[1] - (2.0 * x[0] + 6.0 * x[1])).abs() < 1e-8);
    }

    #[test]
    fn gradient_matches_analytic_polynomial() {
        let f = |v: &[f64]| v[0].powi(3) - 2.0 * v[0] * v[1] + 0.5 * v[1].powi(2);
        let x = [1.3, -0.4];
        let g = numeric_gradient(f, &x, 1e-5).unwrap();
        assert!((g[0] - (3.0 * x[0] * x[0] - 2.0 * x[1])).abs() < 1e-7);
        assert!((g[1] - (-2.0 * x[0] + x[1])).abs() < 1e-7);
    }

    #[test]
    fn gradient_small_at_single_component_mle() {
        let spec = ModelSpec::gaussian_diag(1, 1).unwrap();
        let data = Dataset::new(vec![vec![0.5], vec![1.5], vec![2.5], vec![3.5]]).unwrap();
        let start =
            MixtureParams::gaussian(&spec, vec![1.0], vec![vec![0.0]], vec![vec![0.0]]).unwrap();
        let mle = em_step(&spec, &start, &data).unwrap();
        let f = clamped_log_likelihood(&spec, &data);
        let g = numeric_gradient(f, &mle.flatten(), 1e-5).unwrap();
        assert!(l2_norm(&g) <= 1e-6);
    }

    #[test]
    fn hessian_exact_on_quadratic() {
        let f = |v: &[f64]| 2.0 * v[0] * v[0] + 2.0 * v[0] * v[1] + 3.0 * v[1] * v[1];
        let h = numeric_hessian(f, &[0.3, 0.9], 1e-4).unwrap();
        assert!((h[0][0] - 4.0).abs() < 1e-6);
        assert!((h[0][1] - 2.0).abs() < 1e-6);
        assert!((h[1][1] - 6.0).abs() < 1e-6);
        assert_eq!(h[0][1], h[1][0]);
    }

    #[test]
    fn nonfinite_probe_is_reported() {
        let f = |v: &[f64]| if v[0] > 1.0 { f64::NAN } else { v[0] };
        assert!(matches!(
            numeric_gradient(f, &[1.0], 1e-3),
            Err(Error::NonFiniteEval { .. })
        ));
    }

    #[test]
    fn tangent_basis_is_orthonormal_and_sum_zero() {
        let spec = ModelSpec::gaussian_diag(3, 2).unwrap();
        let basis = TangentBasis::simplex_tangent(&spec);
        assert_eq!(basis.tangent_dim(), spec.flat_dim() - 1);
        let k = 3;
        for (i, a) in basis.cols.iter().enumerate() {
            let wsum: f64 = a[..k].iter().sum();
            assert!(wsum.abs() < 1e-12);
            for (j, b) in basis.cols.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn classify_converged_run_as_mle_candidate() {
        let spec = ModelSpec::gaussian_diag(2, 1).unwrap();
        let data = separated_dataset(15, 29);
        let limit = fit_separated(&spec, &data);
        let cert =
            classify_equilibrium(&spec, &limit, &data, &ClassifyOptions::default()).unwrap();
        assert!(cert.is_fixed_point, "residual {}", cert.fixed_point_residual);
        assert!(cert.grad_norm <= 1e-5);
        assert_eq!(cert.classification, Classification::MleCandidate);
        assert!(cert.hessian_max_eigenvalue.unwrap() < 0.0);
    }

    /// Heavy-tailed sample: the collapsed equal-components point is an exact
    /// fixed point, and excess kurtosis makes the variance-split direction
    /// strictly unstable. (On an exactly-fitted sample the mean-split
    /// curvature is zero, so platykurtic data would leave the saddle
    /// invisible at second order.)
    fn heavy_tailed_collapse() -> (ModelSpec, Dataset, MixtureParams) {
        let spec = ModelSpec::gaussian_diag(2, 1).unwrap();
        let values = [-6.0, -0.6, -0.5, -0.4, -0.2, 0.2, 0.4, 0.5, 0.6, 6.0];
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let data = Dataset::new(values.iter().map(|y| vec![*y]).collect()).unwrap();
        let collapsed = MixtureParams::gaussian(
            &spec,
            vec![0.5, 0.5],
            vec![vec![mean], vec![mean]],
            vec![vec![var.ln()], vec![var.ln()]],
        )
        .unwrap();
        (spec, data, collapsed)
    }

    #[test]
    fn classify_collapsed_point_as_saddle() {
        let (spec, data, collapsed) = heavy_tailed_collapse();
        let cert =
            classify_equilibrium(&spec, &collapsed, &data, &ClassifyOptions::default()).unwrap();
        assert!(cert.is_fixed_point);
        assert_eq!(cert.classification, Classification::Saddle);
        assert!(cert.hessian_max_eigenvalue.unwrap() > 0.1);
    }

    #[test]
    fn classify_generic_point_as_non_stationary() {
        let spec = ModelSpec::gaussian_diag(2, 1).unwrap();
        let data = separated_dataset(10, 37);
        let p = MixtureParams::gaussian(
            &spec,
            vec![0.4, 0.6],
            vec![vec![-1.0], vec![0.7]],
            vec![vec![0.3], vec![0.1]],
        )
        .unwrap();
        let cert = classify_equilibrium(&spec, &p, &data, &ClassifyOptions::default()).unwrap();
        assert_eq!(cert.classification, Classification::NonStationary);
        assert!(!cert.is_fixed_point);
        assert!(cert.fixed_point_residual > 1e-8);
    }

    #[test]
    fn certificate_is_label_permutation_invariant() {
        let spec = ModelSpec::gaussian_diag(2, 1).unwrap();
        let data = separated_dataset(12, 41);
        let limit = fit_separated(&spec, &data);
        let swapped = MixtureParams::gaussian(
            &spec,
            vec![limit.weights()[1], limit.weights()[0]],
            vec![limit.mean(1, 1).to_vec(), limit.mean(0, 1).to_vec()],
            vec![
                limit.log_variances(1, 1).to_vec(),
                limit.log_variances(0, 1).to_vec(),
            ],
        )
        .unwrap();
        let a = classify_equilibrium(&spec, &limit, &data, &ClassifyOptions::default()).unwrap();
        let b = classify_equilibrium(&spec, &swapped, &data, &ClassifyOptions::default()).unwrap();
        assert!((a.fixed_point_residual - b.fixed_point_residual).abs() < 1e-10);
        assert!((a.grad_norm - b.grad_norm).abs() < 1e-10);
        assert!(
            (a.hessian_max_eigenvalue.unwrap() - b.hessian_max_eigenvalue.unwrap()).abs() < 1e-6
        );
        assert_eq!(a.classification, b.classification);
    }

    #[test]
    fn rate_of_geometric_sequence_is_half() {
        let star = vec![1.0, -2.0];
        let v = [3.0, 4.0];
        let states: Vec<Vec<f64>> = (0..30)
            .map(|k| {
                let s = 0.5f64.powi(k);
                vec![star[0] + s * v[0], star[1] + s * v[1]]
            })
            .collect();
        let mu = estimate_rate(&states, &star).unwrap();
        assert!((mu - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn rate_of_harmonic_sequence_approaches_one() {
        let star = vec![0.0];
        let states: Vec<Vec<f64>> = (1..400).map(|k| vec![1.0 / k as f64]).collect();
        let mu = estimate_rate(&states, &star).unwrap();
        assert!(mu > 0.99 && mu <= 1.0 + 1e-6);
    }

    #[test]
    fn rate_needs_three_ratios() {
        let star = vec![0.0];
        let states = vec![vec![1.0], vec![0.5]];
        assert!(matches!(
            estimate_rate(&states, &star),
            Err(Error::InsufficientRateData { .. })
        ));
    }

    #[test]
    fn synthetic_objective_gives_unit_a() {
        // L(θ) = exp(−‖θ−θ*‖²): the Hessian of L at the center is −2I
        let center = vec![0.5, -0.25];
        let c2 = center.clone();
        let system = ScalarSystem {
            dim: 2,
            log_objective: Box::new(move |v| {
                Ok(-v.iter().zip(&c2).map(|(x, c)| (x - c) * (x - c)).sum::<f64>())
            }),
            step: Box::new(|v| Ok(v.to_vec())),
            kl_to_step: None,
            repair: Box::new(|v| Ok(v.to_vec())),
        };
        let basis = TangentBasis::euclidean(2);
        let plan = SamplingPlan::new(0.2, 64, 9);
        let out = exponential_constants_with(
            &system,
            &basis,
            &center,
            &plan,
            LyapunovUnits::Likelihood,
            1e-4,
        )
        .unwrap();
        assert!((out.a - 1.0).abs() <= 1e-6, "a = {}", out.a);
        assert_eq!(out.b, 0.0);
        assert!(out.gamma.is_none());
    }

    #[test]
    fn gamma_formula_matches_hand_value() {
        let g = gamma_from_constants(1.0, 0.5).unwrap();
        assert!((g - std::f64::consts::LN_2).abs() <= 1e-12);
        assert!(gamma_from_constants(0.5, 1.0).is_none());
        assert!(gamma_from_constants(1.0, 0.0).is_none());
    }

    #[test]
    fn mixture_constants_stable_under_denser_resample() {
        // moderate separation keeps the posterior responsive to every
        // coordinate, so the sampled extrema settle at these counts
        let spec = ModelSpec::gaussian_diag(2, 1).unwrap();
        let data = moderate_dataset(20, 43);
        let start = MixtureParams::gaussian(
            &spec,
            vec![0.5, 0.5],
            vec![vec![-1.5], vec![1.5]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        let limit = run(&spec, &start, &data, &SolverConfig::default()).unwrap().final_params;
        let coarse = exponential_constants(
            &spec,
            &limit,
            &data,
            &SamplingPlan::new(0.05, 1024, 5),
            LyapunovUnits::LogLikelihood,
        )
        .unwrap();
        let dense = exponential_constants(
            &spec,
            &limit,
            &data,
            &SamplingPlan::new(0.05, 10240, 5),
            LyapunovUnits::LogLikelihood,
        )
        .unwrap();
        for (x, y) in [(coarse.a, dense.a), (coarse.b, dense.b), (coarse.d, dense.d)] {
            assert!((x - y).abs() <= 0.2 * x.abs().max(y.abs()), "{x} vs {y}");
        }
        assert!(coarse.a > 0.0 && coarse.b >= 0.0 && coarse.d >= 0.0);
        // sampled minimum cannot be above the single-point curvature value
        let basis = TangentBasis::simplex_tangent(&spec);
        let f = clamped_log_likelihood(&spec, &data);
        let hess = numeric_hessian(&f, &limit.flatten(), 1e-4).unwrap();
        let lmin_center = sym_eigenvalues(&basis.reduce(&hess))
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert!(coarse.a >= -0.5 * lmin_center - 1e-6);
    }

    #[test]
    fn ball_containing_better_points_is_rejected() {
        let (spec, data, saddle) = heavy_tailed_collapse();
        let err = exponential_constants(
            &spec,
            &saddle,
            &data,
            &SamplingPlan::new(0.5, 64, 3),
            LyapunovUnits::LogLikelihood,
        );
        assert!(matches!(err, Err(Error::NotLocalMaxInBall { .. })));
    }

    #[test]
    fn trace_check_on_geometric_sequences() {
        // unit starting distance makes c = 1 the exact equality envelope
        let star = vec![0.0, 0.0];
        let states: Vec<Vec<f64>> = (0..25).map(|k| vec![0.5f64.powi(k), 0.0]).collect();
        let ok = verify_exponential_trace(&states, &star, 1.0, std::f64::consts::LN_2);
        assert!(ok.holds);
        let bad = verify_exponential_trace(&states, &star, 1.0, 4.0f64.ln());
        assert!(!bad.holds);
        assert_eq!(bad.first_violation, Some(1));
    }

    #[test]
    fn sampled_params_stay_valid_and_close() {
        let spec = ModelSpec::gaussian_diag(2, 1).unwrap();
        let data = separated_dataset(10, 53);
        let limit = fit_separated(&spec, &data);
        let mut rng = seeded_rng(8);
        for _ in 0..200 {
            let p = sample_params_in_ball(&spec, &limit, 0.1, &mut rng).unwrap();
            assert!(p.validate(&spec).is_ok());
            assert!(param_distance(&p, &limit) <= 0.1 * (1.0 + 1e-9));
        }
    }
}
