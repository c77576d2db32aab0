//! Finite mixture models: Gaussian (diagonal covariance) and univariate
//! Poisson families, their likelihood, the exact posterior over component
//! assignments, and the expected complete-data log-likelihood with its
//! KL/entropy decomposition.
//!
//! Parameter points live on a floored open region: mixture weights stay at
//! least `weight_floor` inside the simplex and Gaussian variances stay above
//! `variance_floor` (variances are carried in log coordinates). Every point
//! has a fixed flattening to a Euclidean vector, and that vector's norm is
//! the metric used by all ball-constrained machinery downstream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::numeric::{l2_distance, ln_factorial, log_sum_exp, LN_2PI};

/// Smallest admissible Poisson rate after the M-step clamp.
pub const RATE_FLOOR: f64 = 1e-12;

/// Relative column-mass threshold below which a component counts as empty.
const DEGENERACY_FRACTION: f64 = 1e-10;

/// Mixture family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "gaussian-diag")]
    GaussianDiag,
    #[serde(rename = "poisson")]
    Poisson,
}

/// Structural description of a mixture model: family, component count,
/// data dimension and the floors that keep the parameter region open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub n_components: usize,
    pub data_dim: usize,
    pub variance_floor: f64,
    pub weight_floor: f64,
}

impl ModelSpec {
    /// Diagonal-covariance Gaussian mixture with default floors.
    pub fn gaussian_diag(n_components: usize, data_dim: usize) -> Result<Self> {
        Self::new(Family::GaussianDiag, n_components, data_dim, 1e-8, 1e-6)
    }

    /// Univariate Poisson mixture with default floors.
    pub fn poisson(n_components: usize) -> Result<Self> {
        Self::new(Family::Poisson, n_components, 1, 1e-8, 1e-6)
    }

    pub fn new(
        family: Family,
        n_components: usize,
        data_dim: usize,
        variance_floor: f64,
        weight_floor: f64,
    ) -> Result<Self> {
        let spec = ModelSpec { family, n_components, data_dim, variance_floor, weight_floor };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_components < 1 {
            return Err(Error::InvalidSpec("need at least one component".into()));
        }
        if self.data_dim < 1 {
            return Err(Error::InvalidSpec("need at least one data dimension".into()));
        }
        if self.family == Family::Poisson && self.data_dim != 1 {
            return Err(Error::InvalidSpec("poisson mixtures are univariate".into()));
        }
        let bad_floor = |f: f64| f.is_nan() || f <= 0.0;
        if bad_floor(self.variance_floor) || bad_floor(self.weight_floor) {
            return Err(Error::InvalidSpec("floors must be strictly positive".into()));
        }
        if self.weight_floor * self.n_components as f64 >= 1.0 {
            return Err(Error::InvalidSpec(
                "weight floor times component count must stay below 1".into(),
            ));
        }
        Ok(())
    }

    /// Length of the flattened parameter vector.
    pub fn flat_dim(&self) -> usize {
        match self.family {
            Family::GaussianDiag => self.n_components * (1 + 2 * self.data_dim),
            Family::Poisson => 2 * self.n_components,
        }
    }

    /// Index range of the weight block in the flattened vector.
    pub(crate) fn weight_block(&self) -> std::ops::Range<usize> {
        0..self.n_components
    }

    pub(crate) fn log_variance_floor(&self) -> f64 {
        self.variance_floor.ln()
    }
}

/// Family-specific component parameters, stored row-major per component.
#[derive(Debug, Clone, PartialEq)]
enum ComponentParams {
    Gaussian { means: Vec<f64>, log_variances: Vec<f64> },
    Poisson { rates: Vec<f64> },
}

/// Flags describing how a parameter point was produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepFlags {
    /// An M-step saw a component with (almost) no posterior mass.
    pub degenerate: bool,
    /// A ball-constrained step found no improving point and returned its input.
    pub stalled: bool,
}

/// A point of the parameter region: weights on the floored simplex plus
/// per-component parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    weights: Vec<f64>,
    comps: ComponentParams,
    flags: StepFlags,
}

impl MixtureParams {
    pub fn gaussian(
        spec: &ModelSpec,
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        log_variances: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if spec.family != Family::GaussianDiag {
            return Err(Error::InvalidParams("spec is not a gaussian mixture".into()));
        }
        let (k, d) = (spec.n_components, spec.data_dim);
        if means.len() != k || log_variances.len() != k {
            return Err(Error::InvalidParams("component count mismatch".into()));
        }
        if means.iter().any(|m| m.len() != d) || log_variances.iter().any(|s| s.len() != d) {
            return Err(Error::InvalidParams("component dimension mismatch".into()));
        }
        let params = MixtureParams {
            weights,
            comps: ComponentParams::Gaussian {
                means: means.into_iter().flatten().collect(),
                log_variances: log_variances.into_iter().flatten().collect(),
            },
            flags: StepFlags::default(),
        };
        params.validate(spec)?;
        Ok(params)
    }

    pub fn poisson(spec: &ModelSpec, weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if spec.family != Family::Poisson {
            return Err(Error::InvalidParams("spec is not a poisson mixture".into()));
        }
        if rates.len() != spec.n_components {
            return Err(Error::InvalidParams("component count mismatch".into()));
        }
        let params = MixtureParams {
            weights,
            comps: ComponentParams::Poisson { rates },
            flags: StepFlags::default(),
        };
        params.validate(spec)?;
        Ok(params)
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let k = spec.n_components;
        if self.weights.len() != k {
            return Err(Error::InvalidParams("weight count mismatch".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParams("non-finite weight".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("weights sum to {sum}, expected 1")));
        }
        if self.weights.iter().any(|&w| w < spec.weight_floor) {
            return Err(Error::InvalidParams("weight below floor".into()));
        }
        match (&self.comps, spec.family) {
            (ComponentParams::Gaussian { means, log_variances }, Family::GaussianDiag) => {
                if means.len() != k * spec.data_dim || log_variances.len() != k * spec.data_dim {
                    return Err(Error::InvalidParams("gaussian block length mismatch".into()));
                }
                if means.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidParams("non-finite mean".into()));
                }
                // exp(s) >= variance_floor, checked in log coordinates
                let s_floor = spec.log_variance_floor();
                if log_variances.iter().any(|&s| !s.is_finite() || s < s_floor - 1e-12) {
                    return Err(Error::InvalidParams("variance below floor".into()));
                }
            }
            (ComponentParams::Poisson { rates }, Family::Poisson) => {
                if rates.len() != k {
                    return Err(Error::InvalidParams("rate count mismatch".into()));
                }
                if rates.iter().any(|&r| !r.is_finite() || r <= 0.0) {
                    return Err(Error::InvalidParams("rates must be strictly positive".into()));
                }
            }
            _ => return Err(Error::InvalidParams("family mismatch".into())),
        }
        Ok(())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mean vector of component `j` (gaussian family).
    pub fn mean(&self, j: usize, d: usize) -> &[f64] {
        match &self.comps {
            ComponentParams::Gaussian { means, .. } => &means[j * d..(j + 1) * d],
            ComponentParams::Poisson { .. } => panic!("poisson mixtures have no means"),
        }
    }

    pub fn log_variances(&self, j: usize, d: usize) -> &[f64] {
        match &self.comps {
            ComponentParams::Gaussian { log_variances, .. } => {
                &log_variances[j * d..(j + 1) * d]
            }
            ComponentParams::Poisson { .. } => panic!("poisson mixtures have no variances"),
        }
    }

    pub fn rates(&self) -> &[f64] {
        match &self.comps {
            ComponentParams::Poisson { rates } => rates,
            ComponentParams::Gaussian { .. } => panic!("gaussian mixtures have no rates"),
        }
    }

    pub fn flags(&self) -> StepFlags {
        self.flags
    }

    pub fn is_degenerate(&self) -> bool {
        self.flags.degenerate
    }

    pub fn is_stalled(&self) -> bool {
        self.flags.stalled
    }

    pub(crate) fn with_flags(mut self, flags: StepFlags) -> Self {
        self.flags = flags;
        self
    }

    /// Fixed flattening: `[weights | means row-major | log-variances row-major]`
    /// for the gaussian family, `[weights | rates]` for poisson.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        match &self.comps {
            ComponentParams::Gaussian { means, log_variances } => {
                v.extend_from_slice(means);
                v.extend_from_slice(log_variances);
            }
            ComponentParams::Poisson { rates } => v.extend_from_slice(rates),
        }
        v
    }

    /// Strict inverse of [`flatten`](Self::flatten): validates and never
    /// mutates, so `from_flat(spec, &p.flatten())` reproduces `p` exactly.
    pub fn from_flat(spec: &ModelSpec, v: &[f64]) -> Result<Self> {
        let params = Self::split_flat(spec, v)?;
        params.validate(spec)?;
        Ok(params)
    }

    /// Repairing inverse of [`flatten`](Self::flatten) for search iterates:
    /// weights are clamped to the floored simplex and renormalized when off
    /// by more than 1e-12, log-variances and rates are clamped to their
    /// floors. Already-valid vectors pass through bit-identically.
    pub fn from_flat_clamped(spec: &ModelSpec, v: &[f64]) -> Result<Self> {
        let mut params = Self::split_flat(spec, v)?;
        project_to_floored_simplex(&mut params.weights, spec.weight_floor)?;
        match &mut params.comps {
            ComponentParams::Gaussian { means, log_variances } => {
                if means.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidParams("non-finite mean".into()));
                }
                let s_floor = spec.log_variance_floor();
                for s in log_variances.iter_mut() {
                    if !s.is_finite() {
                        return Err(Error::InvalidParams("non-finite log-variance".into()));
                    }
                    if *s < s_floor {
                        *s = s_floor;
                    }
                }
            }
            ComponentParams::Poisson { rates } => {
                for r in rates.iter_mut() {
                    if !r.is_finite() {
                        return Err(Error::InvalidParams("non-finite rate".into()));
                    }
                    if *r < RATE_FLOOR {
                        *r = RATE_FLOOR;
                    }
                }
            }
        }
        debug_assert!(params.validate(spec).is_ok());
        Ok(params)
    }

    fn split_flat(spec: &ModelSpec, v: &[f64]) -> Result<Self> {
        if v.len() != spec.flat_dim() {
            return Err(Error::InvalidParams(format!(
                "flat vector has length {}, expected {}",
                v.len(),
                spec.flat_dim()
            )));
        }
        let k = spec.n_components;
        let weights = v[..k].to_vec();
        let comps = match spec.family {
            Family::GaussianDiag => {
                let kd = k * spec.data_dim;
                ComponentParams::Gaussian {
                    means: v[k..k + kd].to_vec(),
                    log_variances: v[k + kd..k + 2 * kd].to_vec(),
                }
            }
            Family::Poisson => ComponentParams::Poisson { rates: v[k..2 * k].to_vec() },
        };
        Ok(MixtureParams { weights, comps, flags: StepFlags::default() })
    }

    /// True when any floor constraint is (numerically) active.
    pub fn on_boundary(&self, spec: &ModelSpec) -> bool {
        let near = |x: f64, floor: f64| x <= floor * (1.0 + 1e-9);
        if self.weights.iter().any(|&w| near(w, spec.weight_floor)) {
            return true;
        }
        match &self.comps {
            ComponentParams::Gaussian { log_variances, .. } => {
                let s_floor = spec.log_variance_floor();
                log_variances.iter().any(|&s| s <= s_floor + 1e-9)
            }
            ComponentParams::Poisson { rates } => rates.iter().any(|&r| near(r, RATE_FLOOR)),
        }
    }

    /// Relabels components into a canonical order (first mean coordinate for
    /// gaussian, rate for poisson, ties broken lexicographically), so that
    /// label-permuted copies of the same mixture compare equal.
    pub fn canonical_order(&self, spec: &ModelSpec) -> Self {
        let k = spec.n_components;
        let d = spec.data_dim;
        let mut order: Vec<usize> = (0..k).collect();
        match &self.comps {
            ComponentParams::Gaussian { means, log_variances } => {
                order.sort_by(|&a, &b| {
                    let key = |j: usize| {
                        means[j * d..(j + 1) * d]
                            .iter()
                            .chain(&log_variances[j * d..(j + 1) * d])
                            .copied()
                            .collect::<Vec<_>>()
                    };
                    key(a)
                        .iter()
                        .zip(key(b).iter())
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| *o != std::cmp::Ordering::Equal)
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                let means_out: Vec<f64> =
                    order.iter().flat_map(|&j| means[j * d..(j + 1) * d].to_vec()).collect();
                let vars_out: Vec<f64> = order
                    .iter()
                    .flat_map(|&j| log_variances[j * d..(j + 1) * d].to_vec())
                    .collect();
                MixtureParams {
                    weights: order.iter().map(|&j| self.weights[j]).collect(),
                    comps: ComponentParams::Gaussian {
                        means: means_out,
                        log_variances: vars_out,
                    },
                    flags: self.flags,
                }
            }
            ComponentParams::Poisson { rates } => {
                order.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]));
                MixtureParams {
                    weights: order.iter().map(|&j| self.weights[j]).collect(),
                    comps: ComponentParams::Poisson {
                        rates: order.iter().map(|&j| rates[j]).collect(),
                    },
                    flags: self.flags,
                }
            }
        }
    }

    /// Log density of component `j` at one observation.
    pub fn component_log_density(&self, spec: &ModelSpec, j: usize, obs: &[f64]) -> f64 {
        match &self.comps {
            ComponentParams::Gaussian { means, log_variances } => {
                let d = spec.data_dim;
                let mut acc = 0.0;
                for l in 0..d {
                    let s = log_variances[j * d + l];
                    let diff = obs[l] - means[j * d + l];
                    acc += LN_2PI + s + diff * diff * (-s).exp();
                }
                -0.5 * acc
            }
            ComponentParams::Poisson { rates } => {
                let y = obs[0];
                let lambda = rates[j];
                y * lambda.ln() - lambda - ln_factorial(y as u64)
            }
        }
    }

    /// Per-component `log w_j + log p_j(obs)` into `out`.
    fn weighted_log_densities(&self, spec: &ModelSpec, obs: &[f64], out: &mut [f64]) {
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.weights[j].ln() + self.component_log_density(spec, j, obs);
        }
    }
}

/// Distance between two parameter points in the flattened metric.
pub fn param_distance(a: &MixtureParams, b: &MixtureParams) -> f64 {
    l2_distance(&a.flatten(), &b.flatten())
}

/// Clamp every entry to at least `floor`, then rescale the unclamped mass so
/// the vector sums to one; repeats until no entry falls below the floor.
pub(crate) fn project_to_floored_simplex(w: &mut [f64], floor: f64) -> Result<()> {
    let k = w.len();
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParams("non-finite weight".into()));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        if sum <= 0.0 {
            w.iter_mut().for_each(|x| *x = 1.0 / k as f64);
        } else {
            w.iter_mut().for_each(|x| *x /= sum);
        }
    }
    let mut frozen = vec![false; k];
    for _ in 0..k {
        let n_frozen = frozen.iter().filter(|&&f| f).count();
        let free_target = 1.0 - floor * n_frozen as f64;
        let free_sum: f64 = w.iter().zip(&frozen).filter(|(_, &f)| !f).map(|(x, _)| *x).sum();
        let mut changed = false;
        for (x, f) in w.iter_mut().zip(frozen.iter_mut()) {
            if *f {
                continue;
            }
            let scaled = if free_sum > 0.0 { *x * free_target / free_sum } else { floor };
            if scaled < floor {
                *x = floor;
                *f = true;
                changed = true;
            } else {
                *x = scaled;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(())
}

/// Fixed observed data: `n` rows of `dim` numeric features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidData("need at least one observation".into()));
        }
        let dim = rows[0].len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidData("ragged or empty rows".into()));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite entry".into()));
        }
        Ok(Dataset { n: values.len() / dim, values, dim })
    }

    pub fn from_flat(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidData("flat length not a multiple of dim".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite entry".into()));
        }
        Ok(Dataset { n: values.len() / dim, values, dim })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Family-specific checks: dimension match, and non-negative integer
    /// counts for poisson data.
    pub fn validate_for(&self, spec: &ModelSpec) -> Result<()> {
        if self.dim != spec.data_dim {
            return Err(Error::InvalidData(format!(
                "dataset has dim {}, spec expects {}",
                self.dim, spec.data_dim
            )));
        }
        if spec.family == Family::Poisson {
            for (i, v) in self.values.iter().enumerate() {
                if *v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::InvalidData(format!(
                        "poisson data must be non-negative integers; row {i} has {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn column_mean(&self, l: usize) -> f64 {
        (0..self.n).map(|i| self.row(i)[l]).sum::<f64>() / self.n as f64
    }

    pub fn column_variance(&self, l: usize) -> f64 {
        let m = self.column_mean(l);
        (0..self.n).map(|i| (self.row(i)[l] - m).powi(2)).sum::<f64>() / self.n as f64
    }
}

/// Row-stochastic posterior over component assignments, one row per
/// observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    values: Vec<f64>,
    n: usize,
    k: usize,
}

impl Responsibilities {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }
}

/// Log of the posterior assignment probabilities, kept for entropy/KL sums.
#[derive(Debug, Clone)]
pub(crate) struct LogResponsibilities {
    values: Vec<f64>,
    k: usize,
}

impl LogResponsibilities {
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }
}

/// log L(θ) = Σ_i log Σ_j w_j p_j(y_i), evaluated in log space.
pub fn log_likelihood(spec: &ModelSpec, params: &MixtureParams, data: &Dataset) -> Result<f64> {
    data.validate_for(spec)?;
    let per_obs = exec::map_indices(data.n(), |i| observation_log_likelihood(spec, params, data.row(i)));
    if let Some(bad) = per_obs.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLikelihood { observation: bad });
    }
    Ok(exec::sum_indices(per_obs.len(), |i| per_obs[i]))
}

/// Log mixture density of a single observation.
pub fn observation_log_likelihood(spec: &ModelSpec, params: &MixtureParams, obs: &[f64]) -> f64 {
    let mut a = vec![0.0; spec.n_components];
    params.weighted_log_densities(spec, obs, &mut a);
    log_sum_exp(&a)
}

pub(crate) fn log_responsibilities(
    spec: &ModelSpec,
    params: &MixtureParams,
    data: &Dataset,
) -> Result<LogResponsibilities> {
    data.validate_for(spec)?;
    let k = spec.n_components;
    let mut values = vec![0.0; data.n() * k];
    exec::fill_rows(&mut values, k, |i, row| {
        params.weighted_log_densities(spec, data.row(i), row);
        let lse = log_sum_exp(row);
        row.iter_mut().for_each(|a| *a -= lse);
    });
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLikelihood { observation: bad / k });
    }
    Ok(LogResponsibilities { values, k })
}

/// Posterior component probabilities per observation, computed in log space
/// with max subtraction and renormalized so each row sums to one.
pub fn responsibilities(
    spec: &ModelSpec,
    params: &MixtureParams,
    data: &Dataset,
) -> Result<Responsibilities> {
    let log_r = log_responsibilities(spec, params, data)?;
    let k = spec.n_components;
    let mut values = log_r.values;
    exec::fill_rows(&mut values, k, |_, row| {
        row.iter_mut().for_each(|a| *a = a.exp());
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|a| *a /= sum);
    });
    Ok(Responsibilities { values, n: data.n(), k })
}

/// Expected complete-data log-likelihood
/// `Q(θ, θ') = Σ_i Σ_j r'_ij (log w_j + log p_j(y_i; θ))`.
pub fn q_function(
    spec: &ModelSpec,
    params: &MixtureParams,
    anchor: &MixtureParams,
    data: &Dataset,
) -> Result<f64> {
    let resp = responsibilities(spec, anchor, data)?;
    q_with_responsibilities(spec, params, &resp, data)
}

/// Q with the anchor's responsibilities precomputed; the ball-constrained
/// maximizer calls this in its inner loop.
pub(crate) fn q_with_responsibilities(
    spec: &ModelSpec,
    params: &MixtureParams,
    resp: &Responsibilities,
    data: &Dataset,
) -> Result<f64> {
    let k = spec.n_components;
    let log_w: Vec<f64> = params.weights.iter().map(|w| w.ln()).collect();
    let total = exec::sum_indices(data.n(), |i| {
        let r = resp.row(i);
        let mut acc = 0.0;
        for j in 0..k {
            acc += r[j] * (log_w[j] + params.component_log_density(spec, j, data.row(i)));
        }
        acc
    });
    if !total.is_finite() {
        return Err(Error::NonFiniteLikelihood { observation: 0 });
    }
    Ok(total)
}

/// KL divergence between the posteriors of two parameter points,
/// `D(θ' ‖ θ) = Σ_i Σ_j r'_ij log(r'_ij / r_ij)`.
pub fn posterior_kl(
    spec: &ModelSpec,
    prime: &MixtureParams,
    base: &MixtureParams,
    data: &Dataset,
) -> Result<f64> {
    let lr_prime = log_responsibilities(spec, prime, data)?;
    let lr_base = log_responsibilities(spec, base, data)?;
    Ok(exec::sum_indices(data.n(), |i| {
        let lp = lr_prime.row(i);
        let lq = lr_base.row(i);
        let mut acc = 0.0;
        for j in 0..lp.len() {
            let p = lp[j].exp();
            if p > 0.0 {
                acc += p * (lp[j] - lq[j]);
            }
        }
        acc
    }))
}

/// Shannon entropy of the posterior assignment distribution,
/// `H(θ') = −Σ_i Σ_j r'_ij log r'_ij`.
pub fn posterior_entropy(
    spec: &ModelSpec,
    prime: &MixtureParams,
    data: &Dataset,
) -> Result<f64> {
    let lr = log_responsibilities(spec, prime, data)?;
    Ok(-exec::sum_indices(data.n(), |i| {
        lr.row(i)
            .iter()
            .map(|&l| {
                let p = l.exp();
                if p > 0.0 {
                    p * l
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    }))
}

/// Closed-form maximizer of `Q(·, θ')`: weighted means and variances for the
/// gaussian family, weighted rate averages for poisson, column means of the
/// responsibilities for the weights. Floors are applied afterwards; a
/// component whose posterior mass nearly vanishes sets the degeneracy flag.
pub fn m_step(spec: &ModelSpec, anchor: &MixtureParams, data: &Dataset) -> Result<MixtureParams> {
    let resp = responsibilities(spec, anchor, data)?;
    let k = spec.n_components;
    let d = spec.data_dim;
    let n = data.n();

    let mass = exec::accumulate_indices(n, k, |i, acc| {
        for (a, r) in acc.iter_mut().zip(resp.row(i)) {
            *a += r;
        }
    });
    let degenerate = mass.iter().any(|&m| m < DEGENERACY_FRACTION * n as f64);

    let mut weights: Vec<f64> = mass.iter().map(|m| m / n as f64).collect();
    project_to_floored_simplex(&mut weights, spec.weight_floor)?;

    let comps = match spec.family {
        Family::GaussianDiag => {
            let wsum = exec::accumulate_indices(n, k * d, |i, acc| {
                let r = resp.row(i);
                let y = data.row(i);
                for j in 0..k {
                    for l in 0..d {
                        acc[j * d + l] += r[j] * y[l];
                    }
                }
            });
            let mut means = vec![0.0; k * d];
            for j in 0..k {
                for l in 0..d {
                    means[j * d + l] = if mass[j] > 0.0 {
                        wsum[j * d + l] / mass[j]
                    } else {
                        anchor.mean(j, d)[l]
                    };
                }
            }
            let sq = exec::accumulate_indices(n, k * d, |i, acc| {
                let r = resp.row(i);
                let y = data.row(i);
                for j in 0..k {
                    for l in 0..d {
                        let diff = y[l] - means[j * d + l];
                        acc[j * d + l] += r[j] * diff * diff;
                    }
                }
            });
            let s_floor = spec.log_variance_floor();
            let mut log_variances = vec![0.0; k * d];
            for j in 0..k {
                for l in 0..d {
                    log_variances[j * d + l] = if mass[j] > 0.0 {
                        let var = (sq[j * d + l] / mass[j]).max(spec.variance_floor);
                        var.ln().max(s_floor)
                    } else {
                        anchor.log_variances(j, d)[l]
                    };
                }
            }
            ComponentParams::Gaussian { means, log_variances }
        }
        Family::Poisson => {
            let wsum = exec::accumulate_indices(n, k, |i, acc| {
                let r = resp.row(i);
                let y = data.row(i)[0];
                for j in 0..k {
                    acc[j] += r[j] * y;
                }
            });
            let rates = (0..k)
                .map(|j| {
                    if mass[j] > 0.0 {
                        (wsum[j] / mass[j]).max(RATE_FLOOR)
                    } else {
                        anchor.rates()[j]
                    }
                })
                .collect();
            ComponentParams::Poisson { rates }
        }
    };

    let out = MixtureParams {
        weights,
        comps,
        flags: StepFlags { degenerate, stalled: false },
    };
    debug_assert!(out.validate(spec).is_ok());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn two_gaussian_spec() -> ModelSpec {
        ModelSpec::gaussian_diag(2, 1).unwrap()
    }

    fn symmetric_pair() -> (ModelSpec, MixtureParams, Dataset) {
        let spec = two_gaussian_spec();
        let params = MixtureParams::gaussian(
            &spec,
            vec![0.5, 0.5],
            vec![vec![-1.0], vec![1.0]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        let data = Dataset::new(vec![vec![-1.0], vec![1.0]]).unwrap();
        (spec, params, data)
    }

    /// Direct-density oracle: per-point mixture density without log-space
    /// tricks, safe only for well-scaled inputs.
    fn direct_log_likelihood(spec: &ModelSpec, p: &MixtureParams, data: &Dataset) -> f64 {
        (0..data.n())
            .map(|i| {
                let dens: f64 = (0..spec.n_components)
                    .map(|j| p.weights()[j] * p.component_log_density(spec, j, data.row(i)).exp())
                    .sum();
                dens.ln()
            })
            .sum()
    }

    fn random_gaussian_params(spec: &ModelSpec, rng: &mut impl Rng) -> MixtureParams {
        let k = spec.n_components;
        let d = spec.data_dim;
        let mut w: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let means = (0..k)
            .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let vars = (0..k)
            .map(|_| (0..d).map(|_| rng.random_range(-1.5..1.0)).collect())
            .collect();
        MixtureParams::gaussian(spec, w, means, vars).unwrap()
    }

    #[test]
    fn standard_normal_log_likelihood_at_zero() {
        let spec = ModelSpec::gaussian_diag(1, 1).unwrap();
        let params =
            MixtureParams::gaussian(&spec, vec![1.0], vec![vec![0.0]], vec![vec![0.0]]).unwrap();
        let data = Dataset::new(vec![vec![0.0]]).unwrap();
        let ll = log_likelihood(&spec, &params, &data).unwrap();
        assert!((ll - (-0.5 * LN_2PI)).abs() < 1e-12);
    }

    #[test]
    fn identical_components_match_single_component() {
        let spec1 = ModelSpec::gaussian_diag(1, 1).unwrap();
        let p1 =
            MixtureParams::gaussian(&spec1, vec![1.0], vec![vec![0.0]], vec![vec![0.0]]).unwrap();
        let spec2 = two_gaussian_spec();
        let p2 = MixtureParams::gaussian(
            &spec2,
            vec![0.5, 0.5],
            vec![vec![0.0], vec![0.0]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        let data = Dataset::new(vec![vec![0.0]]).unwrap();
        let a = log_likelihood(&spec1, &p1, &data).unwrap();
        let b = log_likelihood(&spec2, &p2, &data).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_matches_direct_density_oracle() {
        let (spec, params, data) = symmetric_pair();
        let ll = log_likelihood(&spec, &params, &data).unwrap();
        assert!((ll - direct_log_likelihood(&spec, &params, &data)).abs() < 1e-12);
    }

    #[test]
    fn poisson_log_likelihood_matches_hand_pmf() {
        let spec = ModelSpec::poisson(2).unwrap();
        let params = MixtureParams::poisson(&spec, vec![0.3, 0.7], vec![1.0, 4.0]).unwrap();
        let data = Dataset::new(vec![vec![2.0], vec![0.0]]).unwrap();
        // pmf(y; λ) = λ^y e^{-λ} / y!
        let pmf = |y: f64, l: f64| l.powf(y) * (-l).exp() / (1..=(y as u64)).product::<u64>().max(1) as f64;
        let expect = (0.3 * pmf(2.0, 1.0) + 0.7 * pmf(2.0, 4.0)).ln()
            + (0.3 * pmf(0.0, 1.0) + 0.7 * pmf(0.0, 4.0)).ln();
        let ll = log_likelihood(&spec, &params, &data).unwrap();
        assert!((ll - expect).abs() < 1e-12);
    }

    #[test]
    fn responsibilities_of_identical_components_equal_weights() {
        let spec = two_gaussian_spec();
        let params = MixtureParams::gaussian(
            &spec,
            vec![0.3, 0.7],
            vec![vec![1.0], vec![1.0]],
            vec![vec![0.5], vec![0.5]],
        )
        .unwrap();
        let data = Dataset::new(vec![vec![0.2], vec![5.0]]).unwrap();
        let r = responsibilities(&spec, &params, &data).unwrap();
        for i in 0..2 {
            assert!((r.value(i, 0) - 0.3).abs() < 1e-12);
            assert!((r.value(i, 1) - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn responsibilities_symmetric_point_is_half_half() {
        let (spec, params, _) = symmetric_pair();
        let data = Dataset::new(vec![vec![0.0]]).unwrap();
        let r = responsibilities(&spec, &params, &data).unwrap();
        assert!((r.value(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn responsibilities_match_hand_density_ratio() {
        // at y = 1 the density ratio of the two unit-variance components at
        // ∓1 is exp(2), so the favored responsibility is e²/(1+e²)
        let (spec, params, _) = symmetric_pair();
        let data = Dataset::new(vec![vec![1.0]]).unwrap();
        let r = responsibilities(&spec, &params, &data).unwrap();
        let e2 = std::f64::consts::E.powi(2);
        assert!((r.value(0, 1) - e2 / (1.0 + e2)).abs() < 1e-12);
        assert!((r.value(0, 0) - 1.0 / (1.0 + e2)).abs() < 1e-12);
    }

    #[test]
    fn row_sums_are_one() {
        let spec = ModelSpec::gaussian_diag(3, 2).unwrap();
        let mut rng = seeded_rng(11);
        let params = random_gaussian_params(&spec, &mut rng);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..2).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect();
        let data = Dataset::new(rows).unwrap();
        let r = responsibilities(&spec, &params, &data).unwrap();
        for i in 0..data.n() {
            let s: f64 = r.row(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn q_equals_loglik_minus_entropy_at_anchor() {
        let (spec, params, data) = symmetric_pair();
        let q = q_function(&spec, &params, &params, &data).unwrap();
        let ll = log_likelihood(&spec, &params, &data).unwrap();
        let h = posterior_entropy(&spec, &params, &data).unwrap();
        assert!((q + h - ll).abs() < 1e-10 * (1.0 + q.abs()));
    }

    #[test]
    fn q_with_one_component_ignores_anchor() {
        let spec = ModelSpec::gaussian_diag(1, 1).unwrap();
        let p = MixtureParams::gaussian(&spec, vec![1.0], vec![vec![0.3]], vec![vec![0.1]]).unwrap();
        let a1 =
            MixtureParams::gaussian(&spec, vec![1.0], vec![vec![-2.0]], vec![vec![0.8]]).unwrap();
        let a2 =
            MixtureParams::gaussian(&spec, vec![1.0], vec![vec![4.0]], vec![vec![-0.5]]).unwrap();
        let data = Dataset::new(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let q1 = q_function(&spec, &p, &a1, &data).unwrap();
        let q2 = q_function(&spec, &p, &a2, &data).unwrap();
        assert!((q1 - q2).abs() < 1e-12);
    }

    #[test]
    fn q_decomposition_on_random_pairs() {
        let spec = ModelSpec::gaussian_diag(2, 2).unwrap();
        let mut rng = seeded_rng(5);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..2).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let data = Dataset::new(rows).unwrap();
        for _ in 0..50 {
            let theta = random_gaussian_params(&spec, &mut rng);
            let anchor = random_gaussian_params(&spec, &mut rng);
            let q = q_function(&spec, &theta, &anchor, &data).unwrap();
            let ll = log_likelihood(&spec, &theta, &data).unwrap();
            let kl = posterior_kl(&spec, &anchor, &theta, &data).unwrap();
            let h = posterior_entropy(&spec, &anchor, &data).unwrap();
            assert!((q - (ll - kl - h)).abs() <= 1e-10 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn kl_of_point_with_itself_is_exactly_zero() {
        let (spec, params, data) = symmetric_pair();
        assert_eq!(posterior_kl(&spec, &params, &params, &data).unwrap(), 0.0);
    }

    #[test]
    fn kl_nonnegative_on_random_pairs() {
        let spec = ModelSpec::gaussian_diag(3, 1).unwrap();
        let mut rng = seeded_rng(17);
        let rows: Vec<Vec<f64>> =
            (0..25).map(|_| vec![rng.random_range(-4.0..4.0)]).collect();
        let data = Dataset::new(rows).unwrap();
        for _ in 0..1000 {
            let a = random_gaussian_params(&spec, &mut rng);
            let b = random_gaussian_params(&spec, &mut rng);
            assert!(posterior_kl(&spec, &a, &b, &data).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn kl_matches_per_row_direct_summation() {
        let (spec, a, data) = symmetric_pair();
        let b = MixtureParams::gaussian(
            &spec,
            vec![0.4, 0.6],
            vec![vec![-0.5], vec![1.5]],
            vec![vec![0.2], vec![-0.3]],
        )
        .unwrap();
        let ra = responsibilities(&spec, &a, &data).unwrap();
        let rb = responsibilities(&spec, &b, &data).unwrap();
        let mut direct = 0.0;
        for i in 0..data.n() {
            for j in 0..2 {
                direct += ra.value(i, j) * (ra.value(i, j) / rb.value(i, j)).ln();
            }
        }
        let kl = posterior_kl(&spec, &a, &b, &data).unwrap();
        assert!((kl - direct).abs() < 1e-12);
    }

    #[test]
    fn entropy_limits_and_direct_oracle() {
        let (spec, params, _) = symmetric_pair();
        // extremely well-separated observation: near-deterministic assignment
        let far = Dataset::new(vec![vec![8.0]]).unwrap();
        assert!(posterior_entropy(&spec, &params, &far).unwrap() < 1e-4);

        // identical components with uniform weights: n · log 2
        let collapsed = MixtureParams::gaussian(
            &spec,
            vec![0.5, 0.5],
            vec![vec![0.0], vec![0.0]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        let data4 =
            Dataset::new(vec![vec![0.1], vec![-0.4], vec![2.0], vec![1.0]]).unwrap();
        let h = posterior_entropy(&spec, &collapsed, &data4).unwrap();
        assert!((h - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);

        // random point against the direct −Σ r log r sum
        let mut rng = seeded_rng(23);
        let p = random_gaussian_params(&spec, &mut rng);
        let r = responsibilities(&spec, &p, &data4).unwrap();
        let mut direct = 0.0;
        for i in 0..4 {
            for j in 0..2 {
                direct -= r.value(i, j) * r.value(i, j).ln();
            }
        }
        let h2 = posterior_entropy(&spec, &p, &data4).unwrap();
        assert!((h2 - direct).abs() < 1e-12);
    }

    #[test]
    fn m_step_single_component_returns_sample_moments() {
        let spec = ModelSpec::gaussian_diag(1, 1).unwrap();
        let anchor =
            MixtureParams::gaussian(&spec, vec![1.0], vec![vec![9.0]], vec![vec![2.0]]).unwrap();
        let data = Dataset::new(vec![vec![1.0], vec![2.0], vec![3.0], vec![6.0]]).unwrap();
        let out = m_step(&spec, &anchor, &data).unwrap();
        let mean = 3.0;
        let var: f64 = (4.0 + 1.0 + 0.0 + 9.0) / 4.0;
        assert!((out.mean(0, 1)[0] - mean).abs() < 1e-12);
        assert!((out.log_variances(0, 1)[0] - var.ln()).abs() < 1e-12);
        assert_eq!(out.weights()[0], 1.0);
    }

    #[test]
    fn m_step_fixes_symmetric_collapse() {
        let spec = two_gaussian_spec();
        let data = Dataset::new(vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]]).unwrap();
        let mean = 0.0;
        let var: f64 = (4.0 + 1.0 + 1.0 + 4.0) / 4.0;
        let collapsed = MixtureParams::gaussian(
            &spec,
            vec![0.5, 0.5],
            vec![vec![mean], vec![mean]],
            vec![vec![var.ln()], vec![var.ln()]],
        )
        .unwrap();
        let out = m_step(&spec, &collapsed, &data).unwrap();
        assert!(param_distance(&out, &collapsed) < 1e-12);
    }

    #[test]
    fn m_step_means_match_grid_search_argmax() {
        let (spec, anchor, data) = {
            let spec = two_gaussian_spec();
            let anchor = MixtureParams::gaussian(
                &spec,
                vec![0.5, 0.5],
                vec![vec![-0.5], vec![0.5]],
                vec![vec![0.0], vec![0.0]],
            )
            .unwrap();
            let data = Dataset::new(vec![vec![-1.0], vec![1.0]]).unwrap();
            (spec, anchor, data)
        };
        let out = m_step(&spec, &anchor, &data).unwrap();
        let (g0, g1) = grid_argmax_means(&spec, &anchor, &data);
        assert!((out.mean(0, 1)[0] - g0).abs() <= 1e-3);
        assert!((out.mean(1, 1)[0] - g1).abs() <= 1e-3);
    }

    /// Refined 2-d grid search for the Q-maximizing means, holding weights
    /// and variances at the anchor's values. Final resolution 1e-3.
    pub(crate) fn grid_argmax_means(
        spec: &ModelSpec,
        anchor: &MixtureParams,
        data: &Dataset,
    ) -> (f64, f64) {
        let q_of = |m0: f64, m1: f64| {
            let cand = MixtureParams::gaussian(
                spec,
                anchor.weights().to_vec(),
                vec![vec![m0], vec![m1]],
                vec![
                    anchor.log_variances(0, 1).to_vec(),
                    anchor.log_variances(1, 1).to_vec(),
                ],
            )
            .unwrap();
            q_function(spec, &cand, anchor, data).unwrap()
        };
        let mut center = (0.0, 0.0);
        let mut half = 3.0f64;
        for step in [0.1, 0.01, 0.001] {
            let mut best = (f64::NEG_INFINITY, center);
            let steps = (2.0 * half / step).round() as i64;
            for i in 0..=steps {
                for j in 0..=steps {
                    let m0 = center.0 - half + i as f64 * step;
                    let m1 = center.1 - half + j as f64 * step;
                    let q = q_of(m0, m1);
                    if q > best.0 {
                        best = (q, (m0, m1));
                    }
                }
            }
            center = best.1;
            half = step * 1.5;
        }
        center
    }

    #[test]
    fn m_step_dominates_random_probes() {
        let spec = two_gaussian_spec();
        let mut rng = seeded_rng(31);
        let rows: Vec<Vec<f64>> =
            (0..20).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
        let data = Dataset::new(rows).unwrap();
        let anchor = random_gaussian_params(&spec, &mut rng);
        let best = m_step(&spec, &anchor, &data).unwrap();
        let q_best = q_function(&spec, &best, &anchor, &data).unwrap();
        for _ in 0..100 {
            let probe = random_gaussian_params(&spec, &mut rng);
            let q = q_function(&spec, &probe, &anchor, &data).unwrap();
            assert!(q_best >= q - 1e-9);
        }
    }

    #[test]
    fn m_step_flags_empty_component() {
        let spec = ModelSpec::new(Family::GaussianDiag, 2, 1, 1e-8, 1e-6).unwrap();
        // second component centered far away with a tiny weight: its column
        // mass underflows the degeneracy threshold
        let anchor = MixtureParams::gaussian(
            &spec,
            vec![1.0 - 1e-6, 1e-6],
            vec![vec![0.0], vec![500.0]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        let data = Dataset::new(vec![vec![0.0], vec![0.5], vec![-0.5]]).unwrap();
        let out = m_step(&spec, &anchor, &data).unwrap();
        assert!(out.is_degenerate());
        assert!(out.validate(&spec).is_ok());
    }

    #[test]
    fn poisson_m_step_weighted_rates() {
        let spec = ModelSpec::poisson(2).unwrap();
        let anchor = MixtureParams::poisson(&spec, vec![0.5, 0.5], vec![1.0, 6.0]).unwrap();
        let data = Dataset::new(vec![vec![0.0], vec![1.0], vec![5.0], vec![7.0]]).unwrap();
        let r = responsibilities(&spec, &anchor, &data).unwrap();
        let out = m_step(&spec, &anchor, &data).unwrap();
        for j in 0..2 {
            let mass: f64 = (0..4).map(|i| r.value(i, j)).sum();
            let num: f64 = (0..4).map(|i| r.value(i, j) * data.row(i)[0]).sum();
            assert!((out.rates()[j] - num / mass).abs() < 1e-12);
        }
    }

    #[test]
    fn flatten_round_trips_exactly() {
        let spec = ModelSpec::gaussian_diag(3, 2).unwrap();
        let mut rng = seeded_rng(41);
        for _ in 0..20 {
            let p = random_gaussian_params(&spec, &mut rng);
            let back = MixtureParams::from_flat(&spec, &p.flatten()).unwrap();
            assert_eq!(p, back);
        }
        let pspec = ModelSpec::poisson(2).unwrap();
        let p = MixtureParams::poisson(&pspec, vec![0.25, 0.75], vec![0.5, 3.5]).unwrap();
        assert_eq!(p, MixtureParams::from_flat(&pspec, &p.flatten()).unwrap());
    }

    #[test]
    fn clamped_unflatten_repairs_off_simplex_vectors() {
        let spec = two_gaussian_spec();
        let mut v = vec![0.9, 0.4, -1.0, 1.0, 0.0, 0.0];
        v[2] = -1.0;
        let p = MixtureParams::from_flat_clamped(&spec, &v).unwrap();
        assert!(p.validate(&spec).is_ok());
        let s: f64 = p.weights().iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);

        // valid vectors pass through bit-identically
        let q = MixtureParams::gaussian(
            &spec,
            vec![0.5, 0.5],
            vec![vec![-1.0], vec![1.0]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        assert_eq!(q.flatten(), MixtureParams::from_flat_clamped(&spec, &q.flatten()).unwrap().flatten());
    }

    #[test]
    fn floored_simplex_projection_respects_floor() {
        let floor = 0.05;
        let mut w = vec![0.001, 0.002, 0.997];
        project_to_floored_simplex(&mut w, floor).unwrap();
        assert!(w.iter().all(|&x| x >= floor));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_order_sorts_components() {
        let (spec, p, _) = symmetric_pair();
        let swapped = MixtureParams::gaussian(
            &spec,
            vec![0.5, 0.5],
            vec![vec![1.0], vec![-1.0]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        assert_eq!(p.canonical_order(&spec), swapped.canonical_order(&spec));
    }

    #[test]
    fn poisson_dataset_validation() {
        let spec = ModelSpec::poisson(1).unwrap();
        let bad = Dataset::new(vec![vec![1.5]]).unwrap();
        assert!(bad.validate_for(&spec).is_err());
        let neg = Dataset::new(vec![vec![-1.0]]).unwrap();
        assert!(neg.validate_for(&spec).is_err());
        let ok = Dataset::new(vec![vec![3.0]]).unwrap();
        assert!(ok.validate_for(&spec).is_ok());
    }

    #[test]
    fn spec_invariants_enforced() {
        assert!(ModelSpec::new(Family::Poisson, 2, 2, 1e-8, 1e-6).is_err());
        assert!(ModelSpec::new(Family::GaussianDiag, 0, 1, 1e-8, 1e-6).is_err());
        assert!(ModelSpec::new(Family::GaussianDiag, 2, 1, 1e-8, 0.6).is_err());
        assert!(ModelSpec::new(Family::GaussianDiag, 2, 1, 0.0, 1e-6).is_err());
    }
}
