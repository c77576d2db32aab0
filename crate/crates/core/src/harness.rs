//! Generic runner for discrete-time maps `θ[k+1] = F(θ[k])` on flattened
//! coordinates, with limit-point deduplication and basin-of-attraction
//! sampling. Trajectories from different initializations are independent and
//! run in parallel; the reduction into a report is keyed by initialization
//! index, so the output does not depend on scheduling.

use serde::{Deserialize, Serialize};

use crate::em::{delta_em_step, em_step, InnerAscentConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::models::{Dataset, MixtureParams, ModelSpec};
use crate::numeric::{l2_distance, l2_norm};
use crate::rng::indexed_rng;
use crate::stability::{sample_ball_point, TangentBasis};

/// A state norm beyond which a trajectory counts as diverged.
pub const DIVERGENCE_NORM: f64 = 1e6;

type StepFn<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'a>;
type PointFn<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'a>;

/// A discrete-time map on R^p together with the optional structure the
/// report machinery can exploit: a canonicalizer that quotients out label
/// permutations before merging, and a projection onto the feasible set for
/// sampled initializations.
pub struct MapSystem<'a> {
    pub dimension: usize,
    pub label: String,
    step: StepFn<'a>,
    canonicalize: Option<PointFn<'a>>,
    project: Option<PointFn<'a>>,
}

impl<'a> MapSystem<'a> {
    pub fn new<F>(dimension: usize, label: impl Into<String>, step: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'a,
    {
        MapSystem {
            dimension,
            label: label.into(),
            step: Box::new(step),
            canonicalize: None,
            project: None,
        }
    }

    pub fn with_canonicalizer<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'a,
    {
        self.canonicalize = Some(Box::new(f));
        self
    }

    pub fn with_projection<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'a,
    {
        self.project = Some(Box::new(f));
        self
    }

    /// Full-update map of a mixture model on flattened coordinates.
    pub fn em(spec: &'a ModelSpec, data: &'a Dataset) -> Self {
        Self::mixture_map(spec, data, "em", em_step)
    }

    /// Ball-constrained map with radius `delta`.
    pub fn delta_em(
        spec: &'a ModelSpec,
        data: &'a Dataset,
        delta: f64,
        inner: InnerAscentConfig,
    ) -> Self {
        Self::mixture_map(spec, data, format!("delta-em({delta})"), move |spec, p, data| {
            delta_em_step(spec, p, data, delta, &inner)
        })
    }

    fn mixture_map<F>(
        spec: &'a ModelSpec,
        data: &'a Dataset,
        label: impl Into<String>,
        step: F,
    ) -> Self
    where
        F: Fn(&ModelSpec, &MixtureParams, &Dataset) -> Result<MixtureParams>
            + Send
            + Sync
            + 'a,
    {
        MapSystem {
            dimension: spec.flat_dim(),
            label: label.into(),
            step: Box::new(move |v: &[f64]| {
                let p = MixtureParams::from_flat_clamped(spec, v)?;
                Ok(step(spec, &p, data)?.flatten())
            }),
            canonicalize: Some(Box::new(move |v: &[f64]| {
                Ok(MixtureParams::from_flat_clamped(spec, v)?.canonical_order(spec).flatten())
            })),
            project: Some(Box::new(move |v: &[f64]| {
                Ok(MixtureParams::from_flat_clamped(spec, v)?.flatten())
            })),
        }
    }

    pub fn step(&self, state: &[f64]) -> Result<Vec<f64>> {
        (self.step)(state)
    }

    pub fn canonical(&self, state: &[f64]) -> Result<Vec<f64>> {
        match &self.canonicalize {
            Some(f) => f(state),
            None => Ok(state.to_vec()),
        }
    }

    pub fn project(&self, state: &[f64]) -> Result<Vec<f64>> {
        match &self.project {
            Some(f) => f(state),
            None => Ok(state.to_vec()),
        }
    }
}

/// Iteration limits shared by the runner entry points.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterationBudget {
    pub max_steps: usize,
    pub stop_tol: f64,
}

impl Default for IterationBudget {
    fn default() -> Self {
        IterationBudget { max_steps: 1000, stop_tol: 1e-10 }
    }
}

/// Iterate the map from one state, recording every state visited. Stops
/// early once the step length falls below `stop_tol`; the list holds at most
/// `max_steps + 1` states.
pub fn iterate_map(
    system: &MapSystem<'_>,
    initial: &[f64],
    budget: &IterationBudget,
) -> Result<Vec<Vec<f64>>> {
    if initial.len() != system.dimension {
        return Err(Error::InvalidState {
            step: 0,
            detail: format!(
                "state has dimension {}, system expects {}",
                initial.len(),
                system.dimension
            ),
        });
    }
    let mut states = vec![initial.to_vec()];
    for step in 1..=budget.max_steps {
        let next = system.step(states.last().unwrap()).map_err(|e| Error::InvalidState {
            step,
            detail: e.to_string(),
        })?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState { step, detail: "non-finite state".into() });
        }
        let delta = l2_distance(states.last().unwrap(), &next);
        states.push(next);
        if delta < budget.stop_tol {
            break;
        }
    }
    Ok(states)
}

/// Where one initialization ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Index into [`BasinReport::limit_points`].
    Limit(usize),
    Diverged,
    MaxIters,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitOutcome {
    pub assignment: Assignment,
    pub iterations: usize,
    pub final_state: Vec<f64>,
}

/// A deduplicated limit point in canonical coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitPoint {
    pub point: Vec<f64>,
    pub members: usize,
    pub fixed_point_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasinReport {
    pub label: String,
    pub limit_points: Vec<LimitPoint>,
    pub outcomes: Vec<InitOutcome>,
    pub merge_radius: f64,
    /// Fraction of sampled initializations that returned to the sampling
    /// center; only set by [`basin_sample`].
    pub return_fraction: Option<f64>,
}

enum RawOutcome {
    Limit { canonical: Vec<f64>, residual: f64, iterations: usize, final_state: Vec<f64> },
    Diverged { iterations: usize, final_state: Vec<f64> },
    MaxIters { iterations: usize, final_state: Vec<f64> },
}

fn run_one(system: &MapSystem<'_>, init: &[f64], budget: &IterationBudget) -> RawOutcome {
    let mut state = match system.project(init) {
        Ok(s) => s,
        Err(_) => return RawOutcome::Diverged { iterations: 0, final_state: init.to_vec() },
    };
    for step in 1..=budget.max_steps {
        let next = match system.step(&state) {
            Ok(n) => n,
            Err(_) => return RawOutcome::Diverged { iterations: step, final_state: state },
        };
        if next.iter().any(|v| !v.is_finite()) || l2_norm(&next) > DIVERGENCE_NORM {
            return RawOutcome::Diverged { iterations: step, final_state: state };
        }
        let delta = l2_distance(&state, &next);
        state = next;
        if delta < budget.stop_tol {
            // a limit point must actually be fixed under the map
            let residual = match system.step(&state) {
                Ok(image) => l2_distance(&state, &image),
                Err(_) => f64::INFINITY,
            };
            if residual > 10.0 * budget.stop_tol {
                return RawOutcome::MaxIters { iterations: step, final_state: state };
            }
            let canonical = match system.canonical(&state) {
                Ok(c) => c,
                Err(_) => state.clone(),
            };
            return RawOutcome::Limit { canonical, residual, iterations: step, final_state: state };
        }
    }
    RawOutcome::MaxIters { iterations: budget.max_steps, final_state: state }
}

/// Run the map from every initialization and merge the limits that fall
/// within `merge_radius` of each other (after canonicalization) into shared
/// limit points.
pub fn find_limit_points(
    system: &MapSystem<'_>,
    initializations: &[Vec<f64>],
    budget: &IterationBudget,
    merge_radius: f64,
) -> BasinReport {
    let raw = exec::map_indices(initializations.len(), |i| {
        run_one(system, &initializations[i], budget)
    });

    let mut limit_points: Vec<LimitPoint> = Vec::new();
    let mut outcomes = Vec::with_capacity(raw.len());
    for r in raw {
        let outcome = match r {
            RawOutcome::Limit { canonical, residual, iterations, final_state } => {
                let idx = limit_points
                    .iter()
                    .position(|lp| l2_distance(&lp.point, &canonical) <= merge_radius);
                let idx = match idx {
                    Some(i) => {
                        limit_points[i].members += 1;
                        i
                    }
                    None => {
                        limit_points.push(LimitPoint {
                            point: canonical,
                            members: 1,
                            fixed_point_residual: residual,
                        });
                        limit_points.len() - 1
                    }
                };
                InitOutcome { assignment: Assignment::Limit(idx), iterations, final_state }
            }
            RawOutcome::Diverged { iterations, final_state } => {
                InitOutcome { assignment: Assignment::Diverged, iterations, final_state }
            }
            RawOutcome::MaxIters { iterations, final_state } => {
                InitOutcome { assignment: Assignment::MaxIters, iterations, final_state }
            }
        };
        outcomes.push(outcome);
    }

    BasinReport {
        label: system.label.clone(),
        limit_points,
        outcomes,
        merge_radius,
        return_fraction: None,
    }
}

/// Sample initializations in a ball around `center` (derived per-index from
/// the seed) and report which fraction of them converges back to the center.
#[allow(clippy::too_many_arguments)]
pub fn basin_sample(
    system: &MapSystem<'_>,
    center: &[f64],
    radius: f64,
    n_samples: usize,
    seed: u64,
    budget: &IterationBudget,
    merge_radius: f64,
) -> Result<BasinReport> {
    if n_samples == 0 {
        return Ok(BasinReport {
            label: system.label.clone(),
            limit_points: Vec::new(),
            outcomes: Vec::new(),
            merge_radius,
            return_fraction: None,
        });
    }
    let basis = TangentBasis::euclidean(system.dimension);
    let inits: Vec<Vec<f64>> = exec::map_indices(n_samples, |i| {
        let mut rng = indexed_rng(seed, i as u64);
        let raw = sample_ball_point(&basis, center, radius, &mut rng);
        system.project(&raw).unwrap_or(raw)
    });
    let mut report = find_limit_points(system, &inits, budget, merge_radius);

    let canonical_center = system.canonical(center)?;
    let returned = report
        .outcomes
        .iter()
        .filter(|o| match o.assignment {
            Assignment::Limit(idx) => {
                l2_distance(&report.limit_points[idx].point, &canonical_center) <= merge_radius
            }
            _ => false,
        })
        .count();
    report.return_fraction = Some(returned as f64 / n_samples as f64);
    Ok(report)
}
