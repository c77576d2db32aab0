//! The five subcommands: synthetic data, fitting, trajectory diagnostics,
//! stability certification, basin mapping.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::Serialize;
use serde_json::json;

use em_dynamics::error::{Error, Result};
use em_dynamics::io as eio;
use em_dynamics::rng::indexed_rng;
use em_dynamics::{
    basin_sample, classify_equilibrium, diagnose_states, diagnose_trajectory, estimate_rate,
    exponential_constants, l2_distance, l2_norm, numeric_gradient, run, sample_params_in_ball,
    verify_exponential_trace, BasinReport, Classification, ClassifyOptions, Dataset, Family,
    InnerAscentConfig, IterationBudget, LyapunovUnits, MapSystem, MixtureParams, ModelSpec,
    SamplingPlan, SolverConfig, StabilityCertificate, TerminalStatus, TraceReport,
};

use crate::report::{write_report, RunManifest};

pub struct Floors {
    pub variance_floor: f64,
    pub weight_floor: f64,
}

fn load_model(path: &Path, floors: &Floors) -> Result<(ModelSpec, MixtureParams)> {
    let file = eio::read_params_file(path)?;
    let spec = file.to_spec(floors.variance_floor, floors.weight_floor)?;
    let params = file.to_params(&spec)?;
    Ok((spec, params))
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ColumnStat {
    mean: f64,
    variance: f64,
}

#[derive(Serialize)]
struct SynthReport {
    manifest: RunManifest,
    family: Family,
    n: usize,
    dim: usize,
    columns: Vec<ColumnStat>,
}

fn sample_row(spec: &ModelSpec, gen: &MixtureParams, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = indexed_rng(seed, index as u64);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut component = spec.n_components - 1;
    for (j, w) in gen.weights().iter().enumerate() {
        acc += w;
        if u < acc {
            component = j;
            break;
        }
    }
    match spec.family {
        Family::GaussianDiag => {
            let mean = gen.mean(component, spec.data_dim);
            let log_var = gen.log_variances(component, spec.data_dim);
            (0..spec.data_dim)
                .map(|l| {
                    Normal::new(mean[l], (0.5 * log_var[l]).exp()).unwrap().sample(&mut rng)
                })
                .collect()
        }
        Family::Poisson => {
            let lambda = gen.rates()[component];
            let y: f64 = Poisson::new(lambda).unwrap().sample(&mut rng);
            vec![y]
        }
    }
}

pub fn cmd_synth(params: &Path, n: usize, seed: u64, out: &Path, floors: &Floors) -> Result<()> {
    let (spec, gen) = load_model(params, floors)?;
    ensure_out(out)?;
    let rows: Vec<Vec<f64>> = (0..n).map(|i| sample_row(&spec, &gen, seed, i)).collect();
    let dataset_path = out.join("dataset.csv");
    eio::write_dataset_csv(&dataset_path, &rows, spec.data_dim)?;

    let columns = (0..spec.data_dim)
        .map(|l| {
            if n == 0 {
                return ColumnStat { mean: 0.0, variance: 0.0 };
            }
            let mean = rows.iter().map(|r| r[l]).sum::<f64>() / n as f64;
            let variance =
                rows.iter().map(|r| (r[l] - mean).powi(2)).sum::<f64>() / n as f64;
            ColumnStat { mean, variance }
        })
        .collect();

    let manifest = RunManifest::new(
        "synth",
        json!({
            "params": params.display().to_string(),
            "n": n,
            "variance_floor": floors.variance_floor,
            "weight_floor": floors.weight_floor,
        }),
        Some(seed),
    )
    .with_dataset(&dataset_path)?;
    write_report(
        &out.join("synth_report.json"),
        &SynthReport { manifest, family: spec.family, n, dim: spec.data_dim, columns },
    )
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FitSummary {
    manifest: RunManifest,
    status: TerminalStatus,
    iterations: usize,
    final_loglik: f64,
    delta: Option<f64>,
    units: LyapunovUnits,
    final_params: eio::ParamsFile,
}

pub struct InitSpec<'a> {
    pub params: Option<&'a Path>,
    pub init_seed: Option<u64>,
    pub family: Option<Family>,
    pub components: Option<usize>,
}

fn seeded_initial(
    spec: &ModelSpec,
    data: &Dataset,
    seed: u64,
) -> Result<MixtureParams> {
    let k = spec.n_components;
    let weights = vec![1.0 / k as f64; k];
    match spec.family {
        Family::GaussianDiag => {
            let mut means = Vec::with_capacity(k);
            for j in 0..k {
                let mut rng = indexed_rng(seed, j as u64);
                let row = data.row(rng.random_range(0..data.n()));
                means.push(row.to_vec());
            }
            let log_variances = (0..k)
                .map(|_| {
                    (0..spec.data_dim)
                        .map(|l| data.column_variance(l).max(spec.variance_floor).ln())
                        .collect()
                })
                .collect();
            MixtureParams::gaussian(spec, weights, means, log_variances)
        }
        Family::Poisson => {
            let mean = data.column_mean(0).max(0.1);
            let rates = (0..k)
                .map(|j| {
                    let mut rng = indexed_rng(seed, j as u64);
                    mean * (0.5 + rng.random::<f64>())
                })
                .collect();
            MixtureParams::poisson(spec, weights, rates)
        }
    }
}

fn initial_point(
    init: &InitSpec<'_>,
    data: &Dataset,
    floors: &Floors,
) -> Result<(ModelSpec, MixtureParams)> {
    if let Some(path) = init.params {
        return load_model(path, floors);
    }
    let seed = init.init_seed.ok_or_else(|| {
        Error::InvalidSpec("need --params or --init-seed with --family/--components".into())
    })?;
    let family = init
        .family
        .ok_or_else(|| Error::InvalidSpec("--init-seed needs --family".into()))?;
    let k = init
        .components
        .ok_or_else(|| Error::InvalidSpec("--init-seed needs --components".into()))?;
    let spec = ModelSpec::new(family, k, data.dim(), floors.variance_floor, floors.weight_floor)?;
    let theta0 = seeded_initial(&spec, data, seed)?;
    Ok((spec, theta0))
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_fit(
    data_path: &Path,
    init: &InitSpec<'_>,
    config_path: Option<&Path>,
    delta: Option<f64>,
    units: LyapunovUnits,
    seed: Option<u64>,
    out: &Path,
    floors: &Floors,
) -> Result<()> {
    let data = eio::read_dataset_csv(data_path)?;
    let mut config = match config_path {
        Some(p) => eio::read_solver_config(p)?,
        None => SolverConfig::default(),
    };
    if delta.is_some() {
        config.delta = delta;
    }
    let (spec, theta0) = initial_point(init, &data, floors)?;
    data.validate_for(&spec)?;

    let trajectory = run(&spec, &theta0, &data, &config)?;
    let rows = diagnose_trajectory(&spec, &trajectory, &data, None, units)?;

    ensure_out(out)?;
    eio::write_trajectory_csv(&out.join("trajectory.csv"), &rows)?;
    eio::write_states_csv(&out.join("states.csv"), &trajectory.states())?;

    let manifest = RunManifest::new(
        "fit",
        json!({
            "data": data_path.display().to_string(),
            "config": serde_json::to_value(&config).map_err(|e| Error::Io(e.to_string()))?,
            "init": init.params.map(|p| p.display().to_string()),
            "init_seed": init.init_seed,
            "variance_floor": floors.variance_floor,
            "weight_floor": floors.weight_floor,
        }),
        seed.or(init.init_seed),
    )
    .with_dataset(data_path)?;

    let summary = FitSummary {
        manifest,
        status: trajectory.status,
        iterations: trajectory.iterations(),
        final_loglik: trajectory.final_log_likelihood(),
        delta: config.delta,
        units,
        final_params: eio::ParamsFile::from_params(&spec, &trajectory.final_params),
    };
    write_report(&out.join("fit_summary.json"), &summary)
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DiagnoseSummary {
    manifest: RunManifest,
    n_states: usize,
    units: LyapunovUnits,
    final_v: f64,
    max_slack_violation: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_diagnose(
    data_path: &Path,
    states_path: &Path,
    theta_star: Option<&Path>,
    family: Option<Family>,
    components: Option<usize>,
    units: LyapunovUnits,
    out: &Path,
    floors: &Floors,
) -> Result<()> {
    let data = eio::read_dataset_csv(data_path)?;
    let states = eio::read_states_csv(states_path)?;
    if states.is_empty() {
        return Err(Error::InvalidData("states file has no rows".into()));
    }

    let (spec, reference) = if let Some(path) = theta_star {
        let (spec, p) = load_model(path, floors)?;
        (spec, Some(p))
    } else {
        let family = family
            .ok_or_else(|| Error::InvalidSpec("need --theta-star or --family".into()))?;
        let k = components
            .ok_or_else(|| Error::InvalidSpec("need --theta-star or --components".into()))?;
        let spec =
            ModelSpec::new(family, k, data.dim(), floors.variance_floor, floors.weight_floor)?;
        (spec, None)
    };
    data.validate_for(&spec)?;

    let rows = diagnose_states(&spec, &states, &data, reference.as_ref(), units)?;
    ensure_out(out)?;
    eio::write_trajectory_csv(&out.join("trajectory_diagnosed.csv"), &rows)?;

    let manifest = RunManifest::new(
        "diagnose",
        json!({
            "data": data_path.display().to_string(),
            "states": states_path.display().to_string(),
            "theta_star": theta_star.map(|p| p.display().to_string()),
        }),
        None,
    )
    .with_dataset(data_path)?;
    let summary = DiagnoseSummary {
        manifest,
        n_states: rows.len(),
        units,
        final_v: rows.last().map(|r| r.v).unwrap_or(f64::NAN),
        max_slack_violation: rows
            .iter()
            .map(|r| (-r.ascent_slack).max(0.0))
            .fold(0.0, f64::max),
    };
    write_report(&out.join("diagnose_summary.json"), &summary)
}

// ---------------------------------------------------------------------------
// stability
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct StabilityReport {
    manifest: RunManifest,
    certificate: StabilityCertificate,
    trace: Option<TraceReport>,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_stability(
    data_path: &Path,
    theta_star_path: &Path,
    radius: f64,
    samples: usize,
    shells: usize,
    seed: u64,
    units: LyapunovUnits,
    out: &Path,
    floors: &Floors,
) -> Result<()> {
    let data = eio::read_dataset_csv(data_path)?;
    let (spec, theta_star) = load_model(theta_star_path, floors)?;
    data.validate_for(&spec)?;

    let mut certificate =
        classify_equilibrium(&spec, &theta_star, &data, &ClassifyOptions::default())?;
    let mut trace = None;

    if matches!(
        certificate.classification,
        Classification::MleCandidate | Classification::LocalMax
    ) {
        let plan = SamplingPlan { radius, n_samples: samples, n_shells: shells, seed };
        let constants = exponential_constants(&spec, &theta_star, &data, &plan, units)?;

        // empirical rate from a fresh orbit started inside the certified ball
        let mut rate_rng = indexed_rng(seed, u64::MAX / 2);
        let start = sample_params_in_ball(&spec, &theta_star, radius / 4.0, &mut rate_rng)?;
        let orbit = run(&spec, &start, &data, &SolverConfig::default())?;
        let star_flat = theta_star.flatten();
        let returned = orbit.status == TerminalStatus::Converged
            && l2_distance(&orbit.final_params.flatten(), &star_flat) <= 1e-6;
        if returned {
            certificate.empirical_rate = estimate_rate(&orbit.states(), &star_flat).ok();
            if let Some(gamma) = constants.gamma {
                trace =
                    Some(verify_exponential_trace(&orbit.states(), &star_flat, constants.c, gamma));
            }
        }
        certificate.rate_bound = Some(constants.c);
        certificate.bound_satisfied =
            certificate.empirical_rate.map(|mu| mu <= constants.c);
        certificate.constants = Some(constants);
    }

    ensure_out(out)?;
    let manifest = RunManifest::new(
        "stability",
        json!({
            "data": data_path.display().to_string(),
            "theta_star": theta_star_path.display().to_string(),
            "radius": radius,
            "samples": samples,
            "shells": shells,
            "units": units,
        }),
        Some(seed),
    )
    .with_dataset(data_path)?;
    write_report(
        &out.join("stability_certificate.json"),
        &StabilityReport { manifest, certificate, trace },
    )
}

// ---------------------------------------------------------------------------
// basin
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BasinFileReport {
    manifest: RunManifest,
    report: BasinReport,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_basin(
    data_path: &Path,
    center_path: &Path,
    radius: f64,
    samples: usize,
    seed: u64,
    delta: Option<f64>,
    budget: IterationBudget,
    merge_radius: f64,
    out: &Path,
    floors: &Floors,
) -> Result<()> {
    let data = eio::read_dataset_csv(data_path)?;
    let (spec, center) = load_model(center_path, floors)?;
    data.validate_for(&spec)?;

    let system = match delta {
        None => MapSystem::em(&spec, &data),
        Some(d) => MapSystem::delta_em(&spec, &data, d, InnerAscentConfig::default()),
    };
    let report =
        basin_sample(&system, &center.flatten(), radius, samples, seed, &budget, merge_radius)?;

    ensure_out(out)?;
    let grad_of = |state: &[f64]| -> f64 {
        let f = |v: &[f64]| {
            MixtureParams::from_flat_clamped(&spec, v)
                .and_then(|p| em_dynamics::log_likelihood(&spec, &p, &data))
                .unwrap_or(f64::NAN)
        };
        numeric_gradient(f, state, 1e-5).map(|g| l2_norm(&g)).unwrap_or(f64::NAN)
    };
    let mut csv = String::from("init,assignment,iterations,final_grad_norm\n");
    for (i, o) in report.outcomes.iter().enumerate() {
        let label = match o.assignment {
            em_dynamics::Assignment::Limit(idx) => idx.to_string(),
            em_dynamics::Assignment::Diverged => "diverged".to_string(),
            em_dynamics::Assignment::MaxIters => "max_iters".to_string(),
        };
        csv.push_str(&format!(
            "{i},{label},{},{}\n",
            o.iterations,
            eio::format_f64(grad_of(&o.final_state))
        ));
    }
    std::fs::write(out.join("basin_assignments.csv"), csv)?;

    let manifest = RunManifest::new(
        "basin",
        json!({
            "data": data_path.display().to_string(),
            "center": center_path.display().to_string(),
            "radius": radius,
            "samples": samples,
            "delta": delta,
            "max_iters": budget.max_steps,
            "stop_tol": budget.stop_tol,
            "merge_radius": merge_radius,
        }),
        Some(seed),
    )
    .with_dataset(data_path)?;
    write_report(&out.join("basin_report.json"), &BasinFileReport { manifest, report })
}
