//! File formats: dataset CSV (`x1,...,xd` header), parameter JSON, solver
//! config JSON, and the per-iteration trajectory/state CSV tables.
//!
//! Floats are written with 17 significant digits so every file round-trips
//! to the exact same bits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::em::SolverConfig;
use crate::error::{Error, Result};
use crate::lyapunov::DiagnosticRow;
use crate::models::{Dataset, Family, MixtureParams, ModelSpec};

/// 17-significant-digit decimal form of a float; parses back to the same
/// bits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// On-disk parameter schema; self-describing so a file can be loaded without
/// a separate spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    pub family: Family,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub weights: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_variances: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
}

impl ParamsFile {
    pub fn from_params(spec: &ModelSpec, params: &MixtureParams) -> Self {
        let (k, d) = (spec.n_components, spec.data_dim);
        match spec.family {
            Family::GaussianDiag => ParamsFile {
                family: spec.family,
                k,
                d,
                weights: params.weights().to_vec(),
                means: Some((0..k).map(|j| params.mean(j, d).to_vec()).collect()),
                log_variances: Some(
                    (0..k).map(|j| params.log_variances(j, d).to_vec()).collect(),
                ),
                rates: None,
            },
            Family::Poisson => ParamsFile {
                family: spec.family,
                k,
                d,
                weights: params.weights().to_vec(),
                means: None,
                log_variances: None,
                rates: Some(params.rates().to_vec()),
            },
        }
    }

    /// Spec implied by the file, with the given floors.
    pub fn to_spec(&self, variance_floor: f64, weight_floor: f64) -> Result<ModelSpec> {
        ModelSpec::new(self.family, self.k, self.d, variance_floor, weight_floor)
    }

    pub fn to_params(&self, spec: &ModelSpec) -> Result<MixtureParams> {
        if spec.family != self.family || spec.n_components != self.k || spec.data_dim != self.d
        {
            return Err(Error::InvalidParams(
                "parameter file does not match the model spec".into(),
            ));
        }
        match self.family {
            Family::GaussianDiag => {
                let means = self
                    .means
                    .clone()
                    .ok_or_else(|| Error::InvalidParams("gaussian file needs means".into()))?;
                let log_variances = self.log_variances.clone().ok_or_else(|| {
                    Error::InvalidParams("gaussian file needs log_variances".into())
                })?;
                MixtureParams::gaussian(spec, self.weights.clone(), means, log_variances)
            }
            Family::Poisson => {
                let rates = self
                    .rates
                    .clone()
                    .ok_or_else(|| Error::InvalidParams("poisson file needs rates".into()))?;
                MixtureParams::poisson(spec, self.weights.clone(), rates)
            }
        }
    }
}

pub fn read_params_file(path: &Path) -> Result<ParamsFile> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_solver_config(path: &Path) -> Result<SolverConfig> {
    let text = fs::read_to_string(path)?;
    let config: SolverConfig = serde_json::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

/// Write a dataset as CSV with an `x1,...,xd` header.
pub fn write_dataset_csv(path: &Path, rows: &[Vec<f64>], dim: usize) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::InvalidData("empty file".into()))?;
    let dim = header.split(',').count();
    if !header.starts_with('x') {
        return Err(Error::InvalidData("expected an x1,...,xd header".into()));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidData(format!("row {}: unparsable cell {cell:?}", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != dim {
            return Err(Error::InvalidData(format!(
                "row {} has {} cells, header declares {dim}",
                lineno + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    Dataset::new(rows)
}

/// Trajectory table: the five per-iteration diagnostics plus the descent
/// columns.
pub fn write_trajectory_csv(path: &Path, rows: &[DiagnosticRow]) -> Result<()> {
    let mut out =
        String::from("k,loglik,step_norm,ascent_slack,kl_to_next,v,dv,slack\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.k,
            format_f64(r.log_likelihood),
            format_f64(r.step_norm),
            format_f64(r.ascent_slack),
            format_f64(r.kl_to_next),
            format_f64(r.v),
            format_f64(r.dv),
            format_f64(r.ascent_slack),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Per-iteration flattened states: `k,t0,...,t{p-1}`.
pub fn write_states_csv(path: &Path, states: &[Vec<f64>]) -> Result<()> {
    let dim = states.first().map(|s| s.len()).unwrap_or(0);
    let mut out = String::from("k");
    for i in 0..dim {
        out.push_str(&format!(",t{i}"));
    }
    out.push('\n');
    for (k, s) in states.iter().enumerate() {
        out.push_str(&k.to_string());
        for v in s {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_states_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::InvalidData("empty file".into()))?;
    if !header.starts_with("k,") {
        return Err(Error::InvalidData("expected a k,t0,... header".into()));
    }
    let mut states = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let _k = cells.next();
        let state: Vec<f64> = cells
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidData(format!("row {}: unparsable cell {cell:?}", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        states.push(state);
    }
    Ok(states)
}
