//! Run summaries and Cartesian parameter sweeps.

use rayon::prelude::*;

use crate::config::Settings;
use crate::controller::ChainController;
use crate::error::{Error, Result};
use crate::sim::{run_scenario, ControllerKind, Trajectory};
use crate::verify::vdot_margin;

/// Final-to-initial norm ratio below which a run counts as converged.
pub const CONVERGENCE_RATIO: f64 = 1e-4;

/// Fraction of the initial norm used for the settling time.
pub const SETTLING_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Converged,
    NotConverged,
    ConfigError(String),
    Diverged(String),
    Failed(String),
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::NotConverged => "not-converged",
            RunStatus::ConfigError(_) => "config-error",
            RunStatus::Diverged(_) => "diverged",
            RunStatus::Failed(_) => "failed",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            RunStatus::ConfigError(m) | RunStatus::Diverged(m) | RunStatus::Failed(m) => m,
            _ => "",
        }
    }

    fn from_error(e: &Error) -> Self {
        match e {
            Error::Config { .. } | Error::InadmissibleGains(_) | Error::InfeasibleGains { .. } => {
                RunStatus::ConfigError(e.to_string())
            }
            Error::Diverged { .. } => RunStatus::Diverged(e.to_string()),
            _ => RunStatus::Failed(e.to_string()),
        }
    }
}

/// Scalar digest of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub status: RunStatus,
    pub initial_norm: Option<f64>,
    pub final_norm: Option<f64>,
    pub max_voltage: Option<f64>,
    /// Smallest normalized margin of the closed-loop decrease estimate over the samples.
    pub min_vdot_margin: Option<f64>,
    pub settling_time: Option<f64>,
}

impl RunSummary {
    fn failed(status: RunStatus) -> Self {
        RunSummary {
            status,
            initial_norm: None,
            final_norm: None,
            max_voltage: None,
            min_vdot_margin: None,
            settling_time: None,
        }
    }
}

/// Summarizes a finished trajectory.
pub fn summarize(traj: &Trajectory) -> Result<RunSummary> {
    let initial = traj.first().state_norm();
    let fin = traj.last().state_norm();
    let meta = &traj.meta;
    let min_vdot_margin = match meta.controller {
        ControllerKind::Mu | ControllerKind::U => {
            let ctl = ChainController::new(meta.saturation, meta.gains)?;
            Some(traj.samples.iter().map(|s| vdot_margin(&ctl, &s.xi)).fold(f64::INFINITY, f64::min))
        }
        _ => None,
    };
    let status = if fin <= CONVERGENCE_RATIO * initial { RunStatus::Converged } else { RunStatus::NotConverged };
    Ok(RunSummary {
        status,
        initial_norm: Some(initial),
        final_norm: Some(fin),
        max_voltage: traj.max_abs_voltage(),
        min_vdot_margin,
        settling_time: traj.settling_time(SETTLING_FRACTION),
    })
}

/// Runs one configuration; errors become the row status.
pub fn run_and_summarize(settings: &Settings) -> RunSummary {
    let outcome = settings.sim_config().and_then(|cfg| run_scenario(&cfg)).and_then(|t| summarize(&t));
    outcome.unwrap_or_else(|e| RunSummary::failed(RunStatus::from_error(&e)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub overrides: Vec<(String, String)>,
    pub summary: RunSummary,
}

/// Grid cells in row-major order (last axis varies fastest).
pub fn grid(settings: &Settings) -> Vec<Vec<(String, String)>> {
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in &settings.sweep {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    cells
}

/// Runs every grid cell concurrently; rows come back in grid order.
pub fn run_sweep(settings: &Settings) -> Vec<SweepRow> {
    let mut base = settings.clone();
    base.sweep.clear();
    grid(settings)
        .into_par_iter()
        .enumerate()
        .map(|(index, overrides)| {
            let mut cell = base.clone();
            let applied = overrides.iter().try_for_each(|(k, v)| cell.set(k, v));
            let summary = match applied {
                Ok(()) => run_and_summarize(&cell),
                Err(e) => RunSummary::failed(RunStatus::from_error(&e)),
            };
            SweepRow { index, overrides, summary }
        })
        .collect()
}
