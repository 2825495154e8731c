//! Trajectory CSV and run summary JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use coordwise::diagnostics::{
    cluster_tail_diameter, critical_point_check, descent_audit, step_norm_trend, vanishing_threshold, StepTrend,
};
use coordwise::{Method, Objective, RunConfig, Status, Trajectory};

use crate::error::{CliError, CliResult};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn trajectory_header(dim: usize, blocks: usize) -> Vec<String> {
    let mut header = vec!["iter".to_string()];
    header.extend((1..=dim).map(|i| format!("z_{i}")));
    header.push("f".into());
    header.push("grad_norm".into());
    header.extend((1..=blocks).map(|i| format!("delta_{i}")));
    header.push("order".into());
    header
}

/// One row per iterate. The `delta_i` of a row are the rates of the step
/// leaving that iterate (empty on the last row and for standard GD rows the
/// fixed rate); `order` is the 1-based block order, space separated.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let first = &traj.records[0].point;
    let (dim, blocks) = (first.len(), first.partition().num_blocks());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trajectory_header(dim, blocks))?;
    for r in &traj.records {
        let mut row = vec![r.iteration.to_string()];
        row.extend(r.point.as_slice().iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(r.value));
        row.push(fmt_f64(r.grad_norm));
        if r.rates.is_empty() {
            row.extend(std::iter::repeat_n(String::new(), blocks));
        } else {
            row.extend(r.rates.iter().map(|&d| fmt_f64(d)));
        }
        row.push(r.order.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" "));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// A trajectory row read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub iteration: usize,
    pub point: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub rates: Vec<f64>,
}

pub fn read_trajectory_csv(path: &Path) -> CliResult<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let dim = header.iter().filter(|h| h.starts_with("z_")).count();
    let blocks = header.iter().filter(|h| h.starts_with("delta_")).count();
    let num = |s: &str| -> CliResult<f64> {
        s.parse()
            .map_err(|_| CliError::Config(format!("not a number in {}: {s:?}", path.display())))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let iteration = field(0)
            .parse()
            .map_err(|_| CliError::Config(format!("bad iteration in {}", path.display())))?;
        let point = (1..=dim).map(|i| num(field(i))).collect::<CliResult<_>>()?;
        let value = num(field(dim + 1))?;
        let grad_norm = num(field(dim + 2))?;
        let rates = (0..blocks)
            .map(|i| field(dim + 3 + i))
            .filter(|s| !s.is_empty())
            .map(num)
            .collect::<CliResult<_>>()?;
        rows.push(CsvRow {
            iteration,
            point,
            value,
            grad_norm,
            rates,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryHyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta0: f64,
    pub max_grid_depth: usize,
    pub base_alpha: bool,
    pub standard_rate: f64,
    pub order: String,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    pub divergence_value_threshold: f64,
    pub divergence_norm_threshold: f64,
    pub cycle_detection: bool,
    pub region_mode: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DescentSummary {
    pub checked_steps: usize,
    pub max_violation: Option<f64>,
    pub point_mismatches: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Absent for standard GD, which has no sufficient decrease test.
    pub descent_audit: Option<DescentSummary>,
    pub critical_point: bool,
    pub step_trend: Option<TrendSummary>,
    /// Diameter of the last 50 iterates; absent for shorter runs.
    pub tail_diameter: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrendSummary {
    pub tail_max_step: f64,
    pub class: String,
}

impl From<StepTrend> for TrendSummary {
    fn from(t: StepTrend) -> Self {
        let class = serde_json::to_value(t.class)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        Self {
            tail_max_step: t.tail_max_step,
            class,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub objective: String,
    pub method: String,
    pub status: String,
    pub iterations: usize,
    pub final_point: Vec<f64>,
    pub final_f: f64,
    pub final_grad_norm: f64,
    pub expect_diverge: bool,
    pub hyperparameters: SummaryHyperParams,
    pub diagnostics: Diagnostics,
}

pub const DESCENT_SLACK: f64 = 1e-10;
pub const TAIL_WINDOW: usize = 50;

pub fn diagnose(obj: &Objective, traj: &Trajectory, run: &RunConfig) -> Diagnostics {
    let descent_audit = if traj.method == Method::Standard {
        None
    } else {
        descent_audit(obj, traj).ok().map(|r| DescentSummary {
            checked_steps: r.steps.len(),
            max_violation: r.max_violation,
            point_mismatches: r.point_mismatches,
            passed: r.passes(DESCENT_SLACK),
        })
    };
    let threshold = vanishing_threshold(run.grad_tolerance, run.hp.delta0);
    Diagnostics {
        descent_audit,
        critical_point: critical_point_check(obj, traj.final_point(), run.grad_tolerance),
        step_trend: step_norm_trend(traj, threshold).ok().map(Into::into),
        tail_diameter: cluster_tail_diameter(traj, TAIL_WINDOW).ok(),
    }
}

pub fn summarize(obj: &Objective, traj: &Trajectory, run: &RunConfig, order: &str, expect_diverge: bool) -> Summary {
    let last = traj.last();
    let hp = &run.hp;
    Summary {
        objective: traj.objective.clone(),
        method: traj.method.to_string(),
        status: traj.status.to_string(),
        iterations: traj.iterations(),
        final_point: last.point.as_slice().to_vec(),
        final_f: last.value,
        final_grad_norm: last.grad_norm,
        expect_diverge,
        hyperparameters: SummaryHyperParams {
            alpha: hp.alpha,
            beta: hp.beta,
            delta0: hp.delta0,
            max_grid_depth: hp.max_grid_depth,
            base_alpha: hp.base_alpha,
            standard_rate: run.standard_rate,
            order: order.to_string(),
            max_iterations: run.max_iterations,
            grad_tolerance: run.grad_tolerance,
            divergence_value_threshold: run.divergence_value_threshold,
            divergence_norm_threshold: run.divergence_norm_threshold,
            cycle_detection: run.cycle_detection.is_some(),
            region_mode: serde_json::to_value(run.region_mode)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        },
        diagnostics: diagnose(obj, traj, run),
    }
}

/// Writes JSON with non-finite numbers as `null`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// Exit code for a finished run: 0 when it converged, or diverged and
/// divergence was expected; 2 otherwise.
pub fn exit_code(status: Status, expect_diverge: bool) -> i32 {
    match status {
        Status::ConvergedGradTol => 0,
        s if expect_diverge && s.is_divergence() => 0,
        _ => 2,
    }
}
