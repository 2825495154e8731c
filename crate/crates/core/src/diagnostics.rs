//! Post-hoc checks on finished trajectories.
//!
//! None of these prove anything about the limit of a run; they check what a
//! finite trajectory can show: every accepted step met its sufficient
//! decrease test, converged runs end at (numerically) critical points, and
//! steps either die out or the objective runs off to minus infinity.

use serde::Serialize;

use crate::objectives::{fd_gradient, Objective};
use crate::optimizers::{Method, Status, Trajectory};
use crate::types::BlockVector;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepAudit {
    pub iteration: usize,
    /// `f(z_{n+1}) - f(z_n)`, re-evaluated.
    pub lhs: f64,
    /// `-alpha * sum_i d_i ||g_i(z_n)||^2`, re-evaluated.
    pub rhs: f64,
    /// `lhs - rhs`; positive means the inequality fails.
    pub violation: f64,
    /// Whether the stored next iterate equals the recomputed trial point.
    pub point_matches: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DescentReport {
    pub steps: Vec<StepAudit>,
    /// `None` for a trajectory without steps.
    pub max_violation: Option<f64>,
    pub point_mismatches: usize,
}

impl DescentReport {
    pub fn passes(&self, slack: f64) -> bool {
        self.point_mismatches == 0 && self.max_violation.is_none_or(|v| v <= slack)
    }
}

/// Recomputes the coordinate-wise Armijo inequality for every recorded step
/// from the stored iterates and rates.
pub fn descent_audit(obj: &Objective, traj: &Trajectory) -> Result<DescentReport> {
    if traj.method == Method::Standard {
        return Err(Error::MissingRates);
    }
    let alpha = traj.hp.alpha;
    let mut report = DescentReport::default();
    for w in traj.records.windows(2) {
        let (curr, next) = (&w[0], &w[1]);
        if curr.rates.is_empty() {
            return Err(Error::MissingRates);
        }
        let g = obj.gradient(&curr.point);
        let trial = curr.point.step(&g, &curr.rates);
        let lhs = obj.value(&next.point) - obj.value(&curr.point);
        let decrease: f64 = curr
            .rates
            .iter()
            .zip(g.block_squared_norms())
            .map(|(d, s)| d * s)
            .sum();
        let rhs = -alpha * decrease;
        let violation = lhs - rhs;
        let point_matches = trial == next.point;
        if !point_matches {
            report.point_mismatches += 1;
        }
        report.max_violation = Some(report.max_violation.map_or(violation, |m| m.max(violation)));
        report.steps.push(StepAudit {
            iteration: curr.iteration,
            lhs,
            rhs,
            violation,
            point_matches,
        });
    }
    Ok(report)
}

/// `||grad f(z)|| < tol`.
pub fn critical_point_check(obj: &Objective, z: &BlockVector, tol: f64) -> bool {
    obj.gradient(z).norm() < tol
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrendClass {
    /// Steps have died out.
    Vanishing,
    /// The objective value is heading to minus infinity.
    DivergingValue,
    /// Neither; for a C^1 objective this is an anomaly.
    Neither,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepTrend {
    pub tail_max_step: f64,
    pub class: TrendClass,
}

pub const MIN_TREND_ITERATIONS: usize = 20;

/// Largest `||z_{n+1} - z_n||` over the final 10% of steps, classified
/// against `vanishing_threshold`.
pub fn step_norm_trend(traj: &Trajectory, vanishing_threshold: f64) -> Result<StepTrend> {
    let n = traj.iterations();
    if n < MIN_TREND_ITERATIONS {
        return Err(Error::TooShort {
            needed: MIN_TREND_ITERATIONS,
            have: n,
        });
    }
    let steps = traj.step_norms();
    let tail = n.div_ceil(10);
    let tail_max_step = steps[n - tail..].iter().copied().fold(0.0, f64::max);
    let class = if tail_max_step < vanishing_threshold {
        TrendClass::Vanishing
    } else if traj.status == Status::DivergedValue {
        TrendClass::DivergingValue
    } else {
        TrendClass::Neither
    };
    Ok(StepTrend {
        tail_max_step,
        class,
    })
}

/// The threshold `10 * grad_tolerance * delta0` below which tail steps count
/// as vanished.
pub fn vanishing_threshold(grad_tolerance: f64, delta0: f64) -> f64 {
    10.0 * grad_tolerance * delta0
}

/// Largest pairwise distance among the last `k` iterates. A small value is
/// consistent with the run having a single cluster point; it is not a proof.
pub fn cluster_tail_diameter(traj: &Trajectory, k: usize) -> Result<f64> {
    let n = traj.iterations();
    if k > n {
        return Err(Error::TooShort { needed: k, have: n });
    }
    let tail = &traj.records[traj.records.len() - k..];
    let mut diameter: f64 = 0.0;
    for (i, a) in tail.iter().enumerate() {
        for b in &tail[i + 1..] {
            diameter = diameter.max(a.point.distance(&b.point));
        }
    }
    Ok(diameter)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckEntry {
    pub point: Vec<f64>,
    /// `||analytic - fd||_inf / max(||analytic||_inf, 1)`.
    pub error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_error: f64,
    pub failures: usize,
}

/// Compares analytic gradients to central differences with step `h`.
pub fn grad_check(obj: &Objective, points: &[BlockVector], h: f64, tol: f64) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::default();
    for z in points {
        let analytic = obj.gradient(z);
        let numeric = fd_gradient(obj, z, h)?;
        let diff = analytic
            .as_slice()
            .iter()
            .zip(numeric.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = analytic.as_slice().iter().map(|a| a.abs()).fold(1.0, f64::max);
        let error = diff / scale;
        let passed = error < tol;
        if !passed {
            report.failures += 1;
        }
        report.max_error = report.max_error.max(error);
        report.entries.push(GradCheckEntry {
            point: z.as_slice().to_vec(),
            error,
            passed,
        });
    }
    Ok(report)
}
