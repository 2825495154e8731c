use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use coordwise::objectives::catalog;
use coordwise::{run, Method, Status, Trajectory};

use crate::config::{ExperimentConfig, NamedOrder, OrderSpec, Resolved};
use crate::error::{CliError, CliResult};
use crate::output::{exit_code, fmt_f64, summarize, write_json, write_trajectory_csv, Summary};

pub const THREADS_ENV: &str = "CW_ARMIJO_THREADS";

pub fn list_functions() -> String {
    let mut out = String::new();
    for info in catalog() {
        let _ = writeln!(out, "{}", info.signature);
        let _ = writeln!(out, "    f = {}", info.formula);
        let _ = writeln!(out, "    blocks: {}", info.partition);
        let _ = writeln!(out, "    minima: {}", info.minima);
    }
    out
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Runs one configured experiment.
pub fn execute(cfg: &ExperimentConfig) -> CliResult<(Resolved, Trajectory)> {
    let resolved = cfg.resolve()?;
    let traj = run(&resolved.objective, &resolved.z0, &resolved.run)?;
    Ok((resolved, traj))
}

pub struct RunOutcome {
    pub summary: Summary,
    pub exit_code: i32,
    pub trajectory_path: PathBuf,
    pub summary_path: PathBuf,
}

pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> CliResult<RunOutcome> {
    let (resolved, traj) = execute(cfg)?;
    let order = if cfg.method == Method::Coordinatewise {
        cfg.order.label()
    } else {
        String::new()
    };
    let summary = summarize(&resolved.objective, &traj, &resolved.run, &order, cfg.expect_diverge);
    ensure_dir(out)?;
    let trajectory_path = out.join("trajectory.csv");
    let summary_path = out.join("summary.json");
    write_trajectory_csv(&trajectory_path, &traj)?;
    write_json(&summary_path, &summary)?;
    Ok(RunOutcome {
        exit_code: exit_code(traj.status, cfg.expect_diverge),
        summary,
        trajectory_path,
        summary_path,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    pub order: String,
    pub status: String,
    pub iterations: usize,
    pub final_f: f64,
    pub final_grad_norm: f64,
}

fn variants(blocks: usize) -> Vec<(Method, Option<NamedOrder>)> {
    let mut v = vec![
        (Method::Standard, None),
        (Method::Backtracking, None),
        (Method::Coordinatewise, Some(NamedOrder::XFirst)),
    ];
    if blocks >= 2 {
        v.push((Method::Coordinatewise, Some(NamedOrder::YFirst)));
    }
    v
}

/// Standard, backtracking and both static coordinate-wise orders from the
/// same start. Functions with a single block get no y-first row.
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<CompareRow>> {
    let blocks = cfg.objective()?.partition().num_blocks();
    let mut rows = Vec::new();
    for (method, order) in variants(blocks) {
        let mut c = cfg.clone();
        c.method = method;
        if let Some(o) = order {
            c.order = OrderSpec::Named(o);
        }
        let (_, traj) = execute(&c)?;
        let last = traj.last();
        rows.push(CompareRow {
            method: method.to_string(),
            order: order.map(|_| c.order.label()).unwrap_or_default(),
            status: traj.status.to_string(),
            iterations: traj.iterations(),
            final_f: last.value,
            final_grad_norm: last.grad_norm,
        });
    }
    ensure_dir(out)?;
    let path = out.join("compare.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["method", "order", "status", "iterations", "final_f", "final_grad_norm"])?;
    for r in &rows {
        w.write_record([
            r.method.clone(),
            r.order.clone(),
            r.status.clone(),
            r.iterations.to_string(),
            fmt_f64(r.final_f),
            fmt_f64(r.final_grad_norm),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(rows)
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let mut out = format!(
        "{:<16} {:<9} {:<20} {:>10} {:>14} {:>14}\n",
        "method", "order", "status", "iterations", "final f", "final |grad|"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:<9} {:<20} {:>10} {:>14.6e} {:>14.6e}",
            r.method, r.order, r.status, r.iterations, r.final_f, r.final_grad_norm
        );
    }
    out
}

/// Hyperparameter grid for `sweep`; every combination is run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta0: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            alpha: vec![0.25, 0.5],
            beta: vec![0.5, 0.7],
            delta0: vec![1.0, 2.0],
        }
    }
}

impl Grid {
    pub fn settings(&self) -> Vec<(f64, f64, f64)> {
        let mut s = Vec::new();
        for &a in &self.alpha {
            for &b in &self.beta {
                for &d in &self.delta0 {
                    s.push((a, b, d));
                }
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub delta0: f64,
    pub method: String,
    pub order: String,
    pub status: Status,
    pub iterations: usize,
    pub final_f: f64,
    pub final_grad_norm: f64,
}

pub const SWEEP_HEADER: [&str; 9] = [
    "alpha",
    "beta",
    "delta0",
    "method",
    "order",
    "status",
    "iterations",
    "final_f",
    "final_grad_norm",
];

fn sweep_variants(blocks: usize) -> Vec<(Method, Option<NamedOrder>)> {
    let mut v = vec![
        (Method::Backtracking, None),
        (Method::Coordinatewise, Some(NamedOrder::XFirst)),
    ];
    if blocks >= 2 {
        v.push((Method::Coordinatewise, Some(NamedOrder::YFirst)));
    }
    v.push((Method::Coordinatewise, Some(NamedOrder::Adaptive)));
    v
}

/// Thread count from `CW_ARMIJO_THREADS`; 0 lets rayon decide.
pub fn sweep_threads() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::config(THREADS_ENV, format!("{v:?} is not a thread count"))),
    }
}

/// One row per (alpha, beta, delta0, method, order), in grid order whatever
/// the thread count.
pub fn sweep_rows(cfg: &ExperimentConfig, grid: &Grid, threads: usize) -> CliResult<Vec<SweepRow>> {
    let blocks = cfg.objective()?.partition().num_blocks();
    let mut jobs = Vec::new();
    for (alpha, beta, delta0) in grid.settings() {
        for (method, order) in sweep_variants(blocks) {
            let mut c = cfg.clone();
            c.hp.alpha = alpha;
            c.hp.beta = beta;
            c.hp.delta0 = delta0;
            c.method = method;
            if let Some(o) = order {
                c.order = OrderSpec::Named(o);
            }
            // fail on a bad cell before spending time on the others
            c.resolve()?;
            jobs.push(c);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::config(THREADS_ENV, e))?;
    let results: Vec<CliResult<SweepRow>> = pool.install(|| {
        jobs.par_iter()
            .map(|c| {
                let (_, traj) = execute(c)?;
                let last = traj.last();
                Ok(SweepRow {
                    alpha: c.hp.alpha,
                    beta: c.hp.beta,
                    delta0: c.hp.delta0,
                    method: c.method.to_string(),
                    order: if c.method == Method::Coordinatewise {
                        c.order.label()
                    } else {
                        String::new()
                    },
                    status: traj.status,
                    iterations: traj.iterations(),
                    final_f: last.value,
                    final_grad_norm: last.grad_norm,
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.alpha),
            fmt_f64(r.beta),
            fmt_f64(r.delta0),
            r.method.clone(),
            r.order.clone(),
            r.status.to_string(),
            r.iterations.to_string(),
            fmt_f64(r.final_f),
            fmt_f64(r.final_grad_norm),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn cmd_sweep(cfg: &ExperimentConfig, grid: &Grid, out: &Path) -> CliResult<Vec<SweepRow>> {
    let rows = sweep_rows(cfg, grid, sweep_threads()?)?;
    ensure_dir(out)?;
    write_sweep_csv(&out.join("sweep.csv"), &rows)?;
    Ok(rows)
}

pub fn load_grid(path: &Path) -> CliResult<Grid> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::config(&format!("grid.{}", e.path()), e.inner()))
}
