//! Re-runs the three worked examples (a|x| + y, x^3 sin(1/x), Rosenbrock)
//! and sets each published number beside what this implementation observes.

use std::fmt::{self, Write as _};
use std::path::Path;

use serde::Serialize;

use coordwise::objectives::{abs, abs_plus_linear, cube_sin_1d, relu_plus_linear, rosenbrock};
use coordwise::optimizers::RegionMode;
use coordwise::{run, BlockVector, OrderPolicy, RunConfig, Status, Trajectory};

use crate::commands::{ensure_dir, sweep_rows, sweep_threads, write_sweep_csv, Grid, SweepRow};
use crate::config::{ExperimentConfig, PAPER_START};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    MatchedQuantitatively,
    MatchedQualitatively,
    NotMatched,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MatchedQuantitatively => "matched-quantitatively",
            Self::MatchedQualitatively => "matched-qualitatively",
            Self::NotMatched => "not-matched",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Finding {
    pub experiment: String,
    pub quantity: String,
    pub paper: String,
    pub observed: String,
    pub verdict: Verdict,
    pub note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PaperReport {
    pub findings: Vec<Finding>,
    pub sweep: Vec<SweepRow>,
}

/// Value threshold for the unbounded examples: a run that reaches it has
/// clearly left for minus infinity.
pub const UNBOUNDED_THRESHOLD: f64 = -1e3;
/// Relative distance within which an iteration count counts as reproduced.
pub const COUNT_TOLERANCE: f64 = 0.1;

fn finding(
    experiment: &str,
    quantity: &str,
    paper: &str,
    observed: String,
    verdict: Verdict,
    note: impl Into<String>,
) -> Finding {
    Finding {
        experiment: experiment.into(),
        quantity: quantity.into(),
        paper: paper.into(),
        observed,
        verdict,
        note: note.into(),
    }
}

fn pt(coords: &[f64]) -> CliResult<BlockVector> {
    Ok(BlockVector::from_blocks(coords.iter().map(|&c| vec![c]).collect())?)
}

fn fmt_point(z: &BlockVector) -> String {
    let parts: Vec<String> = z.as_slice().iter().map(|v| format!("{v:.6e}")).collect();
    format!("({})", parts.join(", "))
}

fn count_verdict(converged: bool, observed: usize, paper: usize) -> Verdict {
    let rel = (observed as f64 - paper as f64).abs() / paper as f64;
    match (converged, rel <= COUNT_TOLERANCE) {
        (true, true) => Verdict::MatchedQuantitatively,
        (true, false) => Verdict::MatchedQualitatively,
        _ => Verdict::NotMatched,
    }
}

fn unbounded_config(cfg: RunConfig) -> RunConfig {
    RunConfig {
        divergence_value_threshold: UNBOUNDED_THRESHOLD,
        max_iterations: 5000,
        ..cfg
    }
}

fn asl_overton(findings: &mut Vec<Finding>) -> CliResult<()> {
    const EXP: &str = "a|x| + y";

    let t = run(&abs(1.0)?, &pt(&[0.3])?, &RunConfig::standard(1.0))?;
    let pts: Vec<String> = t.records.iter().take(4).map(|r| format!("{:.3}", r.point.as_slice()[0])).collect();
    findings.push(finding(
        "|x|",
        "standard GD, rate 1, x0 = 0.3",
        "periodic between two points",
        format!("{} after {} iterations; x_n = {} ...", t.status, t.iterations(), pts.join(", ")),
        if t.status == Status::CycleDetected(2) {
            Verdict::MatchedQualitatively
        } else {
            Verdict::NotMatched
        },
        "",
    ));

    let f = abs_plus_linear(2.0, false)?;
    let z0 = pt(&[0.1, 0.0])?;
    let bt = run(&f, &z0, &unbounded_config(RunConfig::backtracking()))?;
    let bt_long = run(
        &f,
        &z0,
        &RunConfig {
            max_iterations: 2000,
            divergence_value_threshold: f64::NEG_INFINITY,
            ..RunConfig::backtracking()
        },
    )?;
    let window = if bt_long.iterations() >= 2000 {
        format!("{:.3e}", bt_long.path_length(1000, 2000))
    } else {
        format!("n/a ({} after {} iterations)", bt_long.status, bt_long.iterations())
    };
    let bt_x = bt.final_point().as_slice()[0];
    findings.push(finding(
        EXP,
        "backtracking GD, z0 = (0.1, 0)",
        "seems to converge",
        format!(
            "{} after {} iterations, final {}; path length over iterations 1000-2000: {}",
            bt.status,
            bt.iterations(),
            fmt_point(bt.final_point()),
            window
        ),
        if bt.status.is_divergence() || bt.status == Status::NumericalOverflow {
            Verdict::NotMatched
        } else {
            Verdict::MatchedQualitatively
        },
        if bt_x == 0.0 {
            "x_n lands exactly on the kink after finitely many halvings; with sign(0) = 0 the x-gradient vanishes there and the run walks down in y"
        } else {
            ""
        },
    ));

    let fr = abs_plus_linear(2.0, true)?;
    let region = RunConfig {
        region_mode: RegionMode::FromObjective,
        ..RunConfig::backtracking()
    };
    let btr = run(&fr, &z0, &region)?;
    let x_final = btr.final_point().as_slice()[0];
    findings.push(finding(
        EXP,
        "backtracking GD on R^2 minus {x = 0}",
        "converges to a critical point or to the boundary x = 0",
        format!("{} after {} iterations, final {}", btr.status, btr.iterations(), fmt_point(btr.final_point())),
        if !btr.status.is_divergence() && x_final.abs() < 1e-6 {
            Verdict::MatchedQualitatively
        } else {
            Verdict::NotMatched
        },
        "steps capped by dist(z, {x = 0}) / |grad f|",
    ));

    for (label, policy) in [
        ("adaptive", OrderPolicy::LipschitzAdaptive),
        ("x-first", OrderPolicy::x_first()),
        ("y-first", OrderPolicy::y_first()),
    ] {
        let t = run(&f, &z0, &unbounded_config(RunConfig::coordinatewise(policy)))?;
        let full_y = t
            .records
            .iter()
            .filter(|r| !r.rates.is_empty())
            .filter(|r| r.rates[1] == 2.0)
            .count();
        let steps = t.iterations();
        let last = t.final_point().as_slice();
        let toward = t.status == Status::DivergedValue && last[1] < 0.0;
        findings.push(finding(
            EXP,
            &format!("coordinate-wise GD, {label} order"),
            "diverges to (0, -inf); delta_y = delta0",
            format!(
                "{} after {steps} iterations, final {}; delta_y = delta0 on {full_y} of {steps} steps",
                t.status,
                fmt_point(t.final_point())
            ),
            if toward && full_y == steps {
                Verdict::MatchedQualitatively
            } else {
                Verdict::NotMatched
            },
            if toward {
                format!("x stays at {:.3e}; threshold f < {UNBOUNDED_THRESHOLD}", last[0])
            } else {
                "the x-block decrease falls below the rounding of f, so no candidate passes the test".into()
            },
        ));
    }

    let relu = relu_plus_linear(2.0)?;
    let mut statuses = Vec::new();
    for cfg in [
        RunConfig::backtracking(),
        RunConfig::coordinatewise(OrderPolicy::LipschitzAdaptive),
    ] {
        let t = run(&relu, &z0, &unbounded_config(cfg))?;
        statuses.push((t.method, t.status, t.iterations()));
    }
    findings.push(finding(
        "ReLU(x) + y",
        "backtracking and coordinate-wise GD",
        "no problem for either method",
        statuses
            .iter()
            .map(|(m, s, n)| format!("{m}: {s} after {n} iterations"))
            .collect::<Vec<_>>()
            .join("; "),
        if statuses.iter().all(|(_, s, _)| *s == Status::DivergedValue) {
            Verdict::MatchedQualitatively
        } else {
            Verdict::NotMatched
        },
        "f is unbounded below, so divergence in value is the correct outcome",
    ));
    Ok(())
}

const STANDARD_RATES: [f64; 4] = [0.05, 0.1, 0.2, 0.5];

fn cube_sin(findings: &mut Vec<Finding>) -> CliResult<()> {
    const EXP: &str = "x^3 sin(1/x)";
    let f = cube_sin_1d()?;
    let z0 = pt(&[PAPER_START])?;

    // run on past the usual tolerance so the iterate itself can be compared
    let long = |rate: f64, n: usize| -> CliResult<Trajectory> {
        Ok(run(
            &f,
            &z0,
            &RunConfig {
                max_iterations: n,
                grad_tolerance: f64::MIN_POSITIVE,
                cycle_detection: None,
                ..RunConfig::standard(rate)
            },
        )?)
    };
    let mut at_381 = Vec::new();
    let mut first_hit = Vec::new();
    for rate in STANDARD_RATES {
        let t = long(rate, 381)?;
        at_381.push((rate, t.records.get(381).map(|r| r.point.as_slice()[0]), t.status));
        let t = long(rate, 10_000)?;
        let hit = t.records.iter().find(|r| r.point.as_slice()[0].abs() <= 2e-9).map(|r| r.iteration);
        first_hit.push((rate, hit));
    }
    let hit_verdict = if first_hit.iter().any(|(_, h)| h.is_some_and(|n| count_verdict(true, n, 381) == Verdict::MatchedQuantitatively)) {
        Verdict::MatchedQuantitatively
    } else if first_hit.iter().any(|(_, h)| h.is_some()) {
        Verdict::MatchedQualitatively
    } else {
        Verdict::NotMatched
    };
    findings.push(finding(
        EXP,
        "standard GD: first iteration with |x_n| <= 2e-9",
        "381",
        first_hit
            .iter()
            .map(|(r, h)| format!("rate {r}: {}", h.map_or("not reached".to_string(), |n| n.to_string())))
            .collect::<Vec<_>>()
            .join("; "),
        hit_verdict,
        "the rate is not stated; counts are rate dependent",
    ));
    let magnitude = |x: f64| (x.abs() / 2e-9).log10().abs();
    let x_verdict = if at_381.iter().any(|(_, x, _)| x.is_some_and(|x| magnitude(x) <= 0.5)) {
        Verdict::MatchedQuantitatively
    } else if at_381.iter().any(|(_, x, _)| x.is_some_and(|x| x.abs() < 1e-6)) {
        Verdict::MatchedQualitatively
    } else {
        Verdict::NotMatched
    };
    findings.push(finding(
        EXP,
        "standard GD: x_381",
        "2e-09",
        at_381
            .iter()
            .map(|(r, x, status)| {
                format!(
                    "rate {r}: {}",
                    x.map_or(format!("stopped early, {status}"), |x| format!("{x:.3e}"))
                )
            })
            .collect::<Vec<_>>()
            .join("; "),
        x_verdict,
        "quantitative means within half a decade of 2e-9",
    ));

    let bt = run(&f, &z0, &RunConfig::backtracking())?;
    let x20 = bt.records.get(20).map(|r| r.point.as_slice()[0]);
    findings.push(finding(
        EXP,
        "backtracking GD: x_20",
        "0.24520926",
        x20.map_or("n/a".into(), |x| format!("{x:.10}")),
        match x20 {
            Some(x) if (x - 0.24520926).abs() <= 5e-8 => Verdict::MatchedQuantitatively,
            Some(x) if (0.2..=0.3).contains(&x) => Verdict::MatchedQualitatively,
            _ => Verdict::NotMatched,
        },
        "quantitative means equal to the 8 printed decimals, up to rounding",
    ));
    let x_final = bt.final_point().as_slice()[0];
    findings.push(finding(
        EXP,
        "backtracking GD: limit",
        "local minimum near 0.24520926",
        format!("{} after {} iterations at x = {x_final:.10}", bt.status, bt.iterations()),
        match bt.status {
            Status::ConvergedGradTol if (x_final - 0.24520926).abs() < 1e-6 => Verdict::MatchedQuantitatively,
            Status::ConvergedGradTol if (0.2..=0.3).contains(&x_final) => Verdict::MatchedQualitatively,
            _ => Verdict::NotMatched,
        },
        "",
    ));
    Ok(())
}

const ROSENBROCK_START: [f64; 2] = [PAPER_START, PAPER_START + 0.2];

fn rosenbrock_runs(findings: &mut Vec<Finding>, sweep: &[SweepRow]) -> CliResult<()> {
    const EXP: &str = "Rosenbrock";
    let f = rosenbrock()?;
    let z0 = pt(&ROSENBROCK_START)?;

    let mut statuses = Vec::new();
    for rate in [0.01, 0.1, 1.0] {
        let t = run(&f, &z0, &RunConfig::standard(rate))?;
        statuses.push((rate, t.status, t.iterations()));
    }
    findings.push(finding(
        EXP,
        "standard GD, rates 0.01 / 0.1 / 1",
        "overflow",
        statuses
            .iter()
            .map(|(r, s, n)| format!("rate {r}: {s} after {n}"))
            .collect::<Vec<_>>()
            .join("; "),
        if statuses.iter().all(|(_, s, _)| *s == Status::NumericalOverflow) {
            Verdict::MatchedQuantitatively
        } else if statuses
            .iter()
            .all(|(_, s, _)| matches!(s, Status::NumericalOverflow | Status::DivergedNorm))
        {
            Verdict::MatchedQualitatively
        } else {
            Verdict::NotMatched
        },
        "DivergedNorm stops a run at |z| > 1e8, before the arithmetic overflows",
    ));

    let runs = [
        ("backtracking GD", RunConfig::backtracking(), 2433),
        ("coordinate-wise GD, x-first", RunConfig::coordinatewise(OrderPolicy::x_first()), 13342),
        ("coordinate-wise GD, y-first", RunConfig::coordinatewise(OrderPolicy::y_first()), 4553),
    ];
    let mut counts = Vec::new();
    for (label, cfg, paper) in runs {
        let t = run(&f, &z0, &cfg)?;
        let converged = t.status == Status::ConvergedGradTol;
        let dist = t.final_point().distance(&pt(&[1.0, 1.0])?);
        counts.push(t.iterations());
        findings.push(finding(
            EXP,
            &format!("{label}: iterations"),
            &paper.to_string(),
            format!("{} after {} iterations, |z - (1, 1)| = {dist:.1e}", t.status, t.iterations()),
            count_verdict(converged, t.iterations(), paper),
            "defaults alpha = 0.5, beta = 0.5, delta0 = 2; the published hyperparameters are not stated",
        ));
    }
    findings.push(finding(
        EXP,
        "y-first faster than x-first at the defaults",
        "4553 < 13342",
        format!("{} vs {}", counts[2], counts[1]),
        if counts[2] < counts[1] {
            Verdict::MatchedQualitatively
        } else {
            Verdict::NotMatched
        },
        "",
    ));

    let mut matching = Vec::new();
    for cell in sweep.chunks(4) {
        let [bt, x, y, _] = cell else { continue };
        let ok = [bt, x, y].iter().all(|r| r.status == Status::ConvergedGradTol);
        if ok && bt.iterations < y.iterations && y.iterations < x.iterations {
            matching.push(format!(
                "(alpha {}, beta {}, delta0 {}): {} < {} < {}",
                bt.alpha, bt.beta, bt.delta0, bt.iterations, y.iterations, x.iterations
            ));
        }
    }
    findings.push(finding(
        EXP,
        "sweep: backtracking < y-first < x-first",
        "2433 < 4553 < 13342",
        if matching.is_empty() {
            "no setting".into()
        } else {
            matching.join("; ")
        },
        if matching.is_empty() {
            Verdict::NotMatched
        } else {
            Verdict::MatchedQualitatively
        },
        "grid alpha {0.25, 0.5} x beta {0.5, 0.7} x delta0 {1, 2}",
    ));
    Ok(())
}

pub fn rosenbrock_sweep() -> CliResult<Vec<SweepRow>> {
    let cfg = ExperimentConfig {
        function: Some("rosenbrock".into()),
        z0: Some(ROSENBROCK_START.to_vec()),
        ..ExperimentConfig::default()
    };
    sweep_rows(&cfg, &Grid::default(), sweep_threads()?)
}

pub fn reproduce() -> CliResult<PaperReport> {
    let mut findings = Vec::new();
    asl_overton(&mut findings)?;
    cube_sin(&mut findings)?;
    let sweep = rosenbrock_sweep()?;
    rosenbrock_runs(&mut findings, &sweep)?;
    Ok(PaperReport { findings, sweep })
}

pub fn render_markdown(report: &PaperReport) -> String {
    let mut md = String::from("# Worked examples: published numbers vs this implementation\n\n");
    md.push_str("Defaults unless stated: alpha = 0.5, beta = 0.5, delta0 = 2, gradient tolerance 1e-8.\n\n");
    md.push_str("| experiment | quantity | published | observed | verdict | note |\n");
    md.push_str("|---|---|---|---|---|---|\n");
    for f in &report.findings {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} |",
            f.experiment.replace('|', "\\|"),
            f.quantity.replace('|', "\\|"),
            f.paper,
            f.observed.replace('|', "\\|"),
            f.verdict,
            f.note.replace('|', "\\|")
        );
    }
    md.push_str("\n## Rosenbrock sweep\n\n");
    md.push_str("| alpha | beta | delta0 | method | order | status | iterations |\n");
    md.push_str("|---|---|---|---|---|---|---|\n");
    for r in &report.sweep {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.alpha, r.beta, r.delta0, r.method, r.order, r.status, r.iterations
        );
    }
    md
}

pub fn write_report(out: &Path, report: &PaperReport) -> CliResult<()> {
    ensure_dir(out)?;
    let md = out.join("report.md");
    std::fs::write(&md, render_markdown(report)).map_err(|e| CliError::io(&md, e))?;
    let mut w = csv::Writer::from_path(out.join("report.csv"))?;
    w.write_record(["experiment", "quantity", "published", "observed", "verdict", "note"])?;
    for f in &report.findings {
        w.write_record([
            &f.experiment,
            &f.quantity,
            &f.paper,
            &f.observed,
            &f.verdict.to_string(),
            &f.note,
        ])?;
    }
    w.flush().map_err(|e| CliError::io(out.join("report.csv"), e))?;
    write_sweep_csv(&out.join("sweep.csv"), &report.sweep)
}
