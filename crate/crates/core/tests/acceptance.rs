//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coordwise::diagnostics::{
    cluster_tail_diameter, descent_audit, grad_check, step_norm_trend, vanishing_threshold, TrendClass,
};
use coordwise::expr::parse_str;
use coordwise::linesearch::{base_backtracking, cw_armijo_holds};
use coordwise::objectives::{
    abs, abs_plus_linear, builtin, catalog, cube_sin_1d, quadratic, quartic, rosenbrock, separable, Params,
};
use coordwise::{run, BlockVector, HyperParams, Method, Objective, OrderPolicy, RunConfig, Status, Trajectory};

const START: f64 = 0.55134554;

/// A trajectory kept for the suite-wide checks of criteria 2 and 10.
struct Kept {
    label: String,
    objective: Objective,
    traj: Trajectory,
    c1: bool,
    grad_tolerance: f64,
}

#[derive(Default)]
struct Suite {
    kept: Vec<Kept>,
}

impl Suite {
    fn run(&mut self, label: &str, obj: &Objective, z0: &BlockVector, cfg: &RunConfig, c1: bool) -> Trajectory {
        let traj = run(obj, z0, cfg).unwrap_or_else(|e| panic!("{label}: {e}"));
        self.kept.push(Kept {
            label: label.to_string(),
            objective: obj.clone(),
            traj: traj.clone(),
            c1,
            grad_tolerance: cfg.grad_tolerance,
        });
        traj
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn pt(coords: &[f64]) -> BlockVector {
    BlockVector::from_blocks(coords.iter().map(|&c| vec![c]).collect()).unwrap()
}

fn unbounded(cfg: RunConfig) -> RunConfig {
    RunConfig {
        divergence_value_threshold: -1e3,
        ..cfg
    }
}

#[derive(Default)]
struct SeparableTally {
    steps: usize,
    checked: usize,
    mismatches: usize,
    worse: usize,
    first_mismatch: Option<(Vec<f64>, Vec<f64>, f64)>,
}

fn check_separable(parts: &[Objective; 2], f: &Objective, traj: &Trajectory, hp: &HyperParams) -> SeparableTally {
    let mut t = SeparableTally::default();
    for rec in &traj.records[..traj.records.len() - 1] {
        let z = &rec.point;
        let g = f.gradient(z);
        let rates = rec.learning_rates.clone().expect("coordinate-wise records carry rates");
        t.steps += 1;
        let separate: Vec<f64> = (0..2)
            .map(|i| {
                let zi = pt(&[z.as_slice()[i]]);
                let gi = parts[i].gradient(&zi);
                if gi.norm() == 0.0 {
                    hp.delta0
                } else {
                    base_backtracking(&parts[i], &zi, &gi, hp, f64::INFINITY).unwrap().0
                }
            })
            .collect();
        if separate.iter().all(|&s| s >= rates.base) {
            t.checked += 1;
            if rates.per_block != separate {
                t.mismatches += 1;
                t.first_mismatch.get_or_insert((rates.per_block.clone(), separate.clone(), rates.base));
            }
        }
        let base_step = z.step(&g, &[rates.base, rates.base]);
        let cw_step = z.step(&g, &rates.per_block);
        if f.value(&cw_step) > f.value(&base_step) {
            t.worse += 1;
        }
    }
    t
}

// 1. Separable equivalence on random pairs of 1-D quadratics/quartics.
fn criterion_1(suite: &mut Suite) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let hp = HyperParams::default();
    let cases: Vec<([Objective; 2], BlockVector)> = (0..100)
        .map(|_| {
            let part = |rng: &mut ChaCha8Rng| {
                let c = rng.gen_range(0.1..100.0);
                if rng.gen_bool(0.5) {
                    quadratic(vec![c], None).unwrap()
                } else {
                    quartic(vec![c], None).unwrap()
                }
            };
            let parts = [part(&mut rng), part(&mut rng)];
            let z0 = pt(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            (parts, z0)
        })
        .collect();
    let cfg = RunConfig::coordinatewise(OrderPolicy::LipschitzAdaptive);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = cases.len().div_ceil(threads);
    let results: Vec<(Objective, Trajectory, SeparableTally)> = std::thread::scope(|s| {
        let handles: Vec<_> = cases
            .chunks(chunk)
            .map(|slice| {
                let (cfg, hp) = (&cfg, &hp);
                s.spawn(move || {
                    slice
                        .iter()
                        .map(|(parts, z0)| {
                            let f = separable(parts.to_vec()).unwrap();
                            let traj = run(&f, z0, cfg).unwrap();
                            let tally = check_separable(parts, &f, &traj, hp);
                            (f, traj, tally)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });

    let mut total = SeparableTally::default();
    for (case, (f, traj, t)) in results.into_iter().enumerate() {
        total.steps += t.steps;
        total.checked += t.checked;
        total.mismatches += t.mismatches;
        total.worse += t.worse;
        if total.first_mismatch.is_none() {
            total.first_mismatch = t.first_mismatch;
        }
        suite.kept.push(Kept {
            label: format!("separable #{case}"),
            objective: f,
            traj,
            c1: true,
            grad_tolerance: cfg.grad_tolerance,
        });
    }
    let mut detail = format!(
        "{} steps; rates compared on {}, mismatched on {}; cw step worse than base step on {}",
        total.steps, total.checked, total.mismatches, total.worse
    );
    if let Some((cw, sep, base)) = total.first_mismatch {
        detail += &format!("; e.g. cw {cw:?} vs separate {sep:?} (base {base})");
    }
    Outcome {
        pass: total.mismatches == 0 && total.worse == 0,
        detail,
    }
}

// 2. Armijo postcondition audit over every backtracking/coordinate-wise run.
fn criterion_2(suite: &Suite) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut worst_label = String::new();
    let (mut audited, mut mismatches) = (0, 0);
    for k in suite.kept.iter().filter(|k| k.traj.method != Method::Standard) {
        let report = descent_audit(&k.objective, &k.traj).unwrap();
        audited += 1;
        mismatches += report.point_mismatches;
        if let Some(v) = report.max_violation {
            if v > worst {
                worst = v;
                worst_label.clone_from(&k.label);
            }
        }
    }
    Outcome {
        pass: worst <= 1e-10 && mismatches == 0 && audited > 0,
        detail: format!("{audited} trajectories; max violation {worst:.3e} ({worst_label}); point mismatches {mismatches}"),
    }
}

// 3. Asl-Overton divergence for the coordinate-wise method.
fn criterion_3(suite: &mut Suite) -> Outcome {
    let f = abs_plus_linear(2.0, false).unwrap();
    let z0 = pt(&[0.1, 0.0]);
    let cfg = unbounded(RunConfig::default());
    let hp = &cfg.hp;
    let t = suite.run("a|x|+y coordinate-wise", &f, &z0, &cfg, false);

    let mut rate_failures = 0;
    let mut enumeration_failures = 0;
    for rec in &t.records[..t.records.len() - 1] {
        if rec.rates[1] != hp.delta0 {
            rate_failures += 1;
        }
        // exhaustive enumeration: delta_y is the largest y-candidate that
        // passes with delta_x held at its chosen value
        let g = f.gradient(&rec.point);
        let largest = hp
            .candidates()
            .map(|(_, d)| d)
            .find(|&d| cw_armijo_holds(&f, &rec.point, &g, &[rec.rates[0], d], hp.alpha).unwrap_or(false));
        if largest != Some(rec.rates[1]) {
            enumeration_failures += 1;
        }
    }
    let y_exact = t
        .records
        .iter()
        .all(|r| r.point.as_slice()[1] == 0.0 - r.iteration as f64 * hp.delta0);
    let pass = t.status == Status::DivergedValue
        && t.iterations() <= 501
        && rate_failures == 0
        && enumeration_failures == 0
        && y_exact;
    Outcome {
        pass,
        detail: format!(
            "{} after {} iterations at {:?}; delta_y != delta0 on {rate_failures} steps; enumeration disagreements {enumeration_failures}; y_n = y0 - n delta0 exactly: {y_exact}",
            t.status,
            t.iterations(),
            t.final_point().as_slice()
        ),
    }
}

// 4. Backtracking "seems to converge" against coordinate-wise divergence.
fn criterion_4(suite: &mut Suite) -> Outcome {
    let f = abs_plus_linear(2.0, false).unwrap();
    let z0 = pt(&[0.1, 0.0]);
    let window = |cfg: RunConfig| RunConfig {
        max_iterations: 2000,
        divergence_value_threshold: f64::NEG_INFINITY,
        divergence_norm_threshold: f64::INFINITY,
        ..cfg
    };
    let bt = suite.run("a|x|+y backtracking", &f, &z0, &window(RunConfig::backtracking()), false);
    let cw = suite.run("a|x|+y coordinate-wise 2000", &f, &z0, &window(RunConfig::default()), false);
    let span = |t: &Trajectory| (t.iterations() >= 2000).then(|| t.path_length(1000, 2000));
    let (b, c) = (span(&bt), span(&cw));
    let pass = matches!((b, c), (Some(b), Some(c)) if b < 0.01 * c);
    Outcome {
        pass,
        detail: format!(
            "displacement over 1000-2000: backtracking {} ({} after {}), coordinate-wise {} ({} after {})",
            b.map_or("n/a".into(), |v| format!("{v:.4e}")),
            bt.status,
            bt.iterations(),
            c.map_or("n/a".into(), |v| format!("{v:.4e}")),
            cw.status,
            cw.iterations()
        ),
    }
}

// 5. Standard GD 2-cycle on |x|.
fn criterion_5(suite: &mut Suite) -> Outcome {
    let f = abs(1.0).unwrap();
    let cfg = RunConfig {
        max_iterations: 10,
        ..RunConfig::standard(1.0)
    };
    let t = suite.run("|x| standard", &f, &pt(&[0.3]), &cfg, false);
    let xs: Vec<f64> = t.records.iter().map(|r| r.point.as_slice()[0]).collect();
    let alternating = xs
        .iter()
        .enumerate()
        .all(|(n, &x)| (x - if n % 2 == 0 { 0.3 } else { -0.7 }).abs() < 1e-12);
    Outcome {
        pass: t.status == Status::CycleDetected(2) && t.iterations() <= 10 && alternating,
        detail: format!("{} after {} iterations; iterates {xs:?}", t.status, t.iterations()),
    }
}

// 6. The singular example x^3 sin(1/x).
fn criterion_6(suite: &mut Suite) -> Outcome {
    let f = cube_sin_1d().unwrap();
    let z0 = pt(&[START]);
    let bt = suite.run(
        "cube_sin backtracking",
        &f,
        &z0,
        &RunConfig {
            max_iterations: 1000,
            ..RunConfig::backtracking()
        },
        true,
    );
    let x = bt.final_point().as_slice()[0];
    let g = f.gradient(bt.final_point()).norm();
    let bt_ok = g < 1e-6 && (0.2..=0.3).contains(&x) && bt.iterations() <= 1000;
    let x20 = bt.records.get(20).map(|r| r.point.as_slice()[0]);

    let mut standard = Vec::new();
    for rate in [0.05, 0.1, 0.2, 0.5] {
        let t = suite.run(&format!("cube_sin standard {rate}"), &f, &z0, &RunConfig::standard(rate), true);
        standard.push((rate, t.status, t.final_point().as_slice()[0]));
    }
    let some_to_zero = standard.iter().any(|&(_, _, x)| x.abs() < 1e-6);
    Outcome {
        pass: bt_ok && some_to_zero,
        detail: format!(
            "backtracking {} after {} at x = {x:.10} (|g'| {g:.1e}, x_20 = {x20:?}); standard GD {}",
            bt.status,
            bt.iterations(),
            standard
                .iter()
                .map(|(r, s, x)| format!("rate {r}: {s} x = {x:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

// 7. Rosenbrock.
fn criterion_7(suite: &mut Suite) -> Outcome {
    let f = rosenbrock().unwrap();
    let z0 = pt(&[START, START + 0.2]);
    let star = pt(&[1.0, 1.0]);

    let mut a_ok = true;
    let mut a_detail = Vec::new();
    for rate in [0.01, 0.1, 1.0] {
        let t = suite.run(&format!("rosenbrock standard {rate}"), &f, &z0, &RunConfig::standard(rate), true);
        a_ok &= matches!(t.status, Status::NumericalOverflow | Status::DivergedNorm);
        a_detail.push(format!("{rate}: {}", t.status));
    }

    let counts = |suite: &mut Suite, hp: HyperParams, tag: &str| -> [(bool, usize); 3] {
        [
            RunConfig::backtracking(),
            RunConfig::coordinatewise(OrderPolicy::x_first()),
            RunConfig::coordinatewise(OrderPolicy::y_first()),
        ]
        .map(|cfg| {
            let cfg = RunConfig {
                max_iterations: 50_000,
                ..cfg.with_hp(hp.clone())
            };
            let t = suite.run(&format!("rosenbrock {tag} {}", t_label(&cfg)), &f, &z0, &cfg, true);
            (t.final_point().distance(&star) < 1e-6, t.iterations())
        })
    };
    let [bt, xf, yf] = counts(suite, HyperParams::default(), "default");
    let b_ok = bt.0 && xf.0 && yf.0 && bt.1 < 50_000 && xf.1 < 50_000 && yf.1 < 50_000;
    let default_order = yf.1 < xf.1;

    let mut sweep_hits = Vec::new();
    for alpha in [0.25, 0.5] {
        for beta in [0.5, 0.7] {
            for delta0 in [1.0, 2.0] {
                let hp = HyperParams::new(alpha, beta, delta0).unwrap();
                let [b, x, y] = counts(suite, hp, &format!("({alpha},{beta},{delta0})"));
                if b.0 && x.0 && y.0 && b.1 < y.1 && y.1 < x.1 {
                    sweep_hits.push(format!("({alpha}, {beta}, {delta0}): {} < {} < {}", b.1, y.1, x.1));
                }
            }
        }
    }
    let c_ok = default_order && !sweep_hits.is_empty();
    Outcome {
        pass: a_ok && b_ok && c_ok,
        detail: format!(
            "(a) {} [{}]; (b) {} backtracking {} / x-first {} / y-first {} (published 2433 / 13342 / 4553); (c) default y-first < x-first: {default_order}; sweep settings with backtracking < y-first < x-first: [{}]",
            ok(a_ok),
            a_detail.join(", "),
            ok(b_ok),
            bt.1,
            xf.1,
            yf.1,
            sweep_hits.join("; ")
        ),
    }
}

fn t_label(cfg: &RunConfig) -> String {
    match &cfg.order_policy {
        OrderPolicy::Static(o) if cfg.method == Method::Coordinatewise => format!("{} {o:?}", cfg.method),
        _ => cfg.method.to_string(),
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

// 8. Gradient validation.
fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: Vec<String> = Vec::new();
    let mut pass = true;
    for info in catalog() {
        let f = builtin(info.name, &Params::new()).unwrap();
        let singular = f.singular_set().clone();
        let mut points = Vec::new();
        while points.len() < 100 {
            let z: Vec<f64> = (0..f.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if singular.distance(&z) >= 0.01 {
                points.push(f.point(z).unwrap());
            }
        }
        let report = grad_check(&f, &points, 1e-6, 1e-6).unwrap();
        pass &= report.failures == 0;
        worst.push(format!("{} {:.1e}", info.name, report.max_error));
    }
    Outcome {
        pass,
        detail: format!("max relative error per built-in: {}", worst.join(", ")),
    }
}

// 9. Parser corpus.
fn criterion_9() -> Outcome {
    use std::f64::consts::{E, PI};
    let golden: [(&str, &[f64], f64); 20] = [
        ("1 + 2 * 3", &[], 7.0),
        ("(1 + 2) * 3", &[], 9.0),
        ("2 ^ 3 ^ 2", &[], 512.0),
        ("-2 ^ 2", &[], -4.0),
        ("10 - 4 - 3", &[], 3.0),
        ("8 / 4 / 2", &[], 1.0),
        ("1.5e2 + 2.5E-1", &[], 150.25),
        ("x^3 * sin(1/x)", &[0.5], 0.125 * 0.909_297_426_825_681_7),
        ("(x - 1)^2 + 100*(y - x^2)^2", &[0.5, 0.5], 0.25 + 100.0 * 0.0625),
        ("2*abs(x) + y", &[-0.25, 3.0], 3.5),
        ("relu(x) + relu(-y)", &[-1.0, -2.0], 2.0),
        ("max(x, y) - min(x, y)", &[3.0, -4.0], 7.0),
        ("exp(log(x))", &[2.5], 2.5),
        ("sqrt(x^2 + y^2)", &[3.0, 4.0], 5.0),
        ("cos(0) + sin(0)", &[], 1.0),
        ("x1 + 2*x2 + 3*x3", &[1.0, 10.0, 100.0], 321.0),
        ("exp(1)", &[], E),
        ("cos(x)", &[PI], -1.0),
        ("-(-x)", &[4.0], 4.0),
        ("x*x*x - 3*x", &[2.0], 2.0),
    ];
    let mut golden_fail = Vec::new();
    for (text, z, want) in golden {
        let got = parse_str(text).and_then(|e| e.eval_at(z));
        let good = matches!(got, Ok(v) if v == want || ((v - want) / want).abs() <= 1e-12);
        if !good {
            golden_fail.push(format!("{text} -> {got:?} (want {want})"));
        }
    }

    let malformed: [(&str, usize); 10] = [
        ("1 +", 3),
        ("(x + 1", 6),
        ("x + * y", 4),
        ("2 $ 3", 2),
        ("sin(x", 5),
        ("foo(x)", 0),
        ("max(x)", 0),
        ("x y", 2),
        ("1e", 0),
        (")", 0),
    ];
    let mut malformed_fail = Vec::new();
    for (text, pos) in malformed {
        match parse_str(text) {
            Ok(e) => malformed_fail.push(format!("{text:?} parsed as {e}")),
            Err(err) => {
                if err.position() != Some(pos) {
                    malformed_fail.push(format!("{text:?}: {err} (position {:?}, want {pos})", err.position()));
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut crashes = 0;
    let mut parsed = 0;
    for _ in 0..10_000 {
        let len = rng.gen_range(0..=256);
        let s: String = (0..len).map(|_| rng.gen_range(0x20u8..0x7f) as char).collect();
        match catch_unwind(AssertUnwindSafe(|| parse_str(&s).map(|e| e.eval_at(&[0.5; 64])))) {
            Err(_) => crashes += 1,
            Ok(Ok(_)) => parsed += 1,
            Ok(Err(_)) => {}
        }
    }
    Outcome {
        pass: golden_fail.is_empty() && malformed_fail.is_empty() && crashes == 0,
        detail: format!(
            "golden failures {:?}; malformed failures {:?}; fuzz: {crashes} crashes, {parsed} of 10000 parsed",
            golden_fail, malformed_fail
        ),
    }
}

// 10. Convergence properties over every run of the suite.
fn criterion_10(suite: &Suite) -> Outcome {
    let (mut converged, mut short, mut violations) = (0, 0, Vec::new());
    let (mut classified, mut too_short_for_trend) = (0, 0);
    for k in &suite.kept {
        let t = &k.traj;
        if t.status == Status::ConvergedGradTol {
            converged += 1;
            let g = t.last().grad_norm;
            if g >= 10.0 * k.grad_tolerance {
                violations.push(format!("{}: final |grad| {g:.2e}", k.label));
            }
            match cluster_tail_diameter(t, 50) {
                Ok(d) if d >= 1e-5 => violations.push(format!("{}: tail diameter {d:.2e}", k.label)),
                Ok(_) => {}
                Err(_) => short += 1,
            }
        }
        if k.c1 && t.method != Method::Standard {
            match step_norm_trend(t, vanishing_threshold(k.grad_tolerance, t.hp.delta0)) {
                Ok(trend) => {
                    classified += 1;
                    if trend.class == TrendClass::Neither {
                        violations.push(format!(
                            "{}: {} with tail step {:.2e} is neither vanishing nor diverging",
                            k.label, t.status, trend.tail_max_step
                        ));
                    }
                }
                Err(_) => too_short_for_trend += 1,
            }
        }
    }
    Outcome {
        pass: violations.is_empty(),
        detail: format!(
            "{converged} converged runs ({short} shorter than 50 iterations, diameter skipped); {classified} C1 runs classified ({too_short_for_trend} too short); violations {violations:?}"
        ),
    }
}

fn main() {
    let budgets: HashMap<u32, Duration> = [
        (1, 5.0),
        (3, 1.0),
        (4, 1.0),
        (5, 1.0),
        (6, 5.0),
        (7, 60.0),
        (8, 5.0),
        (9, 10.0),
    ]
    .into_iter()
    .map(|(k, s)| (k, Duration::from_secs_f64(s)))
    .collect();

    let mut suite = Suite::default();
    let mut results: Vec<(u32, Outcome, Duration)> = Vec::new();
    let mut timed = |n: u32, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        results.push((n, outcome, start.elapsed()));
    };
    timed(1, &mut || criterion_1(&mut suite));
    timed(3, &mut || criterion_3(&mut suite));
    timed(4, &mut || criterion_4(&mut suite));
    timed(5, &mut || criterion_5(&mut suite));
    timed(6, &mut || criterion_6(&mut suite));
    timed(7, &mut || criterion_7(&mut suite));
    timed(8, &mut criterion_8);
    timed(9, &mut criterion_9);
    timed(2, &mut || criterion_2(&suite));
    timed(10, &mut || criterion_10(&suite));
    results.sort_by_key(|r| r.0);

    let mut failed = Vec::new();
    for (n, outcome, elapsed) in &results {
        let in_budget = budgets.get(n).is_none_or(|b| elapsed <= b);
        let pass = outcome.pass && in_budget;
        if !pass {
            failed.push(*n);
        }
        let budget = budgets
            .get(n)
            .map_or(String::new(), |b| format!(" / budget {:.0} s", b.as_secs_f64()));
        println!(
            "criterion {n:>2}: {} [{:.2} s{budget}] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
    }
    println!("{} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing: {failed:?}");
        std::process::exit(1);
    }
}
