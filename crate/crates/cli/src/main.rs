use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coordwise::objectives::ParamValue;
use coordwise::optimizers::RegionMode;
use coordwise::Method;
use coordwise_cli::commands::{cmd_compare, cmd_run, cmd_sweep, compare_table, list_functions, load_grid, Grid};
use coordwise_cli::config::{load_config, ExperimentConfig, NamedOrder, OrderSpec};
use coordwise_cli::report::{render_markdown, reproduce, write_report};
use coordwise_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "coordwise", version, about = "Coordinate-wise backtracking gradient descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List built-in objectives with their parameters, blocks and minima.
    ListFunctions,
    /// Run one optimizer and write trajectory.csv and summary.json.
    Run(RunArgs),
    /// Run standard, backtracking and both coordinate-wise orders from one start.
    Compare(ProblemArgs),
    /// Iteration counts over a grid of (alpha, beta, delta0).
    Sweep(SweepArgs),
    /// Re-run the worked examples and write report.md and report.csv.
    ReproducePaper {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Standard,
    Backtracking,
    Coordinatewise,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Standard => Method::Standard,
            MethodArg::Backtracking => Method::Backtracking,
            MethodArg::Coordinatewise => Method::Coordinatewise,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct ProblemArgs {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in objective (see list-functions).
    #[arg(long)]
    function: Option<String>,
    /// Built-in parameter as NAME=VALUE; VALUE is a number, true/false or a JSON list.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Objective as an expression in x, y or x1, x2, ...
    #[arg(long)]
    expr: Option<String>,
    /// Start point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta0: Option<f64>,
    /// Whether the base rate's Armijo test carries the factor alpha.
    #[arg(long, value_enum)]
    base_alpha: Option<Toggle>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Learning rate of standard GD.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Cap steps by the distance to the objective's exclusion region
    /// (abs_plus_linear needs `--param region=true` to have one).
    #[arg(long)]
    region: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, value_enum)]
    order: Option<NamedOrder>,
    /// Treat divergence as success (exit 0).
    #[arg(long)]
    expect_diverge: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// JSON grid {"alpha": [...], "beta": [...], "delta0": [...]}.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    delta0s: Option<Vec<f64>>,
}

fn parse_param(raw: &str) -> CliResult<(String, ParamValue)> {
    let (name, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::config("param", format!("{raw:?} is not NAME=VALUE")))?;
    let value = serde_json::from_str(value.trim())
        .map_err(|_| CliError::config(&format!("params.{name}"), format!("cannot parse {value:?}")))?;
    Ok((name.trim().to_string(), value))
}

impl ProblemArgs {
    fn config(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(f) = &self.function {
            cfg.function = Some(f.clone());
            cfg.expr = None;
        }
        if let Some(e) = &self.expr {
            cfg.expr = Some(e.clone());
            cfg.function = None;
        }
        for raw in &self.params {
            let (name, value) = parse_param(raw)?;
            cfg.params.insert(name, value);
        }
        if let Some(x0) = &self.x0 {
            cfg.z0 = Some(x0.clone());
        }
        if let Some(a) = self.alpha {
            cfg.hp.alpha = a;
        }
        if let Some(b) = self.beta {
            cfg.hp.beta = b;
        }
        if let Some(d) = self.delta0 {
            cfg.hp.delta0 = d;
        }
        if let Some(t) = self.base_alpha {
            cfg.hp.base_alpha = matches!(t, Toggle::On);
        }
        if let Some(n) = self.max_iter {
            cfg.max_iterations = n;
        }
        if let Some(r) = self.rate {
            cfg.standard_rate = r;
        }
        if let Some(t) = self.grad_tol {
            cfg.grad_tolerance = t;
        }
        if self.region {
            cfg.region_mode = RegionMode::FromObjective;
        }
        Ok(cfg)
    }
}

fn dispatch(command: Command) -> CliResult<i32> {
    match command {
        Command::ListFunctions => {
            print!("{}", list_functions());
            Ok(0)
        }
        Command::Run(args) => {
            let mut cfg = args.problem.config()?;
            if let Some(m) = args.method {
                cfg.method = m.into();
            }
            if let Some(o) = args.order {
                cfg.order = OrderSpec::Named(o);
            }
            cfg.expect_diverge |= args.expect_diverge;
            let started = Instant::now();
            let outcome = cmd_run(&cfg, &args.problem.out)?;
            let s = &outcome.summary;
            println!(
                "{} {}: {} after {} iterations, f = {:e}, |grad| = {:e}",
                s.objective, s.method, s.status, s.iterations, s.final_f, s.final_grad_norm
            );
            println!("wrote {} and {}", outcome.trajectory_path.display(), outcome.summary_path.display());
            eprintln!("wall time {:.3} s", started.elapsed().as_secs_f64());
            Ok(outcome.exit_code)
        }
        Command::Compare(args) => {
            let cfg = args.config()?;
            let rows = cmd_compare(&cfg, &args.out)?;
            print!("{}", compare_table(&rows));
            Ok(0)
        }
        Command::Sweep(args) => {
            let cfg = args.problem.config()?;
            let mut grid = match &args.grid {
                Some(path) => load_grid(path)?,
                None => Grid::default(),
            };
            if let Some(a) = args.alphas {
                grid.alpha = a;
            }
            if let Some(b) = args.betas {
                grid.beta = b;
            }
            if let Some(d) = args.delta0s {
                grid.delta0 = d;
            }
            let rows = cmd_sweep(&cfg, &grid, &args.problem.out)?;
            println!("{} rows written to {}", rows.len(), args.problem.out.join("sweep.csv").display());
            Ok(0)
        }
        Command::ReproducePaper { out } => {
            let report = reproduce()?;
            write_report(&out, &report)?;
            print!("{}", render_markdown(&report));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
