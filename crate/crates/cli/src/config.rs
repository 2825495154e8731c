//! Experiment configuration: JSON file, flag overrides, and resolution into
//! an objective, a start point and a [`RunConfig`].

use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use coordwise::expr::{parse_str, to_objective, DEFAULT_FD_STEP};
use coordwise::objectives::{builtin, Params};
use coordwise::optimizers::{CycleDetection, RegionMode};
use coordwise::{BlockPartition, BlockVector, Error, HyperParams, Method, Objective, OrderPolicy, RunConfig};

use crate::error::{CliError, CliResult};

/// Start used by the worked examples when no `z0` is given.
pub const PAPER_START: f64 = 0.55134554;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NamedOrder {
    XFirst,
    YFirst,
    Adaptive,
}

/// Block order as written in a config: a name, or a 1-based permutation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderSpec {
    Named(NamedOrder),
    Permutation(Vec<usize>),
}

impl Default for OrderSpec {
    fn default() -> Self {
        Self::Named(NamedOrder::Adaptive)
    }
}

impl OrderSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Named(NamedOrder::XFirst) => "x-first".into(),
            Self::Named(NamedOrder::YFirst) => "y-first".into(),
            Self::Named(NamedOrder::Adaptive) => "adaptive".into(),
            Self::Permutation(p) => p.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "),
        }
    }

    fn to_policy(&self, blocks: usize) -> CliResult<OrderPolicy> {
        let static_order = |order: Vec<usize>| {
            let mut seen = vec![false; blocks];
            for &i in &order {
                if i >= blocks || std::mem::replace(&mut seen[i], true) {
                    return Err(CliError::config(
                        "order",
                        format!("not a permutation of the {blocks} blocks"),
                    ));
                }
            }
            if order.len() != blocks {
                return Err(CliError::config(
                    "order",
                    format!("not a permutation of the {blocks} blocks"),
                ));
            }
            Ok(OrderPolicy::Static(order))
        };
        match self {
            Self::Named(NamedOrder::Adaptive) => Ok(OrderPolicy::LipschitzAdaptive),
            Self::Named(NamedOrder::XFirst) => static_order((0..blocks).collect()),
            Self::Named(NamedOrder::YFirst) => {
                if blocks < 2 {
                    return Err(CliError::config("order", "y-first needs at least two blocks"));
                }
                let mut order = vec![1, 0];
                order.extend(2..blocks);
                static_order(order)
            }
            Self::Permutation(p) => {
                if p.contains(&0) {
                    return Err(CliError::config("order", "block indices are 1-based"));
                }
                static_order(p.iter().map(|i| i - 1).collect())
            }
        }
    }
}

/// `true`/`false` or explicit parameters; absent means on for standard GD
/// and off otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CycleSetting {
    Enabled(bool),
    Custom(CycleDetection),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub function: Option<String>,
    pub params: Params,
    pub expr: Option<String>,
    /// Block sizes for `expr` objectives; scalar blocks if absent.
    pub dims: Option<Vec<usize>>,
    pub fd_step: f64,
    pub z0: Option<Vec<f64>>,
    pub method: Method,
    pub hp: HyperParams,
    pub standard_rate: f64,
    pub order: OrderSpec,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    pub divergence_value_threshold: f64,
    pub divergence_norm_threshold: f64,
    pub cycle_detection: Option<CycleSetting>,
    pub region_mode: RegionMode,
    pub expect_diverge: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            function: None,
            params: Params::new(),
            expr: None,
            dims: None,
            fd_step: DEFAULT_FD_STEP,
            z0: None,
            method: run.method,
            hp: run.hp,
            standard_rate: run.standard_rate,
            order: OrderSpec::default(),
            max_iterations: run.max_iterations,
            grad_tolerance: run.grad_tolerance,
            divergence_value_threshold: run.divergence_value_threshold,
            divergence_norm_threshold: run.divergence_norm_threshold,
            cycle_detection: None,
            region_mode: run.region_mode,
            expect_diverge: false,
        }
    }
}

/// Everything needed to start a run.
pub struct Resolved {
    pub objective: Objective,
    pub z0: BlockVector,
    pub run: RunConfig,
}

/// Parses a JSON config. Errors name the offending field path, or the
/// line and column for malformed JSON.
pub fn parse_config(text: &str) -> CliResult<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." || path == "?" {
            CliError::Config(e.inner().to_string())
        } else {
            CliError::config(&path, e.inner())
        }
    })
}

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

impl ExperimentConfig {
    pub fn objective(&self) -> CliResult<Objective> {
        match (&self.function, &self.expr) {
            (Some(_), Some(_)) => Err(CliError::config("expr", "give either function or expr, not both")),
            (None, None) => Err(CliError::config("function", "one of function or expr is required")),
            (Some(name), None) => builtin(name, &self.params).map_err(|e| match e {
                Error::UnknownFunction(_) => CliError::config("function", e),
                Error::InvalidParameter { ref name, .. } => CliError::config(&format!("params.{name}"), &e),
                other => CliError::config("params", other),
            }),
            (None, Some(text)) => {
                if !self.params.is_empty() {
                    return Err(CliError::config("params", "only built-in functions take parameters"));
                }
                let expr = parse_str(text).map_err(|e| CliError::config("expr", e))?;
                let needed = expr.variables().iter().map(|(_, i)| i + 1).max().unwrap_or(1);
                let partition = match (&self.dims, &self.z0) {
                    (Some(d), _) => BlockPartition::new(d.clone()),
                    (None, Some(z)) => BlockPartition::scalar_blocks(z.len()),
                    (None, None) => BlockPartition::scalar_blocks(needed),
                }
                .map_err(|e| CliError::config("dims", e))?;
                to_objective(&expr, partition, self.fd_step).map_err(|e| match e {
                    Error::InvalidParameter { ref name, .. } if name == "fd_step" => CliError::config("fd_step", &e),
                    other => CliError::config("expr", other),
                })
            }
        }
    }

    pub fn start(&self, obj: &Objective) -> CliResult<BlockVector> {
        let coords = match &self.z0 {
            Some(z) => z.clone(),
            None => default_start(obj),
        };
        obj.point(coords).map_err(|e| CliError::config("z0", e))
    }

    pub fn run_config(&self, blocks: usize) -> CliResult<RunConfig> {
        let cycle_detection = match &self.cycle_detection {
            None if self.method == Method::Standard => Some(CycleDetection::default()),
            None | Some(CycleSetting::Enabled(false)) => None,
            Some(CycleSetting::Enabled(true)) => Some(CycleDetection::default()),
            Some(CycleSetting::Custom(c)) => Some(*c),
        };
        let order_policy = if self.method == Method::Coordinatewise {
            self.order.to_policy(blocks)?
        } else {
            OrderPolicy::LipschitzAdaptive
        };
        let run = RunConfig {
            method: self.method,
            hp: self.hp.clone(),
            standard_rate: self.standard_rate,
            order_policy,
            max_iterations: self.max_iterations,
            grad_tolerance: self.grad_tolerance,
            divergence_value_threshold: self.divergence_value_threshold,
            divergence_norm_threshold: self.divergence_norm_threshold,
            cycle_detection,
            region_mode: self.region_mode,
        };
        run.validate().map_err(|e| match e {
            Error::InvalidHyperParam { name, .. } => {
                let field = match name {
                    "alpha" | "beta" | "delta0" | "max_grid_depth" => format!("hp.{name}"),
                    other => other.to_string(),
                };
                CliError::config(&field, &e)
            }
            other => CliError::config("config", other),
        })?;
        Ok(run)
    }

    pub fn resolve(&self) -> CliResult<Resolved> {
        let objective = self.objective()?;
        let z0 = self.start(&objective)?;
        let run = self.run_config(objective.partition().num_blocks())?;
        Ok(Resolved { objective, z0, run })
    }
}

/// The start point of the worked example for each built-in; `0.1` in every
/// coordinate otherwise.
pub fn default_start(obj: &Objective) -> Vec<f64> {
    let name = obj.name();
    let m = obj.dim();
    if name.starts_with("rosenbrock") || name.starts_with("cube_sin") {
        (0..m).map(|i| PAPER_START + 0.2 * i as f64).collect()
    } else if name.starts_with("abs_plus_linear") || name.starts_with("relu_plus_linear") {
        vec![0.1, 0.0]
    } else if name.starts_with("abs") {
        vec![0.3; m]
    } else {
        vec![0.1; m]
    }
}
