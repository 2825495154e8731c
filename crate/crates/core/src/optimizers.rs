//! Standard, backtracking and coordinate-wise backtracking gradient descent.

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::linesearch::{base_backtracking, check_order, cw_backtracking, ordering_heuristic};
use crate::objectives::Objective;
use crate::types::{BlockGradient, BlockVector, ExclusionRegion, HyperParams, LearningRates};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Fixed learning rate.
    Standard,
    /// One Armijo rate for all coordinates.
    Backtracking,
    /// One Armijo rate per block.
    Coordinatewise,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::Backtracking => "backtracking",
            Self::Coordinatewise => "coordinatewise",
        })
    }
}

/// Block order used by the coordinate-wise search.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderPolicy {
    /// The same permutation at every step (0-based block indices).
    Static(Vec<usize>),
    /// Re-ranked every step by secant Lipschitz estimates; falls back to the
    /// previous step's order where no estimate exists.
    LipschitzAdaptive,
}

impl OrderPolicy {
    pub fn x_first() -> Self {
        Self::Static(vec![0, 1])
    }

    pub fn y_first() -> Self {
        Self::Static(vec![1, 0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleDetection {
    pub max_period: usize,
    pub tol: f64,
}

impl Default for CycleDetection {
    fn default() -> Self {
        Self {
            max_period: 4,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// Ignore the objective's exclusion region; no step cap.
    #[default]
    None,
    /// Cap steps by `dist(z, A) / ||grad f(z)||`.
    FromObjective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub method: Method,
    pub hp: HyperParams,
    /// Learning rate of [`Method::Standard`].
    pub standard_rate: f64,
    pub order_policy: OrderPolicy,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    /// A run whose objective value drops below this has diverged.
    pub divergence_value_threshold: f64,
    /// A run whose iterate norm exceeds this has diverged.
    pub divergence_norm_threshold: f64,
    pub cycle_detection: Option<CycleDetection>,
    pub region_mode: RegionMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Coordinatewise,
            hp: HyperParams::default(),
            standard_rate: 0.1,
            order_policy: OrderPolicy::LipschitzAdaptive,
            max_iterations: 100_000,
            grad_tolerance: 1e-8,
            divergence_value_threshold: -1e8,
            divergence_norm_threshold: 1e8,
            cycle_detection: None,
            region_mode: RegionMode::None,
        }
    }
}

impl RunConfig {
    /// Standard GD at `rate`, with cycle detection on.
    pub fn standard(rate: f64) -> Self {
        Self {
            method: Method::Standard,
            standard_rate: rate,
            cycle_detection: Some(CycleDetection::default()),
            ..Self::default()
        }
    }

    pub fn backtracking() -> Self {
        Self {
            method: Method::Backtracking,
            ..Self::default()
        }
    }

    pub fn coordinatewise(order_policy: OrderPolicy) -> Self {
        Self {
            method: Method::Coordinatewise,
            order_policy,
            ..Self::default()
        }
    }

    pub fn with_hp(mut self, hp: HyperParams) -> Self {
        self.hp = hp;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        let invalid = |name: &'static str, reason: String| Error::InvalidHyperParam { name, reason };
        if !(self.standard_rate > 0.0 && self.standard_rate.is_finite()) {
            return Err(invalid("standard_rate", format!("{} must be positive", self.standard_rate)));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be positive".into()));
        }
        if !(self.grad_tolerance > 0.0) {
            return Err(invalid("grad_tolerance", format!("{} must be positive", self.grad_tolerance)));
        }
        if !(self.divergence_norm_threshold > 0.0) {
            return Err(invalid(
                "divergence_norm_threshold",
                format!("{} must be positive", self.divergence_norm_threshold),
            ));
        }
        if self.divergence_value_threshold.is_nan() {
            return Err(invalid("divergence_value_threshold", "is NaN".into()));
        }
        if let Some(c) = &self.cycle_detection {
            if c.max_period < 2 {
                return Err(invalid("cycle_detection.max_period", "must be at least 2".into()));
            }
            if !(c.tol >= 0.0) {
                return Err(invalid("cycle_detection.tol", "must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    ConvergedGradTol,
    MaxIterations,
    DivergedValue,
    DivergedNorm,
    NumericalOverflow,
    CycleDetected(usize),
    ExhaustedGrid,
}

impl Status {
    pub fn is_divergence(self) -> bool {
        matches!(self, Self::DivergedValue | Self::DivergedNorm)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CycleDetected(p) => write!(f, "CycleDetected({p})"),
            other => write!(f, "{other:?}"),
        }
    }
}

/// One iterate and the step taken from it.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub iteration: usize,
    pub point: BlockVector,
    pub value: f64,
    pub grad_norm: f64,
    /// Per-block rates of the step leaving this iterate; empty on the last
    /// record.
    pub rates: Vec<f64>,
    /// Grid data of the step; `None` for standard GD and the last record.
    pub learning_rates: Option<LearningRates>,
    /// Block order of the coordinate-wise search; empty otherwise.
    pub order: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub objective: String,
    pub method: Method,
    pub hp: HyperParams,
    pub records: Vec<Record>,
    pub status: Status,
    pub elapsed: Duration,
}

impl Trajectory {
    /// Number of steps taken; `records.len() - 1`.
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("a trajectory holds at least z0")
    }

    pub fn final_point(&self) -> &BlockVector {
        &self.last().point
    }

    /// `||z_{n+1} - z_n||` for every step.
    pub fn step_norms(&self) -> Vec<f64> {
        self.records
            .windows(2)
            .map(|w| w[1].point.distance(&w[0].point))
            .collect()
    }

    /// Total path length over steps `from .. to` (clamped to the run).
    pub fn path_length(&self, from: usize, to: usize) -> f64 {
        let steps = self.step_norms();
        let to = to.min(steps.len());
        steps[from.min(to)..to].iter().sum()
    }
}

pub fn step_standard(obj: &Objective, z: &BlockVector, rate: f64) -> Result<BlockVector> {
    let g = obj.gradient(z);
    let next = z.step(&g, &vec![rate; z.partition().num_blocks()]);
    if !next.is_finite() || !obj.value(&next).is_finite() {
        return Err(Error::NonFiniteValue);
    }
    Ok(next)
}

pub fn step_backtracking(
    obj: &Objective,
    z: &BlockVector,
    hp: &HyperParams,
    region: &ExclusionRegion,
) -> Result<(BlockVector, f64, usize)> {
    let g = obj.gradient(z);
    let cap = region.cap(z, &g)?;
    let (delta, n) = base_backtracking(obj, z, &g, hp, cap)?;
    let next = z.step(&g, &vec![delta; z.partition().num_blocks()]);
    Ok((next, delta, n))
}

pub fn step_cw(
    obj: &Objective,
    z: &BlockVector,
    hp: &HyperParams,
    order: &[usize],
    region: &ExclusionRegion,
) -> Result<(BlockVector, LearningRates)> {
    let g = obj.gradient(z);
    let cap = region.cap(z, &g)?;
    let rates = cw_backtracking(obj, z, &g, hp, order, cap)?;
    Ok((z.step(&g, &rates.per_block), rates))
}

fn close(a: &BlockVector, b: &BlockVector, tol: f64) -> bool {
    a.distance(b) <= tol * a.norm().max(b.norm())
}

/// Smallest period `p` with `z_n ~ z_{n-p}` and `z_{n-1} ~ z_{n-1-p}`.
fn detect_cycle(records: &[Record], cfg: &CycleDetection) -> Option<usize> {
    let n = records.len().checked_sub(1)?;
    (2..=cfg.max_period).find(|&p| {
        n > p
            && close(&records[n].point, &records[n - p].point, cfg.tol)
            && close(&records[n - 1].point, &records[n - 1 - p].point, cfg.tol)
    })
}

/// Runs `config.method` from `z0` until a terminal status fires. Checks run
/// in the order: overflow, gradient tolerance, value divergence, norm
/// divergence, cycle, iteration limit.
pub fn run(obj: &Objective, z0: &BlockVector, config: &RunConfig) -> Result<Trajectory> {
    config.validate()?;
    if z0.partition() != obj.partition() {
        return Err(Error::ShapeMismatch {
            expected: obj.dim(),
            got: z0.len(),
        });
    }
    let k = obj.partition().num_blocks();
    if let OrderPolicy::Static(order) = &config.order_policy {
        if config.method == Method::Coordinatewise {
            check_order(order, k)?;
        }
    }
    let region = match config.region_mode {
        RegionMode::None => ExclusionRegion::None,
        RegionMode::FromObjective => obj.region().clone(),
    };
    if region.contains(z0.as_slice()) {
        return Err(Error::OnExclusionSet);
    }

    let started = Instant::now();
    let hp = &config.hp;
    let mut records: Vec<Record> = Vec::new();
    let mut z = z0.clone();
    let mut prev: Option<(BlockVector, BlockGradient)> = None;
    let mut last_order: Vec<usize> = (0..k).collect();

    let status = loop {
        let value = obj.value(&z);
        let g = obj.gradient(&z);
        let grad_norm = g.norm();
        records.push(Record {
            iteration: records.len(),
            point: z.clone(),
            value,
            grad_norm,
            rates: Vec::new(),
            learning_rates: None,
            order: Vec::new(),
        });

        if !(z.is_finite() && value.is_finite() && grad_norm.is_finite()) {
            break Status::NumericalOverflow;
        }
        if grad_norm < config.grad_tolerance {
            break Status::ConvergedGradTol;
        }
        if value < config.divergence_value_threshold {
            break Status::DivergedValue;
        }
        if z.norm() > config.divergence_norm_threshold {
            break Status::DivergedNorm;
        }
        if let Some(period) = config
            .cycle_detection
            .as_ref()
            .and_then(|c| detect_cycle(&records, c))
        {
            break Status::CycleDetected(period);
        }
        if records.len() > config.max_iterations {
            break Status::MaxIterations;
        }

        let record = records.last_mut().expect("just pushed");
        let next = match config.method {
            Method::Standard => {
                record.rates = vec![config.standard_rate; k];
                z.step(&g, &record.rates)
            }
            Method::Backtracking => {
                let searched = region
                    .cap(&z, &g)
                    .and_then(|cap| base_backtracking(obj, &z, &g, hp, cap));
                let Ok((delta, n)) = searched else {
                    break Status::ExhaustedGrid;
                };
                record.learning_rates = Some(LearningRates::uniform(delta, n, k));
                record.rates = vec![delta; k];
                z.step(&g, &record.rates)
            }
            Method::Coordinatewise => {
                let order = match &config.order_policy {
                    OrderPolicy::Static(order) => order.clone(),
                    OrderPolicy::LipschitzAdaptive => ordering_heuristic(
                        prev.as_ref().map(|(pz, pg)| (pz, pg)),
                        (&z, &g),
                        &last_order,
                    ),
                };
                let searched = region
                    .cap(&z, &g)
                    .and_then(|cap| cw_backtracking(obj, &z, &g, hp, &order, cap));
                let Ok(rates) = searched else {
                    break Status::ExhaustedGrid;
                };
                record.rates = rates.per_block.clone();
                record.learning_rates = Some(rates);
                record.order = order.clone();
                last_order = order;
                z.step(&g, &record.rates)
            }
        };
        if config.order_policy == OrderPolicy::LipschitzAdaptive {
            prev = Some((z.clone(), g));
        }
        z = next;
    };

    Ok(Trajectory {
        objective: obj.name().to_string(),
        method: config.method,
        hp: *hp,
        records,
        status,
        elapsed: started.elapsed(),
    })
}
