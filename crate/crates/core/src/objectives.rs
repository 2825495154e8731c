//! Objective functions with per-block gradients, the built-in test
//! functions and a central finite-difference gradient.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::types::{BlockGradient, BlockPartition, BlockVector, ExclusionRegion};
use crate::{Error, Result};

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A function `f: R^m -> R` with its gradient, viewed through a block
/// partition, and the exclusion region `A` used to cap step sizes.
#[derive(Clone)]
pub struct Objective {
    name: String,
    partition: BlockPartition,
    value: ValueFn,
    gradient: GradFn,
    region: ExclusionRegion,
    /// Where the gradient is undefined or not locally Lipschitz. Unlike
    /// `region`, this never caps steps; it marks points to keep away from
    /// when checking gradients numerically.
    singular_set: ExclusionRegion,
    minimizers: Vec<Vec<f64>>,
    notes: String,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("name", &self.name)
            .field("partition", &self.partition.dims())
            .field("region", &self.region)
            .finish()
    }
}

impl Objective {
    pub fn new<V, G>(name: impl Into<String>, partition: BlockPartition, value: V, gradient: G) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            partition,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            region: ExclusionRegion::None,
            singular_set: ExclusionRegion::None,
            minimizers: Vec::new(),
            notes: String::new(),
        }
    }

    pub fn with_region(mut self, region: ExclusionRegion) -> Self {
        self.region = region;
        self
    }

    pub fn with_singular_set(mut self, set: ExclusionRegion) -> Self {
        self.singular_set = set;
        self
    }

    pub fn with_minimizer(mut self, z: Vec<f64>) -> Self {
        self.minimizers.push(z);
        self
    }

    pub fn with_notes(mut self, notes: impl Into<String>) -> Self {
        self.notes = notes.into();
        self
    }

    /// Same function, different grouping of the coordinates into blocks.
    pub fn with_partition(mut self, partition: BlockPartition) -> Result<Self> {
        if partition.total_dim() != self.partition.total_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.partition.total_dim(),
                got: partition.total_dim(),
            });
        }
        self.partition = partition;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn dim(&self) -> usize {
        self.partition.total_dim()
    }

    pub fn region(&self) -> &ExclusionRegion {
        &self.region
    }

    pub fn singular_set(&self) -> &ExclusionRegion {
        &self.singular_set
    }

    pub fn minimizers(&self) -> &[Vec<f64>] {
        &self.minimizers
    }

    pub fn notes(&self) -> &str {
        &self.notes
    }

    /// Wraps a flat coordinate list as a point of this objective.
    pub fn point(&self, coords: Vec<f64>) -> Result<BlockVector> {
        BlockVector::new(self.partition.clone(), coords)
    }

    pub fn value(&self, z: &BlockVector) -> f64 {
        (self.value)(z.as_slice())
    }

    pub fn value_at(&self, z: &[f64]) -> f64 {
        (self.value)(z)
    }

    /// Analytic gradient. Components may be non-finite if `z` overflowed.
    pub fn gradient(&self, z: &BlockVector) -> BlockGradient {
        let g = (self.gradient)(z.as_slice());
        BlockGradient::from_raw(self.partition.clone(), g)
    }
}

/// `sign` with `sign(0) = 0`.
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn cube_sin(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x * x * (1.0 / x).sin()
    }
}

fn cube_sin_deriv(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        let inv = 1.0 / x;
        3.0 * x * x * inv.sin() - x * inv.cos()
    }
}

/// `a |x|` on `R`.
pub fn abs(a: f64) -> Result<Objective> {
    positive("a", a)?;
    Ok(Objective::new(
        "abs",
        BlockPartition::single(1)?,
        move |z| a * z[0].abs(),
        move |z| vec![a * sign0(z[0])],
    )
    .with_singular_set(ExclusionRegion::CoordinateHyperplane { coordinate: 0 })
    .with_minimizer(vec![0.0]))
}

/// `a |x| + y`, unbounded below. With `region` the hyperplane `{x = 0}`
/// becomes the exclusion set that caps step sizes.
pub fn abs_plus_linear(a: f64, region: bool) -> Result<Objective> {
    positive("a", a)?;
    let plane = ExclusionRegion::CoordinateHyperplane { coordinate: 0 };
    let obj = Objective::new(
        "abs_plus_linear",
        BlockPartition::scalar_blocks(2)?,
        move |z| a * z[0].abs() + z[1],
        move |z| vec![a * sign0(z[0]), 1.0],
    )
    .with_singular_set(plane.clone())
    .with_notes("unbounded below; a good method diverges towards (0, -inf)");
    Ok(if region { obj.with_region(plane) } else { obj })
}

/// `a max(x, 0) + y`.
pub fn relu_plus_linear(a: f64) -> Result<Objective> {
    positive("a", a)?;
    Ok(Objective::new(
        "relu_plus_linear",
        BlockPartition::scalar_blocks(2)?,
        move |z| a * z[0].max(0.0) + z[1],
        move |z| vec![if z[0] > 0.0 { a } else { 0.0 }, 1.0],
    )
    .with_singular_set(ExclusionRegion::CoordinateHyperplane { coordinate: 0 })
    .with_notes("unbounded below"))
}

/// `x^3 sin(1/x)`, extended by 0 at the origin. C^1, but the derivative is
/// not locally Lipschitz at 0.
pub fn cube_sin_1d() -> Result<Objective> {
    Ok(Objective::new(
        "cube_sin_1d",
        BlockPartition::single(1)?,
        |z| cube_sin(z[0]),
        |z| vec![cube_sin_deriv(z[0])],
    )
    .with_singular_set(ExclusionRegion::CoordinateHyperplane { coordinate: 0 })
    .with_notes("singular critical point at 0; local minima accumulate there"))
}

pub fn cube_sin_2d() -> Result<Objective> {
    Ok(Objective::new(
        "cube_sin_2d",
        BlockPartition::scalar_blocks(2)?,
        |z| cube_sin(z[0]) + cube_sin(z[1]),
        |z| vec![cube_sin_deriv(z[0]), cube_sin_deriv(z[1])],
    )
    .with_singular_set(ExclusionRegion::Custom {
        name: "coordinate axes".into(),
        distance: Arc::new(|z: &[f64]| z[0].abs().min(z[1].abs())),
    }))
}

/// `(x - 1)^2 + 100 (y - x^2)^2`.
pub fn rosenbrock() -> Result<Objective> {
    Ok(Objective::new(
        "rosenbrock",
        BlockPartition::scalar_blocks(2)?,
        |z| {
            let (x, y) = (z[0], z[1]);
            (x - 1.0).powi(2) + 100.0 * (y - x * x).powi(2)
        },
        |z| {
            let (x, y) = (z[0], z[1]);
            let valley = y - x * x;
            vec![2.0 * (x - 1.0) - 400.0 * x * valley, 200.0 * valley]
        },
    )
    .with_minimizer(vec![1.0, 1.0]))
}

fn block_power_sum(
    name: &str,
    coeffs: Vec<f64>,
    dims: Option<Vec<usize>>,
    value: fn(f64, f64) -> f64,
    scale: fn(f64, f64) -> f64,
) -> Result<Objective> {
    for &c in &coeffs {
        positive("c", c)?;
    }
    let dims = dims.unwrap_or_else(|| vec![1; coeffs.len()]);
    if dims.len() != coeffs.len() {
        return Err(Error::InvalidParameter {
            name: "dims".into(),
            reason: format!("{} blocks but {} coefficients", dims.len(), coeffs.len()),
        });
    }
    let partition = BlockPartition::new(dims)?;
    let minimizer = vec![0.0; partition.total_dim()];
    let (pv, pg) = (partition.clone(), partition.clone());
    let (cv, cg) = (coeffs.clone(), coeffs);
    Ok(Objective::new(
        name,
        partition,
        move |z| {
            cv.iter()
                .enumerate()
                .map(|(i, &c)| {
                    let sq: f64 = z[pv.range(i)].iter().map(|v| v * v).sum();
                    value(c, sq)
                })
                .sum()
        },
        move |z| {
            let mut g = vec![0.0; z.len()];
            for (i, &c) in cg.iter().enumerate() {
                let range = pg.range(i);
                let sq: f64 = z[range.clone()].iter().map(|v| v * v).sum();
                let s = scale(c, sq);
                for j in range {
                    g[j] = s * z[j];
                }
            }
            g
        },
    )
    .with_minimizer(minimizer))
}

/// `sum_i c_i ||z_i||^2 / 2`, one block per coefficient.
pub fn quadratic(coeffs: Vec<f64>, dims: Option<Vec<usize>>) -> Result<Objective> {
    block_power_sum("quadratic", coeffs, dims, |c, sq| c * sq / 2.0, |c, _| c)
}

/// `sum_i c_i ||z_i||^4 / 4`, one block per coefficient.
pub fn quartic(coeffs: Vec<f64>, dims: Option<Vec<usize>>) -> Result<Objective> {
    block_power_sum("quartic", coeffs, dims, |c, sq| c * sq * sq / 4.0, |c, sq| c * sq)
}

/// `f(z) = sum_i g_i(z_i)`; each component becomes one block.
pub fn separable(parts: Vec<Objective>) -> Result<Objective> {
    if parts.is_empty() {
        return Err(Error::InvalidParameter {
            name: "parts".into(),
            reason: "at least one component is required".into(),
        });
    }
    let partition = BlockPartition::new(parts.iter().map(Objective::dim).collect())?;
    let name = format!(
        "separable({})",
        parts.iter().map(Objective::name).collect::<Vec<_>>().join(", ")
    );
    let parts: Arc<[Objective]> = parts.into();
    let (pv, pg) = (partition.clone(), partition.clone());
    let (fv, fg) = (parts.clone(), parts);
    Ok(Objective::new(
        name,
        partition,
        move |z| {
            fv.iter()
                .enumerate()
                .map(|(i, g)| g.value_at(&z[pv.range(i)]))
                .sum()
        },
        move |z| {
            fg.iter()
                .enumerate()
                .flat_map(|(i, g)| (g.gradient)(&z[pg.range(i)]))
                .collect()
        },
    ))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: name.into(),
            reason: format!("{v} must be positive"),
        })
    }
}

/// A named parameter of a built-in objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Flag(bool),
    Scalar(f64),
    List(Vec<f64>),
}

pub type Params = BTreeMap<String, ParamValue>;

fn scalar(params: &Params, name: &str, default: f64) -> Result<f64> {
    match params.get(name) {
        None => Ok(default),
        Some(ParamValue::Scalar(v)) => Ok(*v),
        Some(other) => Err(bad_type(name, "a number", other)),
    }
}

fn flag(params: &Params, name: &str) -> Result<bool> {
    match params.get(name) {
        None => Ok(false),
        Some(ParamValue::Flag(b)) => Ok(*b),
        Some(other) => Err(bad_type(name, "a boolean", other)),
    }
}

fn list(params: &Params, name: &str) -> Result<Option<Vec<f64>>> {
    match params.get(name) {
        None => Ok(None),
        Some(ParamValue::List(v)) => Ok(Some(v.clone())),
        Some(ParamValue::Scalar(v)) => Ok(Some(vec![*v])),
        Some(other) => Err(bad_type(name, "a list of numbers", other)),
    }
}

fn dims(params: &Params) -> Result<Option<Vec<usize>>> {
    list(params, "dims")?
        .map(|v| {
            v.into_iter()
                .map(|d| {
                    if d >= 1.0 && d.fract() == 0.0 {
                        Ok(d as usize)
                    } else {
                        Err(Error::InvalidParameter {
                            name: "dims".into(),
                            reason: format!("{d} is not a positive integer"),
                        })
                    }
                })
                .collect()
        })
        .transpose()
}

fn bad_type(name: &str, expected: &str, got: &ParamValue) -> Error {
    Error::InvalidParameter {
        name: name.into(),
        reason: format!("expected {expected}, got {got:?}"),
    }
}

/// Static description of a built-in objective.
#[derive(Clone, Debug, Serialize)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub signature: &'static str,
    pub formula: &'static str,
    pub partition: &'static str,
    pub minima: &'static str,
}

pub fn catalog() -> Vec<BuiltinInfo> {
    vec![
        BuiltinInfo {
            name: "abs",
            signature: "abs(a=1)",
            formula: "a|x|",
            partition: "(1)",
            minima: "x = 0 (kink)",
        },
        BuiltinInfo {
            name: "abs_plus_linear",
            signature: "abs_plus_linear(a=2, region=false)",
            formula: "a|x| + y",
            partition: "(1, 1)",
            minima: "none, unbounded below",
        },
        BuiltinInfo {
            name: "relu_plus_linear",
            signature: "relu_plus_linear(a=2)",
            formula: "a max(x, 0) + y",
            partition: "(1, 1)",
            minima: "none, unbounded below",
        },
        BuiltinInfo {
            name: "cube_sin_1d",
            signature: "cube_sin_1d",
            formula: "x^3 sin(1/x), 0 at x = 0",
            partition: "(1)",
            minima: "infinitely many local minima accumulating at 0; one near 0.2452",
        },
        BuiltinInfo {
            name: "cube_sin_2d",
            signature: "cube_sin_2d",
            formula: "x^3 sin(1/x) + y^3 sin(1/y)",
            partition: "(1, 1)",
            minima: "products of the 1-D local minima",
        },
        BuiltinInfo {
            name: "rosenbrock",
            signature: "rosenbrock",
            formula: "(x - 1)^2 + 100 (y - x^2)^2",
            partition: "(1, 1)",
            minima: "(1, 1), f = 0",
        },
        BuiltinInfo {
            name: "quadratic",
            signature: "quadratic(c=[1, 1], dims=[1, ...])",
            formula: "sum_i c_i ||z_i||^2 / 2",
            partition: "one block per c_i",
            minima: "origin, f = 0",
        },
        BuiltinInfo {
            name: "quartic",
            signature: "quartic(c=[1, 1], dims=[1, ...])",
            formula: "sum_i c_i ||z_i||^4 / 4",
            partition: "one block per c_i",
            minima: "origin, f = 0",
        },
    ]
}

/// Looks up a built-in objective by name.
pub fn builtin(name: &str, params: &Params) -> Result<Objective> {
    let known: &[&str] = match name {
        "abs" | "relu_plus_linear" => &["a"],
        "abs_plus_linear" => &["a", "region"],
        "quadratic" | "quartic" => &["c", "dims"],
        "cube_sin_1d" | "cube_sin_2d" | "rosenbrock" => &[],
        _ => return Err(Error::UnknownFunction(name.to_string())),
    };
    if let Some(extra) = params.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::InvalidParameter {
            name: extra.clone(),
            reason: format!("not a parameter of {name}"),
        });
    }
    match name {
        "abs" => abs(scalar(params, "a", 1.0)?),
        "abs_plus_linear" => abs_plus_linear(scalar(params, "a", 2.0)?, flag(params, "region")?),
        "relu_plus_linear" => relu_plus_linear(scalar(params, "a", 2.0)?),
        "cube_sin_1d" => cube_sin_1d(),
        "cube_sin_2d" => cube_sin_2d(),
        "rosenbrock" => rosenbrock(),
        "quadratic" => quadratic(list(params, "c")?.unwrap_or(vec![1.0, 1.0]), dims(params)?),
        "quartic" => quartic(list(params, "c")?.unwrap_or(vec![1.0, 1.0]), dims(params)?),
        _ => unreachable!(),
    }
}

/// Central differences `(f(z + h e_j) - f(z - h e_j)) / 2h`, reassembled
/// into blocks.
pub fn fd_gradient(obj: &Objective, z: &BlockVector, h: f64) -> Result<BlockGradient> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "h".into(),
            reason: format!("{h} must be positive"),
        });
    }
    let region = obj.region();
    let mut g = Vec::with_capacity(z.len());
    for j in 0..z.len() {
        let plus = z.shifted(j, h);
        let minus = z.shifted(j, -h);
        let crosses = match region {
            ExclusionRegion::CoordinateHyperplane { coordinate } => {
                plus.as_slice()[*coordinate] * minus.as_slice()[*coordinate] <= 0.0
            }
            _ => false,
        };
        if crosses || region.contains(plus.as_slice()) || region.contains(minus.as_slice()) {
            return Err(Error::RegionViolation { coordinate: j });
        }
        g.push((obj.value(&plus) - obj.value(&minus)) / (2.0 * h));
    }
    BlockGradient::new(z.partition().clone(), g).map_err(|_| Error::NonFiniteValue)
}

/// `1/pi`, where `cube_sin_1d` vanishes.
pub const CUBE_SIN_ROOT: f64 = 1.0 / PI;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(coords: &[f64]) -> BlockVector {
        BlockVector::from_blocks(coords.iter().map(|&c| vec![c]).collect()).unwrap()
    }

    #[test]
    fn rosenbrock_minimum() {
        let f = rosenbrock().unwrap();
        let z = pt(&[1.0, 1.0]);
        assert_eq!(f.value(&z), 0.0);
        assert_eq!(f.gradient(&z).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn abs_plus_linear_values() {
        let f = abs_plus_linear(2.0, false).unwrap();
        let z = pt(&[3.0, 5.0]);
        assert_eq!(f.value(&z), 11.0);
        assert_eq!(f.gradient(&z).as_slice(), &[2.0, 1.0]);
        // sign(0) = 0
        assert_eq!(f.gradient(&pt(&[0.0, 5.0])).as_slice(), &[0.0, 1.0]);
        assert!(f.region().is_none());
        assert!(!abs_plus_linear(2.0, true).unwrap().region().is_none());
    }

    #[test]
    fn relu_gradient_at_kink_is_zero() {
        let f = relu_plus_linear(2.0).unwrap();
        assert_eq!(f.gradient(&pt(&[0.0, 1.0])).as_slice(), &[0.0, 1.0]);
        assert_eq!(f.gradient(&pt(&[0.5, 1.0])).as_slice(), &[2.0, 1.0]);
        assert_eq!(f.value(&pt(&[-3.0, 1.0])), 1.0);
    }

    #[test]
    fn cube_sin_extension() {
        let f = cube_sin_1d().unwrap();
        assert!(f.value(&pt(&[CUBE_SIN_ROOT])).abs() < 1e-17);
        assert_eq!(f.value(&pt(&[0.0])), 0.0);
        assert_eq!(f.gradient(&pt(&[0.0])).as_slice(), &[0.0]);
    }

    #[test]
    fn cube_sin_derivative_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(-2.0..2.0);
            assert!(cube_sin_deriv(x).abs() <= 3.0 * x * x + x.abs() + 1e-15);
        }
    }

    #[test]
    fn builtin_dispatch() {
        assert!(matches!(
            builtin("himmelblau", &Params::new()),
            Err(Error::UnknownFunction(_))
        ));
        let mut p = Params::new();
        p.insert("a".into(), ParamValue::Scalar(-1.0));
        assert!(matches!(
            builtin("abs_plus_linear", &p),
            Err(Error::InvalidParameter { .. })
        ));
        p.insert("a".into(), ParamValue::Scalar(3.0));
        p.insert("region".into(), ParamValue::Flag(true));
        let f = builtin("abs_plus_linear", &p).unwrap();
        assert_eq!(f.value(&pt(&[1.0, 1.0])), 4.0);
        assert!(!f.region().is_none());
        p.insert("bogus".into(), ParamValue::Scalar(1.0));
        assert!(builtin("abs_plus_linear", &p).is_err());

        let mut q = Params::new();
        q.insert("c".into(), ParamValue::List(vec![1.0, 100.0]));
        q.insert("dims".into(), ParamValue::List(vec![2.0, 1.0]));
        let f = builtin("quadratic", &q).unwrap();
        assert_eq!(f.partition().dims(), &[2, 1]);
        let z = BlockVector::from_blocks(vec![vec![1.0, 1.0], vec![1.0]]).unwrap();
        assert_eq!(f.value(&z), 51.0);
        for info in catalog() {
            assert!(builtin(info.name, &Params::new()).is_ok(), "{}", info.name);
        }
    }

    #[test]
    fn separable_sums_components() {
        let f = separable(vec![cube_sin_1d().unwrap(), quartic(vec![2.0], None).unwrap()]).unwrap();
        let g1 = cube_sin_1d().unwrap();
        let g2 = quartic(vec![2.0], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let (x, y): (f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let expected = g1.value_at(&[x]) + g2.value_at(&[y]);
            assert_eq!(f.value(&pt(&[x, y])), expected);
            let g = f.gradient(&pt(&[x, y]));
            assert_eq!(g.block(0), g1.gradient(&pt(&[x])).as_slice());
            assert_eq!(g.block(1), g2.gradient(&pt(&[y])).as_slice());
        }
    }

    #[test]
    fn fd_quadratic() {
        let f = quadratic(vec![1.0], None).unwrap();
        let g = fd_gradient(&f, &pt(&[2.0]), 1e-5).unwrap();
        assert!((g.as_slice()[0] - 2.0).abs() < 1e-9);
        let g = fd_gradient(&f, &pt(&[0.0]), 1e-5).unwrap();
        assert!(g.as_slice()[0].abs() < 1e-9);
    }

    #[test]
    fn fd_rosenbrock() {
        let f = rosenbrock().unwrap();
        let z = pt(&[0.5, 0.75]);
        let fd = fd_gradient(&f, &z, 1e-6).unwrap();
        let an = f.gradient(&z);
        for (a, b) in an.as_slice().iter().zip(fd.as_slice()) {
            assert!((a - b).abs() <= 1e-5 * a.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn fd_respects_region() {
        let f = abs_plus_linear(2.0, true).unwrap();
        assert_eq!(
            fd_gradient(&f, &pt(&[1e-7, 0.0]), 1e-6),
            Err(Error::RegionViolation { coordinate: 0 })
        );
        assert!(fd_gradient(&f, &pt(&[0.5, 0.0]), 1e-6).is_ok());
        assert!(fd_gradient(&f, &pt(&[0.5, 0.0]), 0.0).is_err());
    }
}
