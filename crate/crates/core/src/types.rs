//! Domain types: block-partitioned points and gradients, hyperparameters,
//! exclusion regions and the geometric candidate grid.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dimensions `(m_1, ..., m_k)` of the coordinate blocks of `R^m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    dims: Arc<[usize]>,
}

impl BlockPartition {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidPartition("at least one block is required".into()));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidPartition(format!("block {i} has dimension 0")));
        }
        Ok(Self { dims: dims.into() })
    }

    /// `k` blocks of dimension one, e.g. `(x, y)` for `k = 2`.
    pub fn scalar_blocks(k: usize) -> Result<Self> {
        Self::new(vec![1; k])
    }

    /// A single block of dimension `m`.
    pub fn single(m: usize) -> Result<Self> {
        Self::new(vec![m])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Flat index range of block `i`.
    pub fn range(&self, i: usize) -> Range<usize> {
        let start: usize = self.dims[..i].iter().sum();
        start..start + self.dims[i]
    }

    /// Block owning flat coordinate `j`.
    pub fn block_of(&self, j: usize) -> usize {
        let mut end = 0;
        for (i, d) in self.dims.iter().enumerate() {
            end += d;
            if j < end {
                return i;
            }
        }
        panic!("coordinate {j} outside partition of dimension {end}");
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let expected = self.total_dim();
        if len != expected {
            return Err(Error::ShapeMismatch { expected, got: len });
        }
        Ok(())
    }
}

fn flatten(blocks: Vec<Vec<f64>>) -> Result<(BlockPartition, Vec<f64>)> {
    let partition = BlockPartition::new(blocks.iter().map(Vec::len).collect())?;
    Ok((partition, blocks.into_iter().flatten().collect()))
}

/// A point `z = (x, y, ...)` stored flat, viewed through its partition.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    partition: BlockPartition,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn new(partition: BlockPartition, data: Vec<f64>) -> Result<Self> {
        partition.check_len(data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteComponent { index });
        }
        Ok(Self { partition, data })
    }

    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Result<Self> {
        let (partition, data) = flatten(blocks)?;
        Self::new(partition, data)
    }

    /// Unchecked constructor for iterates that may have overflowed.
    pub(crate) fn from_raw(partition: BlockPartition, data: Vec<f64>) -> Self {
        debug_assert_eq!(partition.total_dim(), data.len());
        Self { partition, data }
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[self.partition.range(i)]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &BlockVector) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// The block-wise trial point `(z_1 - rates[0] g_1, ..., z_k - rates[k-1] g_k)`.
    pub fn step(&self, g: &BlockGradient, rates: &[f64]) -> BlockVector {
        debug_assert_eq!(rates.len(), self.partition.num_blocks());
        let mut data = self.data.clone();
        for (i, &rate) in rates.iter().enumerate() {
            let range = self.partition.range(i);
            for (zj, gj) in data[range.clone()].iter_mut().zip(&g.data[range]) {
                *zj -= rate * gj;
            }
        }
        Self::from_raw(self.partition.clone(), data)
    }

    /// Copy of `self` with flat coordinate `j` shifted by `h`.
    pub(crate) fn shifted(&self, j: usize, h: f64) -> BlockVector {
        let mut data = self.data.clone();
        data[j] += h;
        Self::from_raw(self.partition.clone(), data)
    }
}

/// Per-block partial gradients `(d_x f, d_y f, ...)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGradient {
    partition: BlockPartition,
    data: Vec<f64>,
}

impl BlockGradient {
    pub fn new(partition: BlockPartition, data: Vec<f64>) -> Result<Self> {
        partition.check_len(data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteComponent { index });
        }
        Ok(Self { partition, data })
    }

    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Result<Self> {
        let (partition, data) = flatten(blocks)?;
        Self::new(partition, data)
    }

    pub(crate) fn from_raw(partition: BlockPartition, data: Vec<f64>) -> Self {
        debug_assert_eq!(partition.total_dim(), data.len());
        Self { partition, data }
    }

    pub fn zeros(partition: BlockPartition) -> Self {
        let m = partition.total_dim();
        Self::from_raw(partition, vec![0.0; m])
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[self.partition.range(i)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn block_squared_norm(&self, i: usize) -> f64 {
        self.block(i).iter().map(|v| v * v).sum()
    }

    pub fn block_squared_norms(&self) -> Vec<f64> {
        (0..self.partition.num_blocks())
            .map(|i| self.block_squared_norm(i))
            .collect()
    }

    /// `||grad f||^2`, accumulated block by block.
    pub fn squared_norm(&self) -> f64 {
        self.block_squared_norms().iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }
}

/// Armijo constant, grid ratio and grid top.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta0: f64,
    pub max_grid_depth: usize,
    /// Whether the base backtracking rate uses the factor `alpha` in its
    /// sufficient-decrease test. With `false` the base test is
    /// `f(z - d g) - f(z) <= -d ||g||^2`.
    pub base_alpha: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            delta0: 2.0,
            max_grid_depth: 200,
            base_alpha: true,
        }
    }
}

impl HyperParams {
    pub fn new(alpha: f64, beta: f64, delta0: f64) -> Result<Self> {
        let hp = Self {
            alpha,
            beta,
            delta0,
            ..Self::default()
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &'static str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidHyperParam {
                    name,
                    reason: format!("{v} is not in (0, 1)"),
                })
            }
        };
        open_unit("alpha", self.alpha)?;
        open_unit("beta", self.beta)?;
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            return Err(Error::InvalidHyperParam {
                name: "delta0",
                reason: format!("{} is not a positive finite number", self.delta0),
            });
        }
        if self.max_grid_depth == 0 {
            return Err(Error::InvalidHyperParam {
                name: "max_grid_depth",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// `beta^n * delta0`, built by repeated multiplication so that
    /// `candidate(n + 1) == beta * candidate(n)` holds exactly.
    pub fn candidate(&self, n: usize) -> Result<f64> {
        if n > self.max_grid_depth {
            return Err(Error::GridIndexOutOfRange {
                index: n,
                max: self.max_grid_depth,
            });
        }
        Ok(self.candidates().nth(n).expect("index checked above").1)
    }

    /// `(n, beta^n * delta0)` for `n = 0..=max_grid_depth`, largest first.
    pub fn candidates(&self) -> impl Iterator<Item = (usize, f64)> {
        let beta = self.beta;
        std::iter::successors(Some(self.delta0), move |v| Some(v * beta))
            .take(self.max_grid_depth + 1)
            .enumerate()
    }
}

/// Distance oracle for a closed set `A` on which the objective may be
/// undefined or non-differentiable.
#[derive(Clone, Default)]
pub enum ExclusionRegion {
    #[default]
    None,
    /// The hyperplane `{z_j = 0}` for flat coordinate `j`.
    CoordinateHyperplane { coordinate: usize },
    Custom {
        name: String,
        distance: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    None,
    CoordinateHyperplane,
    Custom,
}

impl fmt::Debug for ExclusionRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => write!(f, "None"),
            Self::CoordinateHyperplane { coordinate } => {
                write!(f, "CoordinateHyperplane({coordinate})")
            }
            Self::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl ExclusionRegion {
    pub fn kind(&self) -> RegionKind {
        match self {
            Self::None => RegionKind::None,
            Self::CoordinateHyperplane { .. } => RegionKind::CoordinateHyperplane,
            Self::Custom { .. } => RegionKind::Custom,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Self::None)
    }

    /// `dist(z, A)`; infinite for the empty region.
    pub fn distance(&self, z: &[f64]) -> f64 {
        match self {
            Self::None => f64::INFINITY,
            Self::CoordinateHyperplane { coordinate } => z[*coordinate].abs(),
            Self::Custom { distance, .. } => distance(z).max(0.0),
        }
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        self.distance(z) == 0.0
    }

    /// Step-size cap `dist(z, A) / ||grad f(z)||`.
    pub fn cap(&self, z: &BlockVector, g: &BlockGradient) -> Result<f64> {
        if self.is_none() {
            return Ok(f64::INFINITY);
        }
        let norm = g.norm();
        if norm == 0.0 {
            return Err(Error::ZeroGradientWithCap);
        }
        let r = self.distance(z.as_slice());
        if r == 0.0 {
            return Err(Error::OnExclusionSet);
        }
        Ok(r / norm)
    }
}

/// Step sizes chosen at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    /// The backtracking rate `delta(z)`.
    pub base: f64,
    pub base_index: usize,
    pub per_block: Vec<f64>,
    pub grid_indices: Vec<usize>,
}

impl LearningRates {
    /// Every block at the base rate.
    pub fn uniform(base: f64, base_index: usize, blocks: usize) -> Self {
        Self {
            base,
            base_index,
            per_block: vec![base; blocks],
            grid_indices: vec![base_index; blocks],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(alpha: f64, beta: f64, delta0: f64) -> HyperParams {
        HyperParams::new(alpha, beta, delta0).unwrap()
    }

    #[test]
    fn candidate_values() {
        assert_eq!(hp(0.5, 0.5, 2.0).candidate(0).unwrap(), 2.0);
        assert_eq!(hp(0.5, 0.5, 2.0).candidate(3).unwrap(), 0.25);
        assert_eq!(hp(0.5, 0.7, 1.0).candidate(1).unwrap(), 0.7);
    }

    #[test]
    fn candidate_grid_is_consistent() {
        let p = hp(0.3, 0.7, 3.1);
        for n in 0..p.max_grid_depth {
            let a = p.candidate(n).unwrap();
            let b = p.candidate(n + 1).unwrap();
            assert_eq!(b, p.beta * a);
            assert!(b < a);
        }
        assert!(matches!(
            p.candidate(p.max_grid_depth + 1),
            Err(Error::GridIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn hyperparams_reject_out_of_range() {
        assert!(HyperParams::new(0.0, 0.5, 1.0).is_err());
        assert!(HyperParams::new(0.5, 1.0, 1.0).is_err());
        assert!(HyperParams::new(0.5, 0.5, 0.0).is_err());
        assert!(HyperParams::new(0.5, 0.5, f64::NAN).is_err());
        // delta0 in (0, 1] is allowed
        assert!(HyperParams::new(0.5, 0.5, 0.3).is_ok());
    }

    #[test]
    fn squared_norms() {
        let g = BlockGradient::from_blocks(vec![vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(g.squared_norm(), 25.0);
        let g = BlockGradient::zeros(BlockPartition::new(vec![2, 3]).unwrap());
        assert_eq!(g.squared_norm(), 0.0);
        let g = BlockGradient::from_blocks(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(g.squared_norm(), 2.0);
        assert_eq!(g.block_squared_norms(), vec![1.0, 1.0]);
    }

    #[test]
    fn partition_rules() {
        assert!(BlockPartition::new(vec![]).is_err());
        assert!(BlockPartition::new(vec![2, 0]).is_err());
        let p = BlockPartition::new(vec![2, 1, 3]).unwrap();
        assert_eq!(p.total_dim(), 6);
        assert_eq!(p.range(1), 2..3);
        assert_eq!(p.block_of(5), 2);
        assert!(BlockVector::new(p.clone(), vec![0.0; 5]).is_err());
        assert!(matches!(
            BlockVector::new(p, vec![0.0, 1.0, f64::INFINITY, 0.0, 0.0, 0.0]),
            Err(Error::NonFiniteComponent { index: 2 })
        ));
    }

    #[test]
    fn cap_values() {
        let z = BlockVector::from_blocks(vec![vec![0.5], vec![7.0]]).unwrap();
        let g = BlockGradient::from_blocks(vec![vec![2.0], vec![1.0]]).unwrap();
        assert_eq!(ExclusionRegion::None.cap(&z, &g).unwrap(), f64::INFINITY);

        let plane = ExclusionRegion::CoordinateHyperplane { coordinate: 0 };
        let expected = 0.5 / 5f64.sqrt();
        assert!((plane.cap(&z, &g).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.2236).abs() < 1e-4);

        let on_plane = BlockVector::from_blocks(vec![vec![0.0], vec![7.0]]).unwrap();
        assert_eq!(plane.cap(&on_plane, &g), Err(Error::OnExclusionSet));
        let zero = BlockGradient::zeros(z.partition().clone());
        assert_eq!(plane.cap(&z, &zero), Err(Error::ZeroGradientWithCap));
    }

    #[test]
    fn blockwise_step() {
        let z = BlockVector::from_blocks(vec![vec![1.0, 2.0], vec![3.0]]).unwrap();
        let g = BlockGradient::from_blocks(vec![vec![1.0, -1.0], vec![2.0]]).unwrap();
        let next = z.step(&g, &[0.5, 0.25]);
        assert_eq!(next.as_slice(), &[0.5, 2.5, 2.5]);
    }

    proptest::proptest! {
        #[test]
        fn squared_norm_is_sum_of_blocks(
            blocks in proptest::collection::vec(
                proptest::collection::vec(-1e3f64..1e3, 1..4), 1..5)
        ) {
            let g = BlockGradient::from_blocks(blocks).unwrap();
            let total: f64 = (0..g.partition().num_blocks()).map(|i| g.block_squared_norm(i)).sum();
            proptest::prop_assert_eq!(g.squared_norm(), total);
            proptest::prop_assert!(g.squared_norm() >= 0.0);
        }
    }
}
