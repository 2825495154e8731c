//! Armijo tests and step-size searches over the grid `{beta^n * delta0}`.
//!
//! The coordinate-wise search starts every block at the backtracking rate
//! `delta(z)` and then, one block at a time in a chosen order, raises that
//! block's rate to the largest grid candidate (below the cap) for which the
//! coordinate-wise Armijo inequality
//!
//! ```text
//! f(z_1 - d_1 g_1, ..., z_k - d_k g_k) - f(z) <= -alpha * sum_i d_i ||g_i||^2
//! ```
//!
//! still holds, with earlier blocks fixed at their chosen rates and later
//! blocks at the base rate. The candidate equal to the base rate always
//! passes, because the rate vector it produces was already accepted.

use crate::objectives::Objective;
use crate::types::{BlockGradient, BlockVector, HyperParams, LearningRates};
use crate::{Error, Result};

/// Quantities at `z` reused by every trial in one search.
pub(crate) struct Probe<'a> {
    obj: &'a Objective,
    z: &'a BlockVector,
    g: &'a BlockGradient,
    fz: f64,
    block_sq: Vec<f64>,
}

impl<'a> Probe<'a> {
    pub(crate) fn new(obj: &'a Objective, z: &'a BlockVector, g: &'a BlockGradient) -> Result<Self> {
        let fz = obj.value(z);
        if !fz.is_finite() {
            return Err(Error::NonFiniteValue);
        }
        Ok(Self {
            obj,
            z,
            g,
            fz,
            block_sq: g.block_squared_norms(),
        })
    }

    /// Both sides of the coordinate-wise inequality at `rates`, as
    /// `(f(trial) - f(z), -factor * sum_i rates[i] ||g_i||^2)`.
    pub(crate) fn sides(&self, rates: &[f64], factor: f64) -> (f64, f64) {
        let trial = self.z.step(self.g, rates);
        let lhs = self.obj.value(&trial) - self.fz;
        let decrease: f64 = rates.iter().zip(&self.block_sq).map(|(d, s)| d * s).sum();
        (lhs, -factor * decrease)
    }

    fn holds(&self, rates: &[f64], factor: f64) -> Result<bool> {
        let (lhs, rhs) = self.sides(rates, factor);
        if !lhs.is_finite() {
            return Err(Error::NonFiniteValue);
        }
        Ok(lhs <= rhs)
    }

    /// As `holds`, but a non-finite trial value counts as a rejection.
    fn accepts(&self, rates: &[f64], factor: f64) -> bool {
        self.holds(rates, factor).unwrap_or(false)
    }
}

/// Armijo's condition `f(z - d g) - f(z) <= -alpha d ||g||^2`.
pub fn armijo_holds(
    obj: &Objective,
    z: &BlockVector,
    g: &BlockGradient,
    delta: f64,
    alpha: f64,
) -> Result<bool> {
    let rates = vec![delta; z.partition().num_blocks()];
    Probe::new(obj, z, g)?.holds(&rates, alpha)
}

/// The coordinate-wise Armijo condition with one rate per block.
pub fn cw_armijo_holds(
    obj: &Objective,
    z: &BlockVector,
    g: &BlockGradient,
    rates: &[f64],
    alpha: f64,
) -> Result<bool> {
    if rates.len() != z.partition().num_blocks() {
        return Err(Error::ShapeMismatch {
            expected: z.partition().num_blocks(),
            got: rates.len(),
        });
    }
    Probe::new(obj, z, g)?.holds(rates, alpha)
}

fn base_factor(hp: &HyperParams) -> f64 {
    if hp.base_alpha {
        hp.alpha
    } else {
        1.0
    }
}

fn base_search(probe: &Probe<'_>, hp: &HyperParams, cap: f64) -> Result<(f64, usize)> {
    if probe.g.squared_norm() == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let k = probe.z.partition().num_blocks();
    let factor = base_factor(hp);
    let mut rates = vec![0.0; k];
    for (n, delta) in hp.candidates() {
        if delta >= cap {
            continue;
        }
        rates.fill(delta);
        if probe.accepts(&rates, factor) {
            return Ok((delta, n));
        }
    }
    Err(Error::ExhaustedGrid {
        depth: hp.max_grid_depth,
    })
}

/// Largest grid candidate below `cap` satisfying Armijo's condition at `z`,
/// with its grid index.
pub fn base_backtracking(
    obj: &Objective,
    z: &BlockVector,
    g: &BlockGradient,
    hp: &HyperParams,
    cap: f64,
) -> Result<(f64, usize)> {
    base_search(&Probe::new(obj, z, g)?, hp, cap)
}

pub(crate) fn check_order(order: &[usize], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    for &i in order {
        if i >= k || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidOrder { blocks: k });
        }
    }
    if order.len() != k {
        return Err(Error::InvalidOrder { blocks: k });
    }
    Ok(())
}

/// Per-block rates built block by block in `order` (0-based block indices).
pub fn cw_backtracking(
    obj: &Objective,
    z: &BlockVector,
    g: &BlockGradient,
    hp: &HyperParams,
    order: &[usize],
    cap: f64,
) -> Result<LearningRates> {
    let k = z.partition().num_blocks();
    check_order(order, k)?;
    let probe = Probe::new(obj, z, g)?;
    let (base, base_index) = base_search(&probe, hp, cap)?;
    let mut rates = LearningRates::uniform(base, base_index, k);
    let mut trial = rates.per_block.clone();
    for &i in order {
        // Candidates strictly above the base rate; the base itself is known
        // to pass with the current rate vector.
        let above_base = hp
            .candidates()
            .take(base_index)
            .filter(|&(_, delta)| delta < cap);
        let chosen = if probe.block_sq[i] == 0.0 {
            // The block does not move the trial point; take the top admissible
            // candidate without evaluating.
            above_base.into_iter().next()
        } else {
            above_base.into_iter().find(|&(_, delta)| {
                trial[i] = delta;
                probe.accepts(&trial, hp.alpha)
            })
        };
        let (n, delta) = chosen.unwrap_or((base_index, base));
        trial[i] = delta;
        rates.per_block[i] = delta;
        rates.grid_indices[i] = n;
    }
    Ok(rates)
}

/// Block order for the coordinate-wise search: blocks with larger secant
/// Lipschitz estimates `||g_i(curr) - g_i(prev)|| / ||z_i(curr) - z_i(prev)||`
/// come first. Blocks whose displacement is below `1e-12` have no estimate
/// and stay in the slots `fallback` gives them.
pub fn ordering_heuristic(
    prev: Option<(&BlockVector, &BlockGradient)>,
    curr: (&BlockVector, &BlockGradient),
    fallback: &[usize],
) -> Vec<usize> {
    const MIN_DISPLACEMENT: f64 = 1e-12;
    let Some((prev_z, prev_g)) = prev else {
        return fallback.to_vec();
    };
    let (curr_z, curr_g) = curr;
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt()
    };
    let estimate = |i: usize| {
        let dz = dist(curr_z.block(i), prev_z.block(i));
        (dz > MIN_DISPLACEMENT).then(|| dist(curr_g.block(i), prev_g.block(i)) / dz)
    };
    let estimates: Vec<Option<f64>> = (0..curr_z.partition().num_blocks()).map(estimate).collect();

    let mut ranked: Vec<usize> = fallback
        .iter()
        .copied()
        .filter(|&i| estimates[i].is_some())
        .collect();
    // stable: ties keep fallback order
    ranked.sort_by(|&a, &b| {
        let (la, lb) = (estimates[a].unwrap(), estimates[b].unwrap());
        lb.partial_cmp(&la).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut ranked = ranked.into_iter();
    fallback
        .iter()
        .map(|&i| {
            if estimates[i].is_some() {
                ranked.next().unwrap()
            } else {
                i
            }
        })
        .collect()
}
