//! Artificial corruption processes producing observation masks.
//!
//! Every generator consumes its random stream in an order that does not depend
//! on the feature values or on `beta`, so for a fixed seed the mask is monotone
//! in `beta`. [`calibrate_beta`] relies on that to bisect.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{IrrError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    /// Per-feature deletion probability drawn from `[0, beta]`.
    Independent,
    /// Threshold-triggered deletion with probability `beta`.
    Dependent,
    /// One image column of pixels deleted per row.
    #[serde(alias = "column")]
    ColumnBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub block_size: usize,
    #[serde(default)]
    pub eligible_blocks: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn independent(beta: f64, seed: u64) -> Self {
        Self {
            kind: CorruptionKind::Independent,
            beta,
            block_size: 0,
            eligible_blocks: Vec::new(),
            seed,
        }
    }

    pub fn dependent(beta: f64, seed: u64) -> Self {
        Self {
            kind: CorruptionKind::Dependent,
            ..Self::independent(beta, seed)
        }
    }

    pub fn column_block(block_size: usize, eligible_blocks: Vec<usize>, seed: u64) -> Self {
        Self {
            kind: CorruptionKind::ColumnBlock,
            beta: 0.0,
            block_size,
            eligible_blocks,
            seed,
        }
    }

    /// The three central pixel columns of an 8x8 image.
    pub fn optdigits_columns(seed: u64) -> Self {
        Self::column_block(8, vec![2, 3, 4], seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(IrrError::invalid(format!(
                "beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        if self.kind == CorruptionKind::ColumnBlock {
            if self.block_size == 0 {
                return Err(IrrError::invalid("block_size must be positive"));
            }
            if self.eligible_blocks.is_empty() {
                return Err(IrrError::invalid("eligible block set is empty"));
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Draw a mask for `x`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<Corruption> {
        self.validate()?;
        match self.kind {
            CorruptionKind::Independent => corrupt_independent(x, self.beta, self.seed),
            CorruptionKind::Dependent => corrupt_dependent(x, self.beta, self.seed),
            CorruptionKind::ColumnBlock => {
                corrupt_column_block(x, self.block_size, &self.eligible_blocks, self.seed)
            }
        }
    }
}

/// Per-run random draws, kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureDraws {
    Independent { p: Vec<f64> },
    Dependent { tau: Vec<f64>, sigma: Vec<i8> },
    ColumnBlock { chosen: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corruption {
    /// `true` = observed.
    pub mask: DMatrix<bool>,
    pub draws: FeatureDraws,
}

impl Corruption {
    pub fn fraction_remaining(&self) -> f64 {
        fraction_observed(&self.mask)
    }
}

pub fn fraction_observed(mask: &DMatrix<bool>) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    mask.iter().filter(|&&o| o).count() as f64 / mask.len() as f64
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(IrrError::invalid(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    Ok(())
}

/// Data-independent deletion: `p_k ~ U[0, beta]` per feature, then each entry
/// of feature `k` is deleted independently with probability `p_k`.
pub fn corrupt_independent(x: &DMatrix<f64>, beta: f64, seed: u64) -> Result<Corruption> {
    check_beta(beta)?;
    let (m, d) = x.shape();
    let mut g = rng::rng(seed);
    let p: Vec<f64> = (0..d).map(|_| beta * g.random::<f64>()).collect();
    let mut mask = DMatrix::from_element(m, d, true);
    for i in 0..m {
        for k in 0..d {
            let r: f64 = g.random();
            if r < p[k] {
                mask[(i, k)] = false;
            }
        }
    }
    Ok(Corruption {
        mask,
        draws: FeatureDraws::Independent { p },
    })
}

/// Data-dependent deletion: per feature draw `tau_k ~ U[0,1]` and a random
/// sign `sigma_k`; entry `(i,k)` is deleted with probability `beta` when
/// `sigma_k (x_ik - tau_k) > 0`.
pub fn corrupt_dependent(x: &DMatrix<f64>, beta: f64, seed: u64) -> Result<Corruption> {
    let d = x.ncols();
    let mut g = rng::rng(seed);
    let mut tau = Vec::with_capacity(d);
    let mut sigma = Vec::with_capacity(d);
    for _ in 0..d {
        tau.push(g.random::<f64>());
        sigma.push(if g.random::<bool>() { 1 } else { -1 });
    }
    dependent_with_draws(x, beta, tau, sigma, &mut g)
}

/// [`corrupt_dependent`] with caller-chosen thresholds and signs.
pub fn corrupt_dependent_with(
    x: &DMatrix<f64>,
    beta: f64,
    tau: Vec<f64>,
    sigma: Vec<i8>,
    seed: u64,
) -> Result<Corruption> {
    if tau.len() != x.ncols() || sigma.len() != x.ncols() {
        return Err(IrrError::dim("one threshold and sign per feature required"));
    }
    if sigma.iter().any(|s| *s != 1 && *s != -1) {
        return Err(IrrError::invalid("signs must be +1 or -1"));
    }
    dependent_with_draws(x, beta, tau, sigma, &mut rng::rng(seed))
}

fn dependent_with_draws(
    x: &DMatrix<f64>,
    beta: f64,
    tau: Vec<f64>,
    sigma: Vec<i8>,
    g: &mut rng::Rng,
) -> Result<Corruption> {
    check_beta(beta)?;
    if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(IrrError::invalid(format!(
            "feature value {v} outside [0, 1]; normalize before data-dependent corruption"
        )));
    }
    let (m, d) = x.shape();
    let mut mask = DMatrix::from_element(m, d, true);
    for i in 0..m {
        for k in 0..d {
            let r: f64 = g.random();
            let triggered = f64::from(sigma[k]) * (x[(i, k)] - tau[k]) > 0.0;
            if triggered && r < beta {
                mask[(i, k)] = false;
            }
        }
    }
    Ok(Corruption {
        mask,
        draws: FeatureDraws::Dependent { tau, sigma },
    })
}

/// Feature indices of pixel column `block` when the `d` features are a
/// row-major image with `d / block_size` columns and `block_size` rows.
pub fn block_features(d: usize, block_size: usize, block: usize) -> Vec<usize> {
    let width = d / block_size;
    (0..block_size).map(|r| r * width + block).collect()
}

/// Per row, delete one pixel column chosen uniformly from `eligible`.
pub fn corrupt_column_block(
    x: &DMatrix<f64>,
    block_size: usize,
    eligible: &[usize],
    seed: u64,
) -> Result<Corruption> {
    let (m, d) = x.shape();
    if block_size == 0 || d % block_size != 0 {
        return Err(IrrError::invalid(format!(
            "{d} features cannot be split into blocks of {block_size}"
        )));
    }
    if eligible.is_empty() {
        return Err(IrrError::invalid("eligible block set is empty"));
    }
    let n_blocks = d / block_size;
    if let Some(b) = eligible.iter().find(|&&b| b >= n_blocks) {
        return Err(IrrError::invalid(format!(
            "block {b} out of range (only {n_blocks} blocks)"
        )));
    }
    let members: Vec<Vec<usize>> = eligible
        .iter()
        .map(|&b| block_features(d, block_size, b))
        .collect();
    let mut g = rng::rng(seed);
    let mut mask = DMatrix::from_element(m, d, true);
    let mut chosen = Vec::with_capacity(m);
    for i in 0..m {
        let j = g.random_range(0..eligible.len());
        for &k in &members[j] {
            mask[(i, k)] = false;
        }
        chosen.push(eligible[j]);
    }
    Ok(Corruption {
        mask,
        draws: FeatureDraws::ColumnBlock { chosen },
    })
}

const CALIBRATION_DRAWS: u64 = 5;

fn mean_fraction(x: &DMatrix<f64>, kind: CorruptionKind, beta: f64, seed: u64) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..CALIBRATION_DRAWS {
        let s = rng::derive_seed(seed, j);
        let c = match kind {
            CorruptionKind::Independent => corrupt_independent(x, beta, s)?,
            CorruptionKind::Dependent => corrupt_dependent(x, beta, s)?,
            CorruptionKind::ColumnBlock => unreachable!(),
        };
        total += c.fraction_remaining();
    }
    Ok(total / CALIBRATION_DRAWS as f64)
}

/// Bisect on `beta` until the mean fraction of remaining entries over five
/// mask draws is within 0.01 of `target` (it usually ends much closer).
pub fn calibrate_beta(
    x: &DMatrix<f64>,
    kind: CorruptionKind,
    target: f64,
    seed: u64,
) -> Result<f64> {
    if kind == CorruptionKind::ColumnBlock {
        return Err(IrrError::invalid(
            "column corruption has no severity parameter to calibrate",
        ));
    }
    if !(target > 0.0 && target <= 1.0) {
        return Err(IrrError::UnreachableTarget { target, floor: 0.0 });
    }
    if target == 1.0 {
        return Ok(0.0);
    }
    let floor = mean_fraction(x, kind, 1.0, seed)?;
    if target < floor - 0.01 {
        return Err(IrrError::UnreachableTarget { target, floor });
    }
    if target <= floor {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = (f64::INFINITY, 0.5);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f = mean_fraction(x, kind, mid, seed)?;
        let err = (f - target).abs();
        if err < best.0 {
            best = (err, mid);
        }
        if err <= 1e-3 || hi - lo < 1e-9 {
            break;
        }
        if f > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 > 0.01 {
        return Err(IrrError::UnreachableTarget { target, floor });
    }
    Ok(best.1)
}
