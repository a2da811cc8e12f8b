//! Rademacher complexity bound, generalization gap, and a Monte-Carlo
//! estimate of the empirical Rademacher complexity of the dual hypotheses.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{IrrError, Result};
use crate::kernel::{build_kmn, LiftedTensor};
use crate::rng::{self, derive_seed};
use crate::solver::Hyperparams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Label bound `max |y|`.
    pub b: f64,
    /// Feature-norm bound `max ‖x̃‖`.
    pub r: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub d: usize,
    pub m: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let ok = self.b >= 0.0
            && self.r >= 0.0
            && self.gamma >= 0.0
            && self.lambda > 0.0
            && self.d >= 1
            && self.m >= 1
            && [self.b, self.r, self.gamma, self.lambda]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(IrrError::invalid(format!("invalid bound inputs {self:?}")))
        }
    }

    /// `B` and `R` measured from `data`.
    pub fn from_dataset(data: &Dataset, hp: Hyperparams) -> Self {
        let r = data
            .x()
            .row_iter()
            .map(|row| row.norm())
            .fold(0.0, f64::max);
        Self {
            b: data.y().amax(),
            r,
            gamma: hp.gamma,
            lambda: hp.lambda,
            d: data.d(),
            m: data.n(),
        }
    }
}

/// `(1 + γ + (γ + γ²)√d) · B R² / (λ √m)`.
pub fn rademacher_bound(b: &BoundInputs) -> Result<f64> {
    b.validate()?;
    let g = b.gamma;
    let lead = 1.0 + g + (g + g * g) * (b.d as f64).sqrt();
    Ok(lead * b.b * b.r * b.r / (b.lambda * (b.m as f64).sqrt()))
}

/// `c (c √(d/m) + √(8 ln(2/δ) / m))` with `c = B R² (1+γ)² / λ`.
pub fn generalization_gap(b: &BoundInputs, delta: f64) -> Result<f64> {
    b.validate()?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(IrrError::invalid(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    let m = b.m as f64;
    let c = b.b * b.r * b.r * (1.0 + b.gamma).powi(2) / b.lambda;
    Ok(c * (c * (b.d as f64 / m).sqrt() + (8.0 * (2.0 / delta).ln() / m).sqrt()))
}

fn gaussian_matrix(g: &mut rng::Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| g.sample(StandardNormal))
}

/// Uniform direction on the sphere `‖M‖_F = gamma` and a random symmetric
/// tensor on `Σ_k ‖N_k‖_F² = gamma⁴`.
fn random_hypothesis(g: &mut rng::Rng, d: usize, gamma: f64) -> (DMatrix<f64>, LiftedTensor) {
    let mut m = gaussian_matrix(g, d, d);
    let norm = m.norm();
    if norm > 0.0 {
        m *= gamma / norm;
    }
    let slices: Vec<DMatrix<f64>> = (0..d)
        .map(|_| gaussian_matrix(g, d, d).symmetric_part())
        .collect();
    let mut n = LiftedTensor::from_slices(slices).expect("symmetric slices");
    let norm = n.norm();
    if norm > 0.0 {
        n = n.scaled(gamma * gamma / norm);
    }
    (m, n)
}

/// Monte-Carlo lower estimate of the empirical Rademacher complexity.
///
/// For each of `n_sigma` sign vectors σ, the largest `|Σ_i σ_i h(x̃_i, z_i)| / m`
/// over `n_hyp` random `(M, N)` on the boundary spheres is averaged. For fixed
/// `(M, N)`, `Σ_i σ_i h(x̃_i) = σᵀ K_MN α` and its maximum over the sphere
/// `‖α‖ = B / (λ √m)` is `B ‖K_MN σ‖ / (λ √m)`, which is used directly.
pub fn empirical_rademacher(
    sample: &Dataset,
    hp: Hyperparams,
    b: f64,
    n_sigma: usize,
    n_hyp: usize,
    seed: u64,
) -> Result<f64> {
    hp.validate()?;
    let m = sample.n();
    if m == 0 {
        return Err(IrrError::invalid(
            "empirical Rademacher estimate of an empty sample",
        ));
    }
    if n_sigma == 0 || n_hyp == 0 {
        return Err(IrrError::invalid("n_sigma and n_hyp must be positive"));
    }
    let radius = b / (hp.lambda * (m as f64).sqrt());
    let mut hg = rng::rng(derive_seed(seed, 1));
    let kernels: Vec<DMatrix<f64>> = (0..n_hyp)
        .map(|_| {
            let (mm, nn) = random_hypothesis(&mut hg, sample.d(), hp.gamma);
            build_kmn(sample, &mm, &nn).map(|k| k.k)
        })
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for t in 0..n_sigma {
        let mut sg = rng::rng(derive_seed(seed, 2 + t as u64));
        let sigma = DVector::from_fn(m, |_, _| if sg.random::<bool>() { 1.0 } else { -1.0 });
        let best = kernels
            .iter()
            .map(|k| radius * (k * &sigma).norm() / m as f64)
            .fold(0.0, f64::max);
        total += best;
    }
    Ok(total / n_sigma as f64)
}
