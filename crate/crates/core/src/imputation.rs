//! Linear imputation `φ_M(x̃, z) = x̃ + diag(1 - z) Mᵀ x̃` and baseline imputers.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{CorruptedSample, Dataset};
use crate::error::{IrrError, Result};
use crate::matrix_file::MatrixFile;

/// Default Tikhonov term for [`fit_independent`].
pub const DEFAULT_RIDGE_EPS: f64 = 1e-8;

/// Imputation matrix with its Frobenius budget. Column `i` of `m` holds the
/// weights used to fill feature `i` from the observed features.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationModel {
    pub m: DMatrix<f64>,
    pub gamma: f64,
}

impl ImputationModel {
    pub fn new(m: DMatrix<f64>, gamma: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(IrrError::dim(format!(
                "imputation matrix must be square, got {:?}",
                m.shape()
            )));
        }
        if gamma.is_nan() || gamma < 0.0 {
            return Err(IrrError::invalid(format!(
                "gamma must be >= 0, got {gamma}"
            )));
        }
        let mut out = Self { m, gamma };
        out.project();
        Ok(out)
    }

    /// Radially scale `m` back into the ball `‖M‖_F <= gamma`.
    pub fn project(&mut self) {
        project_ball(&mut self.m, self.gamma);
    }

    pub fn impute(&self, sample: &CorruptedSample) -> Result<DVector<f64>> {
        impute_linear(&self.m, sample)
    }
}

/// Scale `a` so that its Frobenius norm is at most `radius`.
pub(crate) fn project_ball(a: &mut DMatrix<f64>, radius: f64) {
    let norm = a.norm();
    if norm > radius {
        if radius <= 0.0 {
            a.fill(0.0);
        } else {
            *a *= radius / norm;
        }
    }
}

/// `x̃ + diag(1 - z) Mᵀ x̃`; observed coordinates come back unchanged.
pub fn impute_linear(m: &DMatrix<f64>, sample: &CorruptedSample) -> Result<DVector<f64>> {
    let d = sample.dim();
    if m.shape() != (d, d) {
        return Err(IrrError::dim(format!(
            "imputation matrix is {:?} for samples of dimension {d}",
            m.shape()
        )));
    }
    let mut out = sample.xt.clone();
    let fill = m.tr_mul(&sample.xt);
    for k in 0..d {
        if !sample.z[k] {
            out[k] += fill[k];
        }
    }
    Ok(out)
}

/// Imputed design matrix `X + Z̄ ∘ (X M)`, one imputed sample per row.
pub fn impute_matrix(m: &DMatrix<f64>, data: &Dataset) -> Result<DMatrix<f64>> {
    let d = data.d();
    if m.shape() != (d, d) {
        return Err(IrrError::dim(format!(
            "imputation matrix is {:?} for data of dimension {d}",
            m.shape()
        )));
    }
    let mut out = data.x() * m;
    out.zip_apply(data.z(), |v, obs| {
        if obs {
            *v = 0.0;
        }
    });
    out += data.x();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineImputer {
    Zero,
    Mean {
        #[serde(with = "vector_file")]
        means: DVector<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
    Independent {
        #[serde(with = "matrix_file")]
        m: DMatrix<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
}

impl BaselineImputer {
    pub fn warnings(&self) -> &[String] {
        match self {
            BaselineImputer::Zero => &[],
            BaselineImputer::Mean { warnings, .. }
            | BaselineImputer::Independent { warnings, .. } => warnings,
        }
    }

    pub fn apply(&self, sample: &CorruptedSample) -> Result<DVector<f64>> {
        apply_baseline(self, sample)
    }

    /// Impute every row of `data`.
    pub fn impute_dataset(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        match self {
            BaselineImputer::Zero => Ok(data.x().clone()),
            BaselineImputer::Mean { means, .. } => {
                if means.len() != data.d() {
                    return Err(IrrError::dim("mean vector does not match data dimension"));
                }
                let mut out = data.x().clone();
                for ((i, k), v) in out.iter_mut().enumerate().map(|(p, v)| {
                    let m = data.n();
                    ((p % m, p / m), v)
                }) {
                    if !data.is_observed(i, k) {
                        *v = means[k];
                    }
                }
                Ok(out)
            }
            BaselineImputer::Independent { m, .. } => impute_matrix(m, data),
        }
    }
}

/// Per-feature mean over observed training entries.
pub fn fit_mean(train: &Dataset) -> BaselineImputer {
    let mut warnings = Vec::new();
    let means = DVector::from_fn(train.d(), |k, _| {
        let (sum, count) = (0..train.n())
            .filter(|&i| train.is_observed(i, k))
            .fold((0.0, 0usize), |(s, c), i| (s + train.x()[(i, k)], c + 1));
        if count == 0 {
            let msg = format!("feature {k} never observed in training data; mean set to 0");
            warn!("{msg}");
            warnings.push(msg);
            0.0
        } else {
            sum / count as f64
        }
    });
    BaselineImputer::Mean { means, warnings }
}

/// Column `i` of the returned matrix is the regularized least-squares
/// predictor of feature `i` from the other (zero-filled) features, fitted on
/// the rows where feature `i` is observed. The diagonal is zero.
pub fn fit_independent(train: &Dataset, ridge_eps: f64) -> Result<BaselineImputer> {
    if train.n() == 0 {
        return Err(IrrError::invalid(
            "cannot fit an imputer on an empty dataset",
        ));
    }
    if ridge_eps.is_nan() || ridge_eps < 0.0 {
        return Err(IrrError::invalid("ridge_eps must be >= 0"));
    }
    let d = train.d();
    let x = train.x();
    let mut m = DMatrix::zeros(d, d);
    let mut warnings = Vec::new();
    for i in 0..d {
        let others: Vec<usize> = (0..d).filter(|&j| j != i).collect();
        let rows: Vec<usize> = (0..train.n())
            .filter(|&r| train.is_observed(r, i))
            .collect();
        if rows.is_empty() {
            let msg = format!("feature {i} never observed; its imputation column is zero");
            warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        if others.is_empty() {
            continue;
        }
        let p = others.len();
        let mut gram = DMatrix::<f64>::identity(p, p) * ridge_eps;
        let mut rhs = DVector::<f64>::zeros(p);
        for &r in &rows {
            let a = DVector::from_iterator(p, others.iter().map(|&j| x[(r, j)]));
            gram.ger(1.0, &a, &a, 1.0);
            rhs.axpy(x[(r, i)], &a, 1.0);
        }
        let v = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                gram.pseudo_inverse(1e-12)
                    .map_err(|e| IrrError::NotPositiveDefinite(e.to_string()))?
                    * rhs
            }
        };
        for (slot, &j) in others.iter().enumerate() {
            m[(j, i)] = v[slot];
        }
    }
    Ok(BaselineImputer::Independent { m, warnings })
}

pub fn apply_baseline(imp: &BaselineImputer, sample: &CorruptedSample) -> Result<DVector<f64>> {
    match imp {
        BaselineImputer::Zero => Ok(sample.xt.clone()),
        BaselineImputer::Mean { means, .. } => {
            if means.len() != sample.dim() {
                return Err(IrrError::dim(format!(
                    "imputer has {} means, sample has {} features",
                    means.len(),
                    sample.dim()
                )));
            }
            Ok(DVector::from_fn(sample.dim(), |k, _| {
                if sample.z[k] {
                    sample.xt[k]
                } else {
                    means[k]
                }
            }))
        }
        BaselineImputer::Independent { m, .. } => impute_linear(m, sample),
    }
}

#[derive(Serialize, Deserialize)]
struct ImputationModelFile {
    gamma: f64,
    m: MatrixFile,
}

impl Serialize for ImputationModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ImputationModelFile {
            gamma: self.gamma,
            m: MatrixFile::from(&self.m),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ImputationModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = ImputationModelFile::deserialize(d)?;
        let m = f.m.to_matrix().map_err(serde::de::Error::custom)?;
        ImputationModel::new(m, f.gamma).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod matrix_file {
    use super::*;

    pub fn serialize<S: serde::Serializer>(
        m: &DMatrix<f64>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        MatrixFile::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<DMatrix<f64>, D::Error> {
        MatrixFile::deserialize(d)?
            .to_matrix()
            .map_err(serde::de::Error::custom)
    }
}

pub(crate) mod vector_file {
    use super::*;

    pub fn serialize<S: serde::Serializer>(
        v: &DVector<f64>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        MatrixFile::from_vector(v).serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<DVector<f64>, D::Error> {
        MatrixFile::deserialize(d)?
            .to_vector()
            .map_err(serde::de::Error::custom)
    }
}
