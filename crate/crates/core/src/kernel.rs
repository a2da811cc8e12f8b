//! Kernels of the imputed ridge problem.
//!
//! `K_M` is the Gram matrix of imputed samples. `K_MN` replaces every product
//! `M_{:,k} M_{:,k}ᵀ` appearing in `K_M` by a free symmetric slice `N_k`:
//!
//! ```text
//! K_MN[i,j] = x_i·x_j + x_iᵀ M Z̄_i x_j + x_iᵀ Z̄_j Mᵀ x_j + Σ_k z̄_ik z̄_jk x_iᵀ N_k x_j
//! ```
//!
//! so that `K_MN = K_M` whenever `N = lift(M)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{IrrError, Result};
use crate::imputation::impute_matrix;
use crate::matrix_file::MatrixFile;

/// Stack of `d` symmetric `d x d` slices `N_1 .. N_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedTensor {
    slices: Vec<DMatrix<f64>>,
}

const SYMMETRY_TOL: f64 = 1e-9;

impl LiftedTensor {
    pub fn zeros(d: usize) -> Self {
        Self {
            slices: vec![DMatrix::zeros(d, d); d],
        }
    }

    /// Slices must be square, `d` of them, and symmetric up to a relative 1e-9.
    pub fn from_slices(slices: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = slices.len();
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (d, d) {
                return Err(IrrError::dim(format!(
                    "slice {k} is {:?}, expected {d}x{d}",
                    s.shape()
                )));
            }
            let asym = (s - s.transpose()).norm();
            if asym > SYMMETRY_TOL * (1.0 + s.norm()) {
                return Err(IrrError::invalid(format!("slice {k} is not symmetric")));
            }
        }
        Ok(Self {
            slices: slices.into_iter().map(|s| s.symmetric_part()).collect(),
        })
    }

    /// `N_k = M_{:,k} M_{:,k}ᵀ`.
    pub fn lift(m: &DMatrix<f64>) -> Self {
        Self {
            slices: m.column_iter().map(|c| c * c.transpose()).collect(),
        }
    }

    pub fn d(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, k: usize) -> &DMatrix<f64> {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.slices
    }

    pub(crate) fn slices_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.slices
    }

    /// `Σ_k ‖N_k‖_F²`.
    pub fn norm_squared(&self) -> f64 {
        self.slices.iter().map(|s| s.norm_squared()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Radially scale into `Σ_k ‖N_k‖_F² <= radius²`.
    pub fn project(&mut self, radius: f64) {
        let norm = self.norm();
        if norm > radius {
            let scale = if radius <= 0.0 { 0.0 } else { radius / norm };
            for s in &mut self.slices {
                *s *= scale;
            }
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            slices: self.slices.iter().map(|s| s * a).collect(),
        }
    }

    /// `self + a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &LiftedTensor) {
        for (s, o) in self.slices.iter_mut().zip(&other.slices) {
            *s += o * a;
        }
    }

    pub fn dot(&self, other: &LiftedTensor) -> f64 {
        self.slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| a.dot(b))
            .sum()
    }
}

impl Serialize for LiftedTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let files: Vec<MatrixFile> = self.slices.iter().map(MatrixFile::from).collect();
        files.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LiftedTensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let files = Vec::<MatrixFile>::deserialize(d)?;
        let slices = files
            .iter()
            .map(MatrixFile::to_matrix)
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        LiftedTensor::from_slices(slices).map_err(serde::de::Error::custom)
    }
}

/// Whether a kernel came from an actual imputation or from the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelProvenance {
    Exact,
    Relaxed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub k: DMatrix<f64>,
    pub provenance: KernelProvenance,
}

fn check_square(data: &Dataset, m: &DMatrix<f64>) -> Result<()> {
    let d = data.d();
    if m.shape() != (d, d) {
        return Err(IrrError::dim(format!(
            "imputation matrix is {:?} for data of dimension {d}",
            m.shape()
        )));
    }
    Ok(())
}

/// `K_M = Φ Φᵀ` with `Φ` the imputed design matrix.
pub fn build_km(data: &Dataset, m: &DMatrix<f64>) -> Result<KernelMatrix> {
    check_square(data, m)?;
    let phi = impute_matrix(m, data)?;
    Ok(KernelMatrix {
        k: &phi * phi.transpose(),
        provenance: KernelProvenance::Exact,
    })
}

/// Features missing in at least one row; only these carry imputation terms.
pub fn active_features(data: &Dataset) -> Vec<usize> {
    (0..data.d())
        .filter(|&k| (0..data.n()).any(|i| !data.is_observed(i, k)))
        .collect()
}

/// Rows of `data` in which feature `k` is missing.
pub(crate) fn missing_rows(data: &Dataset, k: usize) -> Vec<usize> {
    (0..data.n()).filter(|&i| !data.is_observed(i, k)).collect()
}

/// Relaxed kernel `K_MN`. `N` is not required to equal `lift(M)`.
pub fn build_kmn(data: &Dataset, m: &DMatrix<f64>, n: &LiftedTensor) -> Result<KernelMatrix> {
    check_square(data, m)?;
    if n.d() != data.d() {
        return Err(IrrError::dim(format!(
            "tensor has {} slices for data of dimension {}",
            n.d(),
            data.d()
        )));
    }
    let x = data.x();
    let mut k = x * x.transpose();

    let mut p = x * m;
    p.zip_apply(data.z(), |v, obs| {
        if obs {
            *v = 0.0;
        }
    });
    let b = &p * x.transpose();
    k += &b;
    k += b.transpose();

    for f in active_features(data) {
        let rows = missing_rows(data, f);
        let w = x.select_rows(&rows);
        let block = &w * n.slice(f) * w.transpose();
        for (a, &i) in rows.iter().enumerate() {
            for (c, &j) in rows.iter().enumerate() {
                k[(i, j)] += block[(a, c)];
            }
        }
    }
    Ok(KernelMatrix {
        k: k.symmetric_part(),
        provenance: KernelProvenance::Relaxed,
    })
}

/// Smallest eigenvalue and a unit eigenvector of a symmetric matrix.
pub fn min_eigpair(k: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    if !k.is_square() || k.nrows() == 0 {
        return Err(IrrError::dim("min_eigpair needs a non-empty square matrix"));
    }
    let max_iter = 10 * k.nrows().max(10);
    let eig = SymmetricEigen::try_new(k.symmetric_part(), f64::EPSILON, max_iter)
        .ok_or(IrrError::EigenNoConvergence(max_iter))?;
    let (idx, &lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let v = eig.eigenvectors.column(idx).normalize();
    Ok((lam, v))
}

/// Dual aggregates of a coefficient vector `α`: `u = Xᵀα` and, in column
/// `k` of `v`, `v_k = Σ_i α_i z̄_ik x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualAggregates {
    pub u: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn dual_aggregates(data: &Dataset, alpha: &DVector<f64>) -> Result<DualAggregates> {
    if alpha.len() != data.n() {
        return Err(IrrError::dim(format!(
            "alpha has {} entries for {} samples",
            alpha.len(),
            data.n()
        )));
    }
    let x = data.x();
    let u = x.tr_mul(alpha);
    let d = data.d();
    let mut v = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut col = v.column_mut(k);
        for i in 0..data.n() {
            if !data.is_observed(i, k) && alpha[i] != 0.0 {
                col.axpy(alpha[i], &x.row(i).transpose(), 1.0);
            }
        }
    }
    Ok(DualAggregates { u, v })
}

/// Gradients of `αᵀ K_MN α` with respect to `M` and `N`. Both are linear
/// in `(M, N)` so the gradients do not depend on them:
/// `∂/∂M_{:,k} = 2 u_k v_k` and `∂/∂N_k = v_k v_kᵀ`.
pub fn kernel_gradient_contraction(
    data: &Dataset,
    alpha: &DVector<f64>,
) -> Result<(DMatrix<f64>, LiftedTensor)> {
    let agg = dual_aggregates(data, alpha)?;
    let d = data.d();
    let mut gm = DMatrix::zeros(d, d);
    let mut slices = Vec::with_capacity(d);
    for k in 0..d {
        let vk = agg.v.column(k);
        gm.set_column(k, &(vk * (2.0 * agg.u[k])));
        slices.push(vk * vk.transpose());
    }
    Ok((gm, LiftedTensor { slices }))
}

/// Binary kernel dump: `rows`, `cols` as little-endian u32, then row-major
/// little-endian f64 values.
pub fn write_matrix_bin(path: impl AsRef<Path>, k: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let rows = u32::try_from(k.nrows()).map_err(|_| IrrError::dim("too many rows"))?;
    let cols = u32::try_from(k.ncols()).map_err(|_| IrrError::dim("too many columns"))?;
    let file = File::create(path).map_err(|e| IrrError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| IrrError::io(path, e));
    put(&rows.to_le_bytes())?;
    put(&cols.to_le_bytes())?;
    for i in 0..k.nrows() {
        for j in 0..k.ncols() {
            put(&k[(i, j)].to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| IrrError::io(path, e))
}

pub fn read_matrix_bin(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IrrError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(|e| IrrError::io(path, e))?;
    let rows = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word).map_err(|e| IrrError::io(path, e))?;
    let cols = u32::from_le_bytes(word) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| IrrError::io(path, e))?;
    if bytes.len() != rows * cols * 8 {
        return Err(IrrError::dim(format!(
            "{} holds {} payload bytes, header says {rows}x{cols}",
            path.display(),
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random_data(g: &mut rng::Rng, m: usize, d: usize, keep: f64) -> Dataset {
        let x = DMatrix::from_fn(m, d, |_, _| g.random::<f64>());
        let z = DMatrix::from_fn(m, d, |_, _| g.random::<f64>() < keep);
        Dataset::new(x, z, DVector::zeros(m)).unwrap()
    }

    fn random_sym(g: &mut rng::Rng, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, d, |_, _| g.random::<f64>() - 0.5).symmetric_part()
    }

    /// Entry-by-entry evaluation of the relaxed kernel.
    fn kmn_oracle(data: &Dataset, m: &DMatrix<f64>, n: &LiftedTensor) -> DMatrix<f64> {
        let d = data.d();
        DMatrix::from_fn(data.n(), data.n(), |i, j| {
            let xi = data.x().row(i).transpose();
            let xj = data.x().row(j).transpose();
            let zi = DMatrix::from_fn(d, d, |a, b| {
                if a == b && !data.is_observed(i, a) {
                    1.0
                } else {
                    0.0
                }
            });
            let zj = DMatrix::from_fn(d, d, |a, b| {
                if a == b && !data.is_observed(j, a) {
                    1.0
                } else {
                    0.0
                }
            });
            let mut v = xi.dot(&xj);
            v += (xi.transpose() * m * &zi * &xj)[0];
            v += (xi.transpose() * &zj * m.transpose() * &xj)[0];
            for k in 0..d {
                if !data.is_observed(i, k) && !data.is_observed(j, k) {
                    v += (xi.transpose() * n.slice(k) * &xj)[0];
                }
            }
            v
        })
    }

    #[test]
    fn structured_kmn_matches_entrywise_oracle() {
        let mut g = rng::rng(5);
        for _ in 0..5 {
            let data = random_data(&mut g, 9, 4, 0.6);
            let m = DMatrix::from_fn(4, 4, |_, _| g.random::<f64>() - 0.5);
            let n =
                LiftedTensor::from_slices((0..4).map(|_| random_sym(&mut g, 4)).collect()).unwrap();
            let fast = build_kmn(&data, &m, &n).unwrap();
            assert_eq!(fast.provenance, KernelProvenance::Relaxed);
            assert!((fast.k - kmn_oracle(&data, &m, &n)).amax() < 1e-12);
        }
    }

    #[test]
    fn lift_reproduces_exact_kernel() {
        let mut g = rng::rng(6);
        let data = random_data(&mut g, 12, 5, 0.5);
        let m = DMatrix::from_fn(5, 5, |_, _| g.random::<f64>() - 0.5);
        let km = build_km(&data, &m).unwrap();
        let kmn = build_kmn(&data, &m, &LiftedTensor::lift(&m)).unwrap();
        assert!((km.k - kmn.k).amax() < 1e-12);
        assert!(LiftedTensor::lift(&m).norm() <= m.norm_squared() + 1e-12);
    }

    #[test]
    fn no_corruption_gives_linear_kernel() {
        let mut g = rng::rng(7);
        let data = random_data(&mut g, 8, 3, 2.0);
        let m = DMatrix::from_fn(3, 3, |_, _| g.random::<f64>());
        let n = LiftedTensor::from_slices((0..3).map(|_| random_sym(&mut g, 3)).collect()).unwrap();
        let lin = data.x() * data.x().transpose();
        assert!((build_kmn(&data, &m, &n).unwrap().k - &lin).amax() < 1e-12);
        assert!((build_km(&data, &m).unwrap().k - lin).amax() < 1e-12);
        assert!(active_features(&data).is_empty());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut g = rng::rng(8);
        let data = random_data(&mut g, 7, 3, 0.5);
        let alpha = DVector::from_fn(7, |_, _| g.random::<f64>() - 0.5);
        let m0 = DMatrix::from_fn(3, 3, |_, _| g.random::<f64>() - 0.5);
        let n0 = LiftedTensor::lift(&m0);
        let (gm, gn) = kernel_gradient_contraction(&data, &alpha).unwrap();
        let quad = |m: &DMatrix<f64>, n: &LiftedTensor| {
            let k = build_kmn(&data, m, n).unwrap().k;
            (alpha.transpose() * k * &alpha)[0]
        };
        let h = 1e-6;
        for a in 0..3 {
            for b in 0..3 {
                let mut mp = m0.clone();
                mp[(a, b)] += h;
                let mut mm = m0.clone();
                mm[(a, b)] -= h;
                let fd = (quad(&mp, &n0) - quad(&mm, &n0)) / (2.0 * h);
                assert!((fd - gm[(a, b)]).abs() < 1e-6);
            }
        }
        for k in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    // perturb symmetrically; the gradient is symmetric
                    let mut e = DMatrix::zeros(3, 3);
                    e[(a, b)] += 0.5;
                    e[(b, a)] += 0.5;
                    let mut np = n0.clone();
                    np.slices_mut()[k] += &e * h;
                    let mut nm = n0.clone();
                    nm.slices_mut()[k] -= &e * h;
                    let fd = (quad(&m0, &np) - quad(&m0, &nm)) / (2.0 * h);
                    assert!((fd - gn.slice(k)[(a, b)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn eigpair_of_known_matrix() {
        let k = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 5.0]);
        let (lam, v) = min_eigpair(&k).unwrap();
        assert!((lam + 1.0).abs() < 1e-12);
        assert!((v[1].abs() - 1.0).abs() < 1e-12);
        assert!(min_eigpair(&DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn km_is_psd() {
        let mut g = rng::rng(9);
        let data = random_data(&mut g, 15, 4, 0.5);
        let m = DMatrix::from_fn(4, 4, |_, _| g.random::<f64>() - 0.5);
        let (lam, _) = min_eigpair(&build_km(&data, &m).unwrap().k).unwrap();
        assert!(lam > -1e-10);
    }

    #[test]
    fn tensor_projection_and_symmetry() {
        let mut g = rng::rng(10);
        let mut n =
            LiftedTensor::from_slices((0..3).map(|_| random_sym(&mut g, 3) * 10.0).collect())
                .unwrap();
        n.project(2.0);
        assert!((n.norm() - 2.0).abs() < 1e-12);
        let bad = vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::zeros(2, 2),
        ];
        assert!(LiftedTensor::from_slices(bad).is_err());
        let text = serde_json::to_string(&n).unwrap();
        let back: LiftedTensor = serde_json::from_str(&text).unwrap();
        assert!((back.norm() - n.norm()).abs() < 1e-12);
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.bin");
        let k = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 3.5, 4.0, 5.0, 6.25]);
        write_matrix_bin(&path, &k).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), -2.0);
        assert_eq!(read_matrix_bin(&path).unwrap(), k);
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(read_matrix_bin(&path).is_err());
    }
}
