//! Closed-form ridge, the relaxed imputed-ridge solver, and predictors.
//!
//! The relaxed problem is
//!
//! ```text
//! min_{‖M‖_F ≤ γ, Σ_k ‖N_k‖_F² ≤ γ⁴, K_MN ⪰ 0}  f(M, N) = yᵀ (K_MN + mλI)⁻¹ y
//! ```
//!
//! `K_MN = Ψ Q(M,N) Ψᵀ` where `Ψ = [X, Z̄_{·k} ∘ X for every active k]` depends
//! only on the training data and `Q` is affine in `(M, N)`. For a vector
//! `a = (a_0, a_k)` in the column space of `Ψᵀ`,
//!
//! ```text
//! aᵀ Q a = ‖a_0‖² + 2 Σ_k a_0[k] (a_k · M_{:,k}) + Σ_k a_kᵀ N_k a_k
//! ```
//!
//! The solver works in an orthonormal basis `U` of `range(Ψ)` with
//! `L = Ψᵀ U`, so `K_MN = U C Uᵀ` with `C = Lᵀ Q L` of size `rank(Ψ)`.
//!
//! Small problems are solved by a log-barrier Newton method (see `barrier`).
//! Larger ones use a proximal bundle method: each outer iteration adds a
//! piece `ℓ_α(x) = 2αᵀy − mλ‖α‖² − αᵀK_MN α` (a lower minorant of `f`,
//! affine in `x = (M, N)`) and, when `C` has
//! eigenvalues below `−eps_psd`, cuts `vᵀ C v ≥ 0`. The master problem
//! minimizes the bundle model plus a proximal term over the two balls and the
//! cuts; it is solved through its dual over piece and cut multipliers, which
//! only needs inner products between the stored vectors. Any multiplier
//! vector yields a valid lower bound on the relaxed optimum.

use std::fs;
use std::path::Path;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::{CorruptedSample, Dataset};
use crate::error::{IrrError, Result};
use crate::imputation::{impute_linear, impute_matrix, matrix_file, vector_file, BaselineImputer};
use crate::kernel::{active_features, dual_aggregates, DualAggregates, LiftedTensor};

mod barrier;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    pub gamma: f64,
}

impl Hyperparams {
    /// `lambda > 0`; `gamma >= 0`, with `gamma = 0` meaning no imputation.
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        let hp = Self { lambda, gamma };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(IrrError::invalid(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(IrrError::invalid(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative gap `(upper - lower) / |upper|` at which the solve stops.
    pub tol: f64,
    pub max_outer: usize,
    /// Iterations of the master-problem dual ascent.
    pub inner_steps: usize,
    /// Eigenvalues of `K_MN` down to `-eps_psd` are accepted as PSD.
    pub eps_psd: f64,
    pub method: SolverMethod,
}

/// Which algorithm solves the relaxed problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Barrier when `(M, N)` has at most a few hundred free entries,
    /// bundle otherwise.
    #[default]
    Auto,
    /// Log-barrier Newton path following; `max_outer` caps Newton steps.
    Barrier,
    /// Proximal bundle with PSD cuts; `max_outer` caps outer iterations.
    Bundle,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_outer: 200,
            inner_steps: 500,
            eps_psd: 1e-7,
            method: SolverMethod::Auto,
        }
    }
}

impl SolverConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: SolverConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| IrrError::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0)
            || self.max_outer == 0
            || self.inner_steps == 0
            || !(self.eps_psd >= 0.0)
        {
            return Err(IrrError::invalid(format!("invalid solver config {self:?}")));
        }
        Ok(())
    }
}

/// A primal hypothesis `w` together with an imputation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalPoint {
    pub w: DVector<f64>,
    pub m: DMatrix<f64>,
}

fn check_labels(k: usize, y: &DVector<f64>) -> Result<()> {
    if y.len() != k {
        return Err(IrrError::dim(format!(
            "kernel is {k}x{k} but y has {} entries",
            y.len()
        )));
    }
    Ok(())
}

/// `(K + mλI)⁻¹ y` by Cholesky, with one step of iterative refinement.
pub fn ridge_alpha(k: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if !k.is_square() {
        return Err(IrrError::dim("kernel must be square"));
    }
    check_labels(k.nrows(), y)?;
    let m = k.nrows();
    let mut a = k.symmetric_part();
    for i in 0..m {
        a[(i, i)] += m as f64 * lambda;
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| IrrError::NotPositiveDefinite(format!("K + mλI with λ = {lambda}")))?;
    let mut alpha = chol.solve(y);
    let resid = y - &a * &alpha;
    alpha += chol.solve(&resid);
    Ok(alpha)
}

/// `(λ/2)‖w‖² + (1/m) Σ_i (y_i − wᵀ φ_M(x̃_i, z_i))²`.
pub fn primal_objective(p: &PrimalPoint, train: &Dataset, lambda: f64) -> Result<f64> {
    if p.w.len() != train.d() {
        return Err(IrrError::dim(format!(
            "w has {} entries for data of dimension {}",
            p.w.len(),
            train.d()
        )));
    }
    if train.n() == 0 {
        return Err(IrrError::invalid("empty training set"));
    }
    let phi = impute_matrix(&p.m, train)?;
    let resid = train.y() - phi * &p.w;
    Ok(0.5 * lambda * p.w.norm_squared() + resid.norm_squared() / train.n() as f64)
}

/// `[[K + mλI, y], [yᵀ, t]]`.
pub fn epigraph_matrix(
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    t: f64,
) -> Result<DMatrix<f64>> {
    check_labels(k.nrows(), y)?;
    let m = k.nrows();
    let mut b = DMatrix::zeros(m + 1, m + 1);
    b.view_mut((0, 0), (m, m)).copy_from(&k.symmetric_part());
    for i in 0..m {
        b[(i, i)] += m as f64 * lambda;
        b[(i, m)] = y[i];
        b[(m, i)] = y[i];
    }
    b[(m, m)] = t;
    Ok(b)
}

/// Whether a symmetric matrix has no eigenvalue below `-tol`.
pub fn is_psd(a: &DMatrix<f64>, tol: f64) -> Result<bool> {
    let (lam, _) = crate::kernel::min_eigpair(a)?;
    Ok(lam >= -tol)
}

/// PSD test of the epigraph block matrix. Agrees with
/// `t >= yᵀ(K + mλI)⁻¹y` away from the boundary.
pub fn epigraph_is_psd(
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    t: f64,
    tol: f64,
) -> Result<bool> {
    is_psd(&epigraph_matrix(k, y, lambda, t)?, tol)
}

/// Anything that maps corrupted samples to real predictions.
pub trait Predictor {
    fn predict(&self, sample: &CorruptedSample) -> Result<f64>;

    fn predict_dataset(&self, data: &Dataset) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(data.n());
        for (i, s) in data.samples().enumerate() {
            out[i] = self.predict(&s)?;
        }
        Ok(out)
    }
}

pub fn rmse_of(pred: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if y.is_empty() {
        return Err(IrrError::invalid("rmse of an empty set"));
    }
    check_labels(pred.len(), y)?;
    Ok(((pred - y).norm_squared() / y.len() as f64).sqrt())
}

pub fn rmse(model: &dyn Predictor, test: &Dataset) -> Result<f64> {
    if test.n() == 0 {
        return Err(IrrError::invalid("rmse on an empty test set"));
    }
    rmse_of(&model.predict_dataset(test)?, test.y())
}

/// Ridge regression on baseline-imputed features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub imputer: BaselineImputer,
    #[serde(with = "vector_file")]
    pub w: DVector<f64>,
    pub lambda: f64,
}

impl RidgeModel {
    /// `w = Φᵀα` with `α = ridge_alpha(ΦΦᵀ, y, λ)`.
    pub fn fit_dual(imputer: BaselineImputer, train: &Dataset, lambda: f64) -> Result<Self> {
        let phi = imputer.impute_dataset(train)?;
        let alpha = ridge_alpha(&(&phi * phi.transpose()), train.y(), lambda)?;
        Ok(Self {
            w: phi.tr_mul(&alpha),
            imputer,
            lambda,
        })
    }

    /// Same solution through the `d x d` system `(ΦᵀΦ + mλI) w = Φᵀy`.
    pub fn fit(imputer: BaselineImputer, train: &Dataset, lambda: f64) -> Result<Self> {
        let phi = imputer.impute_dataset(train)?;
        let gram = phi.tr_mul(&phi);
        Ok(Self {
            w: solve_primal_ridge(&gram, &phi.tr_mul(train.y()), train.n(), lambda)?,
            imputer,
            lambda,
        })
    }

    /// Ridge on the feature matrix as given (no imputation).
    pub fn fit_plain(train: &Dataset, lambda: f64) -> Result<Self> {
        Self::fit(BaselineImputer::Zero, train, lambda)
    }
}

pub(crate) fn solve_primal_ridge(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    m: usize,
    lambda: f64,
) -> Result<DVector<f64>> {
    let mut a = gram.symmetric_part();
    for i in 0..a.nrows() {
        a[(i, i)] += m as f64 * lambda;
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| IrrError::NotPositiveDefinite(format!("ΦᵀΦ + mλI with λ = {lambda}")))?;
    let mut w = chol.solve(rhs);
    let resid = rhs - &a * &w;
    w += chol.solve(&resid);
    Ok(w)
}

impl Predictor for RidgeModel {
    fn predict(&self, sample: &CorruptedSample) -> Result<f64> {
        if sample.dim() != self.w.len() {
            return Err(IrrError::dim("sample dimension does not match model"));
        }
        Ok(self.imputer.apply(sample)?.dot(&self.w))
    }

    fn predict_dataset(&self, data: &Dataset) -> Result<DVector<f64>> {
        if data.d() != self.w.len() {
            return Err(IrrError::dim("data dimension does not match model"));
        }
        Ok(self.imputer.impute_dataset(data)? * &self.w)
    }
}

/// Ridge on a fixed linear imputation `M`: predicts `wᵀφ_M(x̃, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImputedRidge {
    pub m: DMatrix<f64>,
    pub w: DVector<f64>,
}

impl Predictor for LinearImputedRidge {
    fn predict(&self, sample: &CorruptedSample) -> Result<f64> {
        Ok(impute_linear(&self.m, sample)?.dot(&self.w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub serious_steps: usize,
    /// Final `f(M, N)`, the upper bound.
    pub objective: f64,
    pub lower_bound: f64,
    /// Relative gap `(objective - lower_bound) / |objective|`.
    pub gap: f64,
    pub cuts: usize,
    pub converged: bool,
    pub basis_rank: usize,
    pub min_eigenvalue: f64,
    /// Upper bound after every outer iteration.
    pub history: Vec<f64>,
}

/// Dual predictor `h(x̃₀, z₀) = Σ_i α_i K_MN((x̃_i, z_i), (x̃₀, z₀))`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrrSolution {
    pub alpha: DVector<f64>,
    pub m: DMatrix<f64>,
    pub n: LiftedTensor,
    pub hp: Hyperparams,
    pub diagnostics: Diagnostics,
    agg: DualAggregates,
    /// `u + p` with `p_k = M_{:,k}·v_k`.
    base: DVector<f64>,
    /// Column `k` is `N_k v_k`.
    nv: DMatrix<f64>,
}

impl IrrSolution {
    fn assemble(
        train: &Dataset,
        alpha: DVector<f64>,
        m: DMatrix<f64>,
        n: LiftedTensor,
        hp: Hyperparams,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        let agg = dual_aggregates(train, &alpha)?;
        Ok(Self::from_parts(alpha, m, n, hp, diagnostics, agg))
    }

    fn from_parts(
        alpha: DVector<f64>,
        m: DMatrix<f64>,
        n: LiftedTensor,
        hp: Hyperparams,
        diagnostics: Diagnostics,
        agg: DualAggregates,
    ) -> Self {
        let d = m.nrows();
        let mut base = agg.u.clone();
        let mut nv = DMatrix::zeros(d, d);
        for k in 0..d {
            let vk = agg.v.column(k);
            base[k] += m.column(k).dot(&vk);
            nv.set_column(k, &(n.slice(k) * vk));
        }
        Self {
            alpha,
            m,
            n,
            hp,
            diagnostics,
            agg,
            base,
            nv,
        }
    }

    pub fn objective(&self) -> f64 {
        self.diagnostics.objective
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.converged
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn aggregates(&self) -> &DualAggregates {
        &self.agg
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SolutionFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: SolutionFile = serde_json::from_str(text)?;
        f.into_solution()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| IrrError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| IrrError::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Predictor for IrrSolution {
    fn predict(&self, s: &CorruptedSample) -> Result<f64> {
        let d = self.dim();
        if s.dim() != d {
            return Err(IrrError::dim(format!(
                "sample has {} features, model expects {d}",
                s.dim()
            )));
        }
        let x0 = &s.xt;
        let mx = self.m.tr_mul(x0);
        let nvx = self.nv.tr_mul(x0);
        let mut h = self.base.dot(x0);
        for k in 0..d {
            if !s.z[k] {
                h += mx[k] * self.agg.u[k] + nvx[k];
            }
        }
        Ok(h)
    }

    fn predict_dataset(&self, data: &Dataset) -> Result<DVector<f64>> {
        if data.d() != self.dim() {
            return Err(IrrError::dim("data dimension does not match model"));
        }
        let x = data.x();
        let mut missing_terms = x * &self.m;
        for k in 0..self.dim() {
            missing_terms.column_mut(k).scale_mut(self.agg.u[k]);
        }
        missing_terms += x * &self.nv;
        let mut out = x * &self.base;
        for i in 0..data.n() {
            for k in 0..self.dim() {
                if !data.is_observed(i, k) {
                    out[i] += missing_terms[(i, k)];
                }
            }
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct SolutionFile {
    hp: Hyperparams,
    diagnostics: Diagnostics,
    #[serde(with = "vector_file")]
    alpha: DVector<f64>,
    #[serde(with = "matrix_file")]
    m: DMatrix<f64>,
    n: LiftedTensor,
    #[serde(with = "vector_file")]
    u: DVector<f64>,
    #[serde(with = "matrix_file")]
    v: DMatrix<f64>,
}

impl From<&IrrSolution> for SolutionFile {
    fn from(s: &IrrSolution) -> Self {
        Self {
            hp: s.hp,
            diagnostics: s.diagnostics.clone(),
            alpha: s.alpha.clone(),
            m: s.m.clone(),
            n: s.n.clone(),
            u: s.agg.u.clone(),
            v: s.agg.v.clone(),
        }
    }
}

impl SolutionFile {
    fn into_solution(self) -> Result<IrrSolution> {
        let d = self.m.nrows();
        if !self.m.is_square() || self.n.d() != d || self.u.len() != d || self.v.shape() != (d, d) {
            return Err(IrrError::dim("inconsistent dimensions in model file"));
        }
        self.hp.validate()?;
        let agg = DualAggregates {
            u: self.u,
            v: self.v,
        };
        Ok(IrrSolution::from_parts(
            self.alpha,
            self.m,
            self.n,
            self.hp,
            self.diagnostics,
            agg,
        ))
    }
}

/// A training set prepared for repeated solves over `(λ, γ)`.
#[derive(Debug, Clone)]
pub struct IrrProblem {
    train: Dataset,
    active: Vec<usize>,
    /// Orthonormal basis of `range(Ψ)`, `m x r`.
    u: DMatrix<f64>,
    /// `Ψᵀ U`, `p x r`.
    l: DMatrix<f64>,
    /// `L_0ᵀ L_0`, the part of `C` that does not depend on `(M, N)`.
    c0: DMatrix<f64>,
    y_tilde: DVector<f64>,
    y_perp_sq: f64,
}

/// Singular values of `Ψ` below this fraction of the largest are dropped.
const BASIS_RTOL: f64 = 1e-7;

impl IrrProblem {
    pub fn new(train: &Dataset) -> Result<Self> {
        let (m, d) = (train.n(), train.d());
        if m == 0 {
            return Err(IrrError::invalid("cannot solve on an empty training set"));
        }
        let active = active_features(train);
        let p = d * (1 + active.len());
        let x = train.x();
        let mut psi = DMatrix::zeros(m, p);
        psi.view_mut((0, 0), (m, d)).copy_from(x);
        for (s, &k) in active.iter().enumerate() {
            for i in 0..m {
                if !train.is_observed(i, k) {
                    psi.view_mut((i, d * (s + 1)), (1, d)).copy_from(&x.row(i));
                }
            }
        }

        let (u, l) = if p <= m {
            let eig = checked_eigen(psi.tr_mul(&psi))?;
            let keep = kept_indices(&eig.eigenvalues);
            let mut l = DMatrix::zeros(p, keep.len());
            let mut u = DMatrix::zeros(m, keep.len());
            for (c, &j) in keep.iter().enumerate() {
                let s = eig.eigenvalues[j].sqrt();
                let vj = eig.eigenvectors.column(j);
                l.set_column(c, &(vj * s));
                u.set_column(c, &(&psi * vj / s));
            }
            (u, l)
        } else {
            let eig = checked_eigen(&psi * psi.transpose())?;
            let keep = kept_indices(&eig.eigenvalues);
            let u = eig.eigenvectors.select_columns(&keep);
            let l = psi.tr_mul(&u);
            (u, l)
        };
        let l0 = l.rows(0, d);
        let c0 = l0.tr_mul(&l0);
        let y = train.y();
        let y_tilde = u.tr_mul(y);
        let y_perp_sq = (y - &u * &y_tilde).norm_squared();
        debug!(
            "basis rank {} of {} lifted columns, {} rows",
            l.ncols(),
            p,
            m
        );
        Ok(Self {
            train: train.clone(),
            active,
            u,
            l,
            c0,
            y_tilde,
            y_perp_sq,
        })
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn rank(&self) -> usize {
        self.l.ncols()
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    fn d(&self) -> usize {
        self.train.d()
    }

    fn m(&self) -> usize {
        self.train.n()
    }

    fn slot(&self, a: &DVector<f64>, s: usize) -> DVector<f64> {
        let d = self.d();
        a.rows(d * (s + 1), d).into_owned()
    }

    /// `C(M, N) = Lᵀ Q(M, N) L`.
    fn reduced_kernel(&self, mm: &DMatrix<f64>, nn: &LiftedTensor) -> DMatrix<f64> {
        let d = self.d();
        let l0 = self.l.rows(0, d);
        let mut c = self.c0.clone();
        for (s, &k) in self.active.iter().enumerate() {
            let ls = self.l.rows(d * (s + 1), d);
            // cross term: L_0[k,:]ᵀ (M_kᵀ L_s) and its transpose
            let ml = mm.column(k).tr_mul(&ls);
            let cross = l0.row(k).transpose() * &ml;
            c += &cross;
            c += cross.transpose();
            let nl = nn.slice(k) * &ls;
            c += ls.tr_mul(&nl);
        }
        c.symmetric_part()
    }

    /// Upper bound `f(M, N) = yᵀ(K_MN + mλI)⁻¹y`. Errors if `K_MN + mλI` is
    /// not positive definite.
    pub fn objective_at(&self, mm: &DMatrix<f64>, nn: &LiftedTensor, lambda: f64) -> Result<f64> {
        let c = self.reduced_kernel(mm, nn);
        Ok(self.evaluate(&c, lambda)?.f)
    }

    fn evaluate(&self, c: &DMatrix<f64>, lambda: f64) -> Result<Evaluation> {
        let ml = self.m() as f64 * lambda;
        let mut a = c.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += ml;
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| IrrError::NotPositiveDefinite("K_MN + mλI".into()))?;
        let mut beta = chol.solve(&self.y_tilde);
        let resid = &self.y_tilde - &a * &beta;
        beta += chol.solve(&resid);
        let f = self.y_tilde.dot(&beta) + self.y_perp_sq / ml;
        Ok(Evaluation { f, beta })
    }

    /// Full-length dual vector `α = U β + y_⊥ / (mλ)`.
    fn alpha_from_beta(&self, beta: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let ml = self.m() as f64 * lambda;
        let y = self.train.y();
        let proj = &self.u * &self.y_tilde;
        &self.u * beta + (y - proj) / ml
    }

    fn piece(&self, ev: &Evaluation, lambda: f64) -> BundleItem {
        let ml = self.m() as f64 * lambda;
        let a = &self.l * &ev.beta;
        let c =
            2.0 * ev.beta.dot(&self.y_tilde) - ml * ev.beta.norm_squared() + self.y_perp_sq / ml;
        let q0 = a.rows(0, self.d()).norm_squared();
        BundleItem {
            a,
            kappa: c - q0,
            is_cut: false,
            idle: 0,
        }
    }

    /// Cut scaled so that its gradient has unit norm in ball-normalized
    /// coordinates.
    fn cut(&self, v: &DVector<f64>, gamma: f64) -> BundleItem {
        let mut b = &self.l * v;
        let (hm, hn) = self.gram_pair(&b, &b);
        let g2 = gamma * gamma;
        let norm = (g2 * hm + g2 * g2 * hn).sqrt();
        if norm > 0.0 {
            b /= norm.sqrt();
        }
        let q0 = b.rows(0, self.d()).norm_squared();
        BundleItem {
            a: b,
            kappa: -q0,
            is_cut: true,
            idle: 0,
        }
    }

    /// `(⟨G_M(a), M⟩, ⟨G_N(a), N⟩)`.
    fn contract(&self, a: &DVector<f64>, mm: &DMatrix<f64>, nn: &LiftedTensor) -> (f64, f64) {
        let (mut em, mut en) = (0.0, 0.0);
        for (s, &k) in self.active.iter().enumerate() {
            let as_ = self.slot(a, s);
            em += 2.0 * a[k] * as_.dot(&mm.column(k));
            en += as_.dot(&(nn.slice(k) * &as_));
        }
        (em, en)
    }

    /// `(⟨G_M(a), G_M(b)⟩, ⟨G_N(a), G_N(b)⟩)`.
    fn gram_pair(&self, a: &DVector<f64>, b: &DVector<f64>) -> (f64, f64) {
        let d = self.d();
        let (mut hm, mut hn) = (0.0, 0.0);
        for (s, &k) in self.active.iter().enumerate() {
            let dot = a.rows(d * (s + 1), d).dot(&b.rows(d * (s + 1), d));
            hm += 4.0 * a[k] * b[k] * dot;
            hn += dot * dot;
        }
        (hm, hn)
    }

    /// `Σ_j w_j G(a_j)` as explicit `(M, N)`-shaped arrays.
    fn combine(&self, items: &[BundleItem], w: &[f64]) -> (DMatrix<f64>, LiftedTensor) {
        let d = self.d();
        let mut gm = DMatrix::zeros(d, d);
        let mut gn = LiftedTensor::zeros(d);
        for (item, &wj) in items.iter().zip(w) {
            if wj == 0.0 {
                continue;
            }
            for (s, &k) in self.active.iter().enumerate() {
                let as_ = self.slot(&item.a, s);
                gm.column_mut(k).axpy(2.0 * wj * item.a[k], &as_, 1.0);
                gn.slices_mut()[k].ger(wj, &as_, &as_, 1.0);
            }
        }
        for s in gn.slices_mut() {
            *s = s.symmetric_part();
        }
        (gm, gn)
    }

    /// Solve the relaxed problem at `hp`.
    pub fn solve(&self, hp: Hyperparams, cfg: &SolverConfig) -> Result<IrrSolution> {
        hp.validate()?;
        cfg.validate()?;
        let d = self.d();
        let zero_m = DMatrix::zeros(d, d);
        let zero_n = LiftedTensor::zeros(d);
        if hp.gamma == 0.0 || self.active.is_empty() {
            return self.finish(zero_m, zero_n, hp, cfg, FinishInfo::trivial());
        }
        let barrier = match cfg.method {
            SolverMethod::Barrier => true,
            SolverMethod::Bundle => false,
            SolverMethod::Auto => barrier::variable_count(d, self.active.len()) <= BARRIER_MAX_VARS,
        };
        if barrier {
            return self.solve_barrier(hp, cfg);
        }
        let gamma = hp.gamma;
        let g2 = gamma * gamma;
        let rad_n = g2;

        let mut center_m = zero_m;
        let mut center_n = zero_n;
        let mut center_c = self.reduced_kernel(&center_m, &center_n);
        let mut center_ev = self.evaluate(&center_c, hp.lambda)?;
        let mut f_center = center_ev.f;

        let mut items = vec![self.piece(&center_ev, hp.lambda)];
        let (hm0, hn0) = self.gram_pair(&items[0].a, &items[0].a);
        let mut hm = DMatrix::from_element(1, 1, hm0);
        let mut hn = DMatrix::from_element(1, 1, hn0);
        let mut em = vec![0.0];
        let mut en = vec![0.0];
        let mut w = vec![1.0];

        let grad_norm = (g2 * hm0 + g2 * g2 * hn0).sqrt();
        let mut rho = (2.0 * grad_norm).max(1e-12);
        let rho_min = rho * RHO_FLOOR;
        let mut lower = f64::NEG_INFINITY;
        let mut history = vec![f_center];
        let mut serious = 0;
        let mut total_cuts = 0;
        let mut iterations = 0;
        let mut nulls_in_row = 0;

        for it in 0..cfg.max_outer {
            iterations = it + 1;
            let ctx = MasterContext {
                items: &items,
                hm: &hm,
                hn: &hn,
                em: &em,
                en: &en,
                center_m_sq: center_m.norm_squared(),
                center_n_sq: center_n.norm_squared(),
                gamma,
                rho,
            };
            let eps = MASTER_ACCURACY
                * (f_center - lower)
                    .min(f_center.abs())
                    .max(cfg.tol * f_center.abs());
            w = ctx.solve(w, cfg.inner_steps, eps);
            lower = lower.max(ctx.lower_bound(&w));
            let gap = (f_center - lower) / f_center.abs().max(f64::MIN_POSITIVE);
            debug!(
                "iter {it}: f {f_center:.10e} lower {lower:.10e} gap {gap:.3e} rho {rho:.3e} items {}",
                items.len()
            );
            if gap <= cfg.tol {
                history.push(f_center);
                break;
            }

            let (grad, sm, sn) = ctx.gradient(&w);
            let model = items
                .iter()
                .zip(&grad)
                .filter(|(it, _)| !it.is_cut)
                .map(|(_, g)| *g)
                .fold(f64::NEG_INFINITY, f64::max);
            let (gm, gn) = self.combine(&items, &w);
            let mut cand_m = (&center_m + gm * (g2 / rho)) * sm;
            let mut cand_n = center_n.clone();
            cand_n.add_scaled(g2 * g2 / rho, &gn);
            let mut cand_n = cand_n.scaled(sn);
            crate::imputation::project_ball(&mut cand_m, gamma);
            cand_n.project(rad_n);

            for (item, &wj) in items.iter_mut().zip(&w) {
                item.idle = if wj > 0.0 { 0 } else { item.idle + 1 };
            }

            let c = self.reduced_kernel(&cand_m, &cand_n);
            let ev = self.evaluate(&c, hp.lambda).ok();
            let mut new_items = Vec::new();
            let feasible = psd_with_shift(&c, cfg.eps_psd);
            if !feasible {
                let eig = checked_eigen(c.clone())?;
                let mut order: Vec<usize> = (0..eig.eigenvalues.len())
                    .filter(|&j| eig.eigenvalues[j] < -cfg.eps_psd)
                    .collect();
                order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
                for &j in order.iter().take(MAX_CUTS_PER_ITER) {
                    new_items.push(self.cut(&eig.eigenvectors.column(j).into_owned(), gamma));
                }
                total_cuts += new_items.len();
            }
            if let Some(ev) = &ev {
                new_items.push(self.piece(ev, hp.lambda));
            }

            let predicted = (f_center - model).max(0.0);
            // a trial point on the segment from the center towards the
            // candidate, pulled back into the PSD set when necessary
            let trial = if feasible {
                ev.map(|ev| (1.0, cand_m, cand_n, c, ev))
            } else {
                let t = psd_step(&center_c, &c, cfg.eps_psd);
                if t > 0.0 {
                    let tm = &center_m + (&cand_m - &center_m) * t;
                    let mut tn = center_n.scaled(1.0 - t);
                    tn.add_scaled(t, &cand_n);
                    let tc = self.reduced_kernel(&tm, &tn);
                    self.evaluate(&tc, hp.lambda).ok().map(|tev| {
                        new_items.push(self.piece(&tev, hp.lambda));
                        (t, tm, tn, tc, tev)
                    })
                } else {
                    None
                }
            };
            let mut stepped = false;
            if let Some((t, tm, tn, tc, tev)) = trial {
                if tev.f < f_center && tev.f <= f_center - SERIOUS_FRACTION * t * predicted {
                    let good = t == 1.0 && tev.f <= f_center - 0.5 * predicted;
                    center_m = tm;
                    center_n = tn;
                    center_c = tc;
                    center_ev = tev;
                    f_center = center_ev.f;
                    serious += 1;
                    stepped = true;
                    nulls_in_row = 0;
                    if good {
                        rho = (rho * 0.5).max(rho_min);
                    }
                }
            }
            if !stepped {
                nulls_in_row += 1;
                if nulls_in_row % 10 == 0 {
                    rho *= 2.0;
                }
            }
            history.push(f_center);

            // prune idle items, always keeping the piece at the center
            let keep: Vec<usize> = (0..items.len())
                .filter(|&j| items[j].idle <= IDLE_LIMIT)
                .collect();
            let keep = cap_items(&items, &w, keep);
            items = keep.iter().map(|&j| items[j].clone()).collect();
            hm = hm.select_rows(&keep).select_columns(&keep);
            hn = hn.select_rows(&keep).select_columns(&keep);
            w = keep.iter().map(|&j| w[j]).collect();
            if stepped {
                new_items.push(self.piece(&center_ev, hp.lambda));
            }
            for item in new_items {
                let n = items.len();
                let mut hm2 = DMatrix::zeros(n + 1, n + 1);
                let mut hn2 = DMatrix::zeros(n + 1, n + 1);
                hm2.view_mut((0, 0), (n, n)).copy_from(&hm);
                hn2.view_mut((0, 0), (n, n)).copy_from(&hn);
                for j in 0..=n {
                    let other = if j == n { &item.a } else { &items[j].a };
                    let (a, b) = self.gram_pair(&item.a, other);
                    hm2[(n, j)] = a;
                    hm2[(j, n)] = a;
                    hn2[(n, j)] = b;
                    hn2[(j, n)] = b;
                }
                hm = hm2;
                hn = hn2;
                items.push(item);
                w.push(0.0);
            }
            if w.iter().zip(&items).all(|(&wj, it)| it.is_cut || wj == 0.0) {
                // the simplex part must stay a distribution
                if let Some(j) = items.iter().rposition(|it| !it.is_cut) {
                    w[j] = 1.0;
                }
            }
            let (e1, e2): (Vec<f64>, Vec<f64>) = items
                .iter()
                .map(|it| self.contract(&it.a, &center_m, &center_n))
                .unzip();
            em = e1;
            en = e2;
        }

        let gap = (f_center - lower) / f_center.abs().max(f64::MIN_POSITIVE);
        self.finish(
            center_m,
            center_n,
            hp,
            cfg,
            FinishInfo {
                iterations,
                serious_steps: serious,
                lower_bound: lower.min(f_center),
                gap: gap.max(0.0),
                cuts: total_cuts,
                history,
                trivial: false,
            },
        )
    }

    fn finish(
        &self,
        mm: DMatrix<f64>,
        nn: LiftedTensor,
        hp: Hyperparams,
        cfg: &SolverConfig,
        info: FinishInfo,
    ) -> Result<IrrSolution> {
        let c = self.reduced_kernel(&mm, &nn);
        let ev = self.evaluate(&c, hp.lambda)?;
        let mut alpha = self.alpha_from_beta(&ev.beta, hp.lambda);
        let eig = checked_eigen(c)?;
        let mut min_eig = eig.eigenvalues.min();
        if self.rank() < self.m() {
            min_eig = min_eig.min(0.0);
        }
        let history = if info.trivial {
            vec![ev.f]
        } else {
            info.history
        };
        let converged = info.trivial || info.gap <= 10.0 * cfg.tol;
        if !converged {
            warn!(
                "solver stopped after {} iterations with relative gap {:.3e} (λ = {}, γ = {})",
                info.iterations, info.gap, hp.lambda, hp.gamma
            );
        }
        let diagnostics = Diagnostics {
            iterations: info.iterations,
            serious_steps: info.serious_steps,
            objective: ev.f,
            lower_bound: if info.trivial { ev.f } else { info.lower_bound },
            gap: info.gap,
            cuts: info.cuts,
            converged,
            basis_rank: self.rank(),
            min_eigenvalue: min_eig,
            history,
        };
        // refine α against the structured kernel: K α is the vector of
        // training-point predictions
        let ml = self.m() as f64 * hp.lambda;
        for _ in 0..2 {
            let sol = IrrSolution::assemble(
                &self.train,
                alpha.clone(),
                mm.clone(),
                nn.clone(),
                hp,
                diagnostics.clone(),
            )?;
            let resid = self.train.y() - sol.predict_dataset(&self.train)? - &alpha * ml;
            if resid.norm() <= 1e-12 * self.train.y().norm().max(1e-300) {
                return Ok(sol);
            }
            let r_tilde = self.u.tr_mul(&resid);
            let mut a = self.reduced_kernel(&mm, &nn);
            for i in 0..a.nrows() {
                a[(i, i)] += ml;
            }
            let Some(chol) = a.cholesky() else {
                return Ok(sol);
            };
            let db = chol.solve(&r_tilde);
            let perp = &resid - &self.u * &r_tilde;
            alpha += &self.u * db + perp / ml;
        }
        IrrSolution::assemble(&self.train, alpha, mm, nn, hp, diagnostics)
    }
}

/// Solve the relaxed problem on `train`.
pub fn solve_irr(train: &Dataset, hp: Hyperparams, cfg: &SolverConfig) -> Result<IrrSolution> {
    IrrProblem::new(train)?.solve(hp, cfg)
}

/// Largest number of free `(M, N)` entries solved by the barrier method
/// under `SolverMethod::Auto`.
const BARRIER_MAX_VARS: usize = 400;
const MAX_CUTS_PER_ITER: usize = 5;
const PSD_BISECTIONS: usize = 30;
/// Smallest proximal weight relative to the initial one.
const RHO_FLOOR: f64 = 0.1;
const SERIOUS_FRACTION: f64 = 0.1;
/// Master gap relative to the current outer gap.
const MASTER_ACCURACY: f64 = 1e-5;
const IDLE_LIMIT: usize = 10;
const MAX_PIECES: usize = 60;
const MAX_CUTS: usize = 150;

struct Evaluation {
    f: f64,
    beta: DVector<f64>,
}

struct FinishInfo {
    iterations: usize,
    serious_steps: usize,
    lower_bound: f64,
    gap: f64,
    cuts: usize,
    history: Vec<f64>,
    trivial: bool,
}

impl FinishInfo {
    fn trivial() -> Self {
        Self {
            iterations: 0,
            serious_steps: 0,
            lower_bound: 0.0,
            gap: 0.0,
            cuts: 0,
            history: Vec::new(),
            trivial: true,
        }
    }
}

/// A stored vector `a = Ψᵀα` (piece) or `a = L v` (cut). `kappa` is the
/// constant of its affine function: `c_α − ‖a_0‖²` for pieces, `−‖a_0‖²`
/// for cuts.
#[derive(Debug, Clone)]
struct BundleItem {
    a: DVector<f64>,
    kappa: f64,
    is_cut: bool,
    idle: usize,
}

fn cap_items(items: &[BundleItem], w: &[f64], keep: Vec<usize>) -> Vec<usize> {
    let mut pieces: Vec<usize> = keep.iter().copied().filter(|&j| !items[j].is_cut).collect();
    let mut cuts: Vec<usize> = keep.iter().copied().filter(|&j| items[j].is_cut).collect();
    for (list, cap) in [(&mut pieces, MAX_PIECES), (&mut cuts, MAX_CUTS)] {
        if list.len() > cap {
            // keep the largest multipliers, newest first on ties
            list.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(b.cmp(&a)));
            list.truncate(cap);
        }
    }
    let mut out: Vec<usize> = pieces.into_iter().chain(cuts).collect();
    out.sort_unstable();
    out
}

/// Dual of the proximal master problem over multipliers `w` (pieces on the
/// simplex, cuts nonnegative), expressed through gradient inner products.
struct MasterContext<'a> {
    items: &'a [BundleItem],
    hm: &'a DMatrix<f64>,
    hn: &'a DMatrix<f64>,
    em: &'a [f64],
    en: &'a [f64],
    center_m_sq: f64,
    center_n_sq: f64,
    gamma: f64,
    rho: f64,
}

impl MasterContext<'_> {
    /// Gradient of the dual function at `w`, i.e. the affine functions
    /// evaluated at the master minimizer, and the ball scalings used there.
    fn gradient(&self, w: &[f64]) -> (Vec<f64>, f64, f64) {
        let wv = DVector::from_column_slice(w);
        let hmw = self.hm * &wv;
        let hnw = self.hn * &wv;
        let g2 = self.gamma * self.gamma;
        let g4 = g2 * g2;
        let ew_m: f64 = self.em.iter().zip(w).map(|(a, b)| a * b).sum();
        let ew_n: f64 = self.en.iter().zip(w).map(|(a, b)| a * b).sum();
        let rho = self.rho;
        let nm2 = self.center_m_sq + 2.0 * g2 / rho * ew_m + g4 / (rho * rho) * wv.dot(&hmw);
        let nn2 = self.center_n_sq + 2.0 * g4 / rho * ew_n + g4 * g4 / (rho * rho) * wv.dot(&hnw);
        let sm = scale_to(nm2, self.gamma);
        let sn = scale_to(nn2, g2);
        let grad = (0..w.len())
            .map(|j| {
                self.items[j].kappa
                    - sm * (self.em[j] + g2 * hmw[j] / rho)
                    - sn * (self.en[j] + g4 * hnw[j] / rho)
            })
            .collect();
        (grad, sm, sn)
    }

    /// `Σ w κ − γ‖g_M‖ − γ²‖g_N‖`, a lower bound on the relaxed optimum.
    fn lower_bound(&self, w: &[f64]) -> f64 {
        let wv = DVector::from_column_slice(w);
        let kw: f64 = self.items.iter().zip(w).map(|(it, wj)| it.kappa * wj).sum();
        let qm = wv.dot(&(self.hm * &wv)).max(0.0).sqrt();
        let qn = wv.dot(&(self.hn * &wv)).max(0.0).sqrt();
        kw - self.gamma * qm - self.gamma * self.gamma * qn
    }

    fn project(&self, w: &mut [f64]) {
        let piece_idx: Vec<usize> = (0..w.len()).filter(|&j| !self.items[j].is_cut).collect();
        let v: Vec<f64> = piece_idx.iter().map(|&j| w[j]).collect();
        for (&j, p) in piece_idx.iter().zip(project_simplex(&v)) {
            w[j] = p;
        }
        for (j, wj) in w.iter_mut().enumerate() {
            if self.items[j].is_cut && *wj < 0.0 {
                *wj = 0.0;
            }
        }
    }

    /// Duality gap of the master at `w`: the largest piece value minus the
    /// dual value, or the largest cut violation, whichever is bigger.
    fn master_gap(&self, w: &[f64]) -> f64 {
        let (grad, _, _) = self.gradient(w);
        let mut top = f64::NEG_INFINITY;
        let mut violation: f64 = 0.0;
        for (it, g) in self.items.iter().zip(&grad) {
            if it.is_cut {
                violation = violation.max(*g);
            } else {
                top = top.max(*g);
            }
        }
        let dual: f64 = grad.iter().zip(w).map(|(g, wj)| g * wj).sum();
        (top - dual).max(violation)
    }

    /// Accelerated projected gradient ascent with adaptive restart, stopped
    /// once the master gap falls to `eps`.
    fn solve(&self, mut w: Vec<f64>, steps: usize, eps: f64) -> Vec<f64> {
        self.project(&mut w);
        let g2 = self.gamma * self.gamma;
        let h = self.hm * g2 + self.hn * (g2 * g2);
        let lmax = largest_eigenvalue(&h);
        if lmax <= f64::MIN_POSITIVE {
            // model is flat in (M, N): put all weight on the largest constant
            let (grad, _, _) = self.gradient(&w);
            let best = (0..w.len())
                .filter(|&j| !self.items[j].is_cut)
                .max_by(|&a, &b| grad[a].total_cmp(&grad[b]));
            let mut out = vec![0.0; w.len()];
            if let Some(j) = best {
                out[j] = 1.0;
            }
            return out;
        }
        let step = self.rho / lmax;
        let mut yv = w.clone();
        let mut t = 1.0f64;
        for step_no in 0..steps {
            if step_no % 10 == 0 && self.master_gap(&w) <= eps {
                break;
            }
            let (grad, _, _) = self.gradient(&yv);
            let mut next: Vec<f64> = yv.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
            self.project(&mut next);
            let diff: Vec<f64> = next.iter().zip(&w).map(|(a, b)| a - b).collect();
            let moved: f64 = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            let progress: f64 = grad.iter().zip(&diff).map(|(g, dv)| g * dv).sum();
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if progress < 0.0 {
                t = 1.0;
                yv = next.clone();
            } else {
                let mom = (t - 1.0) / t_next;
                yv = next.iter().zip(&diff).map(|(a, dv)| a + mom * dv).collect();
                t = t_next;
            }
            w = next;
            if moved <= 1e-15 * (1.0 + w.iter().map(|v| v.abs()).sum::<f64>()) {
                break;
            }
        }
        self.project(&mut w);
        w
    }
}

/// Upper estimate of the largest eigenvalue of a PSD matrix by power
/// iteration, inflated so the result is rarely below the true value.
fn largest_eigenvalue(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let trace = h.trace().max(0.0);
    if n == 0 || trace <= 0.0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * i as f64);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..100 {
        let hv = h * &v;
        let norm = hv.norm();
        if norm <= f64::MIN_POSITIVE {
            break;
        }
        let prev = est;
        est = v.dot(&hv);
        v = hv / norm;
        if (est - prev).abs() <= 1e-4 * est {
            break;
        }
    }
    (1.1 * est).min(trace)
}

fn scale_to(norm_sq: f64, radius: f64) -> f64 {
    let n = norm_sq.max(0.0).sqrt();
    if n > radius {
        radius / n
    } else {
        1.0
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Largest `t` in `[0, 1]` (to bisection accuracy) with
/// `a + t (b - a) ⪰ -eps`, given that `a` itself is.
fn psd_step(a: &DMatrix<f64>, b: &DMatrix<f64>, eps: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    let diff = b - a;
    for _ in 0..PSD_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if psd_with_shift(&(a + &diff * mid), eps) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn psd_with_shift(c: &DMatrix<f64>, eps: f64) -> bool {
    let mut a = c.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += eps;
    }
    a.cholesky().is_some()
}

fn checked_eigen(a: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let max_iter = 30 * a.nrows().max(10);
    SymmetricEigen::try_new(a, f64::EPSILON, max_iter).ok_or(IrrError::EigenNoConvergence(max_iter))
}

fn kept_indices(eigenvalues: &DVector<f64>) -> Vec<usize> {
    let top = eigenvalues.max().max(0.0);
    let floor = top * BASIS_RTOL * BASIS_RTOL;
    (0..eigenvalues.len())
        .filter(|&j| top > 0.0 && eigenvalues[j] > floor)
        .collect()
}
