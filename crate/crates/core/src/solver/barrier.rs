//! Log-barrier Newton method for the relaxed problem, used when the number
//! of free entries of `(M, N)` is small.
//!
//! Every free entry `x_i` enters `C` as `x_i A_i` with
//! `A_i = c_i (l_a l_bᵀ + l_b l_aᵀ)` for two rows `l_a, l_b` of `L`, so all
//! derivatives reduce to the Gram matrices `L W Lᵀ` and `L S⁻¹ Lᵀ` with
//! `W = C⁻¹` and `S = C + mλI`.
//!
//! The certificate at a point `x` with barrier weight `t` uses convexity of
//! `f` and the multiplier `C⁻¹ / t` for `C ⪰ 0`:
//! `f* ≥ f(x) − gᵀx − r/t + min_{x' in balls} gᵀx'` with
//! `g = ∇f − ∇log det C / t`.

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::{FinishInfo, Hyperparams, IrrProblem, IrrSolution, SolverConfig};
use crate::error::Result;
use crate::kernel::LiftedTensor;

/// Growth factor of the barrier weight between centering stages.
const T_GROWTH: f64 = 8.0;
const CENTERING_STEPS: usize = 60;
/// Half the squared Newton decrement at which a stage counts as centered.
const CENTERED: f64 = 1e-10;
const ARMIJO: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ball {
    M,
    N,
}

/// One free entry: `M[row, col]` or `N_col[row, other]`.
#[derive(Debug, Clone, Copy)]
struct Var {
    a: usize,
    b: usize,
    c: f64,
    ball: Ball,
    /// Multiplicity of the entry in the Frobenius norm.
    weight: f64,
    row: usize,
    other: usize,
    col: usize,
}

struct Point {
    f: f64,
    phi: f64,
    /// `∇f`.
    grad_f: DVector<f64>,
    /// `∇ log det C`.
    grad_ld: DVector<f64>,
    grad: DVector<f64>,
    hess: Option<DMatrix<f64>>,
}

pub(super) fn variable_count(d: usize, active: usize) -> usize {
    active * d + active * d * (d + 1) / 2
}

impl IrrProblem {
    fn barrier_vars(&self) -> Vec<Var> {
        let d = self.d();
        let mut vars = Vec::new();
        for (s, &k) in self.active.iter().enumerate() {
            for a in 0..d {
                vars.push(Var {
                    a: k,
                    b: d * (s + 1) + a,
                    c: 1.0,
                    ball: Ball::M,
                    weight: 1.0,
                    row: a,
                    other: a,
                    col: k,
                });
            }
        }
        for (s, &k) in self.active.iter().enumerate() {
            for a in 0..d {
                for b in a..d {
                    vars.push(Var {
                        a: d * (s + 1) + a,
                        b: d * (s + 1) + b,
                        c: if a == b { 0.5 } else { 1.0 },
                        ball: Ball::N,
                        weight: if a == b { 1.0 } else { 2.0 },
                        row: a,
                        other: b,
                        col: k,
                    });
                }
            }
        }
        vars
    }

    fn unpack(&self, vars: &[Var], x: &DVector<f64>) -> (DMatrix<f64>, LiftedTensor) {
        let d = self.d();
        let mut mm = DMatrix::zeros(d, d);
        let mut slices = vec![DMatrix::zeros(d, d); d];
        for (v, &xi) in vars.iter().zip(x.iter()) {
            match v.ball {
                Ball::M => mm[(v.row, v.col)] = xi,
                Ball::N => {
                    slices[v.col][(v.row, v.other)] = xi;
                    slices[v.col][(v.other, v.row)] = xi;
                }
            }
        }
        (
            mm,
            LiftedTensor::from_slices(slices).expect("symmetric by construction"),
        )
    }

    fn slacks(&self, vars: &[Var], x: &DVector<f64>, gamma: f64) -> (f64, f64) {
        let (mut sm, mut sn) = (gamma * gamma, gamma.powi(4));
        for (v, &xi) in vars.iter().zip(x.iter()) {
            match v.ball {
                Ball::M => sm -= xi * xi,
                Ball::N => sn -= v.weight * xi * xi,
            }
        }
        (sm, sn)
    }

    /// Barrier value and derivatives, or `None` outside the interior.
    fn barrier_point(
        &self,
        vars: &[Var],
        x: &DVector<f64>,
        t: f64,
        hp: Hyperparams,
        with_hessian: bool,
    ) -> Option<Point> {
        let (sm, sn) = self.slacks(vars, x, hp.gamma);
        if !(sm > 0.0 && sn > 0.0) {
            return None;
        }
        let (mm, nn) = self.unpack(vars, x);
        let c = self.reduced_kernel(&mm, &nn);
        let chol_c = c.clone().cholesky()?;
        let logdet = 2.0
            * chol_c
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        if !logdet.is_finite() {
            return None;
        }
        let ml = self.m() as f64 * hp.lambda;
        let mut s = c;
        for i in 0..s.nrows() {
            s[(i, i)] += ml;
        }
        let chol_s = s.clone().cholesky()?;
        let mut beta = chol_s.solve(&self.y_tilde);
        let resid = &self.y_tilde - &s * &beta;
        beta += chol_s.solve(&resid);
        let f = self.y_tilde.dot(&beta) + self.y_perp_sq / ml;

        // L W Lᵀ and L S⁻¹ Lᵀ through triangular solves
        let lt = self.l.transpose();
        let wc = chol_c.l().solve_lower_triangular(&lt)?;
        let gw = wc.tr_mul(&wc);
        let ws = chol_s.l().solve_lower_triangular(&lt)?;
        let gs = ws.tr_mul(&ws);
        let h = &self.l * &beta;

        let n = vars.len();
        let mut grad_f = DVector::zeros(n);
        let mut grad_ld = DVector::zeros(n);
        let mut grad = DVector::zeros(n);
        for (i, v) in vars.iter().enumerate() {
            grad_f[i] = -2.0 * v.c * h[v.a] * h[v.b];
            grad_ld[i] = 2.0 * v.c * gw[(v.a, v.b)];
            let ball = match v.ball {
                Ball::M => 2.0 * x[i] / sm,
                Ball::N => 2.0 * v.weight * x[i] / sn,
            };
            grad[i] = t * grad_f[i] - grad_ld[i] + ball;
        }
        let hess = with_hessian.then(|| {
            let mut hm = DMatrix::zeros(n, n);
            for (i, u) in vars.iter().enumerate() {
                for (j, v) in vars.iter().enumerate().skip(i) {
                    let (xa, ya, xb, yb) = (u.a, u.b, v.a, v.b);
                    let hf = 2.0
                        * u.c
                        * v.c
                        * (h[ya] * h[yb] * gs[(xa, xb)]
                            + h[ya] * h[xb] * gs[(xa, yb)]
                            + h[xa] * h[yb] * gs[(ya, xb)]
                            + h[xa] * h[xb] * gs[(ya, yb)]);
                    let hl = 2.0
                        * u.c
                        * v.c
                        * (gw[(xa, xb)] * gw[(ya, yb)] + gw[(xa, yb)] * gw[(ya, xb)]);
                    let mut e = t * hf + hl;
                    if u.ball == v.ball {
                        let (sl, wu, wv) = match u.ball {
                            Ball::M => (sm, 1.0, 1.0),
                            Ball::N => (sn, u.weight, v.weight),
                        };
                        e += 4.0 * wu * x[i] * wv * x[j] / (sl * sl);
                        if i == j {
                            e += 2.0 * wu / sl;
                        }
                    }
                    hm[(i, j)] = e;
                    hm[(j, i)] = e;
                }
            }
            hm
        });
        let phi = t * f - logdet - sm.ln() - sn.ln();
        Some(Point {
            f,
            phi,
            grad_f,
            grad_ld,
            grad,
            hess,
        })
    }

    fn certificate(&self, vars: &[Var], x: &DVector<f64>, p: &Point, t: f64, gamma: f64) -> f64 {
        let g = &p.grad_f - &p.grad_ld / t;
        let (mut qm, mut qn) = (0.0, 0.0);
        for (v, gi) in vars.iter().zip(g.iter()) {
            match v.ball {
                Ball::M => qm += gi * gi,
                Ball::N => qn += gi * gi / v.weight,
            }
        }
        p.f - g.dot(x) - self.rank() as f64 / t - gamma * qm.sqrt() - gamma * gamma * qn.sqrt()
    }

    /// Path-following barrier method; stops when the certified relative gap
    /// reaches `cfg.tol` or after `cfg.max_outer` Newton steps.
    pub(super) fn solve_barrier(&self, hp: Hyperparams, cfg: &SolverConfig) -> Result<IrrSolution> {
        let vars = self.barrier_vars();
        let n = vars.len();
        let na = self.active.len() as f64;
        let d = self.d() as f64;
        let n0 = hp.gamma * hp.gamma / (2.0 * (na * d).sqrt());
        let mut x = DVector::from_iterator(
            n,
            vars.iter().map(|v| {
                if v.ball == Ball::N && v.row == v.other {
                    n0
                } else {
                    0.0
                }
            }),
        );
        let nu = self.rank() as f64 + 2.0;
        let start = self
            .barrier_point(&vars, &x, 1.0, hp, false)
            .expect("initial point is interior");
        let mut t = nu / start.f.max(1e-12);
        let mut best = (start.f, x.clone());
        let mut lower = f64::NEG_INFINITY;
        let mut history = vec![start.f];
        let mut steps = 0;
        let mut stages = 0;
        let mut gap = f64::INFINITY;

        'outer: while steps < cfg.max_outer {
            stages += 1;
            let mut point = self
                .barrier_point(&vars, &x, t, hp, true)
                .expect("iterate stays interior");
            for _ in 0..CENTERING_STEPS {
                if steps >= cfg.max_outer {
                    break;
                }
                let hess = point.hess.take().expect("hessian requested");
                let delta = newton_direction(hess, &point.grad);
                let slope = point.grad.dot(&delta);
                if -slope / 2.0 <= CENTERED {
                    point.hess = None;
                    break;
                }
                steps += 1;
                let mut alpha = 1.0;
                let mut accepted = None;
                for _ in 0..60 {
                    let trial = &x + &delta * alpha;
                    if let Some(p) = self.barrier_point(&vars, &trial, t, hp, false) {
                        if p.phi <= point.phi + ARMIJO * alpha * slope {
                            accepted = Some(trial);
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                let Some(next) = accepted else { break };
                x = next;
                point = self
                    .barrier_point(&vars, &x, t, hp, true)
                    .expect("accepted point is interior");
            }
            let lb = self.certificate(&vars, &x, &point, t, hp.gamma);
            lower = lower.max(lb);
            if point.f < best.0 {
                best = (point.f, x.clone());
            }
            history.push(best.0);
            gap = (best.0 - lower) / best.0.abs().max(f64::MIN_POSITIVE);
            debug!(
                "barrier stage {stages}: t {t:.3e} f {:.10e} lower {lower:.10e} gap {gap:.3e}",
                best.0
            );
            if gap <= cfg.tol {
                break 'outer;
            }
            t *= T_GROWTH;
        }

        let (mm, nn) = self.unpack(&vars, &best.1);
        self.finish(
            mm,
            nn,
            hp,
            cfg,
            FinishInfo {
                iterations: steps,
                serious_steps: stages,
                lower_bound: lower.min(best.0),
                gap: gap.max(0.0),
                cuts: 0,
                history,
                trivial: false,
            },
        )
    }
}

/// Solve `H Δ = −g`, adding a small diagonal shift if `H` is numerically
/// singular.
fn newton_direction(hess: DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let n = hess.nrows();
    let scale = hess.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut shift = 0.0;
    loop {
        let mut h = hess.clone();
        for i in 0..n {
            h[(i, i)] += shift;
        }
        if let Some(chol) = h.cholesky() {
            return -chol.solve(grad);
        }
        shift = if shift == 0.0 {
            1e-14 * scale
        } else {
            shift * 10.0
        };
    }
}
