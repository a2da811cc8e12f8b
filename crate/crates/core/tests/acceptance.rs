//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion and then asserts it. Criteria 7 to 10 need real datasets and
//! are ignored by default; run them with `--ignored`.
//!
//! Oracles here never call the library routine being checked: kernels are
//! rebuilt from explicit feature maps and linear systems are solved by
//! Gaussian elimination.

use std::env;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use irr::bench::{
    run_experiment, run_onevsall, CorruptionChoice, ExperimentReport, ExperimentSpec, Method,
};
use irr::corruption::CorruptionSpec;
use irr::imputation::BaselineImputer;
use irr::kernel::{build_km, build_kmn, kernel_gradient_contraction, LiftedTensor};
use irr::solver::{epigraph_is_psd, solve_irr, Hyperparams, Predictor, RidgeModel, SolverConfig};
use irr::theory::{empirical_rademacher, rademacher_bound, BoundInputs};
use irr::Dataset;

fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "criterion {id:>2} {name}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
}

fn gen(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_data(g: &mut ChaCha8Rng, m: usize, d: usize, keep: f64) -> Dataset {
    let x = DMatrix::from_fn(m, d, |_, _| g.random::<f64>() * 2.0 - 1.0);
    let z = DMatrix::from_fn(m, d, |_, _| g.random::<f64>() < keep);
    let y = DVector::from_fn(m, |_, _| g.random::<f64>() * 2.0 - 1.0);
    Dataset::new(x, z, y).unwrap()
}

fn random_symmetric(g: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| g.random::<f64>() - 0.5);
    (&a + a.transpose()) * 0.5
}

/// Explicit feature map `x̃ + (1 - z) ∘ (Mᵀ x̃)` on observed-zeroed inputs.
fn phi(data: &Dataset, m: &DMatrix<f64>, i: usize) -> DVector<f64> {
    let d = data.d();
    let xt = DVector::from_fn(d, |k, _| {
        if data.z()[(i, k)] {
            data.x()[(i, k)]
        } else {
            0.0
        }
    });
    let imp = m.transpose() * &xt;
    DVector::from_fn(d, |k, _| {
        if data.z()[(i, k)] {
            xt[k]
        } else {
            xt[k] + imp[k]
        }
    })
}

fn oracle_km(data: &Dataset, m: &DMatrix<f64>) -> DMatrix<f64> {
    let feats: Vec<DVector<f64>> = (0..data.n()).map(|i| phi(data, m, i)).collect();
    DMatrix::from_fn(data.n(), data.n(), |i, j| feats[i].dot(&feats[j]))
}

/// Entrywise `K_MN`: `x̃ᵢᵀx̃ⱼ + Σ_k [z̄ⱼₖ x̃ᵢₖ (M_kᵀx̃ⱼ) + z̄ᵢₖ x̃ⱼₖ (M_kᵀx̃ᵢ)
/// + z̄ᵢₖ z̄ⱼₖ x̃ᵢᵀ N_k x̃ⱼ]` with `M_k` the k-th column.
fn oracle_kmn(data: &Dataset, m: &DMatrix<f64>, n: &LiftedTensor) -> DMatrix<f64> {
    let d = data.d();
    let xt: Vec<DVector<f64>> = (0..data.n())
        .map(|i| {
            DVector::from_fn(d, |k, _| {
                if data.z()[(i, k)] {
                    data.x()[(i, k)]
                } else {
                    0.0
                }
            })
        })
        .collect();
    let miss = |i: usize, k: usize| if data.z()[(i, k)] { 0.0 } else { 1.0 };
    DMatrix::from_fn(data.n(), data.n(), |i, j| {
        let mut v = xt[i].dot(&xt[j]);
        for k in 0..d {
            let mk = m.column(k);
            v += miss(j, k) * xt[i][k] * mk.dot(&xt[j]);
            v += miss(i, k) * xt[j][k] * mk.dot(&xt[i]);
            v += miss(i, k) * miss(j, k) * (xt[i].transpose() * n.slice(k) * &xt[j])[0];
        }
        v
    })
}

fn gauss_solve(mut a: DMatrix<f64>, mut b: DVector<f64>) -> DVector<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap();
        a.swap_rows(col, piv);
        b.swap_rows(col, piv);
        for r in col + 1..n {
            let f = a[(r, col)] / a[(col, col)];
            for c in col..n {
                a[(r, c)] -= f * a[(col, c)];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = DVector::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[(r, c)] * x[c]).sum();
        x[r] = (b[r] - s) / a[(r, r)];
    }
    x
}

/// `yᵀ (K + mλI)⁻¹ y`.
fn ridge_value(k: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> f64 {
    let m = k.nrows();
    let a = k + DMatrix::identity(m, m) * (m as f64 * lambda);
    y.dot(&gauss_solve(a, y.clone()))
}

/// Kernel ridge fitted through the explicit zero-imputed features.
fn zero_ridge_predictions(train: &Dataset, test: &Dataset, lambda: f64) -> DVector<f64> {
    let zero = DMatrix::zeros(train.d(), train.d());
    let k = oracle_km(train, &zero);
    let m = train.n();
    let alpha = gauss_solve(
        k + DMatrix::identity(m, m) * (m as f64 * lambda),
        train.y().clone(),
    );
    DVector::from_fn(test.n(), |t, _| {
        let ft = phi(test, &zero, t);
        (0..m)
            .map(|i| alpha[i] * phi(train, &zero, i).dot(&ft))
            .sum()
    })
}

#[test]
fn c01_relaxation_soundness() {
    let start = Instant::now();
    let mut g = gen(101);
    let cfg = SolverConfig {
        tol: 1e-7,
        max_outer: 3000,
        ..Default::default()
    };
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    let mut nonconverged = 0;
    for _ in 0..100 {
        let m = g.random_range(3..=12);
        let d = g.random_range(1..=4);
        let keep = g.random_range(0.3..0.9);
        let data = random_data(&mut g, m, d, keep);
        let hp = Hyperparams::new(
            2f64.powf(g.random_range(-6.0..1.0)),
            g.random_range(0.0..2.0),
        )
        .unwrap();
        let sol = solve_irr(&data, hp, &cfg).unwrap();
        if !sol.converged() {
            nonconverged += 1;
        }
        for _ in 0..200 {
            let mut mm = DMatrix::from_fn(d, d, |_, _| g.random::<f64>() - 0.5);
            let norm = mm.norm();
            if norm > 0.0 {
                mm *= hp.gamma * g.random::<f64>().sqrt() / norm;
            }
            let f = ridge_value(&oracle_km(&data, &mm), data.y(), hp.lambda);
            let slack = f - sol.objective();
            worst = worst.min(slack);
            if slack < -1e-6 {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = violations == 0 && elapsed < Duration::from_secs(120);
    verdict(
        1,
        "relaxation soundness",
        ok,
        &format!(
            "20000 checks, {violations} violations, worst slack {worst:.3e}, {nonconverged} solves above tolerance, {:.1} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn c02_lift_consistency() {
    let start = Instant::now();
    let mut g = gen(102);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = g.random_range(1..=15);
        let d = g.random_range(1..=6);
        let keep = g.random_range(0.0..1.0);
        let data = random_data(&mut g, m, d, keep);
        let mm = DMatrix::from_fn(d, d, |_, _| g.random::<f64>() * 4.0 - 2.0);
        let km = build_km(&data, &mm).unwrap().k;
        let kmn = build_kmn(&data, &mm, &LiftedTensor::lift(&mm)).unwrap().k;
        let oracle = oracle_km(&data, &mm);
        worst = worst.max((&km - &kmn).amax()).max((&km - &oracle).amax());
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-9 && elapsed < Duration::from_secs(10);
    verdict(
        2,
        "lift consistency",
        ok,
        &format!(
            "max entry difference {worst:.2e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn c03_gradient_check() {
    let start = Instant::now();
    let mut g = gen(103);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let m = g.random_range(2..=10);
        let d = g.random_range(1..=4);
        let data = random_data(&mut g, m, d, 0.5);
        let alpha = DVector::from_fn(m, |_, _| g.random::<f64>() - 0.5);
        let mm = DMatrix::from_fn(d, d, |_, _| g.random::<f64>() - 0.5);
        let nn = LiftedTensor::from_slices((0..d).map(|_| random_symmetric(&mut g, d)).collect())
            .unwrap();
        let (gm, gn) = kernel_gradient_contraction(&data, &alpha).unwrap();
        let value =
            |m: &DMatrix<f64>, n: &LiftedTensor| alpha.dot(&(oracle_kmn(&data, m, n) * &alpha));
        let h = 1e-5;
        let mut fd_m = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                let mut p = mm.clone();
                p[(a, b)] += h;
                let mut q = mm.clone();
                q[(a, b)] -= h;
                fd_m[(a, b)] = (value(&p, &nn) - value(&q, &nn)) / (2.0 * h);
            }
        }
        // symmetric perturbation E_ab + E_ba of one slice, matched by the
        // directional derivative ⟨G, E⟩
        let mut err_n: f64 = 0.0;
        let mut scale_n: f64 = 1e-12;
        for k in 0..d {
            for a in 0..d {
                for b in a..d {
                    let mut e = DMatrix::zeros(d, d);
                    e[(a, b)] += 1.0;
                    if a != b {
                        e[(b, a)] += 1.0;
                    }
                    let mut dir: Vec<DMatrix<f64>> = vec![DMatrix::zeros(d, d); d];
                    dir[k] = e.clone();
                    let dir = LiftedTensor::from_slices(dir).unwrap();
                    let mut p = nn.clone();
                    p.add_scaled(h, &dir);
                    let mut q = nn.clone();
                    q.add_scaled(-h, &dir);
                    let fd = (value(&mm, &p) - value(&mm, &q)) / (2.0 * h);
                    let an = gn.slice(k).component_mul(&e).sum();
                    err_n = err_n.max((fd - an).abs());
                    scale_n = scale_n.max(an.abs());
                }
            }
        }
        let rel_m = (&gm - &fd_m).norm() / gm.norm().max(1e-12);
        worst = worst.max(rel_m).max(err_n / scale_n);
    }
    let elapsed = start.elapsed();
    let ok = worst < 1e-4 && elapsed < Duration::from_secs(30);
    verdict(
        3,
        "gradient check",
        ok,
        &format!(
            "max relative error {worst:.2e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn c04_schur_equivalence() {
    let mut g = gen(104);
    let mut disagreements = 0;
    let mut tightest: f64 = f64::INFINITY;
    for i in 0..100 {
        let m = g.random_range(2..=12);
        let r = g.random_range(1..=m);
        let a = DMatrix::from_fn(m, r, |_, _| g.random::<f64>() - 0.5);
        let k = &a * a.transpose();
        let y = DVector::from_fn(m, |_, _| g.random::<f64>() * 2.0 - 1.0);
        let lambda = 2f64.powf(g.random_range(-4.0..1.0));
        let f = ridge_value(&k, &y, lambda);
        // relative offsets from 1e-6 to 0.5, alternating sides
        let rel = 10f64.powf(g.random_range(-6.0..-0.3));
        let above = i % 2 == 0;
        let t = if above {
            f * (1.0 + rel)
        } else {
            f * (1.0 - rel)
        };
        tightest = tightest.min((t - f).abs());
        let psd = epigraph_is_psd(&k, &y, lambda, t, 1e-12).unwrap();
        if psd != (t >= f) {
            disagreements += 1;
        }
    }
    let ok = disagreements == 0;
    verdict(
        4,
        "Schur-complement equivalence",
        ok,
        &format!("100 pairs, {disagreements} disagreements, closest |t - f| = {tightest:.2e}"),
    );
    assert!(ok);
}

#[test]
fn c05_no_corruption_collapse() {
    let mut g = gen(105);
    let cfg = SolverConfig::default();
    let mut worst_full: f64 = 0.0;
    let mut worst_zero: f64 = 0.0;
    for _ in 0..20 {
        let m = g.random_range(4..=15);
        let d = g.random_range(1..=5);
        let test = random_data(&mut g, 8, d, 0.6);
        let lambda = 2f64.powf(g.random_range(-6.0..1.0));
        let gamma = g.random_range(0.1..2.0);

        let full = random_data(&mut g, m, d, 1.1);
        let sol = solve_irr(&full, Hyperparams::new(lambda, gamma).unwrap(), &cfg).unwrap();
        let a = sol.predict_dataset(&test).unwrap();
        let b = zero_ridge_predictions(&full, &test, lambda);
        worst_full = worst_full.max((a - b).amax());

        let data = random_data(&mut g, m, d, 0.5);
        let sol = solve_irr(&data, Hyperparams::new(lambda, 0.0).unwrap(), &cfg).unwrap();
        let a = sol.predict_dataset(&test).unwrap();
        let b = zero_ridge_predictions(&data, &test, lambda);
        let c = RidgeModel::fit(BaselineImputer::Zero, &data, lambda)
            .unwrap()
            .predict_dataset(&test)
            .unwrap();
        worst_zero = worst_zero.max((&a - b).amax()).max((a - c).amax());
    }
    let ok = worst_full <= 1e-6 && worst_zero <= 1e-6;
    verdict(
        5,
        "no-corruption collapse",
        ok,
        &format!("Z = 1 max diff {worst_full:.2e}, gamma = 0 max diff {worst_zero:.2e}"),
    );
    assert!(ok);
}

#[test]
fn c06_rademacher_dominance() {
    let start = Instant::now();
    let mut g = gen(106);
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    for c in 0..50 {
        let m = g.random_range(5..=60);
        let d = g.random_range(1..=5);
        let keep = g.random_range(0.2..1.0);
        let data = random_data(&mut g, m, d, keep);
        let hp = Hyperparams::new(
            2f64.powf(g.random_range(-4.0..2.0)),
            g.random_range(0.0..3.0),
        )
        .unwrap();
        let inputs = BoundInputs::from_dataset(&data, hp);
        let est = empirical_rademacher(&data, hp, inputs.b, 100, 50, 1000 + c).unwrap();
        let bound = rademacher_bound(&inputs).unwrap();
        if est > bound {
            violations += 1;
        }
        if bound > 0.0 {
            max_ratio = max_ratio.max(est / bound);
        }
    }
    let elapsed = start.elapsed();
    let ok = violations == 0 && elapsed < Duration::from_secs(120);
    verdict(
        6,
        "Rademacher dominance",
        ok,
        &format!(
            "50 configurations, {violations} violations, max estimate/bound {max_ratio:.3}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

fn data_dir() -> PathBuf {
    env::var_os("IRR_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn dataset(name: &str) -> PathBuf {
    let path = data_dir().join(name);
    assert!(
        path.exists(),
        "dataset missing: {} (set IRR_DATA_DIR to a directory holding it)",
        path.display()
    );
    path
}

fn mean(r: &ExperimentReport, m: Method) -> f64 {
    r.method(m)
        .unwrap_or_else(|| panic!("method {} missing", m.key()))
        .rmse_mean
}

fn band(value: f64, target: f64, width: f64) -> String {
    let inside = (value - target).abs() <= width;
    format!(
        "{value:.3} vs {target:.3} ± {width}: {}",
        if inside {
            "inside soft band"
        } else {
            "outside soft band"
        }
    )
}

fn print_table(r: &ExperimentReport) {
    print!("{}", r.to_tsv());
    println!("runtime {:.0} s", r.runtime_seconds);
}

/// Abalone CSV in UCI column order: sex, seven measurements, rings.
fn abalone_spec(corruption: CorruptionSpec, fraction: f64) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(
        dataset("abalone.csv"),
        "8",
        CorruptionChoice::Synthetic(corruption),
    );
    spec.skip_columns = vec!["0".into()];
    spec.target_fraction = Some(fraction);
    spec
}

#[test]
#[ignore = "needs abalone.csv; slow"]
fn c07_abalone_independent() {
    let spec = abalone_spec(CorruptionSpec::independent(1.0, 0), 0.62);
    let r = run_experiment(&spec).unwrap();
    print_table(&r);
    let irr = r.method(Method::Irr).unwrap();
    let zero = r.method(Method::Zero).unwrap();
    let per_trial = irr
        .trial_rmse
        .iter()
        .zip(&zero.trial_rmse)
        .all(|(a, b)| a < b);
    let ok = irr.rmse_mean <= mean(&r, Method::Mean) + 0.003 && per_trial;
    verdict(
        7,
        "abalone independent corruption",
        ok,
        &format!(
            "IRR {}; nocorr {}",
            band(irr.rmse_mean, 0.183, 0.02),
            band(mean(&r, Method::Nocorr), 0.158, 0.01)
        ),
    );
    assert!(ok);
}

#[test]
#[ignore = "needs abalone.csv; slow"]
fn c08_abalone_dependent() {
    let spec = abalone_spec(CorruptionSpec::dependent(1.0, 0), 0.61);
    let r = run_experiment(&spec).unwrap();
    print_table(&r);
    let irr = mean(&r, Method::Irr);
    let ok = irr <= mean(&r, Method::Mean) - 0.005;
    verdict(
        8,
        "abalone dependent corruption",
        ok,
        &format!("IRR {}", band(irr, 0.167, 0.02)),
    );
    assert!(ok);
}

/// Thyroid CSV with five numeric features, `?` for missing entries, and the
/// regression target in the last column.
#[test]
#[ignore = "needs thyroid.csv; slow"]
fn c09_thyroid_native() {
    let mut spec = ExperimentSpec::new(dataset("thyroid.csv"), "5", CorruptionChoice::Native);
    spec.methods = vec![Method::Zero, Method::Mean, Method::Independent, Method::Irr];
    let r = run_experiment(&spec).unwrap();
    print_table(&r);
    let irr = mean(&r, Method::Irr);
    let ok = irr < mean(&r, Method::Mean) && irr < mean(&r, Method::Independent);
    verdict(
        9,
        "thyroid native missingness",
        ok,
        &format!("IRR {}", band(irr, 0.521, 0.02)),
    );
    assert!(ok);
}

#[test]
#[ignore = "needs optdigits.csv; slow"]
fn c10_optdigits_three_vs_all() {
    let trials = env::var("IRR_DIGITS_TRIALS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(2);
    let mut spec = ExperimentSpec::new(dataset("optdigits.csv"), "64", CorruptionChoice::Native);
    spec.trials = trials;
    spec.methods = vec![Method::Nocorr, Method::Zero, Method::Mean, Method::Irr];
    let r = run_onevsall(&spec, 3).unwrap();
    print_table(&r);
    let irr = mean(&r, Method::Irr);
    let zero = mean(&r, Method::Zero);
    let ok = irr <= zero - 0.01;
    verdict(
        10,
        "optdigits 3-vs-all column corruption",
        ok,
        &format!(
            "{trials} trials, zero {zero:.3}, IRR {}",
            band(irr, 0.426, 0.02)
        ),
    );
    assert!(ok);
}
