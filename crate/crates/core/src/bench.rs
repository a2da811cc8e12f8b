//! Experiment harness: repeated random splits, corruption, grid search over
//! hyperparameters, and method comparison by test RMSE.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::corruption::{calibrate_beta, CorruptionKind, CorruptionSpec};
use crate::dataset::{ColumnRef, CsvOptions, Dataset};
use crate::error::{IrrError, Result};
use crate::imputation::{fit_independent, fit_mean, BaselineImputer, DEFAULT_RIDGE_EPS};
use crate::rng::{derive_seed, tags};
use crate::solver::{rmse, Hyperparams, IrrProblem, RidgeModel, SolverConfig};
use crate::theory::{generalization_gap, rademacher_bound, BoundInputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nocorr,
    Zero,
    Mean,
    #[serde(alias = "ind")]
    Independent,
    Irr,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Nocorr,
        Method::Zero,
        Method::Mean,
        Method::Independent,
        Method::Irr,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Nocorr => "no corr",
            Method::Zero => "zero imp",
            Method::Mean => "mean imp",
            Method::Independent => "ind imp",
            Method::Irr => "IRR",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Method::Nocorr => "nocorr",
            Method::Zero => "zero",
            Method::Mean => "mean",
            Method::Independent => "ind",
            Method::Irr => "irr",
        }
    }
}

impl FromStr for Method {
    type Err = IrrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nocorr" | "no_corr" | "none" => Ok(Method::Nocorr),
            "zero" => Ok(Method::Zero),
            "mean" => Ok(Method::Mean),
            "ind" | "independent" => Ok(Method::Independent),
            "irr" => Ok(Method::Irr),
            other => Err(IrrError::invalid(format!("unknown method {other:?}"))),
        }
    }
}

/// Where the missing entries come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionChoice {
    /// Missing tokens already present in the file.
    Native,
    Synthetic(CorruptionSpec),
}

fn default_train_size() -> usize {
    1000
}

fn default_trials() -> usize {
    5
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

pub fn default_grid() -> Vec<i32> {
    (-12..=10).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset_path: PathBuf,
    /// Label column, index or header name.
    pub label_column: String,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default)]
    pub skip_columns: Vec<String>,
    pub corruption: CorruptionChoice,
    /// Calibrate the corruption strength to this fraction of remaining entries.
    #[serde(default)]
    pub target_fraction: Option<f64>,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// log2 exponents used for both λ and γ.
    #[serde(default = "default_grid")]
    pub grid: Vec<i32>,
    /// Evaluate IRR on the whole (λ, γ) grid instead of coarse-to-fine.
    #[serde(default)]
    pub full_grid: bool,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Relabel to ±1 by equality with this class label, skipping label
    /// normalization.
    #[serde(default)]
    pub one_vs_all: Option<u32>,
    #[serde(default)]
    pub report_bounds: bool,
}

impl ExperimentSpec {
    pub fn new(
        dataset_path: impl Into<PathBuf>,
        label_column: impl Into<String>,
        corruption: CorruptionChoice,
    ) -> Self {
        Self {
            dataset_path: dataset_path.into(),
            label_column: label_column.into(),
            has_header: false,
            skip_columns: Vec::new(),
            corruption,
            target_fraction: None,
            train_size: default_train_size(),
            trials: default_trials(),
            methods: default_methods(),
            grid: default_grid(),
            full_grid: false,
            master_seed: 0,
            solver: SolverConfig::default(),
            one_vs_all: None,
            report_bounds: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(IrrError::invalid("trials must be >= 1"));
        }
        if self.grid.is_empty() {
            return Err(IrrError::invalid("grid must not be empty"));
        }
        if self.methods.is_empty() {
            return Err(IrrError::invalid("methods must not be empty"));
        }
        if self.train_size == 0 {
            return Err(IrrError::invalid("train_size must be >= 1"));
        }
        if let Some(f) = self.target_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(IrrError::invalid(format!(
                    "target fraction must lie in (0, 1], got {f}"
                )));
            }
        }
        if let CorruptionChoice::Synthetic(c) = &self.corruption {
            c.validate()?;
        }
        self.solver.validate()
    }

    pub fn csv_options(&self) -> CsvOptions {
        let mut opts = CsvOptions::new(
            ColumnRef::from_str(&self.label_column).expect("infallible"),
            self.has_header,
        );
        opts.skip = self
            .skip_columns
            .iter()
            .map(|s| ColumnRef::from_str(s).expect("infallible"))
            .collect();
        opts
    }

    fn methods_sorted(&self) -> Vec<Method> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// One grid point of one method, scored on every trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lambda_exp: i32,
    pub gamma_exp: Option<i32>,
    /// Test RMSE per trial; `None` marks a failed fit.
    pub trial_rmse: Vec<Option<f64>>,
    /// Trials whose solve stopped before reaching the gap tolerance.
    pub nonconverged_trials: Vec<usize>,
    pub errors: Vec<String>,
}

impl GridCell {
    fn mean(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.trial_rmse.iter().copied().collect();
        v.map(|v| MeanStd::of(&v).mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub best_lambda: f64,
    pub best_gamma: Option<f64>,
    /// Test RMSE per trial at the selected grid point.
    pub trial_rmse: Vec<f64>,
    pub cells_evaluated: usize,
    pub cells_failed: usize,
    pub cells_nonconverged: usize,
    pub grid: Vec<GridCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub trial: usize,
    pub inputs: BoundInputs,
    pub rademacher_bound: f64,
    pub delta: f64,
    pub generalization_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub n: usize,
    pub d: usize,
    pub corruption: String,
    pub beta: Option<f64>,
    pub target_fraction: Option<f64>,
    pub train_size: usize,
    pub trials: usize,
    pub master_seed: u64,
    /// Fraction of observed entries in the training sets.
    pub fraction_remaining: MeanStd,
    pub fraction_remaining_trials: Vec<f64>,
    pub methods: Vec<MethodReport>,
    /// Methods requested but not run, with the reason.
    pub skipped: Vec<String>,
    pub bounds: Vec<BoundReport>,
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Header and one row: dataset, F, then `mean ± std` per method.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("dataset\tcorruption\tF");
        for m in Method::ALL {
            write!(out, "\t{}", m.label()).unwrap();
        }
        out.push('\n');
        write!(
            out,
            "{}\t{}\t{:.3} ± {:.3}",
            self.dataset,
            self.corruption,
            self.fraction_remaining.mean,
            self.fraction_remaining.std
        )
        .unwrap();
        for m in Method::ALL {
            match self.method(m) {
                Some(r) => write!(out, "\t{:.3} ± {:.3}", r.rmse_mean, r.rmse_std).unwrap(),
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
        out
    }
}

struct Trial {
    train: Dataset,
    test: Dataset,
    clean: Option<(Dataset, Dataset)>,
    problem: Option<IrrProblem>,
}

/// Load the dataset named in `spec` and run the experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let data = Dataset::load_csv(&spec.dataset_path, &spec.csv_options())?;
    let name = spec.dataset_path.file_stem().map_or_else(
        || "dataset".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    run_experiment_on(&data, &name, spec)
}

/// Relabel to `+1` where the label equals `digit` and `-1` elsewhere.
pub fn one_vs_all_labels(data: &Dataset, digit: u32) -> Result<DVector<f64>> {
    let y = DVector::from_iterator(
        data.n(),
        data.y()
            .iter()
            .map(|&v| if v == f64::from(digit) { 1.0 } else { -1.0 }),
    );
    let pos = y.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 || pos == y.len() {
        return Err(IrrError::invalid(format!(
            "one-vs-all labels for class {digit} are degenerate ({pos} of {} positive)",
            y.len()
        )));
    }
    Ok(y)
}

/// Run the experiment on an already loaded (not yet normalized) dataset.
pub fn run_experiment_on(
    raw: &Dataset,
    name: &str,
    spec: &ExperimentSpec,
) -> Result<ExperimentReport> {
    spec.validate()?;
    let start = Instant::now();
    let mut data = raw.normalize();
    if let Some(digit) = spec.one_vs_all {
        let y = one_vs_all_labels(raw, digit)?;
        data = data.with_labels(y)?;
    }
    if spec.train_size >= data.n() {
        return Err(IrrError::invalid(format!(
            "train_size {} leaves no test rows in a dataset of {}",
            spec.train_size,
            data.n()
        )));
    }

    let (corruption, beta) = match &spec.corruption {
        CorruptionChoice::Native => ("native".to_string(), None),
        CorruptionChoice::Synthetic(c) => {
            let mut c = c.clone();
            if let Some(target) = spec.target_fraction {
                if c.kind == CorruptionKind::ColumnBlock {
                    warn!("target fraction ignored for column corruption");
                } else {
                    let seed = derive_seed(spec.master_seed, tags::CALIBRATION);
                    c.beta = calibrate_beta(data.x(), c.kind, target, seed)?;
                    info!(
                        "calibrated beta = {:.4} for target fraction {target}",
                        c.beta
                    );
                }
            }
            let label = match c.kind {
                CorruptionKind::Independent => "independent",
                CorruptionKind::Dependent => "dependent",
                CorruptionKind::ColumnBlock => "column",
            };
            (label.to_string(), Some(c))
        }
    };

    let methods = spec.methods_sorted();
    let mut skipped = Vec::new();
    let native = beta.is_none();
    let mut trials = Vec::with_capacity(spec.trials);
    let mut fractions = Vec::with_capacity(spec.trials);
    for t in 0..spec.trials {
        let ts = derive_seed(spec.master_seed, tags::TRIAL + t as u64);
        let (train, test) = data.split(spec.train_size, derive_seed(ts, tags::SPLIT))?;
        let (ctrain, ctest, clean) = match &beta {
            None => (train, test, None),
            Some(c) => {
                let tr_mask = c
                    .with_seed(derive_seed(ts, tags::TRAIN_MASK))
                    .apply(train.x())?
                    .mask;
                let te_mask = c
                    .with_seed(derive_seed(ts, tags::TEST_MASK))
                    .apply(test.x())?
                    .mask;
                let ctrain = train.with_mask(&tr_mask)?;
                let ctest = test.with_mask(&te_mask)?;
                (ctrain, ctest, Some((train, test)))
            }
        };
        fractions.push(ctrain.stats().fraction_remaining);
        trials.push(Trial {
            train: ctrain,
            test: ctest,
            clean,
            problem: None,
        });
    }
    if native && methods.contains(&Method::Nocorr) {
        skipped.push("nocorr: no uncorrupted version of natively missing data".to_string());
    }

    let mut reports = Vec::new();
    for &method in &methods {
        if method == Method::Nocorr && native {
            continue;
        }
        let ctx = || IrrError::Experiment {
            trial: 0,
            method: method.key().to_string(),
            source: Box::new(IrrError::invalid("no grid point could be scored")),
        };
        let report = if method == Method::Irr {
            irr_search(spec, &mut trials)?
        } else {
            baseline_search(spec, method, &trials)?
        }
        .ok_or_else(ctx)?;
        info!(
            "{}: rmse {:.4} ± {:.4} (λ = {}, γ = {:?})",
            method.key(),
            report.rmse_mean,
            report.rmse_std,
            report.best_lambda,
            report.best_gamma
        );
        reports.push(report);
    }

    let mut bounds = Vec::new();
    if spec.report_bounds {
        if let Some(r) = reports.iter().find(|r| r.method == Method::Irr) {
            let hp = Hyperparams::new(r.best_lambda, r.best_gamma.unwrap_or(0.0))?;
            for (t, trial) in trials.iter().enumerate() {
                let inputs = BoundInputs::from_dataset(&trial.train, hp);
                bounds.push(BoundReport {
                    trial: t,
                    inputs,
                    rademacher_bound: rademacher_bound(&inputs)?,
                    delta: 0.05,
                    generalization_gap: generalization_gap(&inputs, 0.05)?,
                });
            }
        }
    }

    Ok(ExperimentReport {
        dataset: name.to_string(),
        n: data.n(),
        d: data.d(),
        corruption,
        beta: beta.map(|c| c.beta),
        target_fraction: spec.target_fraction,
        train_size: spec.train_size,
        trials: spec.trials,
        master_seed: spec.master_seed,
        fraction_remaining: MeanStd::of(&fractions),
        fraction_remaining_trials: fractions,
        methods: reports,
        skipped,
        bounds,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

fn exp2(e: i32) -> f64 {
    2f64.powi(e)
}

fn baseline_search(
    spec: &ExperimentSpec,
    method: Method,
    trials: &[Trial],
) -> Result<Option<MethodReport>> {
    // imputers depend only on the training data, not on λ
    let mut fitted: Vec<(Dataset, Dataset, BaselineImputer)> = Vec::new();
    for (t, trial) in trials.iter().enumerate() {
        let wrap = |e: IrrError| IrrError::Experiment {
            trial: t,
            method: method.key().to_string(),
            source: Box::new(e),
        };
        let (train, test) = match method {
            Method::Nocorr => trial
                .clean
                .clone()
                .expect("synthetic corruption keeps clean data"),
            _ => (trial.train.clone(), trial.test.clone()),
        };
        let imputer = match method {
            Method::Nocorr | Method::Zero => BaselineImputer::Zero,
            Method::Mean => fit_mean(&train),
            Method::Independent => fit_independent(&train, DEFAULT_RIDGE_EPS).map_err(wrap)?,
            Method::Irr => unreachable!("handled by irr_search"),
        };
        fitted.push((train, test, imputer));
    }
    let cells: Vec<GridCell> = spec
        .grid
        .iter()
        .map(|&le| {
            let mut cell = GridCell {
                lambda_exp: le,
                gamma_exp: None,
                trial_rmse: Vec::new(),
                nonconverged_trials: Vec::new(),
                errors: Vec::new(),
            };
            for (t, (train, test, imputer)) in fitted.iter().enumerate() {
                let score =
                    RidgeModel::fit(imputer.clone(), train, exp2(le)).and_then(|m| rmse(&m, test));
                match score {
                    Ok(v) => cell.trial_rmse.push(Some(v)),
                    Err(e) => {
                        cell.trial_rmse.push(None);
                        cell.errors.push(format!("trial {t}: {e}"));
                    }
                }
            }
            cell
        })
        .collect();
    Ok(summarize(method, cells))
}

fn summarize(method: Method, cells: Vec<GridCell>) -> Option<MethodReport> {
    let best = cells
        .iter()
        .filter_map(|c| c.mean().map(|m| (m, c)))
        .min_by(|a, b| a.0.total_cmp(&b.0))?
        .1
        .clone();
    let trial_rmse: Vec<f64> = best
        .trial_rmse
        .iter()
        .map(|v| v.expect("complete cell"))
        .collect();
    let stats = MeanStd::of(&trial_rmse);
    Some(MethodReport {
        method,
        rmse_mean: stats.mean,
        rmse_std: stats.std,
        best_lambda: exp2(best.lambda_exp),
        best_gamma: best.gamma_exp.map(exp2),
        trial_rmse,
        cells_evaluated: cells.len(),
        cells_failed: cells.iter().filter(|c| !c.errors.is_empty()).count(),
        cells_nonconverged: cells
            .iter()
            .filter(|c| !c.nonconverged_trials.is_empty())
            .count(),
        grid: cells,
    })
}

fn irr_cell(spec: &ExperimentSpec, trials: &[Trial], le: i32, ge: i32) -> GridCell {
    let mut cell = GridCell {
        lambda_exp: le,
        gamma_exp: Some(ge),
        trial_rmse: Vec::new(),
        nonconverged_trials: Vec::new(),
        errors: Vec::new(),
    };
    let hp = Hyperparams {
        lambda: exp2(le),
        gamma: exp2(ge),
    };
    for (t, trial) in trials.iter().enumerate() {
        let problem = trial.problem.as_ref().expect("problem prepared");
        match problem.solve(hp, &spec.solver).and_then(|s| {
            let r = rmse(&s, &trial.test)?;
            Ok((r, s.converged()))
        }) {
            Ok((r, converged)) => {
                cell.trial_rmse.push(Some(r));
                if !converged {
                    cell.nonconverged_trials.push(t);
                }
            }
            Err(e) => {
                cell.trial_rmse.push(None);
                cell.errors.push(format!("trial {t}: {e}"));
            }
        }
    }
    info!(
        "irr λ = 2^{le}, γ = 2^{ge}: mean rmse {:?}",
        cell.mean().map(|v| (v * 1e4).round() / 1e4)
    );
    cell
}

/// Coarse-to-fine search over `(λ, γ)` unless `full_grid` is set.
fn irr_search(spec: &ExperimentSpec, trials: &mut [Trial]) -> Result<Option<MethodReport>> {
    for (t, trial) in trials.iter_mut().enumerate() {
        let p = IrrProblem::new(&trial.train).map_err(|e| IrrError::Experiment {
            trial: t,
            method: "irr".into(),
            source: Box::new(e),
        })?;
        trial.problem = Some(p);
    }
    let grid = &spec.grid;
    let mut done: BTreeMap<(usize, usize), GridCell> = BTreeMap::new();
    let eval = |i: usize, j: usize, done: &mut BTreeMap<(usize, usize), GridCell>| {
        done.entry((i, j))
            .or_insert_with(|| irr_cell(spec, trials, grid[i], grid[j]))
            .mean()
    };
    if spec.full_grid {
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                eval(i, j, &mut done);
            }
        }
    } else {
        let coarse: Vec<usize> = (0..grid.len()).step_by(3).collect();
        let mut best: Option<(f64, usize, usize)> = None;
        for &i in &coarse {
            for &j in &coarse {
                if let Some(v) = eval(i, j, &mut done) {
                    if best.is_none_or(|b| v < b.0) {
                        best = Some((v, i, j));
                    }
                }
            }
        }
        if let Some((_, bi, bj)) = best {
            for i in bi.saturating_sub(1)..=(bi + 1).min(grid.len() - 1) {
                for j in bj.saturating_sub(1)..=(bj + 1).min(grid.len() - 1) {
                    eval(i, j, &mut done);
                }
            }
        }
    }
    for trial in trials.iter_mut() {
        trial.problem = None;
    }
    Ok(summarize(Method::Irr, done.into_values().collect()))
}

/// One row of a fraction sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub target_fraction: f64,
    pub fraction_remaining: f64,
    pub method: Method,
    pub rmse_mean: f64,
    pub rmse_std: f64,
}

/// Run the experiment once per target fraction.
pub fn sweep_fraction(
    spec: &ExperimentSpec,
    fractions: &[f64],
) -> Result<(Vec<SweepRow>, Vec<ExperimentReport>)> {
    let data = Dataset::load_csv(&spec.dataset_path, &spec.csv_options())?;
    sweep_fraction_on(&data, spec, fractions)
}

pub fn sweep_fraction_on(
    data: &Dataset,
    spec: &ExperimentSpec,
    fractions: &[f64],
) -> Result<(Vec<SweepRow>, Vec<ExperimentReport>)> {
    if let Some(&f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(IrrError::invalid(format!("fraction {f} outside (0, 1]")));
    }
    if !matches!(spec.corruption, CorruptionChoice::Synthetic(_)) {
        return Err(IrrError::invalid(
            "a fraction sweep needs synthetic corruption",
        ));
    }
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &f in fractions {
        let mut s = spec.clone();
        s.target_fraction = Some(f);
        let report = run_experiment_on(data, "sweep", &s)?;
        for r in &report.methods {
            rows.push(SweepRow {
                target_fraction: f,
                fraction_remaining: report.fraction_remaining.mean,
                method: r.method,
                rmse_mean: r.rmse_mean,
                rmse_std: r.rmse_std,
            });
        }
        reports.push(report);
    }
    Ok((rows, reports))
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("target_fraction\tfraction_remaining\tmethod\trmse_mean\trmse_std\n");
    for r in rows {
        writeln!(
            out,
            "{}\t{:.4}\t{}\t{:.5}\t{:.5}",
            r.target_fraction,
            r.fraction_remaining,
            r.method.key(),
            r.rmse_mean,
            r.rmse_std
        )
        .unwrap();
    }
    out
}

/// One-vs-all regression on ±1 labels under the central-column corruption.
pub fn run_onevsall(spec: &ExperimentSpec, digit: u32) -> Result<ExperimentReport> {
    if digit > 9 {
        return Err(IrrError::invalid(format!(
            "digit must be 0..9, got {digit}"
        )));
    }
    let mut s = spec.clone();
    s.one_vs_all = Some(digit);
    if !matches!(&s.corruption, CorruptionChoice::Synthetic(c) if c.kind == CorruptionKind::ColumnBlock)
    {
        s.corruption = CorruptionChoice::Synthetic(CorruptionSpec::optdigits_columns(0));
    }
    s.target_fraction = None;
    let data = Dataset::load_csv(&s.dataset_path, &s.csv_options())?;
    if data.d() != 64 {
        return Err(IrrError::dim(format!(
            "one-vs-all expects 64 pixel features, got {}",
            data.d()
        )));
    }
    run_experiment_on(&data, &format!("digit-{digit}"), &s)
}
