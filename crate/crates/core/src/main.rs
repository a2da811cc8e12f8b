use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use irr::bench::{
    run_experiment, run_onevsall, sweep_fraction, sweep_tsv, CorruptionChoice, ExperimentReport,
    ExperimentSpec, Method,
};
use irr::corruption::CorruptionSpec;
use irr::solver::SolverConfig;
use irr::Result;

#[derive(Parser)]
#[command(name = "irr", version, about = "Imputed ridge regression benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare imputation methods on one dataset.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = CorruptionArg::Independent)]
        corruption: CorruptionArg,
        /// Calibrate corruption so this fraction of entries stays observed.
        #[arg(long)]
        target_fraction: Option<f64>,
        /// Corruption strength when no target fraction is given.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
    },
    /// Run the benchmark at several observed fractions; writes plot data.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = CorruptionArg::Independent)]
        corruption: CorruptionArg,
        #[arg(long, value_delimiter = ',', required = true)]
        fractions: Vec<f64>,
    },
    /// One-vs-all regression on optdigits with central column corruption.
    Digits {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        digit: u32,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    data: PathBuf,
    /// Label column: zero-based index or header name. Defaults to the last column.
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    has_header: bool,
    /// Columns to drop, such as identifiers.
    #[arg(long, value_delimiter = ',')]
    skip_cols: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    train_size: usize,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "nocorr,zero,mean,ind,irr"
    )]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report (or sweep reports) destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table or plot data in TSV.
    #[arg(long)]
    tsv: Option<PathBuf>,
    /// Evaluate IRR on the full (λ, γ) grid.
    #[arg(long)]
    full_grid: bool,
    #[arg(long)]
    report_bounds: bool,
    /// JSON file with solver settings (tol, max_outer, inner_steps, eps_psd, method).
    #[arg(long)]
    solver_config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorruptionArg {
    Independent,
    Dependent,
    Column,
    Native,
}

impl CorruptionArg {
    fn choice(self, beta: f64) -> CorruptionChoice {
        match self {
            CorruptionArg::Independent => {
                CorruptionChoice::Synthetic(CorruptionSpec::independent(beta, 0))
            }
            CorruptionArg::Dependent => {
                CorruptionChoice::Synthetic(CorruptionSpec::dependent(beta, 0))
            }
            CorruptionArg::Column => {
                CorruptionChoice::Synthetic(CorruptionSpec::optdigits_columns(0))
            }
            CorruptionArg::Native => CorruptionChoice::Native,
        }
    }
}

fn last_column(path: &Path, has_header: bool) -> Result<String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| irr::IrrError::InvalidArgument(format!("{}: {e}", path.display())))?;
    let width = match reader.records().next() {
        Some(Ok(r)) => r.len(),
        _ => {
            return Err(irr::IrrError::InvalidArgument(format!(
                "{} has no rows",
                path.display()
            )))
        }
    };
    Ok((width.saturating_sub(1)).to_string())
}

fn spec_from(common: &Common, corruption: CorruptionChoice) -> Result<ExperimentSpec> {
    let label = match &common.label_col {
        Some(l) => l.clone(),
        None => last_column(&common.data, common.has_header)?,
    };
    let mut spec = ExperimentSpec::new(&common.data, label, corruption);
    spec.has_header = common.has_header;
    spec.skip_columns = common.skip_cols.clone();
    spec.train_size = common.train_size;
    spec.trials = common.trials;
    spec.methods = common.methods.clone();
    spec.master_seed = common.seed;
    spec.full_grid = common.full_grid;
    spec.report_bounds = common.report_bounds;
    if let Some(path) = &common.solver_config {
        spec.solver = SolverConfig::from_json_file(path)?;
    }
    Ok(spec)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| irr::IrrError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    info!("wrote {}", path.display());
    Ok(())
}

fn emit(common: &Common, report: &ExperimentReport) -> Result<()> {
    let tsv = report.to_tsv();
    print!("{tsv}");
    println!("runtime {:.1} s", report.runtime_seconds);
    for r in &report.methods {
        if r.cells_nonconverged > 0 || r.cells_failed > 0 {
            println!(
                "{}: {} grid cells flagged non-converged, {} failed",
                r.method.key(),
                r.cells_nonconverged,
                r.cells_failed
            );
        }
    }
    for s in &report.skipped {
        println!("skipped {s}");
    }
    if let Some(out) = &common.out {
        write(out, &report.to_json()?)?;
    }
    if let Some(path) = &common.tsv {
        write(path, &tsv)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench {
            common,
            corruption,
            target_fraction,
            beta,
        } => {
            let mut spec = spec_from(&common, corruption.choice(beta))?;
            spec.target_fraction = target_fraction;
            let report = run_experiment(&spec)?;
            emit(&common, &report)
        }
        Command::Sweep {
            common,
            corruption,
            fractions,
        } => {
            let spec = spec_from(&common, corruption.choice(1.0))?;
            let (rows, reports) = sweep_fraction(&spec, &fractions)?;
            let tsv = sweep_tsv(&rows);
            print!("{tsv}");
            if let Some(out) = &common.out {
                write(out, &serde_json::to_string_pretty(&reports)?)?;
            }
            if let Some(path) = &common.tsv {
                write(path, &tsv)?;
            }
            Ok(())
        }
        Command::Digits { common, digit } => {
            let spec = spec_from(&common, CorruptionArg::Column.choice(0.0))?;
            let report = run_onevsall(&spec, digit)?;
            emit(&common, &report)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
