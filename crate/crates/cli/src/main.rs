use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adatrace::estimators::AdaptiveConfig;
use adatrace::harness::{
    failure_table, generate_fixture, run_estimator, run_experiment_on, write_csv, Estimator, ExperimentSpec, Fixture,
    FixtureSpec, RunParams, FIXTURE_KINDS,
};
use adatrace::io::read_matrix_market;
use adatrace::linop::SparseOperator;
use adatrace::rangefinder::BlockSchedule;
use adatrace::TraceError;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "adatrace",
    version,
    about = "Adaptive stochastic trace estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the trace of one fixture or Matrix Market file and print a JSON report.
    Estimate(EstimateArgs),
    /// Run an experiment described by a JSON config and write CSV rows.
    Sweep {
        config: PathBuf,
        /// Overrides the config's output path; `-` writes to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo failure fractions of A-Hutch++ over a grid of tolerances and deltas.
    FailureTable(FailureArgs),
    /// Fixture catalogue.
    Fixtures {
        #[command(subcommand)]
        action: FixturesAction,
    },
}

#[derive(Subcommand)]
enum FixturesAction {
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum Schedule {
    Coarse,
    Batched,
}

impl From<Schedule> for BlockSchedule {
    fn from(s: Schedule) -> Self {
        match s {
            Schedule::Coarse => BlockSchedule::Coarse,
            Schedule::Batched => BlockSchedule::Batched,
        }
    }
}

#[derive(clap::Args)]
struct EstimateArgs {
    /// Fixture as `kind:key=value,...`, e.g. `synthetic_algebraic:c=1,n=1000`.
    #[arg(long, conflicts_with = "matrix_file", required_unless_present = "matrix_file")]
    fixture: Option<String>,
    /// Symmetric Matrix Market file used directly as the operator.
    #[arg(long)]
    matrix_file: Option<PathBuf>,
    #[arg(long)]
    estimator: String,
    /// Absolute tolerance for adaptive estimators.
    #[arg(long, conflicts_with = "precision")]
    eps: Option<f64>,
    /// Relative tolerance `eps = |tr(A)| / 2^p` (needs a known trace).
    #[arg(long)]
    precision: Option<u32>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Matvec budget for fixed-budget estimators.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    block: usize,
    #[arg(long, value_enum, default_value_t = Schedule::Coarse)]
    schedule: Schedule,
}

#[derive(clap::Args)]
struct FailureArgs {
    #[arg(long)]
    fixture: String,
    /// Tolerances as multiples of `|tr(A)|`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1])]
    eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1])]
    delta: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    block: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> TraceError + '_ {
    move |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), TraceError> {
    match output {
        Some(path) if path != Path::new("-") => fs::write(path, text).map_err(io_error(path)),
        _ => io::stdout()
            .write_all(text.as_bytes())
            .map_err(io_error(Path::new("<stdout>"))),
    }
}

fn matrix_fixture(path: &Path) -> Result<Fixture, TraceError> {
    let matrix = read_matrix_market(path)?;
    let truth = matrix.diagonal().iter().sum();
    Ok(Fixture {
        id: format!("matrix_file:path={}", path.display()),
        op: Box::new(SparseOperator::new(matrix)?),
        truth: Some(truth),
        psd: false,
    })
}

fn estimate(args: EstimateArgs) -> Result<(), TraceError> {
    let estimator: Estimator = args.estimator.parse()?;
    let fixture = match (&args.fixture, &args.matrix_file) {
        (Some(spec), _) => generate_fixture(&spec.parse::<FixtureSpec>()?)?,
        (None, Some(path)) => matrix_fixture(path)?,
        (None, None) => return Err(TraceError::Config("pass --fixture or --matrix-file".into())),
    };
    let params = if estimator.is_adaptive() {
        if args.budget.is_some() {
            return Err(TraceError::Config(format!(
                "{estimator} is adaptive; pass --eps or --precision, not --budget"
            )));
        }
        let eps = match (args.eps, args.precision) {
            (Some(eps), _) => eps,
            (None, Some(p)) => {
                let truth = fixture
                    .truth
                    .ok_or_else(|| TraceError::Config("--precision needs a fixture with a known trace".into()))?;
                truth.abs() / 2f64.powi(p as i32)
            }
            (None, None) => return Err(TraceError::Config(format!("{estimator} needs --eps or --precision"))),
        };
        RunParams::Adaptive(
            AdaptiveConfig::practical(eps, args.delta, args.seed).with_block(args.block, args.schedule.into()),
        )
    } else {
        if args.eps.is_some() || args.precision.is_some() {
            return Err(TraceError::Config(format!(
                "{estimator} takes --budget, not a tolerance"
            )));
        }
        let budget = args
            .budget
            .ok_or_else(|| TraceError::Config(format!("{estimator} needs --budget")))?;
        RunParams::Budget(budget)
    };
    let report = run_estimator(fixture.op.as_ref(), estimator, params, args.seed)?;
    let relative_error = fixture.truth.map(|t| (report.estimate - t).abs() / t.abs());
    let out = serde_json::json!({
        "fixture": fixture.id,
        "estimator": estimator.name(),
        "truth": fixture.truth,
        "relative_error": relative_error,
        "report": report,
    });
    let text = serde_json::to_string_pretty(&out).map_err(|e| TraceError::Config(e.to_string()))?;
    emit(&(text + "\n"), None)
}

fn sweep(config: &Path, output: Option<PathBuf>) -> Result<(), TraceError> {
    let text = fs::read_to_string(config).map_err(io_error(config))?;
    let mut spec: ExperimentSpec =
        serde_json::from_str(&text).map_err(|e| TraceError::Config(format!("{}: {e}", config.display())))?;
    if output.is_some() {
        spec.output = output;
    }
    spec.validate()?;
    let fixture = generate_fixture(&spec.fixture)?;
    let rows = run_experiment_on(&spec, &fixture)?;
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv).map_err(io_error(Path::new("<buffer>")))?;
    emit(&String::from_utf8_lossy(&csv), spec.output.as_deref())
}

fn failures(args: FailureArgs) -> Result<(), TraceError> {
    let fixture = generate_fixture(&args.fixture.parse::<FixtureSpec>()?)?;
    let table = failure_table(&fixture, &args.eps, &args.delta, args.repeats, args.seed, args.block)?;
    emit(&table.to_csv(), args.output.as_deref())
}

fn list_fixtures() -> Result<(), TraceError> {
    let mut text = String::new();
    for (kind, params, about) in FIXTURE_KINDS {
        text.push_str(&format!("{kind:<22} {params:<40} {about}\n"));
    }
    emit(&text, None)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => estimate(args),
        Command::Sweep { config, output } => sweep(&config, output),
        Command::FailureTable(args) => failures(args),
        Command::Fixtures {
            action: FixturesAction::List,
        } => list_fixtures(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
