//! `censcov` command-line tool: fit a single dataset, run simulation
//! studies, calibrate censoring, draw Lorenz censoring curves, and run
//! resampling studies.

mod input;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use censcov::metrics::lorenz_curve;
use censcov::report::{
    lorenz_csv, power_csv, resample_csv, surrogacy_csv, surrogacy_rows, table_csv,
};
use censcov::sim::{Calibration, ReplicationSummary};
use censcov::{
    run_replications, run_resample_study, Error, FitOptions, Generator, Method, SimulationPlan,
    StudyDesign, TreatmentHandling,
};

use input::{sha256_hex, Fingerprint, Schema, Table};

#[derive(Debug)]
pub struct CliError {
    pub exit: u8,
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn parse(message: String) -> Self {
        Self {
            exit: 2,
            code: "parse_error".into(),
            message,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            exit: 2,
            code: "io_error".into(),
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let exit = match e {
            Error::NonConvergence { .. }
            | Error::SingularHessian { .. }
            | Error::MonotoneLikelihood { .. }
            | Error::NonFiniteLikelihood
            | Error::NonBracketing { .. } => 3,
            Error::TooFewRecords(_)
            | Error::NoEvents
            | Error::NoObservedCovariate
            | Error::EmptyQualifyingSet { .. }
            | Error::AllSubjectsExcluded
            | Error::EmptySubset
            | Error::ZeroVariance { .. }
            | Error::AllDegenerate
            | Error::NoCensoring
            | Error::EmptyCell { .. } => 4,
            _ => 2,
        };
        Self {
            exit,
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "censcov",
    version,
    about = "Cox regression with a right-censored covariate"
)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one estimator to a CSV dataset and print a JSON report.
    Fit(FitArgs),
    /// Run a simulation study from a JSON config.
    Simulate(SimulateArgs),
    /// Calibrate censoring parameters for a JSON config.
    Calibrate(CalibrateArgs),
    /// Lorenz curve of covariate censoring.
    Lorenz(LorenzArgs),
    /// Arm-stratified resampling study on a CSV dataset.
    Resample(ResampleArgs),
}

#[derive(Args)]
struct SchemaArgs {
    /// Outcome time column.
    #[arg(long)]
    time: String,
    /// Outcome event indicator column (1 = event).
    #[arg(long)]
    status: String,
    /// Censored covariate column.
    #[arg(long)]
    cov_time: String,
    /// Covariate indicator column (1 = observed).
    #[arg(long)]
    cov_status: String,
    /// Fully observed covariate columns.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

impl SolverArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..FitOptions::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    csv: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Treatment column, added after the covariates.
    #[arg(long)]
    treatment: Option<String>,
    /// proposed, cc, impute, or full.
    #[arg(long, default_value = "proposed")]
    method: String,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LorenzArgs {
    /// CSV with true covariate values.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    csv: Option<PathBuf>,
    /// Column of true covariate values.
    #[arg(long, default_value = "w")]
    truth: String,
    /// Covariate indicator column (1 = observed).
    #[arg(long, default_value = "cov_status")]
    cov_status: String,
    /// Scenario config to simulate from instead of a CSV.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample size when simulating.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ResampleArgs {
    csv: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Treatment column to shuffle.
    #[arg(
        long,
        conflicts_with = "synthesize_treatment",
        required_unless_present = "synthesize_treatment"
    )]
    treatment: Option<String>,
    /// Replace treatment with Bernoulli(0.5) draws.
    #[arg(long)]
    synthesize_treatment: bool,
    #[arg(long, value_delimiter = ',', default_value = "100,200,500")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_plan(path: &Path, seed: Option<u64>) -> CliResult<(SimulationPlan, String)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut plan = SimulationPlan::from_json(&text)?;
    if let Some(seed) = seed {
        for s in &mut plan.settings {
            s.seed = seed;
        }
    }
    Ok((plan, sha256_hex(text.as_bytes())))
}

#[derive(Serialize)]
struct FitReport {
    method: Method,
    parameters: Vec<String>,
    estimates: Vec<f64>,
    standard_errors: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    wald_z: Vec<f64>,
    wald_p: Vec<f64>,
    loglik: f64,
    iterations: usize,
    converged: bool,
    excluded_subjects: usize,
    n_used: usize,
    init_fallback: bool,
    input: Fingerprint,
}

fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let method = Method::parse(&args.method)
        .ok_or_else(|| CliError::parse(format!("unknown method `{}`", args.method)))?;
    let table = Table::read(&args.csv)?;
    let schema = Schema {
        time: args.schema.time.clone(),
        status: args.schema.status.clone(),
        cov_time: args.schema.cov_time.clone(),
        cov_status: args.schema.cov_status.clone(),
        covariates: args.schema.covariates.clone(),
        treatment: args.treatment.clone(),
    };
    let dataset = schema.dataset(&table)?;
    let fit = method.fit_observed(&dataset, &args.solver.options())?;
    let d = fit.dim();
    let report = FitReport {
        method,
        parameters: schema.parameter_names(),
        estimates: fit.estimates(),
        standard_errors: fit.standard_errors(),
        covariance: (0..d)
            .map(|i| (0..d).map(|j| fit.covariance[(i, j)]).collect())
            .collect(),
        wald_z: fit.wald_z.clone(),
        wald_p: fit.wald_p.clone(),
        loglik: fit.loglik,
        iterations: fit.iterations,
        converged: fit.converged,
        excluded_subjects: fit.excluded_subjects,
        n_used: fit.n_used,
        init_fallback: fit.init_fallback,
        input: table.fingerprint(),
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_output(args.out.as_deref(), &text)
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let (plan, config_sha256) = read_plan(&args.config, args.seed)?;
    let reps = args.reps.or(plan.reps).unwrap_or(2000);
    let options = args.solver.options();
    let mut summaries: Vec<ReplicationSummary> = Vec::new();
    let mut runs = Vec::new();
    for config in &plan.settings {
        let generator = Generator::new(config.clone())?;
        let run = run_replications(&generator, reps, &Method::ALL, &options)?;
        summaries.push(run.summarize());
        runs.push(run);
    }
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let write = |name: &str, text: &str| {
        let path = args.out.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    };
    write("table.csv", &table_csv(&summaries, 0)?)?;
    write("power.csv", &power_csv(&summaries)?)?;
    let mut outputs = vec!["table.csv", "power.csv", "summary.json"];
    if plan.settings[0].scenario() == 2 {
        write("surrogacy.csv", &surrogacy_csv(&surrogacy_rows(&runs)?)?)?;
        outputs.push("surrogacy.csv");
    }
    write(
        "summary.json",
        &(serde_json::to_string_pretty(&summaries).expect("summaries serialize") + "\n"),
    )?;
    let manifest = json!({
        "tool": "censcov",
        "version": env!("CARGO_PKG_VERSION"),
        "config_file": args.config.display().to_string(),
        "config_sha256": config_sha256,
        "reps": reps,
        "tol": options.tol,
        "max_iter": options.max_iter,
        "settings": plan.settings,
        "calibrations": runs.iter().map(|r| r.calibration).collect::<Vec<Calibration>>(),
        "outputs": outputs,
    });
    write(
        "manifest.json",
        &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
    )
}

fn cmd_calibrate(args: &CalibrateArgs) -> CliResult<()> {
    let (plan, _) = read_plan(&args.config, args.seed)?;
    let mut rows = Vec::new();
    for config in &plan.settings {
        let generator = Generator::new(config.clone())?;
        let check = generator.generate_n(100_000, &mut censcov::sim::stream_rng(config.seed, 0))?;
        rows.push(json!({
            "setting": config,
            "calibration": generator.calibration(),
            "achieved_covariate_censoring": check.covariate_censoring,
            "achieved_outcome_censoring": check.outcome_censoring,
        }));
    }
    let text = serde_json::to_string_pretty(&rows).expect("calibration serializes") + "\n";
    write_output(args.out.as_deref(), &text)
}

fn cmd_lorenz(args: &LorenzArgs) -> CliResult<()> {
    let (w, censored): (Vec<f64>, Vec<bool>) = match (&args.csv, &args.config) {
        (Some(path), _) => {
            let table = Table::read(path)?;
            let w = table.reals(&args.truth)?;
            let censored = table
                .flags(&args.cov_status)?
                .iter()
                .map(|&e| e == 0)
                .collect();
            (w, censored)
        }
        (None, Some(path)) => {
            let (plan, _) = read_plan(path, args.seed)?;
            let config = plan.settings[0].clone();
            let seed = config.seed;
            let generator = Generator::new(config)?;
            let data = generator.generate_n(args.n, &mut censcov::sim::stream_rng(seed, 0))?;
            let censored = data.dataset.records().iter().map(|r| r.eta == 0).collect();
            (data.truth_w, censored)
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    let curve = lorenz_curve(&w, &censored)?;
    write_output(args.out.as_deref(), &lorenz_csv(&curve)?)
}

fn cmd_resample(args: &ResampleArgs) -> CliResult<()> {
    if !args.schema.covariates.is_empty() {
        return Err(CliError::parse(
            "resample fits the covariate and treatment only; drop --covariates".into(),
        ));
    }
    let table = Table::read(&args.csv)?;
    let schema = Schema {
        time: args.schema.time.clone(),
        status: args.schema.status.clone(),
        cov_time: args.schema.cov_time.clone(),
        cov_status: args.schema.cov_status.clone(),
        covariates: Vec::new(),
        treatment: args.treatment.clone(),
    };
    let dataset = schema.dataset(&table)?;
    let treatment = if args.synthesize_treatment {
        TreatmentHandling::Synthesize
    } else {
        TreatmentHandling::Shuffle { column: 0 }
    };
    let design = StudyDesign {
        subset_sizes: args.sizes.clone(),
        n_resamples: args.reps,
        ..StudyDesign::new(treatment, args.seed)
    };
    let study = run_resample_study(&dataset, &design, &args.solver.options())?;
    write_output(args.out.as_deref(), &resample_csv(&study)?)
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::parse(e.to_string()))?;
    }
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Lorenz(a) => cmd_lorenz(a),
        Command::Resample(a) => cmd_resample(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit)
        }
    }
}
