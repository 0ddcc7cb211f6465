use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;
use serde_json::Value;

use multiknockoff::diag::{diag_summary, equi_diag, solve_diag, DiagMethod, DiagSummary, DiagonalS};
use multiknockoff::gaussian::{knockoffs_for, MultiKnockoffSample};
use multiknockoff::harness::config::{ExperimentConfig, ExperimentKind};
use multiknockoff::harness::data::ResponseKind;
use multiknockoff::harness::io::{parse_csv, read_csv_vector, read_matrix, write_csv_matrix, write_csv_vector};
use multiknockoff::harness::report::run_experiment;
use multiknockoff::importance::{fit_importance, LambdaChoice, ModelKind};
use multiknockoff::linalg::{CorrelationMatrix, GaussianModel, Matrix, Vector};
use multiknockoff::scip::{scip_check, DiscreteJoint};
use multiknockoff::selection::{kappa_tau_from_table, multiknockoff_select, single_knockoff_select, SelectionResult, TieMode};
use multiknockoff::{Error, Result};

#[derive(Parser)]
#[command(name = "multiknockoff", version, about = "Simultaneous multiple knockoffs for FDR-controlled feature selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the knockoff diagonal of a correlation matrix.
    Diag(DiagArgs),
    /// Draw Gaussian multi-knockoffs for a data matrix.
    Sample(SampleArgs),
    /// Exact and Monte Carlo exchangeability diagnostics for a discrete joint.
    ScipCheck(ScipArgs),
    /// Lasso importance scores for an augmented design.
    Score(ScoreArgs),
    /// Feature selection from a score table.
    Select(SelectArgs),
    /// Run one of the synthetic studies.
    Experiment(ExperimentArgs),
}

fn parse_with<T: FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_response(s: &str) -> std::result::Result<ResponseKind, String> {
    serde_json::from_value(Value::String(s.to_ascii_lowercase())).map_err(|_| format!("unknown response '{s}'"))
}

#[derive(Args)]
struct DiagArgs {
    /// Correlation matrix as CSV (or a JSON envelope ending in .json).
    sigma: PathBuf,
    #[arg(long, default_value = "entropy", value_parser = parse_with::<DiagMethod>)]
    method: DiagMethod,
    #[arg(long, default_value_t = 1)]
    kappa: usize,
    /// Cap equicorrelated entries at one.
    #[arg(long)]
    clamp: bool,
    /// Output CSV for s; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output JSON summary; stdout when --out is given, stderr otherwise.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Correlation matrix (CSV).
    #[arg(long)]
    sigma: PathBuf,
    /// Mean vector (CSV); zero when omitted.
    #[arg(long)]
    mu: Option<PathBuf>,
    /// Original features, one row per sample (CSV).
    #[arg(long)]
    x0: PathBuf,
    #[arg(long, default_value_t = 1)]
    kappa: usize,
    #[arg(long, default_value = "entropy", value_parser = parse_with::<DiagMethod>)]
    method: DiagMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScipArgs {
    /// JSON file with `support_sizes` and a flat row-major `pmf`.
    joint: PathBuf,
    #[arg(long, default_value_t = 1)]
    kappa: usize,
    /// Monte Carlo draws; zero skips the sampled check.
    #[arg(long, default_value_t = 0)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ScoreArgs {
    /// Augmented design `[X⁰, X¹, …, X^κ]` (CSV, header optional).
    #[arg(long)]
    design: PathBuf,
    /// Response, one value per row (CSV).
    #[arg(long)]
    y: PathBuf,
    /// Number of knockoff copies; read from the `xK_J` header when omitted.
    #[arg(long)]
    kappa: Option<usize>,
    #[arg(long, default_value = "linear", value_parser = parse_with::<ModelKind>)]
    kind: ModelKind,
    /// `default` for the path rule, or a fixed penalty.
    #[arg(long, default_value = "default")]
    lambda: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    /// Score table, one row per feature and κ+1 columns (CSV).
    scores: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    q: f64,
    /// Checked against the number of columns when given.
    #[arg(long)]
    kappa: Option<usize>,
    /// 1 for the usual estimate; 0 (single knockoff only) drops the +1.
    #[arg(long, default_value_t = 1)]
    offset: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "random", value_parser = parse_with::<TieMode>)]
    tie_mode: TieMode,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_parser = parse_with::<ExperimentKind>)]
    kind: ExperimentKind,
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for report.json, records.jsonl and plots/.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    kappa: Option<Vec<usize>>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    nonnull: Option<Vec<usize>>,
    #[arg(long)]
    signal: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_parser = parse_with::<DiagMethod>)]
    method: Option<DiagMethod>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_response)]
    response: Option<ResponseKind>,
    #[arg(long, value_parser = parse_with::<TieMode>)]
    tie_mode: Option<TieMode>,
    #[arg(long, value_delimiter = ',')]
    d_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    sample_sizes: Option<Vec<usize>>,
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long)]
    exact_covariance: bool,
    #[arg(long)]
    block_a: Option<f64>,
    #[arg(long)]
    n_blocks: Option<usize>,
    #[arg(long)]
    no_baseline: bool,
}

fn format_csv(m: &Matrix, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        let _ = writeln!(out, "{}", h.join(","));
    }
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

fn emit_matrix(out: Option<&Path>, m: &Matrix, header: Option<&[String]>) -> Result<()> {
    match out {
        Some(path) => write_csv_matrix(path, m, header),
        None => {
            print!("{}", format_csv(m, header));
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn read_correlation(path: &Path) -> Result<CorrelationMatrix> {
    CorrelationMatrix::new(read_matrix(path)?)
}

#[derive(Serialize)]
struct DiagRecord {
    diagonal: DiagonalS,
    summary: DiagSummary,
}

fn run_diag(args: DiagArgs) -> Result<()> {
    let sigma = read_correlation(&args.sigma)?;
    let diag = match args.method {
        DiagMethod::Equicorrelated => equi_diag(&sigma, args.kappa, args.clamp)?,
        method => solve_diag(&sigma, args.kappa, method)?,
    };
    let record = DiagRecord { summary: diag_summary(&diag), diagonal: diag };
    match &args.out {
        Some(path) => write_csv_vector(path, &record.diagonal.s)?,
        None => record.diagonal.s.iter().for_each(|v| println!("{v:e}")),
    }
    match (&args.summary, &args.out) {
        (Some(path), _) => emit_json(Some(path), &record),
        (None, Some(_)) => emit_json(None, &record),
        (None, None) => {
            eprintln!("{}", serde_json::to_string_pretty(&record)?);
            Ok(())
        }
    }
}

fn run_sample(args: SampleArgs) -> Result<()> {
    let sigma = read_correlation(&args.sigma)?;
    let mu = match &args.mu {
        Some(path) => Vector::from_vec(read_csv_vector(path)?),
        None => Vector::zeros(sigma.dim()),
    };
    let x0 = read_matrix(&args.x0)?;
    let model = GaussianModel::new(mu, sigma)?;
    let sample = knockoffs_for(&model, &x0, args.kappa, args.method, args.seed)?;
    emit_matrix(args.out.as_deref(), &sample.data, Some(&sample.header()))
}

fn run_scip(args: ScipArgs) -> Result<()> {
    let joint: DiscreteJoint = serde_json::from_str(&fs::read_to_string(&args.joint)?)?;
    let check = scip_check(&joint, args.kappa, args.draws, args.seed)?;
    emit_json(None, &check)
}

/// Largest copy index in an `xK_J` header.
fn kappa_from_header(header: &[String]) -> Option<usize> {
    header
        .iter()
        .map(|h| h.strip_prefix('x')?.split_once('_')?.0.parse::<usize>().ok())
        .collect::<Option<Vec<_>>>()?
        .into_iter()
        .max()
}

fn run_score(args: ScoreArgs) -> Result<()> {
    let (header, data) = parse_csv(fs::File::open(&args.design)?)?;
    let kappa = args
        .kappa
        .or_else(|| header.as_deref().and_then(kappa_from_header))
        .ok_or_else(|| Error::Config("cannot infer kappa from the design; pass --kappa".into()))?;
    if kappa == 0 || data.ncols() % (kappa + 1) != 0 {
        return Err(Error::Config(format!("{} columns do not split into {} copies", data.ncols(), kappa + 1)));
    }
    let d = data.ncols() / (kappa + 1);
    let sample = MultiKnockoffSample::new(data, d, kappa)?;
    let y = read_csv_vector(&args.y)?;
    let lambda = match args.lambda.as_str() {
        "default" => LambdaChoice::Default,
        text => LambdaChoice::Fixed(
            text.parse::<f64>()
                .ok()
                .filter(|l| *l > 0.0 && l.is_finite())
                .ok_or_else(|| Error::Config(format!("--lambda must be 'default' or a positive number, got '{text}'")))?,
        ),
    };
    let scores = fit_importance(&sample, &y, args.kind, &lambda, args.seed)?;
    info!("lambda {:e}, {} nonzero coefficients", scores.lambda_used, scores.nonzeros);
    let header: Vec<String> = (0..=kappa).map(|k| format!("t{k}")).collect();
    emit_matrix(args.out.as_deref(), &scores.scores, Some(&header))
}

fn selection(args: &SelectArgs, table: &Matrix) -> Result<SelectionResult> {
    let kappa = table.ncols().saturating_sub(1);
    if kappa == 0 {
        return Err(Error::Dimension("score table needs at least two columns".into()));
    }
    if let Some(k) = args.kappa.filter(|k| *k != kappa) {
        return Err(Error::Config(format!("--kappa {k} does not match a table with {} columns", table.ncols())));
    }
    match args.offset {
        1 => {
            let (kappa_i, tau_i) = kappa_tau_from_table(table, args.seed, args.tie_mode);
            multiknockoff_select(&kappa_i, &tau_i, args.q, kappa)
        }
        0 if kappa == 1 => {
            let w: Vec<f64> = table.row_iter().map(|r| r[0] - r[1]).collect();
            single_knockoff_select(&w, args.q, 0)
        }
        0 => Err(Error::Config("offset 0 is only available with a single knockoff".into())),
        other => Err(Error::Config(format!("offset must be 0 or 1, got {other}"))),
    }
}

fn run_select(args: SelectArgs) -> Result<()> {
    let (_, table) = parse_csv(fs::File::open(&args.scores)?)?;
    let result = selection(&args, &table)?;
    let mut value = serde_json::to_value(&result)?;
    value["selected"] = result.selected.iter().map(|i| i + 1).collect();
    emit_json(args.out.as_deref(), &value)
}

fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut base = serde_json::to_value(ExperimentConfig::for_experiment(args.kind))?;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)?;
        let file: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let Value::Object(fields) = file else {
            return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
        };
        for (key, value) in fields {
            if key == "experiment" && value.as_str().and_then(|s| s.parse::<ExperimentKind>().ok()) != Some(args.kind) {
                return Err(Error::Config(format!("config is for experiment {value}, not {}", args.kind)));
            }
            base[key] = value;
        }
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
    cfg.experiment = args.kind;
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = args.$flag.clone() {
                cfg.$field = v;
            }
        )*};
    }
    set!(d => d, n => n, kappa => kappa_list, q => q, nonnull => n_nonnull, signal => signal, reps => n_reps,
         method => method, seed => seed, response => response, tie_mode => tie_mode, d_list => d_list,
         sample_sizes => sample_sizes, batches => batches, block_a => block_a, n_blocks => n_blocks);
    if args.exact_covariance {
        cfg.exact_covariance = true;
    }
    if args.no_baseline {
        cfg.baseline = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Returns whether every replicate succeeded.
fn run_experiment_cmd(args: ExperimentArgs) -> Result<bool> {
    let cfg = experiment_config(&args)?;
    let report = run_experiment(&cfg)?;
    if let Some(dir) = &args.out {
        report.write_outputs(dir)?;
        info!("wrote outputs to {}", dir.display());
    }
    for line in report.summary_lines() {
        println!("{line}");
    }
    let failures = report.failures();
    if failures > 0 {
        warn!("{failures} replicate(s) failed");
    }
    Ok(failures == 0)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_convergence() => 2,
        Error::Config(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Diag(a) => run_diag(a).map(|_| true),
        Command::Sample(a) => run_sample(a).map(|_| true),
        Command::ScipCheck(a) => run_scip(a).map(|_| true),
        Command::Score(a) => run_score(a).map(|_| true),
        Command::Select(a) => run_select(a).map(|_| true),
        Command::Experiment(a) => run_experiment_cmd(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
