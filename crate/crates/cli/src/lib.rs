//! Command-line front end: stack, fit, predict, evaluate, simulate, compare.
//!
//! Every subcommand is also callable in-process through its `cmd_*`
//! function, which writes its human-readable report to `out`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;

use survstack::cox::{fit_cox, CoxOptions};
use survstack::data::{ColumnMap, Format, SurvivalDataset};
use survstack::glm::{fit_glm, max_norm_diff, Family, GlmOptions};
use survstack::metrics::{evaluate, resolve_horizon, write_reports, HorizonSpec, Metric, MetricReport};
use survstack::persist::{CoefficientRow, Model};
use survstack::predict::{read_curves, survival_curve_path, write_curves, HazardModel, SurvivalCurve};
use survstack::sim::{simulate_ph, simulate_tv, PhConfig, TvHazardConfig};
use survstack::stacking::{stack, stacked_row_count, StackedDataset, TimeEncoding};

pub type Dataset = SurvivalDataset<f64>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] survstack::Error),
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    /// 2 input or validation, 3 convergence, 4 undefined metric.
    pub fn exit_code(&self) -> i32 {
        use survstack::Error as E;
        match self {
            CliError::NotConverged(_) | CliError::Core(E::Numerical { .. }) => 3,
            CliError::Core(E::UndefinedMetric(_)) => 4,
            CliError::Core(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug, Serialize)]
#[command(name = "survstack", version, about = "Survival stacking: fit discrete hazard classifiers on stacked risk sets")]
pub struct Cli {
    /// Worker threads (falls back to SURVSTACK_THREADS, then all cores).
    #[arg(long, global = true, env = "SURVSTACK_THREADS")]
    pub threads: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
pub enum Command {
    /// Reshape survival data into the stacked classification dataset.
    Stack(StackArgs),
    /// Fit a stacked logistic/Poisson model or a Cox model.
    Fit(FitArgs),
    /// Predict survival curves from a fitted model.
    Predict(PredictArgs),
    /// Evaluate predictions with time-dependent metrics.
    Evaluate(EvaluateArgs),
    /// Generate simulated datasets.
    Simulate(SimulateArgs),
    /// Fit Cox, stacked logistic and stacked Poisson side by side.
    Compare(CompareArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Single,
    Counting,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Single => Format::Single,
            FormatArg::Counting => Format::Counting,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct InputArgs {
    /// Survival data CSV.
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Single)]
    pub format: FormatArg,
    #[arg(long, default_value = "id")]
    pub id_col: String,
    #[arg(long, default_value = "entry")]
    pub entry_col: String,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "event")]
    pub event_col: String,
    #[arg(long, default_value = "start")]
    pub start_col: String,
    #[arg(long, default_value = "stop")]
    pub stop_col: String,
    /// Covariate columns; any other unbound column is then an error.
    /// Defaults to every unbound column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
}

impl InputArgs {
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        Self {
            input: path.into(),
            format: FormatArg::Single,
            id_col: "id".into(),
            entry_col: "entry".into(),
            time_col: "time".into(),
            event_col: "event".into(),
            start_col: "start".into(),
            stop_col: "stop".into(),
            covariates: None,
        }
    }

    fn column_map(&self) -> ColumnMap {
        ColumnMap {
            id: self.id_col.clone(),
            entry: self.entry_col.clone(),
            time: self.time_col.clone(),
            event: self.event_col.clone(),
            start: self.start_col.clone(),
            stop: self.stop_col.clone(),
            covariates: self.covariates.clone(),
        }
    }

    pub fn load(&self) -> CliResult<Dataset> {
        self.load_path(&self.input)
    }

    fn load_path(&self, path: &Path) -> CliResult<Dataset> {
        Ok(SurvivalDataset::read_csv(path, self.format.into(), &self.column_map())?)
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EncodingArgs {
    /// Time encoding: indicators, continuous or poly<d>.
    #[arg(long, default_value = "indicators")]
    pub encoding: String,
    /// Covariates to interact with the first time column.
    #[arg(long, value_delimiter = ',')]
    pub interact: Vec<String>,
}

impl Default for EncodingArgs {
    fn default() -> Self {
        Self { encoding: "indicators".into(), interact: Vec::new() }
    }
}

impl EncodingArgs {
    fn parse(&self) -> CliResult<TimeEncoding> {
        Ok(self.encoding.parse()?)
    }

    fn resolve(&self, enc: TimeEncoding, covariates: &[String]) -> CliResult<TimeEncoding> {
        let idx = self
            .interact
            .iter()
            .map(|name| {
                covariates
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| survstack::Error::UnknownColumn(name.clone()).into())
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(enc.with_interactions(idx))
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SolverArgs {
    /// Ridge penalty on covariate and time columns (GLMs only).
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Gradient max-norm convergence threshold.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

impl Default for SolverArgs {
    fn default() -> Self {
        Self { ridge: 0.0, max_iter: 100, tol: 1e-8 }
    }
}

impl SolverArgs {
    fn glm(&self) -> GlmOptions<f64> {
        GlmOptions { max_iter: self.max_iter, tol: self.tol, ridge: self.ridge, ..Default::default() }
    }

    fn cox(&self) -> CoxOptions<f64> {
        CoxOptions { max_iter: self.max_iter, tol: self.tol, ..Default::default() }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct StackArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub encoding: EncodingArgs,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Warn when the stack would exceed this many rows.
    #[arg(long, default_value_t = 10_000_000)]
    pub warn_rows: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Poisson,
    Cox,
}

#[derive(Args, Debug, Serialize)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["input", "stacked"])))]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Survival data CSV.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Previously stacked CSV (logistic and Poisson only).
    #[arg(long)]
    pub stacked: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Single)]
    pub format: FormatArg,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[command(flatten)]
    pub encoding: EncodingArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Model document to write.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Model document written by `fit`.
    #[arg(short, long)]
    pub model: PathBuf,
    /// Adds a `horizon_risk` column; a time or a quantile such as `q0.75`.
    #[arg(long)]
    pub horizon: Option<String>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[command(group(clap::ArgGroup::new("predictor").required(true).args(["model", "predictions"])))]
pub struct EvaluateArgs {
    /// Evaluation dataset.
    #[command(flatten)]
    pub input: InputArgs,
    /// Model document to predict with.
    #[arg(short, long)]
    pub model: Option<PathBuf>,
    /// Curve CSV written by `predict`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Comma-separated subset of auc_t, brier_t, cindex, iauc, ibrier.
    #[arg(long, value_delimiter = ',', default_value = "auc_t,brier_t,cindex,iauc,ibrier")]
    pub metrics: Vec<String>,
    /// Horizon: a time, or a quantile `q<level>` of the distinct event times.
    #[arg(long, default_value = "q0.75")]
    pub horizon: String,
    /// Dataset whose event times resolve a quantile horizon (default: the
    /// evaluation dataset).
    #[arg(long)]
    pub horizon_data: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Time-varying hazard study with train/test split.
    Tv,
    /// Discrete proportional hazards.
    Ph,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Scenario::Tv)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    /// Training subjects (tv).
    #[arg(long, default_value_t = 2000)]
    pub n_train: usize,
    /// Fraction of training subjects given a delayed entry (tv).
    #[arg(long, default_value_t = 0.0)]
    pub truncate: f64,
    #[arg(long, default_value_t = 0.2)]
    pub censor_rate: f64,
    /// Coefficients (ph; tv uses its built-in values).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Vec<f64>,
    /// Number of bins (ph).
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Baseline hazard of every bin (ph).
    #[arg(long, default_value_t = 0.05)]
    pub hazard: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub encoding: EncodingArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Side-by-side CSV.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(out, "{e}");
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // a pool may already exist when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: &Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Stack(a) => cmd_stack(a, out).map(drop),
        Command::Fit(a) => cmd_fit(a, out).map(drop),
        Command::Predict(a) => cmd_predict(a, out).map(drop),
        Command::Evaluate(a) => cmd_evaluate(a, out).map(drop),
        Command::Simulate(a) => cmd_simulate(a, out).map(drop),
        Command::Compare(a) => cmd_compare(a, out).map(drop),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| survstack::Error::io(path, e).into()
}

fn report(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> CliResult<()> {
    out.write_fmt(text).map_err(|e| survstack::Error::io("<stdout>", e).into())
}

/// `<output>.config.json` beside an output file.
pub fn echo_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    output.with_file_name(name)
}

fn write_echo<A: Serialize, R: Serialize>(output: &Path, command: &str, args: &A, resolved: R) -> CliResult<()> {
    #[derive(Serialize)]
    struct Echo<'a, A, R> {
        command: &'a str,
        version: &'a str,
        args: &'a A,
        resolved: R,
    }
    let echo = Echo { command, version: env!("CARGO_PKG_VERSION"), args, resolved };
    let path = echo_path(output);
    let text = serde_json::to_string_pretty(&echo).map_err(survstack::Error::from)?;
    std::fs::write(&path, text + "\n").map_err(io_err(&path))
}

pub fn cmd_stack(args: &StackArgs, out: &mut dyn Write) -> CliResult<StackedDataset<f64>> {
    let enc = args.encoding.parse()?;
    let ds = args.input.load()?;
    let enc = args.encoding.resolve(enc, ds.covariate_names())?;
    let rows = stacked_row_count(&ds);
    if rows > args.warn_rows {
        warn!("stacked data will have {rows} rows (quadratic in the number of subjects)");
    }
    let sd = stack(&ds, &enc)?;
    sd.export(&args.output)?;
    write_echo(&args.output, "stack", args, serde_json::json!({ "encoding": enc.to_string(), "rows": sd.n_rows() }))?;
    report(out, format_args!("stacked rows: {}\nevent times: {}\ncolumns: {}\n", sd.n_rows(), sd.time_index().len(), sd.width()))?;
    Ok(sd)
}

/// Renders a coefficient table with Wald statistics.
pub fn coefficient_table(rows: &[CoefficientRow<f64>]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut s = format!("{:<width$} {:>12} {:>12} {:>9} {:>10}\n", "term", "estimate", "std_error", "z", "p_value");
    for r in rows {
        s += &format!(
            "{:<width$} {:>12.6} {:>12.6} {:>9.3} {:>10.4}\n",
            r.name, r.estimate, r.std_error, r.z, r.p_value
        );
    }
    s
}

fn convergence_check(model: &Model<f64>) -> CliResult<()> {
    if model.converged() {
        return Ok(());
    }
    let (gnorm, iterations, unbounded, names) = match model {
        Model::Glm(f) => (f.gradient_norm, f.iterations, &f.separated, &f.names),
        Model::Cox(f) => (f.gradient_norm, f.iterations, &f.diverging, &f.names),
    };
    let mut msg = format!("{} fit did not converge after {iterations} iterations (gradient max-norm {gnorm:.3e})", model.kind());
    if !unbounded.is_empty() {
        let cols: Vec<&str> = unbounded.iter().map(|&j| names[j].as_str()).collect();
        msg += &format!("; coefficients diverging (possible separation): {}", cols.join(", "));
    }
    Err(CliError::NotConverged(msg))
}

/// Fits the requested model. A non-converged model is still written, for
/// diagnosis, before the convergence error is returned.
pub fn cmd_fit(args: &FitArgs, out: &mut dyn Write) -> CliResult<Model<f64>> {
    let enc = args.encoding.parse()?;
    let family = match args.model {
        ModelKind::Logistic => Some(Family::Logistic),
        ModelKind::Poisson => Some(Family::Poisson),
        ModelKind::Cox => None,
    };
    let model = match (&args.input, &args.stacked, family) {
        (_, Some(_), None) => {
            return Err(survstack::Error::Argument("a Cox fit needs the survival data (--input), not a stack".into()).into())
        }
        (_, Some(path), Some(family)) => Model::Glm(fit_glm(&StackedDataset::import(path)?, family, &args.solver.glm())?),
        (Some(path), None, family) => {
            let input = InputArgs { format: args.format, covariates: args.covariates.clone(), ..InputArgs::from_path(path) };
            let ds = input.load()?;
            match family {
                None => Model::Cox(fit_cox(&ds, &args.solver.cox())?),
                Some(family) => {
                    let enc = args.encoding.resolve(enc, ds.covariate_names())?;
                    Model::Glm(fit_glm(&stack(&ds, &enc)?, family, &args.solver.glm())?)
                }
            }
        }
        (None, None, _) => unreachable!("clap requires --input or --stacked"),
    };
    model.save(&args.output)?;
    let encoding = match &model {
        Model::Glm(f) => Some(f.layout.encoding.to_string()),
        Model::Cox(_) => None,
    };
    write_echo(
        &args.output,
        "fit",
        args,
        serde_json::json!({ "kind": model.kind(), "encoding": encoding, "converged": model.converged() }),
    )?;
    let header = match &model {
        Model::Glm(f) => format!(
            "model: {} (encoding {}), converged: {}, iterations: {}, log-likelihood: {:.6}\n",
            f.family, f.layout.encoding, f.converged, f.iterations, f.loglik
        ),
        Model::Cox(f) => format!(
            "model: cox, converged: {}, iterations: {}, partial log-likelihood: {:.6}\n",
            f.converged, f.iterations, f.partial_loglik
        ),
    };
    report(out, format_args!("{header}{}", coefficient_table(&model.coefficient_table())))?;
    convergence_check(&model)?;
    Ok(model)
}

/// Survival curves for every subject of `ds`, following time-varying
/// covariates through the subject's intervals.
pub fn predict_curves<M: HazardModel<f64> + ?Sized>(model: &M, ds: &Dataset) -> CliResult<Vec<SurvivalCurve<f64>>> {
    if ds.p() != model.n_covariates() {
        return Err(survstack::Error::Dimension { expected: model.n_covariates(), got: ds.p() }.into());
    }
    (0..ds.n_subjects())
        .map(|i| Ok(survival_curve_path(model, |_, t| ds.covariates_at(i, t))?))
        .collect()
}

fn check_covariates(model: &Model<f64>, ds: &Dataset) -> CliResult<()> {
    if model.covariate_names() != ds.covariate_names() {
        return Err(survstack::Error::Validation(format!(
            "dataset covariates [{}] do not match the model's [{}]",
            ds.covariate_names().join(", "),
            model.covariate_names().join(", ")
        ))
        .into());
    }
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs, out: &mut dyn Write) -> CliResult<Vec<SurvivalCurve<f64>>> {
    let horizon: Option<HorizonSpec<f64>> = args.horizon.as_deref().map(str::parse).transpose()?;
    let model = Model::<f64>::load(&args.model)?;
    let ds = args.input.load()?;
    check_covariates(&model, &ds)?;
    let curves = predict_curves(&model, &ds)?;
    let horizon = horizon.map(|h| resolve_horizon(&ds, h)).transpose()?;
    let ids: Vec<&str> = ds.subjects().iter().map(|s| s.id.as_str()).collect();
    write_curves(&args.output, &ids, &curves, horizon)?;
    write_echo(&args.output, "predict", args, serde_json::json!({ "horizon": horizon }))?;
    let clipped: usize = curves.iter().map(SurvivalCurve::clipped).sum();
    if clipped > 0 {
        warn!("{clipped} predicted hazards exceeded 1 and were clipped");
    }
    report(out, format_args!("curves: {} subjects x {} times, clipped hazards: {clipped}\n", curves.len(), model.time_index().len()))?;
    Ok(curves)
}

/// Metrics for `curves` on `ds` at the resolved horizon.
pub fn evaluate_curves(
    metrics: &[Metric],
    curves: &[SurvivalCurve<f64>],
    ds: &Dataset,
    horizon: f64,
) -> CliResult<Vec<MetricReport<f64>>> {
    let reports = evaluate(metrics, curves, ds, horizon)?;
    for r in &reports {
        if r.dropped > 0 {
            warn!("{}: {} subjects or grid points dropped (zero censoring weight or undefined value)", r.metric, r.dropped);
        }
    }
    Ok(reports)
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> CliResult<Vec<MetricReport<f64>>> {
    let metrics = args.metrics.iter().map(|m| m.parse()).collect::<Result<Vec<Metric>, _>>()?;
    let spec: HorizonSpec<f64> = args.horizon.parse()?;
    let ds = args.input.load()?;
    let curves = match (&args.model, &args.predictions) {
        (Some(path), _) => {
            let model = Model::<f64>::load(path)?;
            check_covariates(&model, &ds)?;
            predict_curves(&model, &ds)?
        }
        (None, Some(path)) => {
            let mut by_id: std::collections::HashMap<String, SurvivalCurve<f64>> = read_curves(path)?.into_iter().collect();
            ds.subjects()
                .iter()
                .map(|s| {
                    by_id.remove(&s.id).ok_or_else(|| {
                        survstack::Error::Validation(format!("no predicted curve for subject `{}`", s.id)).into()
                    })
                })
                .collect::<CliResult<Vec<_>>>()?
        }
        (None, None) => unreachable!("clap requires --model or --predictions"),
    };
    let horizon = match &args.horizon_data {
        Some(path) => resolve_horizon(&args.input.load_path(path)?, spec)?,
        None => resolve_horizon(&ds, spec)?,
    };
    let reports = evaluate_curves(&metrics, &curves, &ds, horizon)?;
    if let Some(path) = &args.output {
        write_reports(path, &reports)?;
        write_echo(path, "evaluate", args, serde_json::json!({ "horizon": horizon }))?;
    }
    let mut text = String::from("metric,horizon,value,n_effective\n");
    for r in &reports {
        text += &format!("{},{},{},{}\n", r.metric, r.horizon, r.value, r.n_effective);
    }
    report(out, format_args!("{text}"))?;
    Ok(reports)
}

/// Simulated datasets written by `simulate`.
#[derive(Debug)]
pub enum Simulated {
    Tv { train: Dataset, test: Dataset },
    Ph(Dataset),
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> CliResult<Simulated> {
    std::fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    let config_path = args.out_dir.join("config.json");
    let write_config = |cfg: serde_json::Value| -> CliResult<()> {
        let text = serde_json::to_string_pretty(&cfg).map_err(survstack::Error::from)?;
        std::fs::write(&config_path, text + "\n").map_err(io_err(&config_path))
    };
    match args.scenario {
        Scenario::Tv => {
            let cfg = TvHazardConfig {
                n: args.n,
                n_train: args.n_train,
                censor_rate: args.censor_rate,
                truncate_fraction: args.truncate,
                seed: args.seed,
                ..Default::default()
            };
            let (train, test) = simulate_tv(&cfg)?;
            train.write_csv(args.out_dir.join("train.csv"))?;
            test.write_csv(args.out_dir.join("test.csv"))?;
            write_config(serde_json::json!({ "scenario": "tv", "config": cfg }))?;
            let delayed = train.subjects().iter().filter(|s| s.entry > 0.0).count();
            report(
                out,
                format_args!(
                    "train: {} subjects ({} events, {delayed} delayed entries)\ntest: {} subjects ({} events)\n",
                    train.n_subjects(),
                    train.n_events(),
                    test.n_subjects(),
                    test.n_events()
                ),
            )?;
            Ok(Simulated::Tv { train, test })
        }
        Scenario::Ph => {
            let cfg = PhConfig {
                n: args.n,
                beta: args.beta.clone(),
                baseline: vec![args.hazard; args.bins],
                censor_rate: args.censor_rate,
                seed: args.seed,
            };
            let ds = simulate_ph(&cfg)?;
            ds.write_csv(args.out_dir.join("data.csv"))?;
            write_config(serde_json::json!({ "scenario": "ph", "config": cfg }))?;
            report(out, format_args!("data: {} subjects ({} events)\n", ds.n_subjects(), ds.n_events()))?;
            Ok(Simulated::Ph(ds))
        }
    }
}

/// Coefficients of the three models on the covariates.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub cox: Vec<CoefficientRow<f64>>,
    pub logistic: Vec<CoefficientRow<f64>>,
    pub poisson: Vec<CoefficientRow<f64>>,
    /// Max-norm of the covariate coefficient differences.
    pub delta_logistic: f64,
    pub delta_poisson: f64,
    pub models: [Model<f64>; 3],
}

impl CompareReport {
    pub fn render(&self) -> String {
        let width = self.cox.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        let mut s = format!(
            "{:<width$} {:>10} {:>8} {:>10} {:>8} {:>10} {:>8}\n",
            "term", "cox", "p", "logistic", "p", "poisson", "p"
        );
        for ((c, l), p) in self.cox.iter().zip(&self.logistic).zip(&self.poisson) {
            s += &format!(
                "{:<width$} {:>10.4} {:>8.4} {:>10.4} {:>8.4} {:>10.4} {:>8.4}\n",
                c.name, c.estimate, c.p_value, l.estimate, l.p_value, p.estimate, p.p_value
            );
        }
        s += &format!("max |cox - logistic| = {:.3e}\nmax |cox - poisson|  = {:.3e}\n", self.delta_logistic, self.delta_poisson);
        s
    }
}

pub fn cmd_compare(args: &CompareArgs, out: &mut dyn Write) -> CliResult<CompareReport> {
    let enc = args.encoding.parse()?;
    let ds = args.input.load()?;
    let enc = args.encoding.resolve(enc, ds.covariate_names())?;
    let p = ds.p();
    let cox = Model::Cox(fit_cox(&ds, &args.solver.cox())?);
    let sd = stack(&ds, &enc)?;
    let logistic = Model::Glm(fit_glm(&sd, Family::Logistic, &args.solver.glm())?);
    let poisson = Model::Glm(fit_glm(&sd, Family::Poisson, &args.solver.glm())?);
    for m in [&cox, &logistic, &poisson] {
        convergence_check(m)?;
    }
    let table = |m: &Model<f64>| m.coefficient_table().into_iter().take(p).collect::<Vec<_>>();
    let report_ = CompareReport {
        cox: table(&cox),
        logistic: table(&logistic),
        poisson: table(&poisson),
        delta_logistic: max_norm_diff(cox.beta(), logistic.beta()),
        delta_poisson: max_norm_diff(cox.beta(), poisson.beta()),
        models: [cox, logistic, poisson],
    };
    if let Some(path) = &args.output {
        let mut w = csv::Writer::from_path(path).map_err(|e| survstack::Error::csv(path, e))?;
        let wrap = |e| CliError::from(survstack::Error::csv(path, e));
        w.write_record(["term", "cox", "cox_p", "logistic", "logistic_p", "poisson", "poisson_p"]).map_err(wrap)?;
        for ((c, l), q) in report_.cox.iter().zip(&report_.logistic).zip(&report_.poisson) {
            w.write_record([
                c.name.clone(),
                c.estimate.to_string(),
                c.p_value.to_string(),
                l.estimate.to_string(),
                l.p_value.to_string(),
                q.estimate.to_string(),
                q.p_value.to_string(),
            ])
            .map_err(wrap)?;
        }
        w.flush().map_err(io_err(path))?;
        write_echo(
            path,
            "compare",
            args,
            serde_json::json!({ "delta_logistic": report_.delta_logistic, "delta_poisson": report_.delta_poisson }),
        )?;
    }
    report(out, format_args!("{}", report_.render()))?;
    Ok(report_)
}
