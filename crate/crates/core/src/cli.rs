//! Command-line surface. Data go to stdout or `--out`; diagnostics go to
//! stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::confidence::{
    build_cds, default_grid, fit_partition, refit_on_local_optimum, Alternative, ConfidenceObject, PivotKind,
    ProfileOptions,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{is_two_sample, model_from_name, Model, ModelOptions};
use crate::robustness::{
    calibrate_gamma, taif, CalibrationOptions, EfficiencyMeasure, Probe, TaifOptions,
};
use crate::rule::ScoreRule;
use crate::scoring::{eigenvalues_jkinv, Fit, FitOptions, InfoSource, ScoringProblem};
use crate::simcore::{run_study, SimDesign};

#[derive(Parser, Debug)]
#[command(name = "robcd", version, about = "Robust confidence distributions from scoring rules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model and report estimates with sandwich standard errors.
    Fit(FitArgs),
    /// Build confidence distributions and curves for the interest parameter.
    Cd(CdArgs),
    /// Find the Tsallis γ that reaches a target relative efficiency.
    Calibrate(CalibrateArgs),
    /// Evaluate the tail-area influence function over a grid of outliers.
    Taif(TaifArgs),
    /// Run a simulation study described by a JSON design file.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Log,
    Tsallis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PivotArg {
    Wald,
    Root,
}

impl From<PivotArg> for PivotKind {
    fn from(p: PivotArg) -> Self {
        match p {
            PivotArg::Wald => PivotKind::Wald,
            PivotArg::Root => PivotKind::Root,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AltArg {
    Less,
    Greater,
    TwoSided,
}

impl From<AltArg> for Alternative {
    fn from(a: AltArg) -> Self {
        match a {
            AltArg::Less => Alternative::Less,
            AltArg::Greater => Alternative::Greater,
            AltArg::TwoSided => Alternative::TwoSided,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InfoArg {
    Analytic,
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MeasureArg {
    Worst,
    Interest,
    Trace,
}

/// Options shared by every command that reads a dataset.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// two-sample-normal, auc-exponential, auc-normal, linear-regression or
    /// expfam:<spec.json>.
    #[arg(long)]
    pub model: String,
    /// Headered CSV: (value, group) with group 1 or 2 for two-sample models,
    /// (y, x1, ..., xp) for regression, (value) for exponential families.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "log")]
    pub rule: RuleArg,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Interest coefficient for regression (0 is the intercept; default 1)
    /// or natural-parameter index for exponential families.
    #[arg(long)]
    pub interest: Option<usize>,
    /// Do not add an intercept column to a regression design.
    #[arg(long)]
    pub no_intercept: bool,
    #[arg(long, value_enum, default_value = "analytic")]
    pub info: InfoArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: ModelArgs,
}

#[derive(Args, Debug)]
pub struct CdArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    /// Pivot(s) to build; repeat for several curves in one document.
    #[arg(long, value_enum)]
    pub pivot: Vec<PivotArg>,
    /// Confidence level(s) for equal-tailed intervals.
    #[arg(long)]
    pub level: Vec<f64>,
    #[arg(long)]
    pub h0: Option<f64>,
    #[arg(long, value_enum, default_value = "two-sided")]
    pub alt: AltArg,
    /// Interval a,b whose confidence C(b) − C(a) is reported.
    #[arg(long, value_delimiter = ',')]
    pub evidence: Option<Vec<f64>>,
    #[arg(long, default_value_t = 201)]
    pub grid_points: usize,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    #[arg(long, default_value_t = 0.9)]
    pub target: f64,
    #[arg(long, value_enum, default_value = "worst")]
    pub measure: MeasureArg,
    /// Reference parameter (comma separated); defaults to the log-score fit.
    #[arg(long, value_delimiter = ',')]
    pub theta: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct TaifArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    #[arg(long, value_enum, default_value = "root")]
    pub pivot: PivotArg,
    /// Fixed ψ; defaults to the lower 5% Wald point.
    #[arg(long)]
    pub psi: Option<f64>,
    /// Sample receiving the contamination (1-based for two-sample data).
    #[arg(long, default_value_t = 1)]
    pub sample: usize,
    /// Compare with ε-mixture refits on every k-th interior grid point.
    #[arg(long, default_value_t = 0)]
    pub oracle_stride: usize,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub design: PathBuf,
    /// Overrides the design's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Reads a headered CSV into a dataset for the named model.
pub fn read_data(path: &Path, model: &str, intercept: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record
            .iter()
            .map(|field| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(Error::Parse {
                    line,
                    message: format!("non-finite value '{field}'"),
                }),
                Err(_) => Err(Error::Parse {
                    line,
                    message: format!("'{field}' is not a number"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    if is_two_sample(model) {
        if header.len() != 2 {
            return Err(Error::Parse {
                line: 1,
                message: "two-sample data need columns (value, group)".into(),
            });
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, r) in rows.iter().enumerate() {
            match r[1] {
                1.0 => a.push(r[0]),
                2.0 => b.push(r[0]),
                g => {
                    return Err(Error::Parse {
                        line: i + 2,
                        message: format!("group must be 1 or 2, found {g}"),
                    })
                }
            }
        }
        Dataset::two_sample(a, b)
    } else if model == "linear-regression" {
        let offset = usize::from(intercept);
        let p = header.len() - 1 + offset;
        if p == 0 {
            return Err(Error::Parse {
                line: 1,
                message: "regression data need at least one covariate".into(),
            });
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| {
            if intercept && j == 0 {
                1.0
            } else {
                rows[i][j + 1 - offset]
            }
        });
        let mut names: Vec<String> = header[1..].to_vec();
        if intercept {
            names.insert(0, "intercept".into());
        }
        Dataset::regression(rows.iter().map(|r| r[0]).collect(), &x, names)
    } else {
        Dataset::one_sample(rows.iter().map(|r| r[0]).collect())
    }
}

struct Loaded {
    model: Box<dyn Model>,
    rule: ScoreRule,
    data: Dataset,
    info: InfoSource,
    seed: u64,
}

fn load(args: &ModelArgs) -> Result<Loaded> {
    let rule = match (args.rule, args.gamma) {
        (RuleArg::Log, None) => ScoreRule::Logarithmic,
        (RuleArg::Log, Some(_)) => {
            return Err(Error::InvalidInput("--gamma needs --rule tsallis".into()))
        }
        (RuleArg::Tsallis, Some(g)) => ScoreRule::tsallis(g)?,
        (RuleArg::Tsallis, None) => {
            return Err(Error::InvalidInput("--rule tsallis needs --gamma".into()))
        }
    };
    let data = read_data(&args.data, &args.model, !args.no_intercept)?;
    let opts = ModelOptions {
        interest: if args.model == "linear-regression" {
            Some(args.interest.unwrap_or(usize::from(!args.no_intercept)))
        } else {
            args.interest
        },
        n_covariates: Some(data.n_covariates()),
        covariate_names: Some(data.covariate_names().to_vec()).filter(|n| !n.is_empty()),
    };
    let model = model_from_name(&args.model, &opts)?;
    let info = match args.info {
        InfoArg::Analytic => InfoSource::Analytic,
        InfoArg::Empirical => InfoSource::Empirical,
    };
    Ok(Loaded {
        model,
        rule,
        data,
        info,
        seed: args.seed,
    })
}

fn fit_of(problem: &ScoringProblem, l: &Loaded) -> Result<Fit> {
    let fit = problem.fit_with(
        None,
        &FitOptions {
            info: l.info,
            seed: l.seed,
            ..FitOptions::default()
        },
    )?;
    if !fit.converged {
        return Err(Error::Optimization(format!(
            "fit stopped after {} iterations with gradient norm {:e}",
            fit.n_iter, fit.grad_norm
        )));
    }
    Ok(fit)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub rule: ScoreRule,
    pub gamma: Option<f64>,
    pub n: usize,
    pub param_names: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub interest: String,
    pub psi_hat: f64,
    pub psi_se: f64,
    pub nu: f64,
    pub eigenvalues_jkinv: Vec<f64>,
    pub score: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub fn fit_summary(model: &dyn Model, data: &Dataset, fit: &Fit) -> Result<FitSummary> {
    let part = fit_partition(model, fit)?;
    Ok(FitSummary {
        model: model.name(),
        rule: fit.rule,
        gamma: fit.rule.gamma(),
        n: data.len(),
        param_names: model.param_names(),
        theta_hat: fit.theta_hat.iter().copied().collect(),
        standard_errors: fit.standard_errors().iter().copied().collect(),
        interest: model.interest_name(),
        psi_hat: model.interest(&fit.theta_hat),
        psi_se: part.g_psipsi.sqrt(),
        nu: part.nu(),
        eigenvalues_jkinv: eigenvalues_jkinv(fit)?,
        score: fit.score_at_opt,
        converged: fit.converged,
        iterations: fit.n_iter,
        grad_norm: fit.grad_norm,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PValue {
    pub psi0: f64,
    pub alternative: Alternative,
    pub p: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Evidence {
    pub a: f64,
    pub b: f64,
    pub confidence: f64,
}

/// A confidence object plus the queries requested on the command line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CdCurve {
    #[serde(flatten)]
    pub cd: ConfidenceObject,
    pub p_value: Option<PValue>,
    pub evidence: Option<Evidence>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CdDocument {
    pub fit: FitSummary,
    pub curves: Vec<CdCurve>,
}

fn cmd_fit(args: &FitArgs) -> Result<serde_json::Value> {
    let l = load(&args.common)?;
    let problem = ScoringProblem::new(l.model.as_ref(), l.rule, &l.data)?;
    let fit = fit_of(&problem, &l)?;
    Ok(serde_json::to_value(fit_summary(l.model.as_ref(), &l.data, &fit)?)?)
}

pub fn cmd_cd(args: &CdArgs) -> Result<CdDocument> {
    let l = load(&args.common)?;
    let model = l.model.as_ref();
    let problem = ScoringProblem::new(model, l.rule, &l.data)?;
    let fit = fit_of(&problem, &l)?;
    let mut kinds: Vec<PivotKind> = args.pivot.iter().map(|&p| p.into()).collect();
    if kinds.is_empty() {
        kinds.push(PivotKind::Root);
    }
    kinds.dedup();
    let levels = if args.level.is_empty() {
        vec![0.95]
    } else {
        args.level.clone()
    };
    let opts = ProfileOptions {
        info: l.info,
        ..ProfileOptions::default()
    };
    let (fit, cds) = refit_on_local_optimum(&problem, fit, |fit| {
        let grid = default_grid(model, fit, args.grid_points)?;
        build_cds(&problem, fit, &kinds, &grid, &opts)
    })?;
    let mut curves = Vec::with_capacity(cds.len());
    for mut cd in cds {
        for &level in &levels {
            cd.add_ci(level)?;
        }
        let p_value = args.h0.map(|psi0| PValue {
            psi0,
            alternative: args.alt.into(),
            p: cd.p_value(psi0, args.alt.into()),
        });
        let evidence = match &args.evidence {
            Some(v) if v.len() != 2 => {
                return Err(Error::InvalidInput("--evidence takes a,b".into()))
            }
            Some(v) => Some(Evidence {
                a: v[0],
                b: v[1],
                confidence: cd.evidence(v[0], v[1])?,
            }),
            None => None,
        };
        if cd.flagged_points > 0 {
            log::warn!("{} profile points did not converge and were interpolated", cd.flagged_points);
        }
        curves.push(CdCurve {
            cd,
            p_value,
            evidence,
        });
    }
    Ok(CdDocument {
        fit: fit_summary(model, &l.data, &fit)?,
        curves,
    })
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<serde_json::Value> {
    let l = load(&args.common)?;
    let model = l.model.as_ref();
    let theta_ref = match &args.theta {
        Some(t) => DVector::from_vec(t.clone()),
        None => {
            let problem = ScoringProblem::new(model, ScoreRule::Logarithmic, &l.data)?;
            fit_of(&problem, &l)?.theta_hat
        }
    };
    if theta_ref.len() != model.dim() || !model.admissible(&theta_ref) {
        return Err(Error::InvalidInput("reference theta is not admissible".into()));
    }
    let measure = match args.measure {
        MeasureArg::Worst => EfficiencyMeasure::Worst,
        MeasureArg::Interest => EfficiencyMeasure::Interest,
        MeasureArg::Trace => EfficiencyMeasure::Trace,
    };
    let cal = calibrate_gamma(
        model,
        &theta_ref,
        &l.data,
        args.target,
        &CalibrationOptions {
            measure,
            info: l.info,
            ..CalibrationOptions::default()
        },
    )?;
    Ok(serde_json::to_value(cal)?)
}

fn cmd_taif(args: &TaifArgs) -> Result<serde_json::Value> {
    let l = load(&args.common)?;
    let model = l.model.as_ref();
    let problem = ScoringProblem::new(model, l.rule, &l.data)?;
    let fit = fit_of(&problem, &l)?;
    let mut probe = Probe::default_for(&l.data);
    probe.group = args.sample.checked_sub(1).ok_or_else(|| {
        Error::InvalidInput("--sample counts from 1".into())
    })?;
    let opts = TaifOptions {
        psi: args.psi,
        probe: Some(probe),
        y_grid: None,
        oracle_stride: args.oracle_stride,
    };
    let prof = taif(&problem, &fit, args.pivot.into(), &opts)?;
    log::info!(
        "TAIF sup {:.4e}, shell growth {:?}, bounded = {}",
        prof.sup_abs,
        prof.shell_growth,
        prof.bounded_verdict
    );
    Ok(serde_json::to_value(prof)?)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(&args.design).map_err(|source| Error::File {
        path: args.design.display().to_string(),
        source,
    })?;
    let mut design: SimDesign = serde_json::from_str(&text)?;
    if let Some(seed) = args.seed {
        design.seed = seed;
    }
    Ok(serde_json::to_value(run_study(&design)?)?)
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").map_err(|source| Error::File {
            path: path.display().to_string(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

/// Exit status for an error: 2 for unusable input, 1 for numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::File { .. } | Error::Parse { .. } | Error::InvalidInput(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (result, out) = match &cli.command {
        Command::Fit(a) => (cmd_fit(a), a.common.out.clone()),
        Command::Cd(a) => (
            cmd_cd(a).and_then(|d| Ok(serde_json::to_value(d)?)),
            a.common.out.clone(),
        ),
        Command::Calibrate(a) => (cmd_calibrate(a), a.common.out.clone()),
        Command::Taif(a) => (cmd_taif(a), a.common.out.clone()),
        Command::Simulate(a) => (cmd_simulate(a), a.out.clone()),
    };
    match result.and_then(|v| emit(&v, out.as_deref())) {
        Ok(()) => 0,
        Err(e) => {
            let diag = serde_json::json!({ "error": e.to_string(), "exit_code": exit_code(&e) });
            eprintln!("{diag}");
            exit_code(&e)
        }
    }
}
