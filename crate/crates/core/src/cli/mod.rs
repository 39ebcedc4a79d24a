//! `pcvcm` command-line front end.
//!
//! Exit codes: 0 success, 1 usage / IO / parse error, 2 domain or
//! infeasibility error. Output goes to `--output`, else to
//! `$PCVCM_OUT_DIR/<default name>`, else to stdout.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::distance;
use crate::error::Error;
use crate::gmrf::{self, AdjacencyGraph, CovarianceSpec};
use crate::inference::{
    compare_priors_with, fit_grid, simulate_scenario, CompareOptions, ComparisonPrior, Grid, GridSpec, ModelPrior,
    Scenario, ScenarioKind, VcmDataset, VcmFamily, VcmModelSpec,
};
use crate::pcpriors::{
    self, Ar1CorrPrior, Ar1ReferencePrior, DistanceDensity, Draws, ExchCorrPrior, Gumbel2PrecisionPrior,
    MaternJointPrior, MaternRangePrior, PcPrior, ScalarPrior, UniformCorrPrior,
};
use crate::scaling::{self, ScalingSpec};

/// Tail statement `P(rho > U) = a` used by `compare` when no rate is given.
pub const DEFAULT_COMPARE_U: f64 = 0.5;
pub const DEFAULT_COMPARE_A: f64 = 0.75;

#[derive(Debug, Parser)]
#[command(name = "pcvcm", version, about = "PC priors and grid inference for varying coefficient models")]
pub struct Cli {
    /// Default directory for output files.
    #[arg(long, global = true, env = "PCVCM_OUT_DIR")]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a prior density on a grid (figure data).
    Density(DensityArgs),
    /// Solve a (U, a) statement for the prior rate(s).
    Scale(ScaleArgs),
    /// Draw from a prior.
    Sample(SampleArgs),
    /// Distance to the base model.
    Distance(DistanceArgs),
    /// Emit a covariance or structure matrix as headerless CSV.
    Matrix(MatrixArgs),
    /// Simulate a scenario dataset.
    Simulate(SimulateArgs),
    /// Compare PC, uniform and reference priors on simulated data.
    Compare(CompareArgs),
    /// Fit a model to a dataset on a hyperparameter grid.
    Fit(FitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorFamily {
    #[value(alias = "exchangeable")]
    Exch,
    Ar1,
    /// Type-2 Gumbel on a precision (RW1, RW2, ICAR).
    #[value(alias = "rw", alias = "gumbel")]
    Precision,
    MaternPhi,
    Uniform,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityScale {
    Param,
    Distance,
}

/// Raw rate or a `(U, a)` statement for single-rate priors.
#[derive(Debug, Clone, Args, Serialize)]
pub struct RateArgs {
    /// Raw rate; wins over --U/--a.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long = "U")]
    pub u: Option<f64>,
    #[arg(long = "a")]
    pub a: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct DensityArgs {
    #[arg(long, value_enum)]
    pub family: PriorFamily,
    #[command(flatten)]
    pub rate: RateArgs,
    #[arg(long)]
    pub grid_start: Option<f64>,
    #[arg(long)]
    pub grid_end: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub grid_points: usize,
    #[arg(long, value_enum, default_value_t = DensityScale::Param)]
    pub scale: DensityScale,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleFamily {
    #[value(alias = "exchangeable")]
    Exch,
    Ar1,
    #[value(alias = "rw", alias = "precision", alias = "icar")]
    Rw,
    Matern,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct ScaleArgs {
    #[arg(long, value_enum)]
    pub family: ScaleFamily,
    /// Threshold (U_phi for the Matérn family).
    #[arg(long = "U")]
    pub u: f64,
    #[arg(long = "a")]
    pub a: f64,
    #[arg(long = "U-tau")]
    pub u_tau: Option<f64>,
    #[arg(long = "a-tau")]
    pub a_tau: Option<f64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleFamily {
    #[value(alias = "exchangeable")]
    Exch,
    Ar1,
    #[value(alias = "rw", alias = "gumbel")]
    Precision,
    Matern,
    Uniform,
    Reference,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct SampleArgs {
    #[arg(long, value_enum)]
    pub family: SampleFamily,
    #[command(flatten)]
    pub rate: RateArgs,
    #[arg(long)]
    pub lambda_phi: Option<f64>,
    #[arg(long)]
    pub lambda_tau: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceFamilyArg {
    #[value(alias = "exchangeable")]
    Exch,
    Ar1,
    Precision,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct DistanceArgs {
    #[arg(long, value_enum)]
    pub family: DistanceFamilyArg,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Dimension for the exact KLD; with --rho0 replaces the limiting form.
    #[arg(long)]
    pub n: Option<usize>,
    /// Base-model correlation (close to 1) for the exact KLD.
    #[arg(long)]
    pub rho0: Option<f64>,
    /// Effective dimension (rank) for the precision distance.
    #[arg(long, default_value_t = 1)]
    pub n_eff: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFamily {
    #[value(alias = "exchangeable")]
    Exch,
    Ar1,
    Rw1,
    Rw2,
    Icar,
    Matern,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct MatrixArgs {
    #[arg(long, value_enum)]
    pub family: MatrixFamily,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Edge-list file for ICAR: first line n, then 1-indexed `i j` pairs.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Scale the structure to unit geometric-mean marginal variance.
    #[arg(long)]
    pub scaled: bool,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub phi: Option<f64>,
    /// CSV with header `lat,lon`.
    #[arg(long)]
    pub coords: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioArg {
    Sc1,
    Sc2,
}

impl From<ScenarioArg> for ScenarioKind {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Sc1 => ScenarioKind::Sc1,
            ScenarioArg::Sc2 => ScenarioKind::Sc2,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScenarioArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// True AR1 correlation of beta; 1 gives a constant coefficient.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl ScenarioArgs {
    fn scenario(&self) -> Scenario {
        let mut s = Scenario::defaults(self.scenario.into());
        if let Some(n) = self.n {
            s.n = n;
        }
        if let Some(noise) = self.noise {
            s.noise_sd = noise;
        }
        if let Some(rho) = self.rho {
            s.rho_true = rho;
        }
        s
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// PC prior rate on the AR1 correlation; defaults to P(rho > 0.5) = 0.75.
    #[command(flatten)]
    pub rate: RateArgs,
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 201)]
    pub curve_points: usize,
    /// JSON report path; the table and curves go next to it.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitFamily {
    #[value(alias = "exchangeable")]
    Exch,
    Ar1,
    Rw1,
    Rw2,
    Icar,
    Matern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitPrior {
    Pc,
    Uniform,
    Reference,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct FitArgs {
    /// CSV with header t,x,y (plus lat,lon for Matérn).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub family: FitFamily,
    /// Known observation noise sd.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = FitPrior::Pc)]
    pub prior: FitPrior,
    #[command(flatten)]
    pub rate: RateArgs,
    #[arg(long)]
    pub lambda_phi: Option<f64>,
    #[arg(long)]
    pub lambda_tau: Option<f64>,
    #[arg(long = "U-tau")]
    pub u_tau: Option<f64>,
    #[arg(long = "a-tau")]
    pub a_tau: Option<f64>,
    /// Matérn smoothness.
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Fixed precision of beta for the correlation families.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = crate::inference::DEFAULT_BETA0_VAR)]
    pub beta0_var: f64,
    #[arg(long, default_value_t = crate::inference::DEFAULT_ALPHA_VAR)]
    pub alpha_var: f64,
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 41)]
    pub matern_points: usize,
    #[arg(long, default_value_t = 0.995)]
    pub upper_quantile: f64,
    #[arg(long, default_value_t = 0.005)]
    pub lower_quantile: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Usage problems exit with 1, library domain errors with 2.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Lib(Error::Csv(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lib(Error::Json(e))
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) if e.is_domain() => 2,
            CliError::Lib(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Lib(e) => e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

struct Io<'a> {
    out_dir: Option<PathBuf>,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Io<'_> {
    /// `--output` (relative paths resolve against the output directory), else
    /// the output directory with `default_name`, else stdout.
    fn target(&self, output: &Option<PathBuf>, default_name: &str) -> Option<PathBuf> {
        match (output, &self.out_dir) {
            (Some(p), Some(dir)) if p.is_relative() => Some(dir.join(p)),
            (Some(p), _) => Some(p.clone()),
            (None, Some(dir)) => Some(dir.join(default_name)),
            (None, None) => None,
        }
    }

    fn emit(&mut self, target: &Option<PathBuf>, bytes: &[u8]) -> CliResult<()> {
        match target {
            Some(path) => write_file(path, bytes),
            None => {
                self.stdout.write_all(bytes)?;
                Ok(())
            }
        }
    }

    /// CSV plus its resolved configuration: a `.meta.json` sidecar for files,
    /// one stderr line for stdout.
    fn emit_csv(&mut self, target: &Option<PathBuf>, csv: &[u8], config: &Value) -> CliResult<()> {
        self.emit(target, csv)?;
        let meta = serde_json::to_string(config)?;
        match target {
            Some(path) => write_file(&sidecar(path, ".meta.json"), format!("{meta}\n").as_bytes()),
            None => {
                writeln!(self.stderr, "config: {meta}")?;
                Ok(())
            }
        }
    }

    fn warn(&mut self, msg: &str) {
        let _ = writeln!(self.stderr, "warning: {msg}");
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "compare".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn to_json_pretty<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    let mut io = Io { out_dir: cli.out_dir.clone(), stdout, stderr };
    let result = match &cli.command {
        Command::Density(a) => cmd_density(a, &mut io),
        Command::Scale(a) => cmd_scale(a, &mut io),
        Command::Sample(a) => cmd_sample(a, &mut io),
        Command::Distance(a) => cmd_distance(a, &mut io),
        Command::Matrix(a) => cmd_matrix(a, &mut io),
        Command::Simulate(a) => cmd_simulate(a, &mut io),
        Command::Compare(a) => cmd_compare(a, &mut io),
        Command::Fit(a) => cmd_fit(a, &mut io),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: {}", e.message());
            e.code()
        }
    }
}

/// The rate of a single-rate prior from `--theta` or `--U/--a`.
fn resolve_theta(family: PriorFamily, rate: &RateArgs, io: &mut Io<'_>) -> CliResult<Option<f64>> {
    if matches!(family, PriorFamily::Uniform | PriorFamily::Reference) {
        if rate.theta.is_some() || rate.u.is_some() || rate.a.is_some() {
            io.warn("the uniform and reference priors have no rate; rate flags ignored");
        }
        return Ok(None);
    }
    if let Some(theta) = rate.theta {
        if rate.u.is_some() || rate.a.is_some() {
            io.warn("both --theta and --U/--a given; using --theta");
        }
        return Ok(Some(theta));
    }
    let (Some(u), Some(a)) = (rate.u, rate.a) else {
        return Err(usage("give either --theta or both --U and --a"));
    };
    let theta = match family {
        PriorFamily::Exch => scaling::solve_exchangeable(u, a)?.theta().expect("scalar rate"),
        PriorFamily::Ar1 => scaling::solve_ar1(u, a)?.theta().expect("scalar rate"),
        PriorFamily::Precision => scaling::solve_precision(u, a)?,
        PriorFamily::MaternPhi => scaling::solve_matern_range(u, a)?,
        PriorFamily::Uniform | PriorFamily::Reference => unreachable!(),
    };
    Ok(Some(theta))
}

fn scalar_prior(family: PriorFamily, theta: Option<f64>) -> CliResult<Box<dyn ScalarPrior>> {
    let t = || theta.ok_or_else(|| usage("missing rate"));
    Ok(match family {
        PriorFamily::Exch => Box::new(ExchCorrPrior::new(t()?)?),
        PriorFamily::Ar1 => Box::new(Ar1CorrPrior::new(t()?)?),
        PriorFamily::Precision => Box::new(Gumbel2PrecisionPrior::new(t()?)?),
        PriorFamily::MaternPhi => Box::new(MaternRangePrior::new(t()?)?),
        PriorFamily::Uniform => Box::new(UniformCorrPrior),
        PriorFamily::Reference => Box::new(Ar1ReferencePrior),
    })
}

/// `points` values from `start` to `end` inclusive.
fn linspace(start: f64, end: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    let h = (end - start) / (points - 1) as f64;
    (0..points).map(|i| if i + 1 == points { end } else { start + i as f64 * h }).collect()
}

fn distance_upper(dd: &DistanceDensity) -> f64 {
    match *dd {
        DistanceDensity::TruncatedExponential { rate, upper } if upper.is_infinite() => -(1e-3f64).ln() / rate,
        other => other.upper(),
    }
}

fn cmd_density(args: &DensityArgs, io: &mut Io<'_>) -> CliResult<()> {
    if args.grid_points < 2 {
        return Err(usage("--grid-points must be at least 2"));
    }
    let theta = resolve_theta(args.family, &args.rate, io)?;
    let prior = scalar_prior(args.family, theta)?;
    let dd = prior.distance_density();
    let (lo, hi) = match args.scale {
        DensityScale::Distance => (0.0, distance_upper(&dd)),
        DensityScale::Param => match prior.support() {
            (l, h) if h.is_finite() => (l, h),
            _ => (prior.quantile(1e-3)?, prior.quantile(1.0 - 1e-3)?),
        },
    };
    let start = args.grid_start.unwrap_or(lo);
    let end = args.grid_end.unwrap_or(hi);
    if !(start.is_finite() && end.is_finite() && start < end) {
        return Err(usage("grid needs finite --grid-start < --grid-end"));
    }
    let rows: Vec<(f64, f64, f64)> = linspace(start, end, args.grid_points)
        .into_iter()
        .map(|v| match args.scale {
            DensityScale::Param => (v, prior.density(v), prior.cdf(v)),
            DensityScale::Distance => (v, dd.density(v), dd.cdf(v)),
        })
        .collect();
    let column = if args.scale == DensityScale::Param { "value" } else { "distance" };
    let config = json!({ "command": "density", "args": args, "theta": theta, "distance_density": dd });
    let target = io.target(&args.output, &format!("density.{}", ext(args.format)));
    match args.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([column, "density", "cdf"])?;
            for r in &rows {
                w.serialize(r)?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Lib(Error::Io(e.into_error())))?;
            io.emit_csv(&target, &bytes, &config)
        }
        Format::Json => {
            let rows: Vec<Value> =
                rows.iter().map(|(v, d, c)| json!({ column: v, "density": finite(*d), "cdf": c })).collect();
            io.emit(&target, &to_json_pretty(&json!({ "config": config, "rows": rows }))?)
        }
    }
}

fn ext(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

/// JSON has no infinity; singular endpoints become the string "inf".
fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v > 0.0 {
        json!("inf")
    } else {
        Value::Null
    }
}

fn cmd_scale(args: &ScaleArgs, io: &mut Io<'_>) -> CliResult<()> {
    let spec = match args.family {
        ScaleFamily::Exch => ScalingSpec::Exchangeable { u: args.u, a: args.a },
        ScaleFamily::Ar1 => ScalingSpec::Ar1 { u: args.u, a: args.a },
        ScaleFamily::Rw => ScalingSpec::Precision { u: args.u, a: args.a },
        ScaleFamily::Matern => {
            let (Some(u_tau), Some(a_tau)) = (args.u_tau, args.a_tau) else {
                return Err(usage("the Matérn family needs --U-tau and --a-tau"));
            };
            ScalingSpec::Matern { u_phi: args.u, a_phi: args.a, u_tau, a_tau }
        }
    };
    let target = io.target(&args.output, "scale.json");
    match spec.solve() {
        Ok(sol) => {
            let body = json!({
                "config": { "command": "scale", "args": args },
                "spec": spec,
                "directions": spec.directions(),
                "rates": sol.rates,
                "residual": sol.residual,
                "iterations": sol.iterations,
                "near_infeasible": sol.near_infeasible,
                "feasible": true,
            });
            if sol.near_infeasible {
                io.warn("the rate is nearly zero; the statement sits at the feasibility boundary");
            }
            io.emit(&target, &to_json_pretty(&body)?)
        }
        Err(e) if e.is_domain() => {
            let body = json!({ "error": e.to_string(), "feasible": false, "spec": spec });
            io.emit(&target, &to_json_pretty(&body)?)?;
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_sample(args: &SampleArgs, io: &mut Io<'_>) -> CliResult<()> {
    if args.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let draws = match args.family {
        SampleFamily::Matern => {
            let (Some(lp), Some(lt)) = (args.lambda_phi, args.lambda_tau) else {
                return Err(usage("the Matérn prior needs --lambda-phi and --lambda-tau"));
            };
            pcpriors::sample(&PcPrior::MaternJoint(MaternJointPrior::new(lp, lt)?), args.count, args.seed)?
        }
        other => {
            let family = match other {
                SampleFamily::Exch => PriorFamily::Exch,
                SampleFamily::Ar1 => PriorFamily::Ar1,
                SampleFamily::Precision => PriorFamily::Precision,
                SampleFamily::Uniform => PriorFamily::Uniform,
                SampleFamily::Reference => PriorFamily::Reference,
                SampleFamily::Matern => unreachable!(),
            };
            let theta = resolve_theta(family, &args.rate, io)?;
            let prior = scalar_prior(family, theta)?;
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(args.seed);
            Draws::Scalar(prior.sample(&mut rng, args.count))
        }
    };
    let config = json!({ "command": "sample", "args": args });
    let target = io.target(&args.output, &format!("sample.{}", ext(args.format)));
    match args.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            match &draws {
                Draws::Scalar(v) => {
                    w.write_record(["value"])?;
                    for x in v {
                        w.serialize([x])?;
                    }
                }
                Draws::Pairs(v) => {
                    w.write_record(["tau", "phi"])?;
                    for p in v {
                        w.serialize(p)?;
                    }
                }
            }
            let bytes = w.into_inner().map_err(|e| CliError::Lib(Error::Io(e.into_error())))?;
            io.emit_csv(&target, &bytes, &config)
        }
        Format::Json => io.emit(&target, &to_json_pretty(&json!({ "config": config, "draws": draws }))?),
    }
}

fn cmd_distance(args: &DistanceArgs, io: &mut Io<'_>) -> CliResult<()> {
    let mut body = json!({ "config": { "command": "distance", "args": args } });
    match args.family {
        DistanceFamilyArg::Exch | DistanceFamilyArg::Ar1 => {
            let rho = args.rho.ok_or_else(|| usage("--rho is required"))?;
            let exch = args.family == DistanceFamilyArg::Exch;
            let limit = if exch { distance::distance_exchangeable(rho)? } else { distance::distance_ar1(rho)? };
            body["limit"] = serde_json::to_value(limit)?;
            match (args.n, args.rho0) {
                (Some(n), Some(rho0)) => {
                    let kld = if exch {
                        distance::kld_exchangeable_closed(n, rho0, rho)?
                    } else {
                        distance::kld_ar1_numeric(n, rho0, rho)?
                    };
                    body["kld"] = json!(kld);
                    body["distance"] = json!((2.0 * kld).sqrt());
                }
                (None, None) => {}
                _ => return Err(usage("--n and --rho0 go together")),
            }
        }
        DistanceFamilyArg::Precision => {
            let tau = args.tau.ok_or_else(|| usage("--tau is required"))?;
            body["limit"] = serde_json::to_value(distance::distance_precision(tau, args.n_eff)?)?;
        }
    }
    let target = io.target(&args.output, "distance.json");
    io.emit(&target, &to_json_pretty(&body)?)
}

fn read_coords(path: &Path) -> CliResult<Vec<[f64; 2]>> {
    #[derive(serde::Deserialize)]
    struct Row {
        lat: f64,
        lon: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for r in rdr.deserialize::<Row>() {
        let r = r.map_err(|e| CliError::Lib(Error::Parse(e.to_string())))?;
        out.push([r.lat, r.lon]);
    }
    if out.is_empty() {
        return Err(CliError::Lib(Error::Parse("coordinate file has no rows".into())));
    }
    Ok(out)
}

fn cmd_matrix(args: &MatrixArgs, io: &mut Io<'_>) -> CliResult<()> {
    let need_n = || args.n.ok_or_else(|| usage("--n is required"));
    let need_rho = || args.rho.ok_or_else(|| usage("--rho is required"));
    let spec = match args.family {
        MatrixFamily::Exch => CovarianceSpec::Exchangeable { n: need_n()?, rho: need_rho()? },
        MatrixFamily::Ar1 => CovarianceSpec::Ar1 { n: need_n()?, rho: need_rho()? },
        MatrixFamily::Rw1 => CovarianceSpec::Rw1 { n: need_n()?, scaled: args.scaled },
        MatrixFamily::Rw2 => CovarianceSpec::Rw2 { n: need_n()?, scaled: args.scaled },
        MatrixFamily::Icar => {
            let path = args.graph.as_ref().ok_or_else(|| usage("--graph is required for ICAR"))?;
            CovarianceSpec::Icar { graph: AdjacencyGraph::read(path)?, scaled: args.scaled }
        }
        MatrixFamily::Matern => {
            let path = args.coords.as_ref().ok_or_else(|| usage("--coords is required for Matérn"))?;
            let nu = args.nu.ok_or_else(|| usage("--nu is required"))?;
            let phi = args.phi.ok_or_else(|| usage("--phi is required"))?;
            CovarianceSpec::Matern { nu, phi, locations: read_coords(path)? }
        }
    };
    let m = spec.build()?;
    let mut bytes = Vec::new();
    gmrf::write_matrix_csv(m.dense(), &mut bytes)?;
    let target = io.target(&args.output, "matrix.csv");
    io.emit(&target, &bytes)
}

fn cmd_simulate(args: &SimulateArgs, io: &mut Io<'_>) -> CliResult<()> {
    let scenario = args.scenario.scenario();
    let data = simulate_scenario(&scenario, args.scenario.seed)?;
    let mut bytes = Vec::new();
    data.write_csv(&mut bytes)?;
    let config = json!({ "command": "simulate", "args": args, "scenario": scenario, "seed": args.scenario.seed });
    let target = io.target(&args.output, "data.csv");
    io.emit_csv(&target, &bytes, &config)
}

/// The three priors of the comparison on the distance scale `d = sqrt(1 - rho)`,
/// for `d` in `[0, sqrt 2)`.
pub fn distance_curves(theta: f64, points: usize) -> crate::Result<Vec<[f64; 4]>> {
    let pc = Ar1CorrPrior::new(theta)?.distance_density();
    let uni = UniformCorrPrior.distance_density();
    let reference = Ar1ReferencePrior.distance_density();
    let h = std::f64::consts::SQRT_2 / points as f64;
    Ok((0..points)
        .map(|i| {
            let d = i as f64 * h;
            [d, pc.density(d), uni.density(d), reference.density(d)]
        })
        .collect())
}

fn cmd_compare(args: &CompareArgs, io: &mut Io<'_>) -> CliResult<()> {
    if args.curve_points == 0 {
        return Err(usage("--curve-points must be positive"));
    }
    let rate = if args.rate.theta.is_none() && args.rate.u.is_none() && args.rate.a.is_none() {
        RateArgs { theta: None, u: Some(DEFAULT_COMPARE_U), a: Some(DEFAULT_COMPARE_A) }
    } else {
        args.rate.clone()
    };
    let theta = resolve_theta(PriorFamily::Ar1, &rate, io)?.expect("AR1 rate");
    let scenario = args.scenario.scenario();
    scenario.validate()?;
    let curves = distance_curves(theta, args.curve_points)?;
    let priors = [ComparisonPrior::Pc { theta }, ComparisonPrior::Uniform, ComparisonPrior::Reference];
    let opts = CompareOptions { grid_points: args.grid_points, ..CompareOptions::default() };
    let report = if args.reps == 0 {
        None
    } else {
        Some(compare_priors_with(&scenario, &priors, args.reps, args.scenario.seed, &opts)?)
    };
    let body = json!({
        "config": { "command": "compare", "args": args, "theta": theta, "scenario": scenario },
        "curves": {
            "distance": curves.iter().map(|r| r[0]).collect::<Vec<_>>(),
            "pc": curves.iter().map(|r| r[1]).collect::<Vec<_>>(),
            "uniform": curves.iter().map(|r| r[2]).collect::<Vec<_>>(),
            "reference": curves.iter().map(|r| r[3]).collect::<Vec<_>>(),
        },
        "report": report,
    });
    let target = io.target(&args.output, "compare.json");
    io.emit(&target, &to_json_pretty(&body)?)?;
    if let Some(path) = &target {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["distance", "pc", "uniform", "reference"])?;
        for r in &curves {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Lib(Error::Io(e.into_error())))?;
        write_file(&sibling(path, "_curves.csv"), &bytes)?;
        if let Some(rep) = &report {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "prior",
                "replications",
                "mean_abs_error",
                "mean_posterior_mean_rho",
                "mean_prob_rho_above",
                "mean_prob_near_base",
                "mean_posterior_distance",
            ])?;
            for p in &rep.priors {
                let a = &p.aggregate;
                w.serialize((
                    p.prior.name(),
                    rep.replications,
                    a.mean_abs_error,
                    a.mean_posterior_mean_rho,
                    a.mean_prob_rho_above,
                    a.mean_prob_near_base,
                    a.mean_posterior_distance,
                ))?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Lib(Error::Io(e.into_error())))?;
            write_file(&sibling(path, "_table.csv"), &bytes)?;
        }
    }
    Ok(())
}

fn fit_model(args: &FitArgs, io: &mut Io<'_>) -> CliResult<VcmModelSpec> {
    let prior_family = match args.family {
        FitFamily::Exch => PriorFamily::Exch,
        FitFamily::Ar1 => PriorFamily::Ar1,
        FitFamily::Rw1 | FitFamily::Rw2 | FitFamily::Icar => PriorFamily::Precision,
        FitFamily::Matern => PriorFamily::MaternPhi,
    };
    let prior = match (args.prior, args.family) {
        (FitPrior::Uniform, FitFamily::Ar1) => ModelPrior::Uniform,
        (FitPrior::Reference, FitFamily::Ar1) => ModelPrior::Reference,
        (FitPrior::Uniform | FitPrior::Reference, _) => {
            return Err(usage("--prior uniform/reference applies to the ar1 family only"))
        }
        (FitPrior::Pc, FitFamily::Matern) => {
            let lambda_phi = match args.lambda_phi {
                Some(l) => {
                    if args.rate.u.is_some() || args.rate.a.is_some() {
                        io.warn("both --lambda-phi and --U/--a given; using --lambda-phi");
                    }
                    l
                }
                None => resolve_theta(PriorFamily::MaternPhi, &args.rate, io)?.expect("rate"),
            };
            let lambda_tau = match (args.lambda_tau, args.u_tau, args.a_tau) {
                (Some(l), u, a) => {
                    if u.is_some() || a.is_some() {
                        io.warn("both --lambda-tau and --U-tau/--a-tau given; using --lambda-tau");
                    }
                    l
                }
                (None, Some(u), Some(a)) => scaling::solve_precision(u, a)?,
                _ => return Err(usage("give --lambda-tau or both --U-tau and --a-tau")),
            };
            ModelPrior::Pc(PcPrior::MaternJoint(MaternJointPrior::new(lambda_phi, lambda_tau)?))
        }
        (FitPrior::Pc, _) => {
            let theta = resolve_theta(prior_family, &args.rate, io)?.expect("rate");
            ModelPrior::Pc(match prior_family {
                PriorFamily::Exch => PcPrior::ExchCorr(ExchCorrPrior::new(theta)?),
                PriorFamily::Ar1 => PcPrior::Ar1Corr(Ar1CorrPrior::new(theta)?),
                _ => PcPrior::Gumbel2Precision(Gumbel2PrecisionPrior::new(theta)?),
            })
        }
    };
    let family = match args.family {
        FitFamily::Exch => VcmFamily::Exchangeable,
        FitFamily::Ar1 => VcmFamily::Ar1,
        FitFamily::Rw1 => VcmFamily::Rw1,
        FitFamily::Rw2 => VcmFamily::Rw2,
        FitFamily::Icar => {
            let path = args.graph.as_ref().ok_or_else(|| usage("--graph is required for ICAR"))?;
            VcmFamily::Icar { graph: AdjacencyGraph::read(path)? }
        }
        FitFamily::Matern => VcmFamily::Matern { nu: args.nu },
    };
    Ok(VcmModelSpec::new(family, prior)?
        .with_tau(args.tau)?
        .with_beta0_var(args.beta0_var)?
        .with_alpha_var(args.alpha_var)?)
}

fn cmd_fit(args: &FitArgs, io: &mut Io<'_>) -> CliResult<()> {
    let data = VcmDataset::read_csv_path(&args.data, args.noise)?;
    let model = fit_model(args, io)?;
    let spec = GridSpec {
        points: args.grid_points,
        matern_points: args.matern_points,
        lower_quantile: args.lower_quantile,
        upper_quantile: args.upper_quantile,
    };
    let grid = Grid::for_model(&model, &spec)?;
    let post = fit_grid(&data, &model, &grid)?;
    for w in &post.warnings {
        io.warn(w);
    }
    let body = json!({
        "config": { "command": "fit", "args": args },
        "model": {
            "family": model.family.name(),
            "prior": model.prior,
            "alpha_var": model.alpha_var,
            "beta0_var": model.beta0_var,
            "tau": model.tau,
            "sum_to_zero": model.constrained(),
            "n": data.n(),
            "noise_sd": data.noise_sd,
        },
        "posterior": post,
    });
    let target = io.target(&args.output, "fit.json");
    io.emit(&target, &to_json_pretty(&body)?)
}
