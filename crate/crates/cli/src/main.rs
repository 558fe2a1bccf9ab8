//! `lifetail` command-line interface.

mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use lifetail::fit::{exceedances, FitOptions};
use lifetail::gof::plotting_positions_level;
use lifetail::inference::{chisq_gof, hazard_ci, profile_endpoint, ChisqGofOptions, CiMethod};
use lifetail::npmle::Convention;
use lifetail::sampling::{BootstrapOptions, SchemeKind};
use lifetail::svg::{write_svg, Figure};
use lifetail::{
    anova, bootstrap_lrt, emit_svg, fit_with, gppiece_params, load_csv_str, nc_score_test, npmle,
    sample_elife, test_strata, tstab, Dataset, Error, ExceedanceConfig, Family, FitResult,
    LifetimeRecord, ParamVector, PlotKind, SamplingScheme, Schema,
};

#[derive(Parser, Serialize)]
#[command(name = "lifetail", version, about = "Likelihood inference for truncated and censored lifetimes")]
struct Cli {
    /// JSON file whose keys mirror the long flags; flags given on the command line win.
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Worker threads for bootstrap replicates and per-threshold fits.
    #[arg(long, global = true)]
    #[serde(skip)]
    jobs: Option<usize>,
    #[command(subcommand)]
    #[serde(flatten)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Maximum likelihood fit of one family above a threshold.
    Fit(FitArgs),
    /// Turnbull nonparametric maximum likelihood estimate.
    Npmle(NpmleArgs),
    /// Likelihood ratio test of two nested families.
    Anova(AnovaArgs),
    /// Generalized Pareto shape estimates over a range of thresholds.
    Tstab(ThreshArgs),
    /// Score tests of a constant shape in the piecewise generalized Pareto.
    Ncscore(ThreshArgs),
    /// Profile likelihood of the endpoint of a generalized Pareto fit.
    ProfileEndpoint(EndpointArgs),
    /// Hazard estimates with pointwise confidence intervals.
    Hazard(HazardArgs),
    /// Simulate lifetimes under a sampling scheme.
    Sample(SampleArgs),
    /// Parametric bootstrap likelihood ratio test.
    BootLrt(BootArgs),
    /// Goodness-of-fit plotting positions.
    Gof(GofArgs),
    /// Test for equal parameters across strata.
    Strata(StrataArgs),
    /// Chi-squared goodness of fit for cohort by age-band counts.
    ChisqGof(ChisqArgs),
}

#[derive(Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct DataArgs {
    /// Input CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Column mapping `field=column` (fields: time, time2, event, ltrunc, rtrunc, ltrunc2, rtrunc2, weight, stratum).
    #[arg(long = "map", value_name = "FIELD=COLUMN")]
    map: Vec<String>,
    /// Column holding stratum labels.
    #[arg(long)]
    stratum: Option<String>,
}

#[derive(Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    family: String,
    #[arg(long)]
    thresh: f64,
    /// Piece thresholds of `gppiece`, measured from the threshold (first must be 0).
    #[arg(long, value_delimiter = ',')]
    pieces: Vec<f64>,
    /// Output JSON path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct NpmleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// Estimate the distribution of exceedances of this threshold.
    #[arg(long)]
    thresh: Option<f64>,
    /// Evaluation convention within Turnbull intervals: left, right or interpolate.
    #[arg(long, default_value = "right")]
    convention: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct AnovaArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    null: String,
    #[arg(long)]
    alt: String,
    #[arg(long)]
    thresh: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct ThreshArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// Increasing thresholds, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    thresholds: Vec<f64>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct EndpointArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    thresh: f64,
    /// Grid of endpoint values in original units (default: 0.9 to 3 times the estimate).
    #[arg(long, value_delimiter = ',')]
    psi: Vec<f64>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct HazardArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    family: String,
    #[arg(long)]
    thresh: f64,
    #[arg(long, value_delimiter = ',')]
    pieces: Vec<f64>,
    /// Times in original units, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    times: Vec<f64>,
    /// wald or profile.
    #[arg(long, default_value = "wald")]
    method: String,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Output CSV path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct SampleArgs {
    #[arg(long)]
    family: String,
    /// Parameter `name=value`; repeatable.
    #[arg(long = "par", value_name = "NAME=VALUE")]
    par: Vec<String>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    shape: Option<f64>,
    /// Piece thresholds of `gppiece`.
    #[arg(long, value_delimiter = ',')]
    pieces: Vec<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long, required = true)]
    seed: Option<u64>,
    /// none, ltrt, ltrc or ditrunc.
    #[arg(long, default_value = "none")]
    scheme: String,
    #[arg(long, value_delimiter = ',')]
    lower: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    upper: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    lower2: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    upper2: Vec<f64>,
    /// Output CSV path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct BootArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    null: String,
    #[arg(long)]
    alt: String,
    #[arg(long)]
    thresh: f64,
    #[arg(long, default_value_t = 999)]
    b: usize,
    #[arg(long, required = true)]
    seed: Option<u64>,
    /// Band width used to discretize simulated lifetimes; 0 keeps them exact.
    #[arg(long, default_value_t = 1.0)]
    band: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of replicate statistics.
    #[arg(long)]
    replicates: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct GofArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    family: String,
    #[arg(long)]
    thresh: f64,
    #[arg(long, value_delimiter = ',')]
    pieces: Vec<f64>,
    /// pp, qq, tmd, exp or erp.
    #[arg(long, default_value = "qq")]
    kind: String,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Output CSV path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct StrataArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    family: String,
    #[arg(long)]
    thresh: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct ChisqArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    family: String,
    #[arg(long)]
    thresh: f64,
    /// Excess lifetimes at or above this value are pooled.
    #[arg(long, default_value_t = 5.0)]
    pool: f64,
    #[arg(long, default_value_t = 1.0)]
    band: f64,
    #[arg(long, default_value_t = 999)]
    b: usize,
    #[arg(long, required = true)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(e) if e.is_validation() => 2,
            CliError::Lib(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Lib(Error::Io(format!("{}: {e}", path.display())))
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> CliResult<T> {
    Ok(s.parse::<T>()?)
}

/// Input dataset with the digest of the file it came from.
struct Input {
    data: Dataset,
    sha256: String,
}

fn load(args: &DataArgs) -> CliResult<Input> {
    let bytes = fs::read(&args.data).map_err(|e| io_err(&args.data, e))?;
    let sha256 = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Usage(format!("{} is not UTF-8 text", args.data.display())))?;
    let mut schema = Schema::infer_from_csv(&text);
    for m in &args.map {
        let (field, column) = m
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--map expects FIELD=COLUMN, got '{m}'")))?;
        schema.set(field.trim(), column.trim())?;
    }
    if let Some(s) = &args.stratum {
        schema.stratum = Some(s.clone());
    }
    let data = load_csv_str(&text, &schema)?.with_provenance(args.data.display().to_string());
    Ok(Input { data, sha256 })
}

fn fit_options(pieces: &[f64]) -> FitOptions {
    FitOptions {
        pieces: pieces.to_vec(),
        ..Default::default()
    }
}

fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| io_err(p, e)),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

/// Result wrapped with the tool version, the resolved configuration and the input digest.
fn envelope(config: &Value, sha256: Option<&str>, result: impl Serialize) -> CliResult<Vec<u8>> {
    let result = serde_json::to_value(result).map_err(|e| CliError::Usage(e.to_string()))?;
    let doc = json!({
        "tool": "lifetail",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "input_sha256": sha256,
        "result": result,
    });
    let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Usage(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn write_json(path: Option<&Path>, config: &Value, sha256: Option<&str>, result: impl Serialize) -> CliResult<()> {
    write_bytes(path, &envelope(config, sha256, result)?)
}

fn write_figure(path: Option<&Path>, fig: Figure) -> CliResult<()> {
    match path {
        Some(p) => Ok(write_svg(&fig, p)?),
        None => Ok(()),
    }
}

fn fit_family(d: &Dataset, family: &str, thresh: f64, pieces: &[f64]) -> CliResult<FitResult> {
    let family: Family = parse(family)?;
    Ok(fit_with(d, family, &ExceedanceConfig::new(thresh), &fit_options(pieces))?)
}

fn params(a: &SampleArgs, family: Family) -> CliResult<ParamVector> {
    let mut pairs: Vec<(String, f64)> = Vec::new();
    for p in &a.par {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--par expects NAME=VALUE, got '{p}'")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("cannot parse '{v}' as a number")))?;
        pairs.push((k.trim().to_string(), v));
    }
    if let Some(s) = a.scale {
        pairs.push(("scale".into(), s));
    }
    if let Some(s) = a.shape {
        pairs.push(("shape".into(), s));
    }
    if family == Family::GpPiece {
        let get = |name: &str| pairs.iter().find(|(k, _)| k == name).map(|p| p.1);
        let scale = get("scale").ok_or_else(|| CliError::Usage("gppiece needs a scale".into()))?;
        let shapes: Vec<f64> = (1..=a.pieces.len())
            .map(|i| get(&format!("shape{i}")).ok_or_else(|| CliError::Usage(format!("missing parameter 'shape{i}'"))))
            .collect::<CliResult<_>>()?;
        return Ok(gppiece_params(scale, &shapes, &a.pieces)?);
    }
    let named: Vec<(&str, f64)> = pairs.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    Ok(ParamVector::from_named(family, &named)?)
}

fn write_records(records: &[LifetimeRecord], second: bool) -> Vec<u8> {
    let mut out = String::from("time,time2,event,ltrunc,rtrunc");
    if second {
        out.push_str(",ltrunc2,rtrunc2");
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{},{},{}", r.time1, r.time2, r.event.code(), r.ltrunc1, r.rtrunc1));
        if second {
            let (a, b) = r.window2.unwrap_or((f64::NAN, f64::NAN));
            out.push_str(&format!(",{a},{b}"));
        }
        out.push('\n');
    }
    out.into_bytes()
}

fn run(cli: &Cli, config: &Value) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => {
            let input = load(&a.data)?;
            let fr = fit_family(&input.data, &a.family, a.thresh, &a.pieces)?;
            write_json(a.out.as_deref(), config, Some(&input.sha256), &fr)
        }
        Command::Npmle(a) => {
            let input = load(&a.data)?;
            let convention: Convention = parse(&a.convention)?;
            let d = match a.thresh {
                Some(u) => exceedances(&input.data, &ExceedanceConfig::new(u))?,
                None => input.data,
            };
            let scdf = npmle(&d)?.with_convention(convention);
            write_figure(a.svg.as_deref(), Figure::from(&scdf))?;
            write_json(a.out.as_deref(), config, Some(&input.sha256), &scdf)
        }
        Command::Anova(a) => {
            let input = load(&a.data)?;
            let cfg = ExceedanceConfig::new(a.thresh);
            let res = anova(&input.data, parse(&a.null)?, parse(&a.alt)?, &cfg, &FitOptions::default())?;
            write_json(a.out.as_deref(), config, Some(&input.sha256), &res)
        }
        Command::Tstab(a) => {
            let input = load(&a.data)?;
            let diag = tstab(&input.data, &a.thresholds, a.level, &FitOptions::default())?;
            write_figure(a.svg.as_deref(), Figure::from(&diag))?;
            write_json(a.out.as_deref(), config, Some(&input.sha256), &diag)
        }
        Command::Ncscore(a) => {
            let input = load(&a.data)?;
            let diag = nc_score_test(&input.data, &a.thresholds, &FitOptions::default())?;
            write_figure(a.svg.as_deref(), Figure::from(&diag))?;
            write_json(a.out.as_deref(), config, Some(&input.sha256), &diag)
        }
        Command::ProfileEndpoint(a) => {
            let input = load(&a.data)?;
            let curve = profile_endpoint(&input.data, &ExceedanceConfig::new(a.thresh), &a.psi, a.level)?;
            write_figure(a.svg.as_deref(), Figure::from(&curve))?;
            write_json(a.out.as_deref(), config, Some(&input.sha256), &curve)
        }
        Command::Hazard(a) => {
            let input = load(&a.data)?;
            let method: CiMethod = parse(&a.method)?;
            let fr = fit_family(&input.data, &a.family, a.thresh, &a.pieces)?;
            let dx = exceedances(&input.data, &ExceedanceConfig::new(a.thresh))?;
            if let Some(t) = a.times.iter().find(|&&t| !(t >= a.thresh)) {
                return Err(CliError::Usage(format!("time {t} lies below the threshold {}", a.thresh)));
            }
            let times: Vec<f64> = a.times.iter().map(|t| t - a.thresh).collect();
            let bands = hazard_ci(&fr, &dx, &times, method, a.level)?;
            let mut out = String::from("time,estimate,lower,upper\n");
            for b in &bands {
                out.push_str(&format!("{},{},{},{}\n", b.time + a.thresh, b.estimate, b.lower, b.upper));
            }
            write_bytes(a.out.as_deref(), out.as_bytes())
        }
        Command::Sample(a) => {
            let family: Family = parse(&a.family)?;
            let p = params(a, family)?;
            let kind: SchemeKind = parse(&a.scheme)?;
            let scheme = SamplingScheme {
                kind,
                lower: a.lower.clone(),
                upper: a.upper.clone(),
                lower2: a.lower2.clone(),
                upper2: a.upper2.clone(),
            };
            let seed = a.seed.ok_or_else(|| CliError::Usage("--seed is required".into()))?;
            let recs = sample_elife(a.n, &p, &scheme, seed)?;
            write_bytes(a.out.as_deref(), &write_records(&recs, kind == SchemeKind::Ditrunc))
        }
        Command::BootLrt(a) => {
            let input = load(&a.data)?;
            let seed = a.seed.ok_or_else(|| CliError::Usage("--seed is required".into()))?;
            let mut opts = BootstrapOptions::new(a.b, seed);
            opts.band = (a.band > 0.0).then_some(a.band);
            let cfg = ExceedanceConfig::new(a.thresh);
            let res = bootstrap_lrt(&input.data, parse(&a.null)?, parse(&a.alt)?, &cfg, &opts)?;
            if let Some(p) = &a.replicates {
                let mut buf = Vec::new();
                res.write_csv(&mut buf).map_err(|e| io_err(p, e))?;
                write_bytes(Some(p), &buf)?;
            }
            let mut summary = serde_json::to_value(&res).map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(obj) = summary.as_object_mut() {
                obj.remove("replicates");
            }
            write_json(a.out.as_deref(), config, Some(&input.sha256), summary)
        }
        Command::Gof(a) => {
            let input = load(&a.data)?;
            let kind: PlotKind = parse(&a.kind)?;
            let fr = fit_family(&input.data, &a.family, a.thresh, &a.pieces)?;
            let pd = plotting_positions_level(&fr, &input.data, kind, a.level)?;
            if let Some(p) = &a.svg {
                emit_svg(&pd, p)?;
            }
            let mut buf = Vec::new();
            pd.write_csv(&mut buf).map_err(|e| io_err(Path::new("<csv>"), e))?;
            write_bytes(a.out.as_deref(), &buf)
        }
        Command::Strata(a) => {
            let input = load(&a.data)?;
            if a.data.stratum.is_none() && !a.data.map.iter().any(|m| m.trim_start().starts_with("stratum=")) {
                return Err(CliError::Usage("strata needs a stratum column (--stratum COLUMN)".into()));
            }
            let res = test_strata(&input.data, parse(&a.family)?, &ExceedanceConfig::new(a.thresh), &FitOptions::default())?;
            write_json(a.out.as_deref(), config, Some(&input.sha256), &res)
        }
        Command::ChisqGof(a) => {
            let input = load(&a.data)?;
            let seed = a.seed.ok_or_else(|| CliError::Usage("--seed is required".into()))?;
            let fr = fit_family(&input.data, &a.family, a.thresh, &[])?;
            let mut opts = ChisqGofOptions::new(a.b, seed);
            opts.pool_min = a.pool;
            opts.band = a.band;
            let res = chisq_gof(&input.data, &fr, &opts)?;
            write_json(a.out.as_deref(), config, Some(&input.sha256), &res)
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::merge_config(argv) {
        Ok(a) => a,
        Err(m) => {
            eprintln!("error: {m}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let config = serde_json::to_value(&cli).unwrap_or(Value::Null);
    match run(&cli, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
