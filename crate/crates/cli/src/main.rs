//! `linsys` command-line tool.
//!
//! Exit codes: 0 success (no rejection / member of the closure), 3 the test
//! rejects, 4 not in the closure, 64 usage, 65 bad input data, 66 input file
//! missing or unreadable, 70 internal failure.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use linsys::closure::{member_closure, ClosureOptions, Triple};
use linsys::designs::{monte_carlo, Design, McOptions, RejectionCurve};
use linsys::direction::{CnRegime, Method, MethodChoice};
use linsys::io::{read_dataset, write_dataset};
use linsys::moments::json::ModelJson;
use linsys::moments::{Dataset, MomentModel};
use linsys::testkit::{invert_ci, run_multi_split, InvertOptions, SeedPolicy, TestOptions};
use linsys::Error;
use serde::Serialize;

const EXIT_REJECT: u8 = 3;
const EXIT_NOT_MEMBER: u8 = 4;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_NO_INPUT: u8 = 66;
const EXIT_SOFTWARE: u8 = 70;

#[derive(Parser)]
#[command(name = "linsys", version, about = "Tests for linear systems with estimated coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check whether a coefficient triple lies in the closure of the null set.
    ClosureCheck {
        /// Triple JSON: {"a0": [[...]] | null, "a1": [[...]], "beta": [...]}
        triple: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        band_tol: f64,
        #[arg(long, default_value_t = 1e-8)]
        feasibility_tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run one test of the null hypothesis.
    Test {
        #[command(flatten)]
        input: InputArgs,
        /// Hypothesised value bound into the model.
        #[arg(long, allow_hyphen_values = true)]
        value: Option<f64>,
        #[command(flatten)]
        test: TestArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Confidence set for the hypothesised value by test inversion.
    Invert {
        #[command(flatten)]
        input: InputArgs,
        /// lo:hi:step
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long, value_enum, default_value_t = SeedPolicyArg::Shared)]
        seed_policy: SeedPolicyArg,
        /// Skip bisection of the outer accept/reject transitions.
        #[arg(long)]
        no_refine: bool,
        #[command(flatten)]
        test: TestArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Monte Carlo rejection frequencies for a canned design.
    Simulate {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        /// lo:hi:step
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[command(flatten)]
        test: TestArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Render a rejection-curve CSV as SVG.
    Plot {
        /// CSV written by `simulate`.
        input: PathBuf,
        /// Identified set to shade, lo:hi. Defaults to the design's set.
        #[arg(long, allow_hyphen_values = true)]
        band: Option<String>,
        #[arg(long, value_enum)]
        design: Option<DesignKind>,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a simulated data set (and optionally its model JSON).
    Generate {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, value_enum)]
    design: DesignKind,
    /// Number of inequalities in the cox design.
    #[arg(long = "H", default_value_t = 3)]
    h: usize,
}

impl DesignArgs {
    fn design(&self) -> Design {
        self.design.with_h(self.h)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignKind {
    Cox,
    Goff,
    Fh,
}

impl DesignKind {
    fn with_h(self, h: usize) -> Design {
        match self {
            DesignKind::Cox => Design::Cox { h },
            DesignKind::Goff => Design::Goff,
            DesignKind::Fh => Design::Fh,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// Simulate the data from a canned design instead of reading files.
    #[arg(long, value_enum, conflicts_with_all = ["model", "data"])]
    design: Option<DesignKind>,
    #[arg(long = "H", default_value_t = 3)]
    h: usize,
    /// Sample size for --design.
    #[arg(long)]
    n: Option<usize>,
    /// Model JSON.
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    /// Data CSV with a header row of feature names.
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Direct,
    Screening,
}

#[derive(Clone, Copy, ValueEnum)]
enum CnArg {
    Low,
    High,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeedPolicyArg {
    Shared,
    PerPoint,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Screening)]
    method: MethodArg,
    /// One-based column kept in the minimum by the screening method.
    #[arg(long)]
    jstar: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    splits: usize,
    #[arg(long, default_value_t = 1e-6)]
    sigma_floor: f64,
    #[arg(long, value_enum, default_value_t = CnArg::High)]
    cn: CnArg,
    /// Never reject when the smallest singular value of the first-split A0
    /// is at most this.
    #[arg(long)]
    rank_tau: Option<f64>,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

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

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) => match e.root() {
                Error::InvalidArgument(_) | Error::Domain(_) | Error::UnsupportedCombiner(_) => EXIT_USAGE,
                Error::Dimension(_)
                | Error::NonFinite(_)
                | Error::Parse { .. }
                | Error::Model(_)
                | Error::Data(_)
                | Error::Json(_)
                | Error::Csv(_) => EXIT_DATA,
                Error::Io(_) => EXIT_NO_INPUT,
                _ => EXIT_SOFTWARE,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("linsys: {e}");
        return ExitCode::from(e.code());
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("linsys: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("LINSYS_THREADS") else {
        return Ok(());
    };
    let n: usize = match v.trim().parse() {
        Ok(n) if n >= 1 => n,
        _ => return usage(format!("LINSYS_THREADS must be a positive integer, got `{v}`")),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Lib(Error::Numeric(format!("thread pool: {e}"))))
}

fn run(cmd: Command) -> CliResult<u8> {
    match cmd {
        Command::ClosureCheck { triple, band_tol, feasibility_tol, out } => {
            if out.format == Some(Format::Csv) {
                return usage("closure-check writes JSON only");
            }
            let t = Triple::from_json_str(&read_text(&triple)?).map_err(|e| ctx(e, &triple))?;
            let opts = ClosureOptions { band_tol, feasibility_tol, ..ClosureOptions::default() };
            let report = member_closure(&t, &opts)?;
            emit(&out.out, &to_json(&report)?)?;
            Ok(if report.in_closure { 0 } else { EXIT_NOT_MEMBER })
        }
        Command::Test { input, value, test, out } => {
            let (opts, method) = test_options(&test)?;
            let (data, family) = load_input(&input, test.seed)?;
            let model = family.model(value)?;
            let outcome = run_multi_split(&model, &data, &method, test.alpha, test.seed, &opts)?;
            let text = match out.format.unwrap_or(Format::Json) {
                Format::Json => to_json(&outcome)?,
                Format::Csv => {
                    let mut s = String::from("split,t_n,p_value,reject,direction_feasible\n");
                    for (m, o) in outcome.splits.iter().enumerate() {
                        s += &format!("{},{},{},{},{}\n", m + 1, o.t_n, o.p_value, o.reject, o.direction_feasible);
                    }
                    s
                }
            };
            emit(&out.out, &text)?;
            Ok(if outcome.reject { EXIT_REJECT } else { 0 })
        }
        Command::Invert { input, grid, seed_policy, no_refine, test, out } => {
            let (opts, method) = test_options(&test)?;
            let grid = parse_grid(&grid)?;
            let (data, family) = load_input(&input, test.seed)?;
            if !family.takes_value() {
                return usage("the model has no null_value entry, so there is nothing to invert");
            }
            let inv = InvertOptions {
                seed_policy: match seed_policy {
                    SeedPolicyArg::Shared => SeedPolicy::Shared,
                    SeedPolicyArg::PerPoint => SeedPolicy::PerPoint,
                },
                refine: !no_refine,
                ..InvertOptions::default()
            };
            let cs = invert_ci(|v| family.model(Some(v)), &data, &method, test.alpha, &grid, test.seed, &opts, &inv)?;
            let text = match out.format.unwrap_or(Format::Json) {
                Format::Json => to_json(&cs)?,
                Format::Csv => {
                    let mut s = String::from("value,p_value,accepted\n");
                    for i in 0..cs.grid.len() {
                        s += &format!("{},{},{}\n", cs.grid[i], cs.p_values[i], cs.accepted[i]);
                    }
                    s
                }
            };
            emit(&out.out, &text)?;
            Ok(0)
        }
        Command::Simulate { design, n, reps, grid, test, out } => {
            let (opts, method) = test_options(&test)?;
            let grid = parse_grid(&grid)?;
            let j_star = jstar_index(test.jstar)?;
            let mc = McOptions {
                n,
                reps,
                alpha: test.alpha,
                base_seed: test.seed,
                cn: method.cn,
                j_star,
                test: opts,
            };
            let curve = monte_carlo(&design.design(), &grid, &mc)?;
            let text = match out.format.unwrap_or(Format::Csv) {
                Format::Csv => curve.to_csv_string()?,
                Format::Json => to_json(&curve)?,
            };
            emit(&out.out, &text)?;
            Ok(0)
        }
        Command::Plot { input, band, design, title, out } => {
            let curve = RejectionCurve::from_csv_str(&read_text(&input)?).map_err(|e| ctx(e, &input))?;
            let band = match (band, design) {
                (Some(b), _) => Some(parse_pair(&b)?),
                (None, Some(d)) => Some(d.with_h(3).identified_set()),
                (None, None) => None,
            };
            let svg = plot::render(&curve, band, title.as_deref());
            emit(&out, &svg)?;
            Ok(0)
        }
        Command::Generate { design, n, seed, out, model_out } => {
            let d = design.design();
            d.validate()?;
            let data = d.generate(n, seed)?;
            write_dataset(&out, &data)?;
            if let Some(path) = model_out {
                write_text(&path, &to_json(&d.model_json())?)?;
            }
            Ok(0)
        }
    }
}

/// `--jstar` is one-based on the command line.
fn jstar_index(jstar: Option<usize>) -> CliResult<Option<usize>> {
    match jstar {
        Some(0) => usage("--jstar is one-based"),
        j => Ok(j.map(|k| k - 1)),
    }
}

fn test_options(a: &TestArgs) -> CliResult<(TestOptions, MethodChoice)> {
    if !(a.alpha > 0.0 && a.alpha < 0.5) {
        return usage(format!("--alpha must lie in (0, 0.5), got {}", a.alpha));
    }
    if a.splits == 0 {
        return usage("--splits must be at least 1");
    }
    if !(a.sigma_floor > 0.0) {
        return usage("--sigma-floor must be positive");
    }
    if a.rank_tau.is_some_and(|t| !(t >= 0.0)) {
        return usage("--rank-tau must be non-negative");
    }
    let method = match a.method {
        MethodArg::Direct if a.jstar.is_some() => return usage("--jstar applies to the screening method"),
        MethodArg::Direct => Method::Direct,
        MethodArg::Screening => Method::Screening { j_star: jstar_index(a.jstar)? },
    };
    let cn = match a.cn {
        CnArg::Low => CnRegime::LowDim,
        CnArg::High => CnRegime::HighDim,
    };
    let opts = TestOptions {
        sigma_floor: a.sigma_floor,
        rank_tau: a.rank_tau,
        splits: a.splits,
        ..TestOptions::default()
    };
    Ok((opts, MethodChoice { method, cn }))
}

/// A model JSON with its feature names; the hypothesised value is bound later.
struct Family {
    json: ModelJson,
    names: Vec<String>,
}

impl Family {
    fn takes_value(&self) -> bool {
        self.json.uses_null_value()
    }

    fn model(&self, value: Option<f64>) -> linsys::Result<MomentModel> {
        if self.takes_value() && value.is_none() {
            return Err(Error::InvalidArgument("the model has a null_value entry; pass --value".into()));
        }
        self.json.instantiate(&self.names, value)
    }
}

fn load_input(a: &InputArgs, seed: u64) -> CliResult<(Dataset, Family)> {
    match (a.design, &a.model, &a.data) {
        (Some(kind), _, _) => {
            let Some(n) = a.n else {
                return usage("--design needs --n");
            };
            let d = kind.with_h(a.h);
            d.validate()?;
            let data = d.generate(n, seed)?;
            Ok((data, Family { json: d.model_json(), names: d.feature_names() }))
        }
        (None, Some(model), Some(data)) => {
            if a.n.is_some() {
                return usage("--n applies to --design only");
            }
            let json = ModelJson::from_json_str(&read_text(model)?).map_err(|e| ctx(e, model))?;
            let data = read_dataset(data)?;
            let names = data.names().to_vec();
            Ok((data, Family { json, names }))
        }
        _ => usage("give either --design or both --model and --data"),
    }
}

fn parse_num(s: &str, what: &str) -> CliResult<f64> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => usage(format!("`{s}` is not a finite number in {what}")),
    }
}

/// `lo:hi:step`, both ends included. Values are rounded to 12 decimals so
/// that `0.1` steps print cleanly.
fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return usage(format!("grid `{s}` is not of the form lo:hi:step"));
    }
    let lo = parse_num(parts[0], "grid")?;
    let hi = parse_num(parts[1], "grid")?;
    let step = parse_num(parts[2], "grid")?;
    if !(step > 0.0) || hi < lo {
        return usage(format!("grid `{s}` needs lo <= hi and step > 0"));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return usage(format!("grid `{s}` has too many points"));
    }
    Ok((0..count).map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12).collect())
}

fn parse_pair(s: &str) -> CliResult<(f64, f64)> {
    let Some((a, b)) = s.split_once(':') else {
        return usage(format!("band `{s}` is not of the form lo:hi"));
    };
    let (lo, hi) = (parse_num(a, "band")?, parse_num(b, "band")?);
    if hi < lo {
        return usage(format!("band `{s}` has lo > hi"));
    }
    Ok((lo, hi))
}

fn ctx(e: Error, path: &Path) -> CliError {
    CliError::Lib(Error::Context { context: path.display().to_string(), source: Box::new(e) })
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| ctx(e.into(), path))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| {
        CliError::Lib(Error::Numeric(format!("cannot write {}: {e}", path.display())))
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_syntax() {
        let g = parse_grid("-1:1:0.1").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[3], -0.7);
        assert_eq!(g[20], 1.0);
        assert_eq!(parse_grid("0.40:0.85:0.005").unwrap().len(), 91);
        assert_eq!(parse_grid("2:2:1").unwrap(), vec![2.0]);
        for bad in ["1:0:0.1", "0:1:0", "0:1", "a:1:0.1", "0:1:-1"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn band_syntax() {
        assert_eq!(parse_pair("-2:0").unwrap(), (-2.0, 0.0));
        assert!(parse_pair("1:0").is_err());
        assert!(parse_pair("1").is_err());
    }
}
