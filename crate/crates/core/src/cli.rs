//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 the parameters are
//! mathematically inadmissible, 3 an oracle check failed (suspected bug).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds::{
    corollary_one, corollary_two, corollary_three, theorem_one, theorem_three, theorem_two, BoundReport,
    DEFAULT_TRUNCATION,
};
use crate::dist::ComponentSpec;
use crate::error::Error;
use crate::k1k2::{
    one_param_bound_k1k2, one_param_params, table1, table2, two_param_bound_k1k2, two_param_params,
    waiting_pmf_recursive, Form, K1K2Config, TableCell, TABLE_GRID, TABLE_NS, TABLE_P_BARS,
};
use crate::matching::{match_one_param, match_three_param, match_two_param, NbParams, OneParamMode};
use crate::moments::{aggregate, AggregateMoments};
use crate::numeric::fmt_sig;
use crate::oracle::{
    max_standardized_deviation, mixture_pmf, mixture_support, nb_ge_pmf, nb_pmf, simulate_k1k2,
    verify_domination, verify_domination_k1k2, waiting_support, DominationReport, MAX_EXACT_SUPPORT,
};
use crate::pmf::Pmf;
use crate::steinop::{stein_expectation, SteinOperator, TestFunction};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INADMISSIBLE: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

pub const MIN_TRUNCATION: usize = 10;
pub const TRUNCATION_ENV: &str = "NB_STEIN_TRUNCATION";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Md,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    OneParam,
    TwoParam,
    ThreeParam,
    K1k2One,
    K1k2Two,
}

impl SchemeArg {
    fn is_k1k2(self) -> bool {
        matches!(self, SchemeArg::K1k2One | SchemeArg::K1k2Two)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FormArg {
    #[default]
    Tabulated,
    Stated,
}

impl From<FormArg> for Form {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Tabulated => Form::Tabulated,
            FormArg::Stated => Form::Stated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Bound,
    Table1,
    Table2,
    Verify,
    Simulate,
    SteinCheck,
}

fn default_truncation() -> usize {
    std::env::var(TRUNCATION_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_TRUNCATION)
}

fn default_trials() -> u64 {
    1_000_000
}

fn default_functions() -> usize {
    100
}

/// Options shared by every command. The same struct is read from a JSON
/// config file, where unknown fields are rejected.
#[derive(Debug, Clone, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// JSON mixture file: {"components": [{"type": "geometric", "p": 0.4, "count": 10}, ...]}
    #[arg(long = "mixture")]
    #[serde(default)]
    pub mixture_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(default)]
    pub scheme: Option<SchemeArg>,
    /// Series truncation L (at least 10)
    #[arg(long, env = TRUNCATION_ENV, default_value_t = DEFAULT_TRUNCATION)]
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    #[arg(long, value_enum)]
    #[serde(default)]
    pub format: Option<Format>,
    /// Write here instead of stdout
    #[arg(long)]
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub k1: Option<u32>,
    #[arg(long)]
    #[serde(default)]
    pub k2: Option<u32>,
    #[arg(long)]
    #[serde(default)]
    pub p_bar: Option<f64>,
    /// Number of events waited for
    #[arg(long)]
    #[serde(default)]
    pub n: Option<u32>,
    /// One-parameter matching with alpha held fixed
    #[arg(long, conflicts_with = "p")]
    #[serde(default)]
    pub alpha: Option<f64>,
    /// One-parameter matching with p held fixed
    #[arg(long)]
    #[serde(default)]
    pub p: Option<f64>,
    /// Use the closed-form corollary instead of the series theorem
    #[arg(long)]
    #[serde(default)]
    pub closed_form: bool,
    /// Which reading of the (k1,k2) bounds to evaluate
    #[arg(long, value_enum, default_value_t = FormArg::Tabulated)]
    #[serde(default)]
    pub form: FormArg,
    /// Simulation size
    #[arg(long, default_value_t = default_trials())]
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Number of random test functions for stein-check
    #[arg(long, default_value_t = default_functions())]
    #[serde(default = "default_functions")]
    pub functions: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(flatten)]
    pub options: Options,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate one bound for a mixture or a (k1,k2) waiting time
    Bound(Options),
    /// Reproduce the one-parameter waiting-time table
    Table1(Options),
    /// Reproduce the two-parameter waiting-time table
    Table2(Options),
    /// Compare a bound with the exact total-variation distance
    Verify(Options),
    /// Simulate (k1,k2)-event waiting times
    Simulate(Options),
    /// Check E[A g] = 0 for random test functions
    SteinCheck(Options),
}

#[derive(Debug, Parser)]
#[command(name = "nbstein", version, about = "Negative binomial approximation bounds", args_conflicts_with_subcommands = true)]
struct Cli {
    /// Read the command and its options from a JSON file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(Error::DominationViolated { .. }) => EXIT_VIOLATION,
            CliError::Lib(e) if e.is_inadmissible() => EXIT_INADMISSIBLE,
            CliError::Lib(_) => EXIT_USAGE,
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

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureFile {
    components: Vec<ComponentJson>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum ComponentJson {
    Geometric {
        p: f64,
        #[serde(default = "one")]
        count: u32,
    },
    Poisson {
        lambda: f64,
        #[serde(default = "one")]
        count: u32,
    },
    Binomial {
        n: u32,
        p: f64,
        #[serde(default = "one")]
        count: u32,
    },
    Generic {
        a: Vec<f64>,
        pmf: Vec<f64>,
        #[serde(default)]
        tail: Option<f64>,
        #[serde(default = "one")]
        count: u32,
    },
}

impl ComponentJson {
    fn into_spec(self) -> crate::Result<ComponentSpec> {
        match self {
            ComponentJson::Geometric { p, count } => ComponentSpec::geometric(p, count),
            ComponentJson::Poisson { lambda, count } => ComponentSpec::poisson(lambda, count),
            ComponentJson::Binomial { n, p, count } => ComponentSpec::binomial(n, p, count),
            ComponentJson::Generic { a, pmf, tail, count } => {
                let pmf = match tail {
                    Some(t) => Pmf::new(pmf, t)?,
                    None => Pmf::with_implied_tail(pmf)?,
                };
                ComponentSpec::generic(a, pmf, count)
            }
        }
    }
}

/// Parses a mixture from JSON text. Errors name the offending field path.
pub fn parse_mixture_str(text: &str) -> CliResult<Vec<ComponentSpec>> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: MixtureFile =
        serde_path_to_error::deserialize(de).map_err(|e| usage(format!("mixture schema: {} at `{}`", e.inner(), e.path())))?;
    if file.components.is_empty() {
        return Err(usage("mixture schema: `components` is empty"));
    }
    file.components
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.into_spec().map_err(|e| usage(format!("mixture schema: components[{i}]: {e}"))))
        .collect()
}

pub fn parse_mixture(path: &Path) -> CliResult<Vec<ComponentSpec>> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    parse_mixture_str(&text)
}

/// Output of a command plus whether an oracle check failed.
struct Rendered {
    text: String,
    violation: Option<String>,
}

impl Rendered {
    fn ok(text: String) -> Self {
        Self { text, violation: None }
    }
}

pub fn run(config: &RunConfig) -> i32 {
    match execute(config) {
        Ok(r) => {
            if let Err(e) = emit(&config.options, &r.text) {
                eprintln!("{e}");
                return e.exit_code();
            }
            match r.violation {
                Some(msg) => {
                    eprintln!("{msg}");
                    EXIT_VIOLATION
                }
                None => EXIT_OK,
            }
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn emit(opts: &Options, text: &str) -> CliResult<()> {
    match &opts.output {
        Some(path) => fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| usage(format!("stdout: {e}")))
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let config = match (cli.config, cli.command) {
        (Some(path), None) => match load_config(&path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{e}");
                return e.exit_code();
            }
        },
        (None, Some(cmd)) => {
            let (command, options) = match cmd {
                Command::Bound(o) => (CommandKind::Bound, o),
                Command::Table1(o) => (CommandKind::Table1, o),
                Command::Table2(o) => (CommandKind::Table2, o),
                Command::Verify(o) => (CommandKind::Verify, o),
                Command::Simulate(o) => (CommandKind::Simulate, o),
                Command::SteinCheck(o) => (CommandKind::SteinCheck, o),
            };
            RunConfig { command, options }
        }
        _ => {
            eprintln!("usage error: give a subcommand or --config FILE (see --help)");
            return EXIT_USAGE;
        }
    };
    run(&config)
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| usage(format!("config: {} at `{}`", e.inner(), e.path())))
}

fn execute(config: &RunConfig) -> CliResult<Rendered> {
    let o = &config.options;
    if o.truncation < MIN_TRUNCATION {
        return Err(usage(format!("truncation {} is below {MIN_TRUNCATION}", o.truncation)));
    }
    match config.command {
        CommandKind::Table1 => {
            let cells = table1(&TABLE_GRID, &TABLE_P_BARS, o.truncation, o.form.into());
            Ok(Rendered::ok(render_table(&cells, o.format.unwrap_or(Format::Md), false)))
        }
        CommandKind::Table2 => {
            let cells = table2(&TABLE_GRID, &TABLE_P_BARS, &TABLE_NS, o.truncation, o.form.into());
            Ok(Rendered::ok(render_table(&cells, o.format.unwrap_or(Format::Md), true)))
        }
        CommandKind::Bound => bound_command(o),
        CommandKind::Verify => verify_command(o),
        CommandKind::Simulate => simulate_command(o),
        CommandKind::SteinCheck => stein_command(o),
    }
}

fn require_scheme(o: &Options) -> CliResult<SchemeArg> {
    o.scheme.ok_or_else(|| usage("--scheme is required"))
}

fn cell_config(o: &Options) -> CliResult<K1K2Config> {
    let (k1, k2, p_bar) = match (o.k1, o.k2, o.p_bar) {
        (Some(a), Some(b), Some(p)) => (a, b, p),
        _ => return Err(usage("--k1, --k2 and --p-bar are required for (k1,k2) schemes")),
    };
    K1K2Config::new(k1, k2, p_bar, o.n.unwrap_or(1)).map_err(|e| usage(e.to_string()))
}

fn load_mixture(o: &Options) -> CliResult<Vec<ComponentSpec>> {
    let path = o.mixture_file.as_ref().ok_or_else(|| usage("--mixture is required"))?;
    parse_mixture(path)
}

/// One-parameter mode: `--alpha` or `--p`, else `p = mu / sigma^2`, which
/// recovers the exact law for i.i.d. geometric sums.
fn one_param_mode(o: &Options, m: &AggregateMoments) -> CliResult<OneParamMode> {
    match (o.alpha, o.p) {
        (Some(a), _) => Ok(OneParamMode::FixedAlpha(a)),
        (None, Some(p)) => Ok(OneParamMode::FixedP(p)),
        (None, None) if m.overdispersed() => Ok(OneParamMode::FixedP(m.mu / m.sigma2)),
        (None, None) => Err(usage("the mixture is not overdispersed; give --alpha or --p")),
    }
}

fn mixture_bound(mixture: &[ComponentSpec], scheme: SchemeArg, o: &Options) -> CliResult<BoundReport> {
    let m = aggregate(mixture)?;
    let report = match scheme {
        SchemeArg::OneParam => {
            let params = match_one_param(&m, one_param_mode(o, &m)?)?;
            if o.closed_form {
                corollary_one(mixture, &params)?
            } else {
                theorem_one(mixture, &params, o.truncation)?
            }
        }
        SchemeArg::TwoParam => {
            let params = match_two_param(&m)?;
            if o.closed_form {
                corollary_two(mixture, &params)?
            } else {
                theorem_two(mixture, &params, o.truncation)?
            }
        }
        SchemeArg::ThreeParam => {
            let fit = match_three_param(&m)?;
            if o.closed_form {
                corollary_three(mixture, &fit)?
            } else {
                theorem_three(mixture, &fit, o.truncation)?
            }
        }
        _ => return Err(usage("(k1,k2) schemes take --k1/--k2/--p-bar, not a mixture")),
    };
    Ok(report)
}

fn k1k2_bound(cfg: &K1K2Config, scheme: SchemeArg, o: &Options) -> CliResult<BoundReport> {
    Ok(match scheme {
        SchemeArg::K1k2One => one_param_bound_k1k2(cfg, o.truncation, o.form.into())?,
        _ => two_param_bound_k1k2(cfg, o.truncation, o.form.into())?,
    })
}

fn fmt_flags(report: &BoundReport) -> String {
    report.flag_names().join(";")
}

const CELL_COLUMNS: [&str; 8] = ["k1", "k2", "p_bar", "n", "scheme", "bound", "tail_estimate", "flags"];

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

fn json_text(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

fn cell_fields(cfg: Option<&K1K2Config>) -> [String; 4] {
    match cfg {
        Some(c) => [c.k1.to_string(), c.k2.to_string(), c.p_bar.to_string(), c.n.to_string()],
        None => Default::default(),
    }
}

fn report_row(cfg: Option<&K1K2Config>, report: &BoundReport) -> Vec<String> {
    let mut row = cell_fields(cfg).to_vec();
    row.extend([
        report.scheme.as_str().to_string(),
        report.bound.to_string(),
        report.tail_estimate.to_string(),
        fmt_flags(report),
    ]);
    row
}

fn render_report_md(title: &str, report: &BoundReport) -> String {
    let nb = report.params.nb();
    let mut s = format!("## {title}\n\n| quantity | value |\n|---|---|\n");
    let _ = writeln!(s, "| scheme | {} |", report.scheme.as_str());
    let _ = writeln!(s, "| alpha | {} |", fmt_sig(nb.alpha, 6));
    let _ = writeln!(s, "| p | {} |", fmt_sig(nb.p, 6));
    if let crate::bounds::Params::Three(fit) = &report.params {
        let _ = writeln!(s, "| p_hat | {} |", fmt_sig(fit.p_hat, 6));
    }
    let _ = writeln!(s, "| bound | {} |", fmt_sig(report.bound, 6));
    let _ = writeln!(s, "| tail_estimate | {} |", fmt_sig(report.tail_estimate, 6));
    let _ = writeln!(s, "| truncation | {} |", report.truncation);
    let _ = writeln!(s, "| flags | {} |", fmt_flags(report));
    s.push_str("\n| term | value |\n|---|---|\n");
    for t in &report.terms {
        let _ = writeln!(s, "| {} | {} |", t.label, fmt_sig(t.value, 6));
    }
    s
}

fn bound_command(o: &Options) -> CliResult<Rendered> {
    let scheme = require_scheme(o)?;
    let format = o.format.unwrap_or(Format::Json);
    let (cfg, report, mixture) = if scheme.is_k1k2() {
        let cfg = cell_config(o)?;
        let r = k1k2_bound(&cfg, scheme, o)?;
        (Some(cfg), r, Vec::new())
    } else {
        let mixture = load_mixture(o)?;
        let r = mixture_bound(&mixture, scheme, o)?;
        (None, r, mixture)
    };
    let text = match format {
        Format::Json => {
            let labels: Vec<String> = mixture.iter().map(|s| s.label()).collect();
            let moments = if mixture.is_empty() { None } else { Some(aggregate(&mixture)?) };
            json_text(&json!({ "config": cfg, "mixture": labels, "moments": moments, "report": report }))
        }
        Format::Csv => csv_text(&CELL_COLUMNS, vec![report_row(cfg.as_ref(), &report)]),
        Format::Md => render_report_md("bound", &report),
    };
    Ok(Rendered::ok(text))
}

fn verify_command(o: &Options) -> CliResult<Rendered> {
    let scheme = require_scheme(o)?;
    let format = o.format.unwrap_or(Format::Json);
    let outcome: crate::Result<(Option<K1K2Config>, BoundReport, DominationReport)> = if scheme.is_k1k2() {
        let cfg = cell_config(o)?;
        let report = k1k2_bound(&cfg, scheme, o)?;
        verify_domination_k1k2(&cfg, scheme == SchemeArg::K1k2Two, o.truncation).map(|d| (Some(cfg), report, d))
    } else {
        let mixture = load_mixture(o)?;
        let report = mixture_bound(&mixture, scheme, o)?;
        let len = mixture_support(&mixture)?;
        verify_domination(&mixture, &report, len).map(|d| (None, report, d))
    };
    let (cfg, report, dom) = outcome?;
    let text = match format {
        Format::Json => json_text(&json!({ "config": cfg, "report": report, "domination": dom })),
        Format::Csv => {
            let mut header = CELL_COLUMNS.to_vec();
            header.extend(["exact_tv", "tv_error", "margin"]);
            let mut row = report_row(cfg.as_ref(), &report);
            row.extend([dom.exact_tv.to_string(), dom.tv_error.to_string(), dom.margin.to_string()]);
            csv_text(&header, vec![row])
        }
        Format::Md => {
            let mut s = render_report_md("verify", &report);
            s.push_str("\n| check | value |\n|---|---|\n");
            let _ = writeln!(s, "| exact_tv | {} |", fmt_sig(dom.exact_tv, 6));
            let _ = writeln!(s, "| tv_error | {} |", fmt_sig(dom.tv_error, 6));
            let _ = writeln!(s, "| margin | {} |", fmt_sig(dom.margin, 6));
            let _ = writeln!(s, "| support | {} |", dom.support);
            s
        }
    };
    Ok(Rendered::ok(text))
}

#[derive(Serialize)]
struct SimulationRow {
    m: usize,
    count: u64,
    empirical: f64,
    std_error: f64,
    exact: Option<f64>,
}

fn simulate_command(o: &Options) -> CliResult<Rendered> {
    let cfg = cell_config(o)?;
    if o.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let run = simulate_k1k2(&cfg, o.trials, o.seed)?;
    let reference = if cfg.self_overlapping() {
        None
    } else {
        Some(waiting_pmf_recursive(&cfg, run.counts.len())?)
    };
    let max_dev = reference.as_ref().map(|r| max_standardized_deviation(&run, r));
    let rows: Vec<SimulationRow> = (0..run.counts.len())
        .map(|m| SimulationRow {
            m,
            count: run.counts[m],
            empirical: run.empirical.get(m),
            std_error: run.std_errors[m],
            exact: reference.as_ref().map(|r| r.get(m)),
        })
        .collect();
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let text = match o.format.unwrap_or(Format::Json) {
        Format::Json => json_text(&json!({
            "config": cfg,
            "seed": run.seed,
            "trials": run.trials,
            "max_standardized_deviation": max_dev,
            "bins": rows,
        })),
        Format::Csv => csv_text(
            &["m", "count", "empirical", "std_error", "exact"],
            rows.iter()
                .map(|r| vec![r.m.to_string(), r.count.to_string(), r.empirical.to_string(), r.std_error.to_string(), opt(r.exact)])
                .collect(),
        ),
        Format::Md => {
            let mut s = format!(
                "## simulate ({},{}), p_bar={}, n={}\n\ntrials {}, seed {}, max standardized deviation {}\n\n| m | count | empirical | std_error | exact |\n|---|---|---|---|---|\n",
                cfg.k1,
                cfg.k2,
                cfg.p_bar,
                cfg.n,
                run.trials,
                run.seed,
                max_dev.map(|d| fmt_sig(d, 6)).unwrap_or_else(|| "n/a".into())
            );
            for r in &rows {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} |",
                    r.m,
                    r.count,
                    fmt_sig(r.empirical, 6),
                    fmt_sig(r.std_error, 6),
                    r.exact.map(|v| fmt_sig(v, 6)).unwrap_or_default()
                );
            }
            s
        }
    };
    Ok(Rendered::ok(text))
}

#[derive(Debug, Clone, Serialize)]
pub struct SteinCheckRow {
    pub operator: String,
    pub functions: usize,
    pub max_abs: f64,
    pub max_tail_bound: f64,
    pub failures: usize,
}

/// Tolerance of the characterizing identity, on top of the tail bound.
pub const STEIN_TOLERANCE: f64 = 1e-8;
/// Largest stored index of the random test functions.
pub const TEST_FUNCTION_RANGE: usize = 40;

fn check_operator(op: &SteinOperator, pmf: &Pmf, functions: usize, rng: &mut ChaCha8Rng) -> SteinCheckRow {
    let mut row = SteinCheckRow {
        operator: op.label.clone(),
        functions,
        max_abs: 0.0,
        max_tail_bound: 0.0,
        failures: 0,
    };
    for _ in 0..functions {
        let g = TestFunction::random(rng, TEST_FUNCTION_RANGE);
        let e = stein_expectation(op, pmf, &g);
        row.max_abs = row.max_abs.max(e.value.abs());
        row.max_tail_bound = row.max_tail_bound.max(e.tail_bound);
        if e.value.abs() > STEIN_TOLERANCE + e.tail_bound {
            row.failures += 1;
        }
    }
    row
}

fn stein_command(o: &Options) -> CliResult<Rendered> {
    let scheme = require_scheme(o)?;
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let mut rows = Vec::new();
    if scheme.is_k1k2() {
        let cfg = cell_config(o)?;
        let params = match scheme {
            SchemeArg::K1k2One => one_param_params(&cfg)?,
            _ => two_param_params(&cfg)?,
        };
        let len = waiting_support(&cfg);
        if len >= MAX_EXACT_SUPPORT {
            return Err(usage("waiting-time support too long for an exact expectation"));
        }
        let t = waiting_pmf_recursive(&cfg, len)?;
        rows.push(check_operator(&SteinOperator::nb(&params), &nb_pmf(&params, len), o.functions, &mut rng));
        rows.push(check_operator(&SteinOperator::k1k2(&cfg, &params, o.truncation)?, &t, o.functions, &mut rng));
    } else {
        let mixture = load_mixture(o)?;
        let m = aggregate(&mixture)?;
        let len = mixture_support(&mixture)?;
        let y = mixture_pmf(&mixture, len)?;
        let params: NbParams = match scheme {
            SchemeArg::OneParam => match_one_param(&m, one_param_mode(o, &m)?)?,
            SchemeArg::TwoParam => match_two_param(&m)?,
            _ => {
                let fit = match_three_param(&m)?;
                rows.push(check_operator(&SteinOperator::v(&fit, o.truncation), &nb_ge_pmf(&fit, len), o.functions, &mut rng));
                fit.nb
            }
        };
        rows.push(check_operator(&SteinOperator::nb(&params), &nb_pmf(&params, len), o.functions, &mut rng));
        rows.push(check_operator(&SteinOperator::y(&mixture, &params, o.truncation)?, &y, o.functions, &mut rng));
    }
    let failed: usize = rows.iter().map(|r| r.failures).sum();
    let text = match o.format.unwrap_or(Format::Json) {
        Format::Json => json_text(&rows),
        Format::Csv => csv_text(
            &["operator", "functions", "max_abs", "max_tail_bound", "failures"],
            rows.iter()
                .map(|r| vec![r.operator.clone(), r.functions.to_string(), r.max_abs.to_string(), r.max_tail_bound.to_string(), r.failures.to_string()])
                .collect(),
        ),
        Format::Md => {
            let mut s = String::from("| operator | functions | max abs | max tail bound | failures |\n|---|---|---|---|---|\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} |",
                    r.operator,
                    r.functions,
                    fmt_sig(r.max_abs, 6),
                    fmt_sig(r.max_tail_bound, 6),
                    r.failures
                );
            }
            s
        }
    };
    Ok(Rendered {
        text,
        violation: (failed > 0).then(|| format!("stein identity failed for {failed} test functions")),
    })
}

fn p_bar_label(p: f64) -> String {
    let inv = 1.0 / p;
    if inv.fract() == 0.0 {
        format!("1/{inv}")
    } else {
        p.to_string()
    }
}

/// Tables: csv and json carry full precision, markdown 6 significant figures
/// in grid layout (rows (k1,k2), columns p_bar (x n)).
pub fn render_table(cells: &[TableCell], format: Format, with_n: bool) -> String {
    match format {
        Format::Json => json_text(&cells),
        Format::Csv => csv_text(
            &CELL_COLUMNS,
            cells
                .iter()
                .map(|c| {
                    let (bound, tail, flags) = match &c.report {
                        Ok(r) => (r.bound.to_string(), r.tail_estimate.to_string(), fmt_flags(r)),
                        Err(e) => (String::new(), String::new(), format!("error: {e}")),
                    };
                    vec![
                        c.k1.to_string(),
                        c.k2.to_string(),
                        c.p_bar.to_string(),
                        c.n.to_string(),
                        c.scheme.as_str().to_string(),
                        bound,
                        tail,
                        flags,
                    ]
                })
                .collect(),
        ),
        Format::Md => {
            let mut columns: Vec<(f64, u32)> = Vec::new();
            let mut rows: Vec<(u32, u32)> = Vec::new();
            for c in cells {
                if !columns.contains(&(c.p_bar, c.n)) {
                    columns.push((c.p_bar, c.n));
                }
                if !rows.contains(&(c.k1, c.k2)) {
                    rows.push((c.k1, c.k2));
                }
            }
            let mut s = String::from("| (k1,k2) |");
            for &(p, n) in &columns {
                if with_n {
                    let _ = write!(s, " p̄={}, n={} |", p_bar_label(p), n);
                } else {
                    let _ = write!(s, " p̄={} |", p_bar_label(p));
                }
            }
            s.push_str("\n|---|");
            s.push_str(&"---|".repeat(columns.len()));
            s.push('\n');
            for &(k1, k2) in &rows {
                let _ = write!(s, "| ({k1},{k2}) |");
                for &(p, n) in &columns {
                    let v = cells
                        .iter()
                        .find(|c| c.k1 == k1 && c.k2 == k2 && c.p_bar == p && c.n == n)
                        .map(|c| match &c.report {
                            Ok(r) => fmt_sig(r.bound, 6),
                            Err(_) => "error".into(),
                        })
                        .unwrap_or_default();
                    let _ = write!(s, " {v} |");
                }
                s.push('\n');
            }
            s
        }
    }
}
