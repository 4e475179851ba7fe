//! `billiard`: batch front-end for open-billiard experiments.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O, internal), 2 the table
//! violates the configuration assumptions, 3 an input file or word does not
//! parse, 4 an orbit could not be constructed, 64 bad usage.

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use open_billiard::config::{parse_measure, parse_table, ConfigError};
use open_billiard::geometry::validate_table;
use open_billiard::lyapunov::{
    middle_window, spectral_gap_experiment, spectrum_report, GapConfig, LyapunovError, Method,
};
use open_billiard::orbit::{frame_window, orbit_csv, solve_finite_orbit, solve_periodic_orbit, OrbitError};
use open_billiard::symbolic::{
    frequency_experiment, rich_window_experiment, rng_for, FrequencyRow, Sampler, SymbolicError, Word,
};
use open_billiard::{Measure, Table};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "billiard", version, about = "Orbits, Lyapunov spectra and symbolic statistics of open billiards")]
struct Cli {
    /// Seed for every random choice; required by sampling commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for ensembles (default: all cores).
    #[arg(long, global = true, env = "BILLIARD_THREADS")]
    threads: Option<usize>,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write the output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Delta,
    Qr,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Check a table file against the configuration assumptions.
    Validate { table: PathBuf },
    /// Solve the orbit with a given itinerary and list its reflections.
    Orbit {
        table: PathBuf,
        /// Itinerary as comma-separated ball indices, e.g. "1,2,3".
        #[arg(long, conflicts_with = "sample_measure")]
        word: Option<String>,
        /// Close the itinerary into a periodic orbit.
        #[arg(long)]
        periodic: bool,
        /// Draw the itinerary from this measure instead (needs --length and --seed).
        #[arg(long)]
        sample_measure: Option<PathBuf>,
        #[arg(long)]
        length: Option<usize>,
        /// Alias for --out.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Lyapunov exponents along a periodic itinerary or a sampled one.
    Spectrum {
        table: PathBuf,
        /// Periodic itinerary, unrolled to m bounces.
        #[arg(long, conflicts_with = "sample")]
        word: Option<String>,
        /// Sample an itinerary from this measure (needs --seed).
        #[arg(long)]
        sample: Option<PathBuf>,
        #[arg(long, default_value_t = 300)]
        m: usize,
        #[arg(long, value_enum, default_value = "both")]
        method: MethodArg,
    },
    /// Ensemble experiment on the gap between in-plane and out-of-plane exponents.
    Gap {
        table: PathBuf,
        measure: PathBuf,
        #[arg(long, default_value_t = 96)]
        m: usize,
        #[arg(long, default_value_t = 50)]
        ensemble: usize,
        /// Also write the per-orbit rows here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Word frequencies or rich-window counts along a sampled path.
    Frequency {
        measure: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, conflicts_with = "rich")]
        word: Option<String>,
        /// Count windows of this even length with at least three symbols.
        #[arg(long, requires = "t")]
        rich: Option<usize>,
        /// Number of windows in rich-window mode.
        #[arg(long)]
        t: Option<usize>,
    },
}

#[derive(Debug)]
enum Failure {
    Runtime(anyhow::Error),
    Assumption(String),
    Parse(String),
    Solver(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Assumption(_) => 2,
            Failure::Parse(_) => 3,
            Failure::Solver(_) => 4,
            Failure::Usage(_) => 64,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Runtime(e) => write!(f, "error: {e:#}"),
            Failure::Assumption(m) => write!(f, "assumption violated: {m}"),
            Failure::Parse(m) => write!(f, "{m}"),
            Failure::Solver(m) => write!(f, "solver failure: {m}"),
            Failure::Usage(m) => write!(f, "usage: {m}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Structural(e) => Failure::Assumption(e.to_string()),
            e => Failure::Parse(e.to_string()),
        }
    }
}

impl From<OrbitError> for Failure {
    fn from(e: OrbitError) -> Self {
        Failure::Solver(e.to_string())
    }
}

impl From<LyapunovError> for Failure {
    fn from(e: LyapunovError) -> Self {
        match e {
            LyapunovError::InvalidParameter(m) => Failure::Usage(m),
            LyapunovError::Symbolic(e) => Failure::Parse(e.to_string()),
            LyapunovError::Degenerate { .. } => Failure::Runtime(e.into()),
            e => Failure::Solver(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    Ok(std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
}

/// Parses and validates a table file.
fn load_table(path: &Path) -> Result<Table, Failure> {
    let table = parse_table(&read(path)?)?;
    let report = validate_table(&table);
    if !report.passed() {
        let detail: Vec<String> = report.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
        return Err(Failure::Assumption(detail.join("; ")));
    }
    Ok(table)
}

fn load_measure(path: &Path) -> Result<Measure, Failure> {
    Ok(parse_measure(&read(path)?)?)
}

/// Syntax errors exit 3; admissibility is checked by the solver and exits 4.
fn parse_word(text: &str) -> Result<Word, Failure> {
    text.parse::<Word>().map_err(|e| match e {
        SymbolicError::Parse { .. } | SymbolicError::EmptyWord => Failure::Parse(e.to_string()),
        e => Failure::Solver(e.to_string()),
    })
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64, Failure> {
    seed.ok_or_else(|| Failure::Usage(format!("{what} needs --seed")))
}

fn json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).context("serializing output")?;
    s.push('\n');
    Ok(s)
}

fn pick(format: Option<Format>, default: Format, allowed: &[Format], command: &str) -> Result<Format, Failure> {
    let f = format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(Failure::Usage(format!("{command} does not support this --format")))
    }
}

#[derive(Serialize)]
struct CheckJson<'a> {
    name: &'a str,
    passed: bool,
    detail: &'a str,
}

#[derive(Serialize)]
struct ValidateJson<'a> {
    passed: bool,
    checks: Vec<CheckJson<'a>>,
}

#[derive(Serialize)]
struct OrbitJson {
    word: String,
    periodic: bool,
    residual: f64,
    iterations: usize,
    length: f64,
    points: Vec<[f64; 3]>,
}

#[derive(Serialize)]
struct FrequencyJson {
    word: String,
    n: usize,
    occurrences: usize,
    empirical_freq: f64,
    cylinder_measure: f64,
    abs_err: f64,
    stderr: Option<f64>,
}

impl From<&FrequencyRow> for FrequencyJson {
    fn from(r: &FrequencyRow) -> Self {
        Self {
            word: r.word.to_string(),
            n: r.n,
            occurrences: r.occurrences,
            empirical_freq: r.empirical_freq,
            cylinder_measure: r.cylinder_measure,
            abs_err: r.abs_err,
            stderr: r.stderr.is_finite().then_some(r.stderr),
        }
    }
}

#[derive(Serialize)]
struct RichJson {
    k: usize,
    t: usize,
    count: usize,
    bound: f64,
    alternating_mass: f64,
    pass: bool,
}

/// Output text and the exit status it carries.
struct Output {
    text: String,
    failure: Option<Failure>,
}

impl From<String> for Output {
    fn from(text: String) -> Self {
        Self { text, failure: None }
    }
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    match &cli.command {
        Command::Validate { table } => {
            let f = pick(cli.format, Format::Text, &[Format::Text, Format::Json], "validate")?;
            let table = parse_table(&read(table)?)?;
            let report = validate_table(&table);
            let text = match f {
                Format::Json => json(&ValidateJson {
                    passed: report.passed(),
                    checks: report
                        .checks
                        .iter()
                        .map(|c| CheckJson { name: &c.name, passed: c.passed, detail: &c.detail })
                        .collect(),
                })?,
                _ => report.to_string(),
            };
            let failure = (!report.passed()).then(|| {
                Failure::Assumption(report.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("; "))
            });
            Ok(Output { text, failure })
        }
        Command::Orbit { table, word, periodic, sample_measure, length, csv: _ } => {
            let f = pick(cli.format, Format::Csv, &[Format::Csv, Format::Json], "orbit")?;
            let table = load_table(table)?;
            let word = match (word, sample_measure) {
                (Some(w), None) => parse_word(w)?,
                (None, Some(m)) => {
                    let seed = require_seed(cli.seed, "--sample-measure")?;
                    let n = length.ok_or_else(|| Failure::Usage("--sample-measure needs --length".into()))?;
                    if n < 2 {
                        return Err(Failure::Usage("--length must be at least 2".into()));
                    }
                    let mu = load_measure(m)?;
                    Sampler::new(&mu).map_err(|e| Failure::Parse(e.to_string()))?.sample(n, &mut rng_for(seed, 0))
                }
                _ => return Err(Failure::Usage("orbit needs --word or --sample-measure".into())),
            };
            let orbit = if *periodic {
                solve_periodic_orbit(&table, &word)?
            } else {
                solve_finite_orbit(&table, &word, word.len().saturating_sub(1))?
            };
            Ok(match f {
                Format::Json => json(&OrbitJson {
                    word: orbit.word.to_string(),
                    periodic: orbit.periodic,
                    residual: orbit.residual,
                    iterations: orbit.iterations,
                    length: orbit.length,
                    points: orbit.points.iter().map(|p| p.to_array()).collect(),
                })?,
                _ => orbit_csv(&orbit, &table),
            }
            .into())
        }
        Command::Spectrum { table, word, sample, m, method } => {
            let f = pick(cli.format, Format::Json, &[Format::Json, Format::Text], "spectrum")?;
            let table = load_table(table)?;
            let frames = match (word, sample) {
                (Some(w), None) => {
                    let orbit = solve_periodic_orbit(&table, &parse_word(w)?)?;
                    frame_window(&orbit, &table, 0, *m)?
                }
                (None, Some(path)) => {
                    let seed = require_seed(cli.seed, "--sample")?;
                    let mu = load_measure(path)?;
                    let word = Sampler::new(&mu)
                        .map_err(|e| Failure::Parse(e.to_string()))?
                        .sample(3 * m + 1, &mut rng_for(seed, 0));
                    middle_window(&table, &word, *m)?
                }
                _ => return Err(Failure::Usage("spectrum needs --word or --sample".into())),
            };
            let method = match method {
                MethodArg::Delta => Method::Delta,
                MethodArg::Qr => Method::Qr,
                MethodArg::Both => Method::Both,
            };
            let report = spectrum_report(&frames, method).map_err(|e| match e {
                LyapunovError::TooShort { len, min } => Failure::Usage(format!("m = {len} is too short (need {min})")),
                e => e.into(),
            })?;
            Ok(match f {
                Format::Text => {
                    let opt = |x: Option<f64>| x.map_or("-".to_string(), |x| x.to_string());
                    let mut s = format!(
                        "m: {}\nlambda_E: {}\nlambda_F: {}\n",
                        report.m,
                        opt(report.lambda_e),
                        opt(report.lambda_f)
                    );
                    if let Some(q) = report.qr_exponents {
                        s.push_str(&format!("qr: {} {} {} {}\n", q[0], q[1], q[2], q[3]));
                    }
                    s.push_str(&format!("degenerate: {}\n", report.degenerate));
                    s
                }
                _ => json(&report)?,
            }
            .into())
        }
        Command::Gap { table, measure, m, ensemble, csv } => {
            let f = pick(cli.format, Format::Json, &[Format::Json, Format::Csv, Format::Text], "gap")?;
            let seed = require_seed(cli.seed, "gap")?;
            let table = load_table(table)?;
            let mu = load_measure(measure)?;
            let report = spectral_gap_experiment(&table, &mu, GapConfig { m: *m, ensemble_size: *ensemble, seed })?;
            if let Some(path) = csv {
                std::fs::write(path, report.csv()).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(match f {
                Format::Csv => report.csv(),
                Format::Text => format!(
                    "completed: {} of {}\nmean gap: {} +- {}\npredicted bound: {}\npass: {}\n",
                    report.completed,
                    report.ensemble_size,
                    report.mean_gap,
                    report.stderr_gap,
                    report.predicted_bound,
                    serde_json::to_string(&report.pass).context("serializing verdict")?
                ),
                _ => json(&report)?,
            }
            .into())
        }
        Command::Frequency { measure, n, word, rich, t } => {
            let f = pick(cli.format, Format::Csv, &[Format::Csv, Format::Json], "frequency")?;
            let seed = require_seed(cli.seed, "frequency")?;
            let mu = load_measure(measure)?;
            let symbolic = |e: SymbolicError| match e {
                SymbolicError::InvalidParameter(m) => Failure::Usage(m),
                e => Failure::Parse(e.to_string()),
            };
            match (word, rich) {
                (Some(w), None) => {
                    let w = w.parse::<Word>().map_err(symbolic)?;
                    let row = frequency_experiment(&mu, &w, *n, seed).map_err(symbolic)?;
                    Ok(match f {
                        Format::Json => json(&FrequencyJson::from(&row))?,
                        _ => format!("{}\n{}\n", FrequencyRow::CSV_HEADER, row.csv_line()),
                    }
                    .into())
                }
                (None, Some(k)) => {
                    let r = rich_window_experiment(&mu, *k, t.unwrap_or(0), seed).map_err(symbolic)?;
                    let j = RichJson {
                        k: r.k,
                        t: r.t,
                        count: r.count,
                        bound: r.bound,
                        alternating_mass: r.alternating_mass,
                        pass: r.passed,
                    };
                    Ok(match f {
                        Format::Json => json(&j)?,
                        _ => format!(
                            "k,t,count,bound,alternating_mass,pass\n{},{},{},{},{},{}\n",
                            j.k, j.t, j.count, j.bound, j.alternating_mass, j.pass
                        ),
                    }
                    .into())
                }
                _ => Err(Failure::Usage("frequency needs --word or --rich".into())),
            }
        }
    }
}

fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    let path = match &cli.command {
        Command::Orbit { csv: Some(p), .. } => cli.out.as_ref().or(Some(p)),
        _ => cli.out.as_ref(),
    };
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).context("writing to stdout")?;
            out.flush().context("writing to stdout")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        let built = match n {
            0 => Err(Failure::Usage("--threads must be positive".into())),
            n => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Runtime(e.into())),
        };
        if let Err(f) = built {
            eprintln!("{f}");
            return ExitCode::from(f.code());
        }
    }
    let result = run(&cli).and_then(|out| {
        emit(&cli, &out.text)?;
        out.failure.map_or(Ok(()), Err)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
