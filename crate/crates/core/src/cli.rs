//! Command-line driver: eigen-data cache, verification suites, mass tables, the
//! variance pipeline and the equidistribution census.
//!
//! Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.

use crate::forms::{CacheStatus, EigenStore, FormsError};
use crate::mass::{mass_report, write_csv, MassError};
use crate::suites::{self, SuiteError, SuiteReport};
use crate::testfn::{Bump, BumpKind, TestFnError};
use crate::trace::{TraceError, WindowWeights};
use crate::variance::{
    default_line_contour, main_term_from, mellin_data, mellin_of, que_census, variance_main_term, variance_report,
    window_dimension, write_rows_csv, Combination, ExponentConfig, MellinData, VarianceError, VarianceReport,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_K: f64 = 40.0;
pub const DEFAULT_THETA: f64 = 0.9;
pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_TRUNCATION: usize = 1000;
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Usage(String),
    #[error("eigen-data missing for weights {weights:?}; build it with `qvar eigenforms --weights {list} --truncation {n} --cache-dir {dir}`")]
    MissingCache {
        weights: Vec<u32>,
        list: String,
        n: usize,
        dir: String,
    },
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Mass(#[from] MassError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Variance(#[from] VarianceError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    TestFn(#[from] TestFnError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(
    name = "qvar",
    version,
    about = "Hecke eigenforms, restricted masses and quantum-variance numerics"
)]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; each may also come from `--config`.
#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// Centre of the weight window.
    #[arg(long = "K", global = true)]
    pub big_k: Option<f64>,
    /// Window length exponent, G = K^theta.
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// Window length; overrides --theta.
    #[arg(long = "G", global = true)]
    pub big_g: Option<f64>,
    /// Support parameter of the symmetric test function psi.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Support parameter of a second symmetric test function (variance only).
    #[arg(long, global = true)]
    pub psi2_alpha: Option<f64>,
    /// Weights: "12..60", "12,14,20", "12..20,30" or "" for none.
    #[arg(long, global = true)]
    pub weights: Option<String>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Multiplier on every verification tolerance.
    #[arg(long, global = true)]
    pub tolerance_scale: Option<f64>,
    /// Fourier coefficients stored per eigenform.
    #[arg(long, global = true)]
    pub truncation: Option<usize>,
    /// Seed of the randomized stationary-phase suite.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run the off-diagonal probe in `variance` (K <= 500).
    #[arg(long, global = true)]
    pub od: bool,
    /// Also report the main term for a mean-zero combination of the two test functions.
    #[arg(long, global = true)]
    pub mean_zero: bool,
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Build (or verify and reuse) cached eigen-data.
    Eigenforms,
    /// Run a named verification suite.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
    /// Restricted masses for every cached form of the listed weights.
    Mass,
    /// The variance pipeline over the window given by K and G.
    Variance,
    /// Count forms whose mass deviates by more than K^{-1/4 + eps}.
    Census,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Kloosterman,
    Petersson,
    Mellin,
    Shifted,
    Stationary,
    Eigenform,
    Averaged,
    Diagonal,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Kloosterman => "kloosterman",
            Suite::Petersson => "petersson",
            Suite::Mellin => "mellin",
            Suite::Shifted => "shifted",
            Suite::Stationary => "stationary",
            Suite::Eigenform => "eigenform",
            Suite::Averaged => "averaged",
            Suite::Diagonal => "diagonal",
        }
    }
}

/// Fully resolved parameters of one run, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub big_k: f64,
    pub theta: f64,
    pub big_g: f64,
    pub alpha: f64,
    pub psi2_alpha: f64,
    pub weights: Option<Vec<u32>>,
    pub cache_dir: PathBuf,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub tolerance_scale: f64,
    pub truncation: usize,
    pub seed: u64,
    pub od: bool,
    pub mean_zero: bool,
}

/// Parses "12..60", "12-60", "12,14,20" and mixtures; ranges keep their even members.
pub fn parse_weights(spec: &str) -> Result<Vec<u32>, CliError> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let range = part.split_once("..").or_else(|| part.split_once('-'));
        let num = |s: &str| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| usage(format!("weight '{s}' is not a nonnegative integer")))
        };
        match range {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(usage(format!("weight range {a}..{b} is empty")));
                }
                out.extend((a..=b).filter(|k| k % 2 == 0));
            }
            None => out.push(num(part)?),
        }
    }
    if let Some(bad) = out.iter().find(|&&k| k < 12 || k % 2 != 0) {
        return Err(usage(format!("weights must be even and at least 12 (got {bad})")));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {} has no '=': {raw}", i + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn merge_config(flags: &mut Flags, map: &BTreeMap<String, String>) -> Result<(), CliError> {
    fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
        v.parse()
            .map_err(|_| usage(format!("config key {key} has invalid value '{v}'")))
    }
    for (key, v) in map {
        match key.as_str() {
            "K" => flags.big_k = flags.big_k.or(Some(parse(key, v)?)),
            "theta" => flags.theta = flags.theta.or(Some(parse(key, v)?)),
            "G" => flags.big_g = flags.big_g.or(Some(parse(key, v)?)),
            "alpha" => flags.alpha = flags.alpha.or(Some(parse(key, v)?)),
            "psi2_alpha" => flags.psi2_alpha = flags.psi2_alpha.or(Some(parse(key, v)?)),
            "weights" => flags.weights = flags.weights.clone().or(Some(v.clone())),
            "cache_dir" => flags.cache_dir = flags.cache_dir.clone().or(Some(PathBuf::from(v))),
            "out" => flags.out = flags.out.clone().or(Some(PathBuf::from(v))),
            "threads" => flags.threads = flags.threads.or(Some(parse(key, v)?)),
            "tolerance_scale" => flags.tolerance_scale = flags.tolerance_scale.or(Some(parse(key, v)?)),
            "truncation" => flags.truncation = flags.truncation.or(Some(parse(key, v)?)),
            "seed" => flags.seed = flags.seed.or(Some(parse(key, v)?)),
            "od" => flags.od |= parse::<bool>(key, v)?,
            "mean_zero" => flags.mean_zero |= parse::<bool>(key, v)?,
            other => return Err(usage(format!("unknown config key '{other}'"))),
        }
    }
    Ok(())
}

impl RunConfig {
    /// Merges the config file under the flags and checks every precondition.
    pub fn resolve(mut flags: Flags) -> Result<Self, CliError> {
        if let Some(path) = flags.config.clone() {
            let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            merge_config(&mut flags, &parse_config_file(&text)?)?;
        }
        let big_k = flags.big_k.unwrap_or(DEFAULT_K);
        let theta = flags.theta.unwrap_or(DEFAULT_THETA);
        if !(big_k > 0.0 && big_k.is_finite()) {
            return Err(usage(format!("K must be positive (got {big_k})")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(usage(format!("theta must lie in (0, 1) (got {theta})")));
        }
        let big_g = flags.big_g.unwrap_or_else(|| big_k.powf(theta));
        if !(big_g > 0.0 && big_g <= big_k) {
            return Err(usage(format!("G must lie in (0, K] (got {big_g})")));
        }
        let alpha = flags.alpha.unwrap_or(DEFAULT_ALPHA);
        let psi2_alpha = flags.psi2_alpha.unwrap_or(alpha);
        for a in [alpha, psi2_alpha] {
            if !(a > 1.0 && a.is_finite()) {
                return Err(usage(format!("alpha must exceed 1 (got {a})")));
            }
        }
        let tolerance_scale = flags.tolerance_scale.unwrap_or(1.0);
        if !(tolerance_scale > 0.0 && tolerance_scale.is_finite()) {
            return Err(usage(format!(
                "tolerance-scale must be positive (got {tolerance_scale})"
            )));
        }
        if flags.threads == Some(0) {
            return Err(usage("threads must be at least 1"));
        }
        let truncation = flags.truncation.unwrap_or(DEFAULT_TRUNCATION);
        if truncation < 10 {
            return Err(usage(format!("truncation must be at least 10 (got {truncation})")));
        }
        let weights = flags.weights.as_deref().map(parse_weights).transpose()?;
        Ok(RunConfig {
            big_k,
            theta,
            big_g,
            alpha,
            psi2_alpha,
            weights,
            cache_dir: flags.cache_dir.unwrap_or_else(|| PathBuf::from("qvar-cache")),
            out: flags.out.unwrap_or_else(|| PathBuf::from("qvar-out")),
            threads: flags.threads,
            tolerance_scale,
            truncation,
            seed: flags.seed.unwrap_or(DEFAULT_SEED),
            od: flags.od,
            mean_zero: flags.mean_zero,
        })
    }

    pub fn psi(&self) -> Bump {
        Bump::canonical(self.alpha, BumpKind::PsiSymmetric).expect("alpha validated")
    }

    pub fn psi2(&self) -> Bump {
        Bump::canonical(self.psi2_alpha, BumpKind::PsiSymmetric).expect("alpha validated")
    }

    /// Shifted window h((k - 1 - K)/G) with the canonical h.
    pub fn window(&self) -> Result<WindowWeights, CliError> {
        let h = Bump::canonical(2.0, BumpKind::HWindow)?;
        Ok(WindowWeights::new(self.big_k, self.big_g, h, true)?)
    }

    pub fn exponents(&self) -> Result<ExponentConfig, CliError> {
        let d = ExponentConfig::default();
        Ok(ExponentConfig::new(self.theta, d.delta, d.eta, d.eps)?)
    }

    /// Explicit weights, or `default` when none were given.
    fn weights_or(&self, default: impl FnOnce() -> Vec<u32>) -> Vec<u32> {
        self.weights.clone().unwrap_or_else(default)
    }
}

/// Whether every check of the command passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ChecksFailed,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::ChecksFailed) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<Outcome, CliError> {
    let cfg = RunConfig::resolve(cli.flags)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| usage(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Eigenforms => cmd_eigenforms(&cfg),
        Command::Verify { suite } => cmd_verify(&cfg, suite),
        Command::Mass => cmd_mass(&cfg),
        Command::Variance => cmd_variance(&cfg),
        Command::Census => cmd_census(&cfg),
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_out(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

fn open(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::create(path).map_err(io_err(path))
}

fn list(weights: &[u32]) -> String {
    weights.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

/// Loads cached eigen-data, failing with the list of weights still to build.
fn load_store(cfg: &RunConfig, weights: &[u32]) -> Result<EigenStore, CliError> {
    let store = EigenStore::load(weights, cfg.truncation, &cfg.cache_dir)?;
    let missing = store.missing(weights.iter().copied());
    if missing.is_empty() {
        Ok(store)
    } else {
        Err(CliError::MissingCache {
            list: list(&missing),
            weights: missing,
            n: cfg.truncation,
            dir: cfg.cache_dir.display().to_string(),
        })
    }
}

pub fn cmd_eigenforms(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let weights = match &cfg.weights {
        Some(w) => w.clone(),
        None => cfg.window()?.weights(),
    };
    let store = EigenStore::build(&weights, cfg.truncation, Some(&cfg.cache_dir))?;
    for (k, status) in store.statuses() {
        let what = match status {
            CacheStatus::Cached => "cached",
            CacheStatus::Missing => "computed",
            CacheStatus::Stale => "recomputed (stale cache)",
        };
        eprintln!("k={k} N={}: {what}", cfg.truncation);
    }
    let forms: usize = weights.iter().filter_map(|&k| store.get(k)).map(<[_]>::len).sum();
    println!(
        "eigenforms: {} weights, {forms} forms in {}",
        weights.len(),
        cfg.cache_dir.display()
    );
    Ok(Outcome::Success)
}

fn suite_report(cfg: &RunConfig, suite: Suite) -> Result<SuiteReport, CliError> {
    let scale = cfg.tolerance_scale;
    let even = |a: u32, b: u32| (a..=b).step_by(2).collect::<Vec<u32>>();
    Ok(match suite {
        Suite::Kloosterman => suites::kloosterman(1..=12, scale)?,
        Suite::Mellin => suites::mellin_suite(&cfg.psi(), scale)?,
        Suite::Stationary => suites::stationary(cfg.seed, 20, scale)?,
        Suite::Petersson => {
            let w = cfg.weights_or(|| even(12, 30));
            suites::petersson(&load_store(cfg, &w)?, &w, 10, scale)?
        }
        Suite::Shifted => {
            let w = cfg.weights_or(|| even(12, 60));
            suites::shifted(&load_store(cfg, &w)?, &w, &cfg.psi(), scale)?
        }
        Suite::Eigenform => {
            let w = cfg.weights_or(|| even(12, 60));
            suites::eigenform(&load_store(cfg, &w)?, &w, cfg.truncation, scale)?
        }
        Suite::Averaged => {
            let h = Bump::canonical(2.0, BumpKind::HWindow)?;
            let w = WindowWeights::plain(cfg.big_k, h)?;
            suites::averaged(
                &load_store(cfg, &w.weights())?,
                &w,
                &suites::averaged_pairs(),
                10.0 * scale,
            )?
        }
        Suite::Diagonal => {
            let h = Bump::canonical(2.0, BumpKind::HWindow)?;
            suites::diagonal(&[200.0, 400.0, 800.0, 1600.0], &h, &cfg.psi(), &cfg.exponents()?)?
        }
    })
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

pub fn cmd_verify(cfg: &RunConfig, suite: Suite) -> Result<Outcome, CliError> {
    let report = suite_report(cfg, suite)?;
    for c in &report.checks {
        let verdict = match (c.pass, c.bound) {
            (_, suites::Bound::Reported) => "INFO",
            (true, _) => "PASS",
            (false, _) => "FAIL",
        };
        println!("{verdict} {}: {:e} ({:?})", c.name, c.measured, c.bound);
    }
    create_out(cfg)?;
    write_json(
        &cfg.out.join(format!("verify_{}.json", suite.name())),
        &Stamped {
            config: cfg,
            body: &report,
        },
    )?;
    Ok(if report.passed {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    })
}

pub fn cmd_mass(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let weights = match &cfg.weights {
        Some(w) => w.clone(),
        None => cfg.window()?.weights(),
    };
    let store = load_store(cfg, &weights)?;
    let psi = cfg.psi();
    let mut rows = Vec::new();
    for &k in &weights {
        for f in store.get(k).expect("loaded above") {
            rows.push(mass_report(f, &psi)?);
        }
    }
    create_out(cfg)?;
    let path = cfg.out.join("mass.csv");
    write_csv(open(&path)?, &rows)?;
    println!("mass: {} forms written to {}", rows.len(), path.display());
    Ok(Outcome::Success)
}

/// Main term for c psi1 + psi2 with c chosen so the Mellin transform vanishes at 0.
#[derive(Debug, Clone, Serialize)]
struct MeanZero {
    coefficient: f64,
    mellin_at_zero: f64,
    main_term: f64,
    /// The main term with only the zeta line integral kept.
    line_term: f64,
}

#[derive(Serialize)]
struct VarianceOutput<'a> {
    config: &'a RunConfig,
    report: &'a VarianceReport,
    mean_zero: Option<MeanZero>,
}

pub fn cmd_variance(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let w = cfg.window()?;
    let exps = cfg.exponents()?;
    let store = load_store(cfg, &w.weights())?;
    let (psi1, psi2) = (cfg.psi(), cfg.psi2());
    let (report, rows) = variance_report(&w, &psi1, &psi2, &store, &exps, cfg.od)?;
    let t = &report.diagonal_terms;
    eprintln!("diagonal log K term: {:e}", t.log_term);
    eprintln!("diagonal log correction term: {:e}", t.log_correction);
    eprintln!("diagonal constant term: {:e}", t.constant_term);
    eprintln!("diagonal zeta line term: {:e}", t.line_term);
    let mean_zero = if cfg.mean_zero {
        if cfg.alpha == cfg.psi2_alpha {
            return Err(usage("--mean-zero needs --psi2-alpha different from --alpha"));
        }
        let zero = Complex64::new(0.0, 0.0);
        let c = -mellin_of(&psi2, zero).re / mellin_of(&psi1, zero).re;
        let combo = Combination(vec![(c, psi1), (1.0, psi2)]);
        let m = mellin_data(&combo, &combo, &default_line_contour(&combo, &combo))?;
        let line_only = MellinData {
            psi1_at_0: 0.0,
            psi2_at_0: 0.0,
            ..m
        };
        Some(MeanZero {
            coefficient: c,
            mellin_at_zero: m.psi1_at_0,
            main_term: variance_main_term(&w, &combo, &combo)?,
            line_term: main_term_from(&w, &line_only),
        })
    } else {
        None
    };
    create_out(cfg)?;
    write_json(
        &cfg.out.join("variance_report.json"),
        &VarianceOutput {
            config: cfg,
            report: &report,
            mean_zero,
        },
    )?;
    write_rows_csv(open(&cfg.out.join("variance_forms.csv"))?, &rows)?;
    let mut ratios = csv::Writer::from_writer(open(&cfg.out.join("variance_ratios.csv"))?);
    ratios.write_record(["ratio", "value"])?;
    for (name, v) in &report.ratios {
        ratios.write_record([name.as_str(), &format!("{v:e}")])?;
    }
    ratios.flush().map_err(io_err(&cfg.out))?;
    println!(
        "variance: K={} G={} forms={} lhs={:e} diag_numeric={:e} main_term={:e}",
        cfg.big_k, cfg.big_g, report.forms, report.lhs_empirical, report.diag_numeric, report.main_term
    );
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct CensusOutput<'a> {
    config: &'a RunConfig,
    total: usize,
    exceeders: usize,
    fraction: f64,
    threshold: f64,
    dimension_formula_total: usize,
}

pub fn cmd_census(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let w = cfg.window()?;
    let store = load_store(cfg, &w.weights())?;
    let census = que_census(&w, &cfg.psi(), &cfg.exponents()?, &store)?;
    create_out(cfg)?;
    write_json(
        &cfg.out.join("census.json"),
        &CensusOutput {
            config: cfg,
            total: census.total,
            exceeders: census.exceeders,
            fraction: census.fraction(),
            threshold: census.threshold,
            dimension_formula_total: window_dimension(&w),
        },
    )?;
    println!(
        "census: {} of {} forms exceed {:e}",
        census.exceeders, census.total, census.threshold
    );
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests;
