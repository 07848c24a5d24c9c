//! Replication harness: RMSE and bias of sample-based optimal values across
//! samplers and sample sizes, reference values, slope fits, and the
//! convergence diagnostics.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{dot, Matrix};
use crate::problems::{
    exact_portfolio_normal, gen_portfolio_instance, gen_two_stage_instance,
    sample_based_optimal_value, Instance, PortfolioInstance, PortfolioModel, ProblemError,
    DEFAULT_R_TARGET,
};
use crate::risk::{cvar_normal_closed_form, EmpiricalDistribution, RiskError};
use crate::rng::derive_seed;
use crate::sequences::{dyadic_stratified, SamplerKind, SequenceError};
use crate::transforms::{gaussian_transform, Factorization, GaussianSpec, TransformError};

pub const CSV_HEADER: &str =
    "problem,model,sampler,factorization,d,m,beta,R,N,M,reference,ref_mode,mean,bias,rmse,slope";

/// Path component that separates reference-run seeds from sweep seeds.
const REFERENCE_STREAM: u64 = u64::MAX;

/// Atoms in the quantile-grid stand-in for `N(0, 1)`.
pub const NORMAL_REFERENCE_ATOMS: usize = 1 << 18;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("cannot fit a line: {0}")]
    Degenerate(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    PortfolioNormal,
    PortfolioUniform,
    TwoStage,
    /// Synthetic estimator: replication `r` returns
    /// `offset + spread * (-1)^r` against a reference of zero.
    Stub { offset: f64, spread: f64 },
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::PortfolioNormal => "portfolio-normal",
            ProblemKind::PortfolioUniform => "portfolio-uniform",
            ProblemKind::TwoStage => "two-stage",
            ProblemKind::Stub { .. } => "stub",
        }
    }

    fn model(self) -> &'static str {
        match self {
            ProblemKind::PortfolioNormal => PortfolioModel::Normal.name(),
            ProblemKind::PortfolioUniform => PortfolioModel::UniformAffine.name(),
            _ => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceMode {
    Exact,
    /// Mean of `replications` scrambled-Sobol' solves at `n = 2^exponent`.
    HighN { exponent: u32, replications: usize },
}

impl fmt::Display for ReferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceMode::Exact => f.write_str("exact"),
            ReferenceMode::HighN { exponent, replications } => {
                write!(f, "high-n(2^{exponent}x{replications})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub instance_seed: u64,
    pub d: usize,
    /// Second-stage dimension; only used by the two-stage problem.
    pub m: usize,
    pub beta: f64,
    pub r_target: f64,
    pub factorization: Factorization,
    pub samplers: Vec<SamplerKind>,
    pub n_schedule: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    pub reference: ReferenceMode,
    /// Gap tolerance of the exact reference solve.
    pub exact_tol: f64,
    pub output: Option<PathBuf>,
    pub svg: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::PortfolioNormal,
            instance_seed: 1,
            d: 3,
            m: 2,
            beta: 0.9,
            r_target: DEFAULT_R_TARGET,
            factorization: Factorization::Cholesky,
            samplers: vec![SamplerKind::Mc, SamplerKind::SobolScrambled],
            n_schedule: (6..=12).map(|k| 1usize << k).collect(),
            replications: 30,
            master_seed: 0,
            reference: ReferenceMode::Exact,
            exact_tol: 1e-7,
            output: None,
            svg: false,
        }
    }
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ExperimentError> {
    value.parse().map_err(|_| config_err(format!("bad value for `{key}`: `{value}`")))
}

/// Parse a list of sample sizes: `64`, `2^6`, or a range of powers
/// `2^6..2^12`, comma separated.
pub fn parse_schedule(value: &str) -> Result<Vec<usize>, ExperimentError> {
    let power = |s: &str| -> Result<usize, ExperimentError> {
        let s = s.trim();
        match s.strip_prefix("2^") {
            Some(e) => {
                let e: u32 = parse_value("n_schedule", e)?;
                1usize.checked_shl(e).filter(|_| e < usize::BITS).ok_or_else(|| config_err("exponent too large"))
            }
            None => parse_value("n_schedule", s),
        }
    };
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (power(lo)?, power(hi)?);
                if !lo.is_power_of_two() || !hi.is_power_of_two() || lo > hi {
                    return Err(config_err(format!("`{item}` is not a range of powers of two")));
                }
                let mut n = lo;
                while n <= hi {
                    out.push(n);
                    n *= 2;
                }
            }
            None => out.push(power(item)?),
        }
    }
    Ok(out)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ExperimentError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(config_err(format!("bad value for `{key}`: `{value}`"))),
    }
}

impl ExperimentConfig {
    /// Parse a flat `key = value` file on top of the defaults. Blank lines
    /// and `#` comments are skipped.
    pub fn from_kv(text: &str) -> Result<Self, ExperimentError> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected `key = value`", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut config = Self::default();
        config.apply_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        Ok(config)
    }

    /// Apply one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ExperimentError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(format!("override `{assignment}` is not `key=value`")))?;
        self.apply_pairs([(k.trim(), v.trim())])
    }

    fn apply_pairs<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<(), ExperimentError> {
        // Mode-dependent keys are gathered first so their order in the file
        // does not matter.
        let mut reference: Option<String> = None;
        let mut exponent = None;
        let mut ref_reps = None;
        let mut stub = None;
        let mut offset = None;
        let mut spread = None;
        for (key, value) in pairs {
            match key {
                "problem" => match value {
                    "stub" => stub = Some(true),
                    other => {
                        stub = Some(false);
                        self.problem = match other {
                            "portfolio-normal" => ProblemKind::PortfolioNormal,
                            "portfolio-uniform" => ProblemKind::PortfolioUniform,
                            "two-stage" => ProblemKind::TwoStage,
                            _ => return Err(config_err(format!("unknown problem `{other}`"))),
                        };
                    }
                },
                "instance_seed" => self.instance_seed = parse_value(key, value)?,
                "d" => self.d = parse_value(key, value)?,
                "m" => self.m = parse_value(key, value)?,
                "beta" => self.beta = parse_value(key, value)?,
                "r_target" | "R" => self.r_target = parse_value(key, value)?,
                "factorization" => {
                    self.factorization = value.parse().map_err(|e: TransformError| config_err(e.to_string()))?
                }
                "samplers" => {
                    self.samplers = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<SamplerKind>().map_err(|e| config_err(e.to_string())))
                        .collect::<Result<_, _>>()?
                }
                "n_schedule" => self.n_schedule = parse_schedule(value)?,
                "replications" | "M" => self.replications = parse_value(key, value)?,
                "master_seed" => self.master_seed = parse_value(key, value)?,
                "reference" => reference = Some(value.to_string()),
                "ref_exponent" => exponent = Some(parse_value::<u32>(key, value)?),
                "ref_replications" => ref_reps = Some(parse_value::<usize>(key, value)?),
                "exact_tol" => self.exact_tol = parse_value(key, value)?,
                "stub_offset" => offset = Some(parse_value::<f64>(key, value)?),
                "stub_spread" => spread = Some(parse_value::<f64>(key, value)?),
                "output" => self.output = Some(PathBuf::from(value)),
                "svg" => self.svg = parse_bool(key, value)?,
                other => return Err(config_err(format!("unknown key `{other}`"))),
            }
        }

        let (old_offset, old_spread) = match self.problem {
            ProblemKind::Stub { offset, spread } => (Some(offset), Some(spread)),
            _ => (None, None),
        };
        let is_stub = stub.unwrap_or(old_offset.is_some());
        if is_stub {
            self.problem = ProblemKind::Stub {
                offset: offset.or(old_offset).unwrap_or(0.1),
                spread: spread.or(old_spread).unwrap_or(0.0),
            };
        } else if offset.is_some() || spread.is_some() {
            return Err(config_err("stub_offset/stub_spread need problem = stub"));
        }

        let (old_exp, old_reps) = match self.reference {
            ReferenceMode::HighN { exponent, replications } => (Some(exponent), Some(replications)),
            ReferenceMode::Exact => (None, None),
        };
        let mode = reference.unwrap_or_else(|| {
            if old_exp.is_some() { "high-n" } else { "exact" }.to_string()
        });
        self.reference = match mode.as_str() {
            "exact" => {
                if exponent.is_some() || ref_reps.is_some() {
                    return Err(config_err("ref_exponent/ref_replications need reference = high-n"));
                }
                ReferenceMode::Exact
            }
            "high-n" => ReferenceMode::HighN {
                exponent: exponent
                    .or(old_exp)
                    .ok_or_else(|| config_err("reference = high-n requires ref_exponent"))?,
                replications: ref_reps.or(old_reps).unwrap_or(100),
            },
            other => return Err(config_err(format!("unknown reference mode `{other}`"))),
        };
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.replications < 2 {
            return Err(config_err("replications must be at least 2"));
        }
        if self.samplers.is_empty() {
            return Err(config_err("no samplers given"));
        }
        if self.n_schedule.is_empty() {
            return Err(config_err("empty n_schedule"));
        }
        if self.n_schedule.windows(2).any(|w| w[0] >= w[1]) || self.n_schedule[0] == 0 {
            return Err(config_err("n_schedule must be positive and strictly increasing"));
        }
        if self.samplers.iter().any(|s| s.is_sobol()) && !self.n_schedule.iter().all(|n| n.is_power_of_two()) {
            return Err(config_err("Sobol' samplers need power-of-two sample sizes"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(config_err(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.d == 0 || (self.problem == ProblemKind::TwoStage && self.m == 0) {
            return Err(config_err("dimensions must be at least 1"));
        }
        match (self.problem, self.reference) {
            (ProblemKind::PortfolioUniform | ProblemKind::TwoStage, ReferenceMode::Exact) => Err(config_err(
                format!("{} has no exact reference; use reference = high-n", self.problem.name()),
            )),
            (_, ReferenceMode::HighN { replications: 0, .. }) => Err(config_err("ref_replications must be at least 1")),
            _ => Ok(()),
        }
    }

    /// Every setting except the output location, one `key = value` per line.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("problem", self.problem.name().into());
        if let ProblemKind::Stub { offset, spread } = self.problem {
            put("stub_offset", format!("{offset:?}"));
            put("stub_spread", format!("{spread:?}"));
        }
        put("instance_seed", self.instance_seed.to_string());
        put("d", self.d.to_string());
        put("m", self.m.to_string());
        put("beta", format!("{:?}", self.beta));
        put("r_target", format!("{:?}", self.r_target));
        put("factorization", self.factorization.name().into());
        put("samplers", self.samplers.iter().map(|s| s.name()).collect::<Vec<_>>().join(","));
        put("n_schedule", self.n_schedule.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","));
        put("replications", self.replications.to_string());
        put("master_seed", self.master_seed.to_string());
        match self.reference {
            ReferenceMode::Exact => put("reference", "exact".into()),
            ReferenceMode::HighN { exponent, replications } => {
                put("reference", "high-n".into());
                put("ref_exponent", exponent.to_string());
                put("ref_replications", replications.to_string());
            }
        }
        put("exact_tol", format!("{:?}", self.exact_tol));
        out
    }

    /// The generated instance, or `None` for the stub.
    pub fn instance(&self) -> Result<Option<Instance>, ExperimentError> {
        let inst = match self.problem {
            ProblemKind::PortfolioNormal => Instance::Portfolio(gen_portfolio_instance(
                self.instance_seed,
                self.d,
                self.beta,
                self.r_target,
                PortfolioModel::Normal,
            )?),
            ProblemKind::PortfolioUniform => Instance::Portfolio(gen_portfolio_instance(
                self.instance_seed,
                self.d,
                self.beta,
                self.r_target,
                PortfolioModel::UniformAffine,
            )?),
            ProblemKind::TwoStage => {
                Instance::TwoStage(gen_two_stage_instance(self.instance_seed, self.d, self.m, self.beta)?)
            }
            ProblemKind::Stub { .. } => return Ok(None),
        };
        Ok(Some(inst))
    }
}

/// Seed of replication `rep` for sampler `sampler_idx` at schedule entry `n_idx`.
pub fn replication_seed(master_seed: u64, sampler_idx: usize, n_idx: usize, rep: usize) -> u64 {
    derive_seed(master_seed, &[sampler_idx as u64, n_idx as u64, rep as u64])
}

/// Seed of reference run `rep` in high-n mode.
pub fn reference_seed(master_seed: u64, rep: usize) -> u64 {
    derive_seed(master_seed, &[REFERENCE_STREAM, rep as u64])
}

/// One replication of the configured estimator.
fn estimate(
    config: &ExperimentConfig,
    instance: Option<&Instance>,
    sampler: SamplerKind,
    n: usize,
    rep: usize,
    seed: u64,
) -> Result<f64, ProblemError> {
    match (config.problem, instance) {
        (ProblemKind::Stub { offset, spread }, _) => {
            Ok(offset + if rep.is_multiple_of(2) { spread } else { -spread })
        }
        (_, Some(inst)) => Ok(sample_based_optimal_value(inst, sampler, config.factorization, n, seed)?.value),
        (_, None) => unreachable!("non-stub problems always have an instance"),
    }
}

/// Reference optimal value for the configuration. The stub's reference is 0.
pub fn reference_value(config: &ExperimentConfig) -> Result<f64, ExperimentError> {
    config.validate()?;
    let instance = config.instance()?;
    reference_for(config, instance.as_ref())
}

fn reference_for(config: &ExperimentConfig, instance: Option<&Instance>) -> Result<f64, ExperimentError> {
    let inst = match instance {
        None => return Ok(0.0),
        Some(inst) => inst,
    };
    match config.reference {
        ReferenceMode::Exact => match inst {
            Instance::Portfolio(p) => Ok(exact_portfolio_normal(p, config.exact_tol)?.value),
            Instance::TwoStage(_) => Err(ProblemError::Unsupported("the exact reference").into()),
        },
        ReferenceMode::HighN { exponent, replications } => {
            let n = 1usize << exponent;
            let values = (0..replications)
                .into_par_iter()
                .map(|r| {
                    sample_based_optimal_value(
                        inst,
                        SamplerKind::SobolScrambled,
                        config.factorization,
                        n,
                        reference_seed(config.master_seed, r),
                    )
                    .map(|v| v.value)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub sampler: SamplerKind,
    pub n: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Population variance of `values`.
    pub variance: f64,
}

impl CellResult {
    pub fn new(sampler: SamplerKind, n: usize, values: Vec<f64>, reference: f64) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        let mse = values.iter().map(|v| (v - reference).powi(2)).sum::<f64>() / m;
        Self { sampler, n, mean, bias: mean - reference, rmse: mse.sqrt(), variance, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub sampler: SamplerKind,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub reference: f64,
    /// Sampler-major, then schedule order.
    pub cells: Vec<CellResult>,
    /// Fits of `log2 rmse` on `log2 n`; NaN where fewer than two cells have a
    /// positive RMSE.
    pub fits: Vec<SlopeFit>,
    /// False when the sweep stopped early.
    pub complete: bool,
}

impl ExperimentReport {
    pub fn cell(&self, sampler: SamplerKind, n: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.sampler == sampler && c.n == n)
    }

    pub fn fit(&self, sampler: SamplerKind) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.sampler == sampler)
    }
}

#[derive(Debug, Error)]
#[error("sweep stopped after {} cells: {source}", partial.cells.len())]
pub struct SweepError {
    pub partial: Box<ExperimentReport>,
    #[source]
    pub source: ExperimentError,
}

fn fits_for(samplers: &[SamplerKind], cells: &[CellResult]) -> Vec<SlopeFit> {
    samplers
        .iter()
        .map(|&sampler| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = cells
                .iter()
                .filter(|c| c.sampler == sampler && c.rmse > 0.0)
                .map(|c| ((c.n as f64).log2(), c.rmse.log2()))
                .unzip();
            let (slope, intercept) = fit_slope(&xs, &ys).unwrap_or((f64::NAN, f64::NAN));
            SlopeFit { sampler, slope, intercept }
        })
        .collect()
}

/// Run every (sampler, n) cell with `M` replications each.
///
/// Replications run in parallel but land in index order, and every reduction
/// is sequential, so the report is bit-identical for any thread count.
pub fn run_sweep(config: &ExperimentConfig) -> Result<ExperimentReport, SweepError> {
    let mut report = ExperimentReport {
        config: config.clone(),
        reference: f64::NAN,
        cells: Vec::new(),
        fits: Vec::new(),
        complete: false,
    };
    let fail = |report: ExperimentReport, source: ExperimentError| SweepError { partial: Box::new(report), source };

    if let Err(e) = config.validate() {
        return Err(fail(report, e));
    }
    let instance = match config.instance() {
        Ok(inst) => inst,
        Err(e) => return Err(fail(report, e)),
    };
    report.reference = match reference_for(config, instance.as_ref()) {
        Ok(r) => r,
        Err(e) => return Err(fail(report, e)),
    };

    for (si, &sampler) in config.samplers.iter().enumerate() {
        for (ni, &n) in config.n_schedule.iter().enumerate() {
            let values: Result<Vec<f64>, ProblemError> = (0..config.replications)
                .into_par_iter()
                .map(|rep| {
                    let seed = replication_seed(config.master_seed, si, ni, rep);
                    estimate(config, instance.as_ref(), sampler, n, rep, seed)
                })
                .collect();
            match values {
                Ok(values) => report.cells.push(CellResult::new(sampler, n, values, report.reference)),
                Err(e) => {
                    report.fits = fits_for(&config.samplers, &report.cells);
                    return Err(fail(report, e.into()));
                }
            }
        }
    }
    report.fits = fits_for(&config.samplers, &report.cells);
    report.complete = true;
    Ok(report)
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), ExperimentError> {
    if xs.len() != ys.len() {
        return Err(ExperimentError::Degenerate(format!("{} abscissae, {} ordinates", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(ExperimentError::Degenerate("need at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(ExperimentError::Degenerate("all abscissae are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Seventeen significant digits, so that the text round-trips exactly.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

/// The report as CSV text: `#` metadata lines, the header, one row per
/// (sampler, N), then one slope row per sampler.
pub fn report_csv(report: &ExperimentReport) -> String {
    let cfg = &report.config;
    let mut out = String::new();
    let _ = writeln!(out, "# riskqmc {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# status = {}", if report.complete { "complete" } else { "partial" });
    for line in cfg.to_kv().lines() {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str(CSV_HEADER);
    out.push('\n');

    let is_portfolio = matches!(cfg.problem, ProblemKind::PortfolioNormal | ProblemKind::PortfolioUniform);
    let m = if cfg.problem == ProblemKind::TwoStage { cfg.m.to_string() } else { String::new() };
    let r = if is_portfolio { format_number(cfg.r_target) } else { String::new() };
    let prefix = |sampler: SamplerKind| {
        format!(
            "{},{},{},{},{},{},{},{}",
            cfg.problem.name(),
            cfg.problem.model(),
            sampler,
            cfg.factorization,
            cfg.d,
            m,
            format_number(cfg.beta),
            r
        )
    };
    let ref_mode = cfg.reference.to_string();
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},",
            prefix(c.sampler),
            c.n,
            cfg.replications,
            format_number(report.reference),
            ref_mode,
            format_number(c.mean),
            format_number(c.bias),
            format_number(c.rmse)
        );
    }
    for f in &report.fits {
        let _ = writeln!(
            out,
            "{},,{},{},{},,,,{}",
            prefix(f.sampler),
            cfg.replications,
            format_number(report.reference),
            ref_mode,
            format_number(f.slope)
        );
    }
    out
}

pub fn write_report_csv(report: &ExperimentReport, path: &Path) -> Result<(), ExperimentError> {
    write_file(path, &report_csv(report))
}

fn write_file(path: &Path, text: &str) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}

const SVG_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line chart of `log2 rmse` against `log2 n`, one polyline per sampler.
pub fn report_svg(report: &ExperimentReport) -> String {
    let (w, h, pad) = (640.0, 420.0, 50.0);
    let pts: Vec<(SamplerKind, f64, f64)> = report
        .cells
        .iter()
        .filter(|c| c.rmse > 0.0)
        .map(|c| (c.sampler, (c.n as f64).log2(), c.rmse.log2()))
        .collect();
    let bounds = |f: fn(&(SamplerKind, f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) }
    };
    let (x0, x1) = bounds(|p| p.1);
    let (y0, y1) = bounds(|p| p.2);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">log2 N</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(out, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">log2 RMSE</text>"#, h / 2.0, h / 2.0);
    for (k, &sampler) in report.config.samplers.iter().enumerate() {
        let color = SVG_COLORS[k % SVG_COLORS.len()];
        let line: Vec<String> = pts
            .iter()
            .filter(|p| p.0 == sampler)
            .map(|p| format!("{:.2},{:.2}", sx(p.1), sy(p.2)))
            .collect();
        if !line.is_empty() {
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{sampler}</text>"#,
            w - pad - 110.0,
            pad + 16.0 * k as f64
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_report_svg(report: &ExperimentReport, path: &Path) -> Result<(), ExperimentError> {
    write_file(path, &report_svg(report))
}

/// Grid points `k / resolution` on the unit simplex in dimension `d`.
pub fn simplex_grid(d: usize, resolution: usize) -> Vec<Vec<f64>> {
    fn rec(d: usize, left: usize, res: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if prefix.len() + 1 == d {
            prefix.push(left);
            out.push(prefix.iter().map(|&k| k as f64 / res as f64).collect());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(d, left - k, res, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d > 0 && resolution > 0 {
        rec(d, resolution, resolution, &mut Vec::with_capacity(d), &mut out);
    }
    out
}

/// Largest dimension accepted by the uniform-convergence diagnostic.
pub const MAX_UNIFORM_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct UniformRow {
    pub n: usize,
    pub sup_error: f64,
    pub argmax: Vec<f64>,
}

/// Feasible simplex grid points for `instance`.
pub fn feasible_grid(instance: &PortfolioInstance, resolution: usize) -> Vec<Vec<f64>> {
    simplex_grid(instance.d, resolution)
        .into_iter()
        .filter(|x| dot(&instance.mu, x) >= instance.r_target)
        .collect()
}

/// `|empirical CVaR of -xi_i^T x - exact normal CVaR|` at each grid point.
pub fn pointwise_cvar_errors(
    instance: &PortfolioInstance,
    samples: &Matrix,
    grid: &[Vec<f64>],
) -> Result<Vec<f64>, ExperimentError> {
    grid.iter()
        .map(|x| {
            let losses: Vec<f64> = (0..samples.rows()).map(|i| -dot(samples.row(i), x)).collect();
            let empirical = EmpiricalDistribution::from_values(&losses)?.cvar(instance.beta)?;
            let sd = dot(x, &instance.sigma.matvec(x)).max(0.0).sqrt();
            let exact = cvar_normal_closed_form(-dot(&instance.mu, x), sd, instance.beta)?;
            Ok((empirical - exact).abs())
        })
        .collect()
}

/// Sup over the feasible simplex grid of the gap between the sample-based
/// and the exact CVaR of the portfolio loss, for each `n`.
pub fn uniform_convergence_diagnostic(
    instance: &PortfolioInstance,
    grid_resolution: usize,
    n_schedule: &[usize],
    sampler: SamplerKind,
    factorization: Factorization,
    rep_seed: u64,
) -> Result<Vec<UniformRow>, ExperimentError> {
    if instance.d > MAX_UNIFORM_DIM {
        return Err(config_err(format!(
            "uniform diagnostic supports d <= {MAX_UNIFORM_DIM}, got {}",
            instance.d
        )));
    }
    if instance.model != PortfolioModel::Normal {
        return Err(ProblemError::Unsupported("the uniform diagnostic").into());
    }
    if grid_resolution == 0 {
        return Err(config_err("grid resolution must be positive"));
    }
    let grid = feasible_grid(instance, grid_resolution);
    if grid.is_empty() {
        return Err(config_err("no grid point meets the return target"));
    }
    n_schedule
        .iter()
        .map(|&n| {
            let samples = instance.scenarios(sampler, factorization, n, rep_seed)?;
            let errors = pointwise_cvar_errors(instance, &samples, &grid)?;
            let (k, sup) = errors
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, e)| if e > best.1 { (k, e) } else { best });
            Ok(UniformRow { n, sup_error: sup, argmax: grid[k].clone() })
        })
        .collect()
}

/// Equal-weight atoms `Phi^-1((k + 1/2) / atoms)`, a quantile-grid
/// approximation of `N(0, 1)`.
pub fn normal_reference(atoms: usize) -> Result<EmpiricalDistribution, ExperimentError> {
    let values: Vec<f64> = (0..atoms)
        .map(|k| crate::transforms::norm_inv_cdf((k as f64 + 0.5) / atoms as f64))
        .collect::<Result<_, _>>()?;
    Ok(EmpiricalDistribution::from_values(&values)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WassersteinRow {
    pub n: usize,
    pub distance: f64,
}

/// Wasserstein-`p` distance between the empirical measure of `n` standard
/// normal samples and `N(0, 1)`, for each `n`.
pub fn wasserstein_diagnostic(
    sampler: SamplerKind,
    n_schedule: &[usize],
    p: f64,
    seed: u64,
) -> Result<Vec<WassersteinRow>, ExperimentError> {
    let reference = normal_reference(NORMAL_REFERENCE_ATOMS)?;
    let spec = GaussianSpec::new(vec![0.0], Matrix::identity(1), Factorization::Cholesky)?;
    n_schedule
        .iter()
        .map(|&n| {
            let points = sampler.generate(n, 1, seed)?;
            let samples = gaussian_transform(&points, &spec)?;
            let dist = EmpiricalDistribution::from_values(samples.as_slice())?;
            Ok(WassersteinRow { n, distance: dist.wasserstein(&reference, p)? })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StratificationRow {
    pub coordinate: usize,
    pub pass: bool,
}

/// One-point-per-dyadic-cell check of every coordinate; `n` must be `2^m`.
pub fn stratification_diagnostic(
    sampler: SamplerKind,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<Vec<StratificationRow>, ExperimentError> {
    if !n.is_power_of_two() {
        return Err(SequenceError::NotPowerOfTwo { n }.into());
    }
    let points = sampler.generate(n, d, seed)?;
    let m = n.trailing_zeros();
    Ok((0..d)
        .map(|coordinate| StratificationRow { coordinate, pass: dyadic_stratified(&points, coordinate, m) })
        .collect())
}
