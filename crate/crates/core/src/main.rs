use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use riskqmc::experiments::{
    format_number as num, parse_schedule, run_sweep, stratification_diagnostic,
    uniform_convergence_diagnostic, wasserstein_diagnostic, write_report_csv, write_report_svg,
    ExperimentConfig, ExperimentError, ExperimentReport,
};
use riskqmc::problems::{
    gen_portfolio_instance, gen_two_stage_instance, sample_based_optimal_value, Instance,
    PortfolioModel, DEFAULT_R_TARGET,
};
use riskqmc::sequences::SamplerKind;
use riskqmc::transforms::Factorization;

/// Directory for experiment output when the config names no file.
const OUT_DIR_VAR: &str = "RISKQMC_OUT_DIR";

#[derive(Parser)]
#[command(name = "riskqmc", version, about = "Quasi-Monte Carlo sample-based optimization of risk functionals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a point set as CSV.
    Sample(SampleArgs),
    /// Solve one sample-based problem.
    Solve(SolveArgs),
    /// Run an RMSE/bias sweep from a config file.
    Experiment(ExperimentArgs),
    /// Convergence and net-property diagnostics.
    Diagnose {
        #[command(subcommand)]
        kind: Diagnose,
    },
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_parser = parse_sampler)]
    sampler: SamplerKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Portfolio,
    TwoStage,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Normal,
    Uniform,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum, default_value = "portfolio")]
    problem: ProblemArg,
    #[arg(long, value_enum, default_value = "normal")]
    model: ModelArg,
    #[arg(long, value_parser = parse_sampler, default_value = "sobol-scrambled")]
    sampler: SamplerKind,
    #[arg(long, value_parser = parse_factorization, default_value = "cholesky")]
    factorization: Factorization,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    instance_seed: u64,
    #[arg(long, default_value_t = 0)]
    rep_seed: u64,
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    #[arg(long = "R", alias = "r-target", default_value_t = DEFAULT_R_TARGET)]
    r_target: f64,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    /// `key=value` overrides applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// CSV path; overrides `output` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG chart next to the CSV.
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Diagnose {
    /// Wasserstein-p distance of N(0,1) samples to N(0,1).
    Wasserstein {
        #[arg(long, value_parser = parse_sampler, default_value = "sobol-scrambled")]
        sampler: SamplerKind,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value = "2^6..2^12")]
        n_schedule: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sup-error of the sample-based CVaR over a simplex grid.
    Uniform {
        #[arg(long, value_parser = parse_sampler, default_value = "mc")]
        sampler: SamplerKind,
        #[arg(long, value_parser = parse_factorization, default_value = "cholesky")]
        factorization: Factorization,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long, default_value = "2^6..2^12")]
        n_schedule: String,
        #[arg(long, default_value_t = 1)]
        instance_seed: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.9)]
        beta: f64,
        #[arg(long = "R", alias = "r-target", default_value_t = DEFAULT_R_TARGET)]
        r_target: f64,
    },
    /// One-point-per-cell check of every coordinate.
    Stratification {
        #[arg(long, value_parser = parse_sampler, default_value = "sobol")]
        sampler: SamplerKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_sampler(s: &str) -> Result<SamplerKind, String> {
    s.parse().map_err(|e: riskqmc::sequences::SequenceError| e.to_string())
}

fn parse_factorization(s: &str) -> Result<Factorization, String> {
    s.parse().map_err(|e: riskqmc::transforms::TransformError| e.to_string())
}

type Failure = Box<dyn std::error::Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(args) => cmd_sample(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Diagnose { kind } => cmd_diagnose(kind),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn emit(text: &str) -> Result<(), Failure> {
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(text.as_bytes())?;
    stdout.flush()?;
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> Result<ExitCode, Failure> {
    let points = args.sampler.generate(args.n, args.d, args.seed)?;
    let mut text = String::with_capacity(args.n * args.d * 24);
    for row in points.rows() {
        let cells: Vec<String> = row.iter().map(|&x| num(x)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    match args.out {
        Some(path) => std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?,
        None => emit(&text)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode, Failure> {
    let instance = match args.problem {
        ProblemArg::Portfolio => {
            let model = match args.model {
                ModelArg::Normal => PortfolioModel::Normal,
                ModelArg::Uniform => PortfolioModel::UniformAffine,
            };
            Instance::Portfolio(gen_portfolio_instance(args.instance_seed, args.d, args.beta, args.r_target, model)?)
        }
        ProblemArg::TwoStage => {
            Instance::TwoStage(gen_two_stage_instance(args.instance_seed, args.d, args.m, args.beta)?)
        }
    };
    let sol = sample_based_optimal_value(&instance, args.sampler, args.factorization, args.n, args.rep_seed)?;
    let mut text = String::new();
    writeln!(text, "value = {}", num(sol.value))?;
    let x: Vec<String> = sol.point.iter().map(|&v| num(v)).collect();
    writeln!(text, "x = {}", x.join(","))?;
    writeln!(text, "fingerprint = {:016x}", instance.fingerprint())?;
    emit(&text)?;
    Ok(ExitCode::SUCCESS)
}

fn default_output(config: &ExperimentConfig) -> PathBuf {
    let dir = std::env::var_os(OUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"));
    dir.join(format!("{}.csv", config.problem.name()))
}

fn summary(report: &ExperimentReport) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "reference = {} ({})", num(report.reference), report.config.reference);
    let _ = writeln!(text, "{:<16} {:>8} {:>24} {:>24} {:>24}", "sampler", "N", "mean", "bias", "rmse");
    for c in &report.cells {
        let _ = writeln!(
            text,
            "{:<16} {:>8} {:>24} {:>24} {:>24}",
            c.sampler.name(),
            c.n,
            num(c.mean),
            num(c.bias),
            num(c.rmse)
        );
    }
    for f in &report.fits {
        let _ = writeln!(text, "slope {:<16} {}", f.sampler.name(), num(f.slope));
    }
    text
}

fn cmd_experiment(args: ExperimentArgs) -> Result<ExitCode, Failure> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    let mut config = ExperimentConfig::from_kv(&text)?;
    for o in &args.overrides {
        config.apply_override(o)?;
    }
    if let Some(out) = args.out {
        config.output = Some(out);
    }
    config.svg |= args.svg;
    let path = config.output.clone().unwrap_or_else(|| default_output(&config));

    let write = |report: &ExperimentReport| -> Result<(), ExperimentError> {
        write_report_csv(report, &path)?;
        if report.config.svg {
            write_report_svg(report, &path.with_extension("svg"))?;
        }
        Ok(())
    };
    match run_sweep(&config) {
        Ok(report) => {
            write(&report)?;
            emit(&summary(&report))?;
            emit(&format!("wrote {}\n", path.display()))?;
            Ok(ExitCode::SUCCESS)
        }
        Err(err) => {
            if !err.partial.cells.is_empty() {
                write(&err.partial)?;
                eprintln!("partial report written to {}", path.display());
            }
            Err(err.into())
        }
    }
}

fn cmd_diagnose(kind: Diagnose) -> Result<ExitCode, Failure> {
    let mut text = String::new();
    match kind {
        Diagnose::Wasserstein { sampler, p, n_schedule, seed } => {
            let rows = wasserstein_diagnostic(sampler, &parse_schedule(&n_schedule)?, p, seed)?;
            writeln!(text, "N,W{p}")?;
            for r in rows {
                writeln!(text, "{},{}", r.n, num(r.distance))?;
            }
        }
        Diagnose::Uniform { sampler, factorization, d, resolution, n_schedule, instance_seed, seed, beta, r_target } => {
            let inst = gen_portfolio_instance(instance_seed, d, beta, r_target, PortfolioModel::Normal)?;
            let rows = uniform_convergence_diagnostic(
                &inst,
                resolution,
                &parse_schedule(&n_schedule)?,
                sampler,
                factorization,
                seed,
            )?;
            writeln!(text, "N,sup_error,argmax")?;
            for r in rows {
                let x: Vec<String> = r.argmax.iter().map(|&v| num(v)).collect();
                writeln!(text, "{},{},{}", r.n, num(r.sup_error), x.join(" "))?;
            }
        }
        Diagnose::Stratification { sampler, n, d, seed } => {
            let rows = stratification_diagnostic(sampler, n, d, seed)?;
            writeln!(text, "coordinate,result")?;
            let mut all = true;
            for r in &rows {
                writeln!(text, "{},{}", r.coordinate, if r.pass { "pass" } else { "fail" })?;
                all &= r.pass;
            }
            emit(&text)?;
            if !all {
                eprintln!("error: dyadic stratification violated");
                return Ok(ExitCode::from(1));
            }
            return Ok(ExitCode::SUCCESS);
        }
    }
    emit(&text)?;
    Ok(ExitCode::SUCCESS)
}
