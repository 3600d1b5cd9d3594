use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Deserialize;

use conform::approx::best_projection;
use conform::basis::{sobolev_orthonormalize, InnerProductSpec, OrthonormalBasis};
use conform::constraints::parse_constraints;
use conform::experiments::{
    self, emit_report, eta, grid_audit, termination_name, Cell, ExperimentReport, OutputFormat,
    RunMetadata, RunSummary, Table, Target, AUDIT_POINTS,
};
use conform::solver::{
    solve, Algorithm, SolverConfig, Termination, DEFAULT_DELTA, DEFAULT_MAX_ITERS,
};

#[derive(Parser)]
#[command(
    name = "conform",
    version,
    about = "Structure-preserving polynomial approximation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Correct one coefficient vector so that it satisfies the constraints.
    Solve(SolveArgs),
    /// Regenerate the data behind one published table or figure.
    Experiment(ExperimentArgs),
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value = "l2")]
    space: String,
    /// Constraint specification, e.g. `pos,bound=1` or `deriv=1,sense=lower`.
    #[arg(long)]
    constraints: String,
    #[arg(long, default_value = "greedy")]
    algorithm: String,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Coefficient JSON file, or `builtin:fJ` / `builtin:absx` for the
    /// H-best projection of a test function.
    #[arg(long)]
    input: String,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentName,
    /// Directory receiving one file (or one file per table) per report.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentName {
    Table1,
    Step,
    F2,
    Spectrum,
    Convergence,
    Exotic,
    Corrections,
}

#[derive(Deserialize)]
struct CoeffFile {
    basis: BasisHeader,
    coeffs: Vec<f64>,
}

#[derive(Deserialize)]
struct BasisHeader {
    dim: usize,
    #[serde(default = "default_space")]
    space: String,
}

fn default_space() -> String {
    "l2".into()
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Json => "json",
        Format::Csv => "csv",
    }
}

fn parse_target(name: &str) -> anyhow::Result<Target> {
    if name == "absx" {
        return Ok(Target::Abs);
    }
    match name.strip_prefix('f').map(str::parse::<usize>) {
        Some(Ok(j)) => Ok(Target::Test(j)),
        _ => bail!("unknown builtin function `{name}` (expected fJ or absx)"),
    }
}

fn read_input(
    input: &str,
    basis: &OrthonormalBasis,
) -> anyhow::Result<(DVector<f64>, Option<Target>)> {
    if let Some(name) = input.strip_prefix("builtin:") {
        let target = parse_target(name)?;
        return Ok((best_projection(&target, basis)?, Some(target)));
    }
    let text = fs::read_to_string(input).with_context(|| format!("reading {input}"))?;
    let file: CoeffFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {input}"))?;
    let space = InnerProductSpec::from_name(&file.basis.space)?;
    if file.basis.dim != basis.dim() || space != basis.space() {
        bail!(
            "{input} holds coefficients for dim {} in {}, but the command asks for dim {} in {}",
            file.basis.dim,
            space.name(),
            basis.dim(),
            basis.space().name()
        );
    }
    if file.coeffs.len() != file.basis.dim {
        bail!(
            "{input} declares dim {} but lists {} coefficients",
            file.basis.dim,
            file.coeffs.len()
        );
    }
    Ok((DVector::from_vec(file.coeffs), None))
}

fn run_solve(args: &SolveArgs) -> anyhow::Result<bool> {
    let space = InnerProductSpec::from_name(&args.space)?;
    let basis = sobolev_orthonormalize(space.sobolev_order(), args.dim)?;
    let set = parse_constraints(&args.constraints, &basis)?;
    let algorithm: Algorithm = args.algorithm.parse()?;
    let cfg = SolverConfig {
        delta: args.delta,
        epsilon: args.epsilon,
        max_iters: args.max_iters,
        algorithm,
    };
    let (c0, target) = read_input(&args.input, &basis)?;
    let result = solve(&c0, &set, &cfg, &basis, None)?;
    let eta = match target {
        Some(f) => Some(eta(&f, &c0, &result.coeffs, &basis)?),
        None => None,
    };

    let mut coeffs = Table::new("coefficients", &["j", "input", "output"]);
    for j in 0..basis.dim() {
        coeffs.push(vec![j.into(), c0[j].into(), result.coeffs[j].into()]);
    }
    let mut iters = Table::new(
        "iterations",
        &[
            "index",
            "phase",
            "worst_sdist",
            "y_star",
            "k_star",
            "correction_norm",
        ],
    );
    for it in &result.iterations {
        let phase = serde_json::to_value(it.phase)?;
        iters.push(vec![
            it.index.into(),
            phase.as_str().unwrap_or_default().into(),
            it.worst_sdist.into(),
            it.y_star.map_or(Cell::Text(String::new()), Cell::from),
            it.k_star.map_or(Cell::Text(String::new()), Cell::from),
            it.correction_norm.into(),
        ]);
    }
    let report = ExperimentReport {
        name: "solve".into(),
        metadata: Some(RunMetadata {
            function: target.map_or_else(|| args.input.clone(), |t| t.name()),
            dim: basis.dim(),
            space: space.name().into(),
            preset: args.constraints.clone(),
            algorithm: Some(algorithm.name().into()),
            epsilon: (algorithm == Algorithm::Hybrid).then_some(args.epsilon),
            delta: Some(args.delta),
            max_iters: Some(args.max_iters),
        }),
        summary: Some(RunSummary {
            eta: eta.map(|e| e.eta),
            error_factor: eta.map(|e| e.error_factor),
            iterations: result.num_iterations(),
            terminated: termination_name(result.terminated).into(),
            final_worst_sdist: result.final_worst_sdist,
            grid_min_sdist: grid_audit(&result.coeffs, &set, &basis, AUDIT_POINTS)?,
            input_norm: c0.norm(),
            output_norm: result.coeffs.norm(),
        }),
        notes: Vec::new(),
        tables: vec![coeffs, iters],
    };
    let written = emit_report(&report, args.format.into(), &args.output)?;
    for p in written {
        log::info!("wrote {}", p.display());
    }
    println!(
        "{}: {} iterations, worst sdist {:.3e}",
        termination_name(result.terminated),
        result.num_iterations(),
        result.final_worst_sdist
    );
    Ok(result.terminated == Termination::Feasible)
}

fn run_experiment(args: &ExperimentArgs) -> anyhow::Result<bool> {
    let start = Instant::now();
    let reports = match args.name {
        ExperimentName::Table1 => experiments::run_table1(),
        ExperimentName::Step => experiments::run_step_experiment(),
        ExperimentName::F2 => experiments::run_f2_experiment(),
        ExperimentName::Spectrum => experiments::run_spectrum(),
        ExperimentName::Convergence => experiments::run_convergence(),
        ExperimentName::Exotic => experiments::run_exotic(),
        ExperimentName::Corrections => experiments::run_corrections(),
    }?;
    fs::create_dir_all(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;
    let mut all_feasible = true;
    for r in &reports {
        let path: PathBuf =
            Path::new(&args.output).join(format!("{}.{}", r.name, extension(args.format)));
        emit_report(r, args.format.into(), &path)?;
        if let Some(s) = &r.summary {
            if s.terminated != termination_name(Termination::Feasible) {
                log::warn!("{} terminated with {}", r.name, s.terminated);
                all_feasible = false;
            }
        }
    }
    println!(
        "{} reports written to {} in {:.1}s",
        reports.len(),
        args.output.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(all_feasible)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Experiment(args) => run_experiment(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
