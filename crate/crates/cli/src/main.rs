//! Command-line front end: solve problem files, validate posteriors, convert
//! hypergraphs, generate feasible instances, and fit convergence rates.
//!
//! Machine-readable output goes to `--out` or standard output; human-readable
//! summaries go to standard error. Exit codes: 0 converged/pass, 2 iteration
//! budget exhausted or failed validation, 3 diverged, 1 bad input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sbridge_core::doc::{
    parse_posterior, status_string, Encoding, HypergraphDocument, ProblemDocument,
    SolutionDocument,
};
use sbridge_core::{
    estimate_rate, generate_feasible, oracle_solve, solve_generalized, uniformize, validate,
    validate_fixture, BridgeProblem, ConvergenceTrace, OracleOptions, RateOutcome, ResidualNorm,
    SolveStatus,
};

#[derive(Parser)]
#[command(name = "sbridge", version, about = "Signed-marginal entropic network solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem document and write the solution document.
    Solve(SolveArgs),
    /// Check a posterior file against a problem's marginals.
    Validate(ValidateArgs),
    /// Pad a hypergraph to uniform cardinality with shared virtual nodes.
    Uniformize(UniformizeArgs),
    /// Generate a random feasible problem document.
    Gen(GenArgs),
    /// Fit a linear convergence rate to a trace CSV.
    Rate(RateArgs),
}

#[derive(Args)]
struct SolveArgs {
    problem: PathBuf,
    /// Convergence tolerance on the max-abs constrained residual.
    #[arg(long)]
    tol: Option<f64>,
    /// Maximum number of full sweeps.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Write the per-update residual/dual trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the solution document here (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cross-check against the slow reference optimizer.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct ValidateArgs {
    problem: PathBuf,
    posterior: PathBuf,
    /// Pass/fail tolerance on each constrained residual.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct UniformizeArgs {
    hypergraph: PathBuf,
    /// Write the uniformized document here (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    order: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 0.8)]
    density: f64,
    /// Probability of a negative template sign, applied to every mode.
    #[arg(long = "neg-frac", default_value_t = 0.3)]
    neg_frac: f64,
    #[arg(long)]
    seed: u64,
    /// Write the problem document here (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    trace: PathBuf,
    #[arg(long)]
    mode: usize,
    #[arg(long = "burn-in", default_value_t = 5)]
    burn_in: usize,
}

/// Input-side failure; always maps to exit code 1.
struct CliError(String);

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError(format!("{}: {e}", path.display()))),
        None => {
            println!("{}", text.trim_end());
            Ok(())
        }
    }
}

fn load_problem(path: &Path) -> Result<(BridgeProblem, Encoding), CliError> {
    let doc: ProblemDocument = serde_json::from_str(&read(path)?)
        .map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    let encoding = doc.encoding()?;
    let problem = doc.into_problem()?;
    let report = validate(&problem);
    if !report.is_valid() {
        return Err(CliError(format!(
            "{}: invalid problem: {}",
            path.display(),
            report.violations.join("; ")
        )));
    }
    Ok((problem, encoding))
}

fn cmd_solve(args: &SolveArgs) -> Result<u8, CliError> {
    let (mut problem, encoding) = load_problem(&args.problem)?;
    if let Some(t) = args.tol {
        problem.options.tolerance = t;
    }
    if let Some(m) = args.max_iter {
        problem.options.max_iterations = m;
    }
    if args.trace.is_some() {
        problem.options.record_trace = true;
    }

    let solution = solve_generalized(&problem)?;
    eprintln!(
        "status: {}; sweeps: {}; max residual: {:e}",
        status_string(solution.status),
        solution.iterations_used,
        solution.max_residual()
    );

    if let (Some(path), Some(trace)) = (&args.trace, &solution.trace) {
        std::fs::write(path, trace.to_csv())
            .map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    }

    if args.oracle {
        match oracle_solve(&problem, &OracleOptions::default()) {
            Ok(reference) => {
                let disagreement = solution
                    .posterior
                    .values()
                    .iter()
                    .zip(reference.posterior.values())
                    .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
                eprintln!("oracle max entrywise disagreement: {disagreement:e}");
            }
            Err(e) => eprintln!("oracle inconclusive: {e}"),
        }
    }

    let trace_ref = args.trace.as_ref().map(|p| p.display().to_string());
    let doc = SolutionDocument::from_solution(&solution, encoding, trace_ref);
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    Ok(match solution.status {
        SolveStatus::Converged => 0,
        SolveStatus::MaxIterations => 2,
        SolveStatus::Diverged => 3,
    })
}

fn cmd_validate(args: &ValidateArgs) -> Result<u8, CliError> {
    let (problem, _) = load_problem(&args.problem)?;
    let posterior = parse_posterior(&read(&args.posterior)?, problem.shape())?;
    let report = validate_fixture(&posterior, &problem, args.tol)?;
    for mode in 0..problem.order() {
        println!("mode {} max residual: {:e}", mode, report.max_residual(mode));
    }
    if report.pass() {
        eprintln!("pass at tolerance {:e}", args.tol);
        Ok(0)
    } else {
        for mode in 0..problem.order() {
            let failing = report.failing(mode);
            if !failing.is_empty() {
                eprintln!("mode {mode} failing indices: {failing:?}");
            }
        }
        Ok(2)
    }
}

fn cmd_uniformize(args: &UniformizeArgs) -> Result<u8, CliError> {
    let doc: HypergraphDocument = serde_json::from_str(&read(&args.hypergraph)?)
        .map_err(|e| CliError(format!("{}: {e}", args.hypergraph.display())))?;
    let h = doc.into_hypergraph()?;
    let result = uniformize(&h)?;
    eprintln!(
        "uniform cardinality {}; {} virtual node(s)",
        result
            .hypergraph
            .uniform_cardinality()
            .map_or("n/a".to_string(), |k| k.to_string()),
        result.virtual_node_ids.len()
    );
    let out_doc =
        HypergraphDocument::from_hypergraph(&result.hypergraph, Some(result.virtual_node_ids));
    let mut text = serde_json::to_string_pretty(&out_doc)?;
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_gen(args: &GenArgs) -> Result<u8, CliError> {
    let shape = vec![args.dim; args.order];
    let fractions = vec![args.neg_frac; args.order];
    let generated = generate_feasible(&shape, args.density, &fractions, args.seed)?;
    let doc = ProblemDocument::from_problem(&generated.problem, Encoding::Dense);
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_rate(args: &RateArgs) -> Result<u8, CliError> {
    let trace = ConvergenceTrace::from_csv(&read(&args.trace)?)?;
    match estimate_rate(&trace, args.mode, args.burn_in, ResidualNorm::L2)? {
        RateOutcome::Fit(fit) => {
            println!(
                "{}",
                serde_json::json!({
                    "mode": args.mode,
                    "burn_in": fit.burn_in,
                    "slope": fit.slope,
                    "intercept": fit.intercept,
                    "r_squared": fit.r_squared,
                })
            );
        }
        RateOutcome::Undefined => {
            println!(
                "{}",
                serde_json::json!({
                    "mode": args.mode,
                    "burn_in": args.burn_in,
                    "undefined": true,
                })
            );
            eprintln!("residuals hit zero inside the fit window; no rate to measure");
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Uniformize(args) => cmd_uniformize(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Rate(args) => cmd_rate(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(CliError(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
