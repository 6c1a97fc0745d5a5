//! `sgfem`: convergence tables and field dumps for the interface control
//! examples.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sgfem_ocp::driver::{dump_fields, run_convergence, solve_one, summary, to_csv, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sgfem", version, about = "Optimal interface control of parabolic interface problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a family of meshes and print the convergence table as CSV.
    Solve(SolveArgs),
    /// Solve one mesh and dump the final fields on a plotting grid.
    Fields(FieldArgs),
}

/// Settings shared by both subcommands; flags override the config file.
#[derive(Args)]
struct Common {
    /// Flat `key = value` file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ex1, ex2c1, ex2c2, ex3 or zero.
    #[arg(long)]
    example: Option<String>,
    /// Conductivities `beta_minus,beta_plus`.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Time step rule, h2 (dt = h^2) or h1 (dt = h), with h = 2/N.
    #[arg(long)]
    dt_rule: Option<String>,
    /// Stopping tolerance on the relative control change.
    #[arg(long, allow_hyphen_values = true)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    damping: Option<f64>,
    /// Reference run `N_ref,M_ref` for examples without a closed form.
    #[arg(long)]
    reference: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Mesh sizes, e.g. `8,16,32`.
    #[arg(long)]
    n: Option<String>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Dump the fields of the finest mesh into this directory.
    #[arg(long)]
    emit_fields: Option<PathBuf>,
    /// Solve the rows on separate threads (count from SGFEM_THREADS).
    #[arg(long)]
    parallel_rows: bool,
    /// Fill the `seconds` column.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct FieldArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: usize,
    /// Time steps; defaults to the time step rule.
    #[arg(long)]
    m: Option<usize>,
    /// Plot grid resolution P, giving (P+1)^2 points.
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    let overrides: [(&str, Option<String>); 8] = [
        ("example", common.example.clone()),
        ("beta", common.beta.clone()),
        ("alpha", common.alpha.map(|v| v.to_string())),
        ("dt_rule", common.dt_rule.clone()),
        ("tol", common.tol.map(|v| v.to_string())),
        ("max_iter", common.max_iter.map(|v| v.to_string())),
        ("damping", common.damping.map(|v| v.to_string())),
        ("reference", common.reference.clone()),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            config.set(key, &v).map_err(|m| anyhow::anyhow!("--{}: {m}", key.replace('_', "-")))?;
        }
    }
    Ok(config)
}

fn solve(args: SolveArgs) -> Result<()> {
    let mut config = load_config(&args.common)?;
    if let Some(n) = &args.n {
        config.set("n", n).map_err(|m| anyhow::anyhow!("--n: {m}"))?;
    }
    if args.output.is_some() {
        config.output = args.output;
    }
    if args.emit_fields.is_some() {
        config.emit_fields = args.emit_fields;
    }
    config.parallel_rows |= args.parallel_rows;
    config.timing |= args.timing;
    config.validate()?;

    let table = run_convergence(&config)?;
    let csv = to_csv(&table, config.timing);
    match &config.output {
        Some(path) => std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    eprint!("{}", summary(&table));
    table.ensure_converged()?;
    Ok(())
}

fn fields(args: FieldArgs) -> Result<()> {
    let mut config = load_config(&args.common)?;
    if let Some(r) = args.resolution {
        config.resolution = r;
    }
    config.n = vec![args.n];
    config.validate()?;
    let m = args.m.unwrap_or_else(|| config.steps(args.n));
    if m == 0 {
        bail!("--m must be positive");
    }
    let run = solve_one(config.problem(), args.n, m, config.options())?;
    dump_fields(&run.disc, &run.solution, config.resolution, &args.out)?;
    eprintln!(
        "{} N={} M={}: {} iterations, cost {:.6e}, fields in {}",
        config.example,
        args.n,
        m,
        run.solution.report.iterations,
        run.solution.report.cost,
        args.out.display()
    );
    run.solution.ensure_converged()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => solve(args),
        Command::Fields(args) => fields(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
