//! Command-line front end: norm queries, bound evaluation, canonicalization,
//! verification experiments, and plot-data export.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 input error, 3 canonicality
//! error. All output is deterministic for fixed inputs, flags, and seeds,
//! independent of `--threads`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use ubound::bounds::{
    dominant_regime, iid_tail_bound, moment_bound, tail_bound, BoundOptions,
    BoundReport, RegimePoint,
};
use ubound::experiment::{run_experiment, ExperimentConfig};
use ubound::kernel::{EvaluationMode, KernelInput};
use ubound::montecarlo::SummarySpec;
use ubound::poisson::{
    sample_multiple_integral, stepkernel_norm, theorem8_tail_bound,
    theorem8_threshold, ProcessSpec, StepKernel,
};
use ubound::tensor::{
    partition_norm, MultiIndexArray, NormConfig, NormMethod, Partition,
};
use ubound::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ubound",
    version,
    about = "Partition norms of kernel arrays and moment/tail bounds for \
             decoupled degenerate U-statistics and Poisson chaos"
)]
struct Cli {
    /// Worker threads for parallel sections (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Seed used by randomized routines without their own seed input.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// State budget for exact enumeration.
    #[arg(long, global = true, default_value_t = 10_000_000)]
    budget: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a partition norm of an array file and print its certificate.
    Norm(NormArgs),
    /// Re-center a kernel so every coordinate is degenerate; prints the
    /// kernel back in the same form.
    Canonicalize {
        /// Kernel JSON, shared or expanded form.
        kernel: PathBuf,
    },
    /// Evaluate one bound: 6 (moment), 7 (tail), cor3 (i.i.d. tail),
    /// 8 (Poisson threshold or tail).
    Bound(BoundArgs),
    /// Run a verification experiment config; writes report, CSV, and plot
    /// manifest.
    Verify(VerifyArgs),
    /// Step-kernel norms, bounds, and sampling for compensated Poisson
    /// integrals.
    Poisson(PoissonArgs),
}

#[derive(Args)]
struct NormArgs {
    /// Array JSON: {"order": d, "shape": [...], "values": [...]} with
    /// values in row-major order.
    array: PathBuf,
    /// Partition of the axis labels, like "{1,3}|{2}".
    partition: String,
    /// auto, exact2, alternating, or oracle.
    #[arg(long, default_value = "auto")]
    method: NormMethod,
    /// Restarts for the alternating method.
    #[arg(long)]
    restarts: Option<usize>,
    /// Random tuples for the oracle method.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Clone, Copy)]
enum Theorem {
    T6,
    T7,
    Cor3,
    T8,
}

impl std::str::FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "6" => Ok(Theorem::T6),
            "7" => Ok(Theorem::T7),
            "cor3" => Ok(Theorem::Cor3),
            "8" => Ok(Theorem::T8),
            other => Err(Error::Parse(format!(
                "unknown theorem `{other}` (expected 6, 7, cor3, or 8)"
            ))),
        }
    }
}

#[derive(Args)]
struct BoundArgs {
    /// Kernel JSON; a step-kernel file for theorem 8.
    kernel: PathBuf,
    /// Which bound to evaluate: 6, 7, cor3, or 8.
    #[arg(long)]
    theorem: Theorem,
    /// Moment order (theorem 6) or threshold order (theorem 8).
    #[arg(long)]
    p: Option<f64>,
    /// Tail level.
    #[arg(long)]
    t: Option<f64>,
    /// Comma-separated tail levels; sweeps the dominant regime.
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    /// Replication count for cor3 (defaults to the file's own n).
    #[arg(long)]
    n: Option<usize>,
    /// Multiplicative constant in the bound.
    #[arg(long, default_value_t = 1.0)]
    constant: f64,
    /// Skip the degeneracy gate.
    #[arg(long)]
    allow_noncanonical: bool,
    /// Norm method: auto, exact2, alternating, or oracle.
    #[arg(long, default_value = "auto")]
    method: NormMethod,
    /// Estimate expectation factors from this many draws instead of exact
    /// enumeration (theorem 6).
    #[arg(long)]
    mc_samples: Option<u64>,
    /// Write the swept grid as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Process spec JSON (theorem 8).
    #[arg(long)]
    process: Option<PathBuf>,
    /// Homogeneous Poisson rate on the kernel's grids (theorem 8,
    /// default 1).
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Experiment config JSON ("schemaVersion": 1).
    config: PathBuf,
    /// Directory for artifacts (default: alongside the config).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PoissonArgs {
    #[command(subcommand)]
    command: PoissonCommand,
}

#[derive(Subcommand)]
enum PoissonCommand {
    /// Step-kernel partition norm over one free-axis set; the set is the
    /// ground of the partition.
    Norm(PoissonNormArgs),
    /// Threshold or tail bound; same engine as `bound --theorem 8`.
    Bound(PoissonBoundArgs),
    /// Sample the compensated integral and print the summary.
    Sample(PoissonSampleArgs),
    /// Run a theorem-8 verification config.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct PoissonNormArgs {
    /// Step-kernel JSON: {"d": ..., "grids": [...], "coefficients": [...]}.
    step_kernel: PathBuf,
    /// Partition of the free axes, like "{1}|{2}"; "∅" or "" for the
    /// pointwise absolute value.
    partition: String,
    /// Process spec JSON supplying variance increments.
    #[arg(long)]
    process: Option<PathBuf>,
    /// Homogeneous Poisson rate (default 1).
    #[arg(long)]
    rate: Option<f64>,
    /// auto, exact2, alternating, or oracle.
    #[arg(long, default_value = "auto")]
    method: NormMethod,
    /// Restarts for the alternating method.
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args)]
struct PoissonBoundArgs {
    /// Step-kernel JSON.
    step_kernel: PathBuf,
    /// Threshold order.
    #[arg(long)]
    p: Option<f64>,
    /// Tail level.
    #[arg(long)]
    t: Option<f64>,
    /// Comma-separated tail levels.
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    /// Multiplicative constant in the bound.
    #[arg(long, default_value_t = 1.0)]
    constant: f64,
    /// auto, exact2, alternating, or oracle.
    #[arg(long, default_value = "auto")]
    method: NormMethod,
    /// Process spec JSON.
    #[arg(long)]
    process: Option<PathBuf>,
    /// Homogeneous Poisson rate (default 1).
    #[arg(long)]
    rate: Option<f64>,
    /// Write the swept grid as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct PoissonSampleArgs {
    /// Step-kernel JSON.
    step_kernel: PathBuf,
    /// Number of draws.
    #[arg(long)]
    samples: u64,
    /// Absolute-moment orders to report.
    #[arg(long, value_delimiter = ',')]
    moments: Option<Vec<f64>>,
    /// Tail levels to count.
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    /// Process spec JSON.
    #[arg(long)]
    process: Option<PathBuf>,
    /// Homogeneous Poisson rate (default 1).
    #[arg(long)]
    rate: Option<f64>,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // The global pool can be set only once; a failure just means a
        // default pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Norm(args) => cmd_norm(args, cli).map(|()| 0),
        Command::Canonicalize { kernel } => {
            cmd_canonicalize(kernel).map(|()| 0)
        }
        Command::Bound(args) => cmd_bound(args, cli).map(|()| 0),
        Command::Verify(args) => cmd_verify(args, None),
        Command::Poisson(args) => match &args.command {
            PoissonCommand::Norm(args) => {
                cmd_poisson_norm(args, cli).map(|()| 0)
            }
            PoissonCommand::Bound(args) => {
                cmd_poisson_bound(args, cli).map(|()| 0)
            }
            PoissonCommand::Sample(args) => {
                cmd_poisson_sample(args, cli).map(|()| 0)
            }
            PoissonCommand::Verify(args) => {
                cmd_verify(args, Some("theorem8Verification"))
            }
        },
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidArgument(format!("cannot read {}: {e}", path.display()))
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn norm_config(
    seed: u64,
    restarts: Option<usize>,
    samples: Option<usize>,
) -> NormConfig {
    let mut config = NormConfig {
        seed,
        ..NormConfig::default()
    };
    if let Some(r) = restarts {
        config.restarts = r;
    }
    if let Some(s) = samples {
        config.samples = s;
    }
    config
}

fn cmd_norm(args: &NormArgs, cli: &Cli) -> Result<()> {
    let array: MultiIndexArray = read_json(&args.array)?;
    let partition = Partition::parse(&args.partition)?;
    let config = norm_config(cli.seed, args.restarts, args.samples);
    let certificate =
        partition_norm(&array, &partition, args.method, &config)?;
    print_json(&certificate)
}

fn cmd_canonicalize(path: &Path) -> Result<()> {
    let input: KernelInput = read_json(path)?;
    let output = match input {
        KernelInput::Shared(shared) => {
            KernelInput::Shared(shared.canonicalize()?)
        }
        KernelInput::Ensemble(k) => KernelInput::Ensemble(k.canonicalize()),
    };
    print_json(&output)
}

fn bound_options(
    constant: f64,
    method: NormMethod,
    allow_noncanonical: bool,
    mc_samples: Option<u64>,
    cli: &Cli,
) -> BoundOptions {
    BoundOptions {
        constant,
        mode: match mc_samples {
            Some(samples) => EvaluationMode::MonteCarlo {
                samples,
                seed: cli.seed,
            },
            None => EvaluationMode::Exact,
        },
        method,
        norm_config: NormConfig {
            seed: cli.seed,
            ..NormConfig::default()
        },
        budget: cli.budget,
        allow_noncanonical,
    }
}

/// The dominant term of a tail report flattened to one grid row.
fn regime_point(t: f64, report: &BoundReport) -> RegimePoint {
    let dom = report.dominant.map(|idx| &report.terms[idx]);
    RegimePoint {
        t,
        exponent: report.exponent,
        i_set: dom.map(|term| term.i_set.clone()),
        partition: dom.map(|term| term.partition.clone()),
        bound: report.total,
    }
}

fn format_i_set(i_set: &[usize]) -> String {
    let inner: Vec<String> =
        i_set.iter().map(|axis| axis.to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

/// Grid rows as CSV. Partition labels contain commas, so the two dominant
/// columns are quoted.
fn regime_csv(points: &[RegimePoint]) -> String {
    let mut out = String::from("t,exponent,dominantI,dominantJ,bound\n");
    for point in points {
        let exponent = point
            .exponent
            .map(|e| e.to_string())
            .unwrap_or_default();
        let i_set = point
            .i_set
            .as_deref()
            .map(format_i_set)
            .unwrap_or_default();
        let partition = point
            .partition
            .as_ref()
            .map(|j| j.encode())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},\"{}\",\"{}\",{}",
            point.t, exponent, i_set, partition, point.bound
        )
        .expect("write to string");
    }
    out
}

fn write_csv(path: Option<&Path>, contents: &str) -> Result<()> {
    if let Some(path) = path {
        std::fs::write(path, contents)?;
    }
    Ok(())
}

fn one_level(t: Option<f64>, t_grid: &Option<Vec<f64>>) -> Result<f64> {
    match (t, t_grid) {
        (Some(t), None) => Ok(t),
        (None, Some(_)) | (None, None) => Err(Error::InvalidArgument(
            "this theorem needs --t (or --p for theorem 8)".into(),
        )),
        (Some(_), Some(_)) => Err(Error::InvalidArgument(
            "give --t or --t-grid, not both".into(),
        )),
    }
}

fn cmd_bound(args: &BoundArgs, cli: &Cli) -> Result<()> {
    let opts = bound_options(
        args.constant,
        args.method,
        args.allow_noncanonical,
        args.mc_samples,
        cli,
    );
    match args.theorem {
        Theorem::T6 => {
            let p = args.p.ok_or_else(|| {
                Error::InvalidArgument("theorem 6 needs --p".into())
            })?;
            let k = read_json::<KernelInput>(&args.kernel)?.ensemble()?;
            print_json(&moment_bound(&k, p, &opts)?)
        }
        Theorem::T7 => {
            let k = read_json::<KernelInput>(&args.kernel)?.ensemble()?;
            match &args.t_grid {
                Some(grid) => {
                    let points = dominant_regime(&k, grid, &opts)?;
                    write_csv(args.csv.as_deref(), &regime_csv(&points))?;
                    print_json(&points)
                }
                None => {
                    let t = one_level(args.t, &args.t_grid)?;
                    print_json(&tail_bound(&k, t, &opts)?)
                }
            }
        }
        Theorem::Cor3 => {
            let input: KernelInput = read_json(&args.kernel)?;
            let shared = input.shared().ok_or_else(|| {
                Error::InvalidArgument(
                    "cor3 needs the shared kernel form".into(),
                )
            })?;
            let n = args.n.unwrap_or(shared.n);
            match &args.t_grid {
                Some(grid) => {
                    let points: Vec<RegimePoint> = grid
                        .iter()
                        .map(|&t| {
                            iid_tail_bound(shared, n, t, &opts)
                                .map(|report| regime_point(t, &report))
                        })
                        .collect::<Result<_>>()?;
                    write_csv(args.csv.as_deref(), &regime_csv(&points))?;
                    print_json(&points)
                }
                None => {
                    let t = one_level(args.t, &args.t_grid)?;
                    print_json(&iid_tail_bound(shared, n, t, &opts)?)
                }
            }
        }
        Theorem::T8 => run_theorem8_bound(
            &args.kernel,
            args.process.as_deref(),
            args.rate,
            args.p,
            args.t,
            &args.t_grid,
            args.csv.as_deref(),
            &opts,
        ),
    }
}

fn load_process(
    kernel: &StepKernel,
    process: Option<&Path>,
    rate: Option<f64>,
) -> Result<ProcessSpec> {
    match (process, rate) {
        (Some(_), Some(_)) => Err(Error::InvalidArgument(
            "give --process or --rate, not both".into(),
        )),
        (Some(path), None) => {
            let spec: ProcessSpec = read_json(path)?;
            spec.validate_for(kernel)?;
            Ok(spec)
        }
        (None, rate) => ProcessSpec::homogeneous(kernel, rate.unwrap_or(1.0)),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_theorem8_bound(
    kernel_path: &Path,
    process: Option<&Path>,
    rate: Option<f64>,
    p: Option<f64>,
    t: Option<f64>,
    t_grid: &Option<Vec<f64>>,
    csv: Option<&Path>,
    opts: &BoundOptions,
) -> Result<()> {
    let kernel: StepKernel = read_json(kernel_path)?;
    let spec = load_process(&kernel, process, rate)?;
    if let Some(p) = p {
        return print_json(&theorem8_threshold(&kernel, &spec, p, opts)?);
    }
    match t_grid {
        Some(grid) => {
            let points: Vec<RegimePoint> = grid
                .iter()
                .map(|&t| {
                    theorem8_tail_bound(&kernel, &spec, t, opts)
                        .map(|report| regime_point(t, &report))
                })
                .collect::<Result<_>>()?;
            write_csv(csv, &regime_csv(&points))?;
            print_json(&points)
        }
        None => {
            let t = one_level(t, t_grid)?;
            print_json(&theorem8_tail_bound(&kernel, &spec, t, opts)?)
        }
    }
}

fn cmd_poisson_norm(args: &PoissonNormArgs, cli: &Cli) -> Result<()> {
    let kernel: StepKernel = read_json(&args.step_kernel)?;
    let spec = load_process(&kernel, args.process.as_deref(), args.rate)?;
    let partition = Partition::parse(&args.partition)?;
    let i_set = partition.ground().to_vec();
    let config = norm_config(cli.seed, args.restarts, None);
    let norm = stepkernel_norm(
        &kernel,
        &spec,
        &i_set,
        &partition,
        args.method,
        &config,
    )?;
    print_json(&norm)
}

fn cmd_poisson_bound(args: &PoissonBoundArgs, cli: &Cli) -> Result<()> {
    let opts = bound_options(args.constant, args.method, false, None, cli);
    run_theorem8_bound(
        &args.step_kernel,
        args.process.as_deref(),
        args.rate,
        args.p,
        args.t,
        &args.t_grid,
        args.csv.as_deref(),
        &opts,
    )
}

fn cmd_poisson_sample(args: &PoissonSampleArgs, cli: &Cli) -> Result<()> {
    let kernel: StepKernel = read_json(&args.step_kernel)?;
    let spec = load_process(&kernel, args.process.as_deref(), args.rate)?;
    let summary = SummarySpec {
        moment_orders: args.moments.clone().unwrap_or_default(),
        t_grid: args.t_grid.clone().unwrap_or_default(),
        keep_samples: false,
    };
    let run = sample_multiple_integral(
        &kernel,
        &spec,
        cli.seed,
        args.samples,
        &summary,
    )?;
    print_json(&run)
}

/// Runs a config, writes the three artifacts, prints the report, and maps
/// the outcome to the exit code. `require_kind` restricts which config
/// kinds are accepted.
fn cmd_verify(args: &VerifyArgs, require_kind: Option<&str>) -> Result<i32> {
    let config: ExperimentConfig = read_json(&args.config)?;
    if let Some(kind) = require_kind {
        let actual = match &config {
            ExperimentConfig::MomentVerification(_) => "momentVerification",
            ExperimentConfig::TailVerification(_) => "tailVerification",
            ExperimentConfig::Theorem8Verification(_) => {
                "theorem8Verification"
            }
        };
        if actual != kind {
            return Err(Error::InvalidArgument(format!(
                "this command runs {kind} configs, got {actual}"
            )));
        }
    }

    let base = match args.config.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir,
        _ => Path::new("."),
    };
    let output = run_experiment(&config, base)?;

    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| base.to_path_buf());
    std::fs::create_dir_all(&out_dir)?;
    let stem = args
        .config
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("experiment");
    let (report_path, csv_path, manifest_path) = match config.outputs() {
        Some(paths) => (
            out_dir.join(&paths.report),
            out_dir.join(&paths.csv),
            out_dir.join(&paths.manifest),
        ),
        None => (
            out_dir.join(format!("{stem}.report.json")),
            out_dir.join(format!("{stem}.csv")),
            out_dir.join(format!("{stem}.manifest.json")),
        ),
    };
    for path in [&report_path, &csv_path, &manifest_path] {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
    }
    std::fs::write(&report_path, &output.report_json)?;
    std::fs::write(&csv_path, &output.csv)?;
    std::fs::write(&manifest_path, &output.manifest_json)?;

    print!("{}", output.report_json);
    if output.unresolvable > 0 {
        eprintln!(
            "warning: {} unresolvable row(s): the bound is below what this \
             sample size can check; increase samples to gate them",
            output.unresolvable
        );
    }
    Ok(if output.pass { 0 } else { 1 })
}
