//! Config-driven verification experiments: calibrate a constant, validate
//! it on held-out instances, and emit a report, plot-ready CSV, and a plot
//! manifest. Outputs contain no timestamps or absolute paths, so a fixed
//! config and seed reproduce them byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bounds::{moment_bound, BoundOptions};
use crate::kernel::{
    random_canonical_ensemble, EvaluationMode, KernelEnsemble, KernelInput,
};
use crate::montecarlo::exact::exact_distribution;
use crate::montecarlo::fit::{fit_constant, FitResult};
use crate::montecarlo::sampler::sample_ustatistic;
use crate::montecarlo::summary::SummarySpec;
use crate::montecarlo::verify::{
    verify_iid_tail_bound, verify_moment_bound, verify_tail_bound,
    MomentVerification, TailVerification,
};
use crate::poisson::{
    sample_multiple_integral, verify_theorem8, ProcessSpec, StepKernel,
    Theorem8Verification,
};
use crate::{Error, Result};

/// A value given inline or as a path to a JSON file, resolved relative to
/// the config's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(String),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Source<T> {
    pub fn resolve(&self, base: &Path) -> Result<T> {
        match self {
            Source::Inline(value) => Ok(value.clone()),
            Source::Path(rel) => {
                let path = base.join(rel);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    Error::InvalidArgument(format!(
                        "cannot read {}: {e}",
                        path.display()
                    ))
                })?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }
}

/// Where to write the three artifacts, relative to the invoker's choice of
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct OutputPaths {
    pub report: String,
    pub csv: String,
    pub manifest: String,
}

/// Seeded family of random canonical kernels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct RandomFamily {
    pub count: usize,
    pub seed: u64,
    pub d: usize,
    pub n: usize,
    /// Atoms per axis; defaults to two per axis.
    #[serde(default)]
    pub atom_counts: Option<Vec<usize>>,
    #[serde(default = "default_true")]
    pub uniform_probs: bool,
}

fn default_true() -> bool {
    true
}

fn default_safety() -> f64 {
    1.0
}

fn default_lhs() -> EvaluationMode {
    EvaluationMode::Exact
}

impl RandomFamily {
    /// Instance i uses seed + i.
    pub fn kernels(&self) -> Result<Vec<KernelEnsemble>> {
        let counts = self
            .atom_counts
            .clone()
            .unwrap_or_else(|| vec![2; self.d]);
        (0..self.count)
            .map(|i| {
                random_canonical_ensemble(
                    self.d,
                    self.n,
                    &counts,
                    self.seed.wrapping_add(i as u64),
                    self.uniform_probs,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct MomentExperiment {
    pub schema_version: u32,
    /// Kernel whose bound rows are reported at the final constant.
    #[serde(default)]
    pub kernel: Option<Source<KernelInput>>,
    pub p_list: Vec<f64>,
    /// How E|Z|^p is evaluated on every instance.
    #[serde(default = "default_lhs")]
    pub lhs: EvaluationMode,
    #[serde(default)]
    pub calibration: Option<RandomFamily>,
    #[serde(default)]
    pub held_out: Option<RandomFamily>,
    /// Fixed constant; omitted means fit from the calibration family.
    #[serde(default)]
    pub constant: Option<f64>,
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
    #[serde(default)]
    pub options: BoundOptions,
    #[serde(default)]
    pub outputs: Option<OutputPaths>,
}

/// How tail grids scale with the replication count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TScaling {
    /// Grid values are absolute levels.
    None,
    /// Grid values are multiplied by n^(d/2), the natural scale of Z.
    Nd2,
}

impl Default for TScaling {
    fn default() -> Self {
        TScaling::None
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct TailExperiment {
    pub schema_version: u32,
    pub kernel: Source<KernelInput>,
    /// Replication counts for a shared kernel; its own count when absent.
    #[serde(default)]
    pub n_values: Option<Vec<usize>>,
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub t_scaling: TScaling,
    pub samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub constant: Option<f64>,
    /// Calibration run for the fit; defaults to seed + 1 and `samples`.
    #[serde(default)]
    pub calibration_seed: Option<u64>,
    #[serde(default)]
    pub calibration_samples: Option<u64>,
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
    #[serde(default)]
    pub options: BoundOptions,
    #[serde(default)]
    pub outputs: Option<OutputPaths>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct Theorem8Experiment {
    pub schema_version: u32,
    pub step_kernel: Source<StepKernel>,
    #[serde(default)]
    pub process: Option<Source<ProcessSpec>>,
    /// Shorthand for a homogeneous Poisson process on the kernel's grids.
    #[serde(default)]
    pub rate: Option<f64>,
    pub p_grid: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub constant: Option<f64>,
    #[serde(default)]
    pub calibration_seed: Option<u64>,
    #[serde(default)]
    pub calibration_samples: Option<u64>,
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
    #[serde(default)]
    pub options: BoundOptions,
    #[serde(default)]
    pub outputs: Option<OutputPaths>,
}

/// One experiment per config file, discriminated by `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ExperimentConfig {
    MomentVerification(MomentExperiment),
    TailVerification(TailExperiment),
    Theorem8Verification(Theorem8Experiment),
}

impl ExperimentConfig {
    pub fn schema_version(&self) -> u32 {
        match self {
            ExperimentConfig::MomentVerification(e) => e.schema_version,
            ExperimentConfig::TailVerification(e) => e.schema_version,
            ExperimentConfig::Theorem8Verification(e) => e.schema_version,
        }
    }

    pub fn outputs(&self) -> Option<&OutputPaths> {
        match self {
            ExperimentConfig::MomentVerification(e) => e.outputs.as_ref(),
            ExperimentConfig::TailVerification(e) => e.outputs.as_ref(),
            ExperimentConfig::Theorem8Verification(e) => e.outputs.as_ref(),
        }
    }
}

/// Everything a run produces. The JSON strings are stable for a fixed
/// config.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report_json: String,
    pub csv: String,
    pub manifest_json: String,
    pub pass: bool,
    /// Gated rows the sample size cannot resolve; they do not fail the run
    /// but deserve a warning.
    pub unresolvable: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
struct FitSummary {
    fitted_constant: f64,
    safety_factor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration_samples: Option<u64>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct MomentReport {
    schema_version: u32,
    kind: &'static str,
    constant: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel: Option<MomentVerification>,
    pass: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TailUnit {
    label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    verification: TailVerification,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TailReport {
    schema_version: u32,
    kind: &'static str,
    constant: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitSummary>,
    units: Vec<TailUnit>,
    pass: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Theorem8Report {
    schema_version: u32,
    kind: &'static str,
    constant: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitSummary>,
    verification: Theorem8Verification,
    pass: bool,
}

fn to_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn manifest(plots: &[(&str, &str, &[&str])]) -> Result<String> {
    #[derive(Serialize)]
    struct Plot<'a> {
        title: &'a str,
        x: &'a str,
        y: Vec<&'a str>,
        data: &'a str,
    }
    let plots: Vec<Plot> = plots
        .iter()
        .map(|(title, x, y)| Plot {
            title,
            x,
            y: y.to_vec(),
            data: "csv",
        })
        .collect();
    to_pretty(&plots)
}

/// Smallest constant in [lo, hi] satisfying a monotone pass predicate,
/// found by geometric bisection to 1e-9 relative.
fn smallest_passing(
    lo: f64,
    hi: f64,
    passes: impl Fn(f64) -> bool,
) -> Option<f64> {
    if passes(lo) {
        return Some(lo);
    }
    if !passes(hi) {
        return None;
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi / lo > 1.0 + 1e-9 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if passes(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

fn check_schema(version: u32) -> Result<()> {
    if version != 1 {
        return Err(Error::Parse(format!(
            "unsupported schemaVersion {version}, expected 1"
        )));
    }
    Ok(())
}

fn moment_instances(
    kernels: &[KernelEnsemble],
    prefix: &str,
    p_list: &[f64],
    lhs: EvaluationMode,
    opts: &BoundOptions,
) -> Result<Vec<(String, f64, f64, f64)>> {
    let mut out = Vec::new();
    for (i, k) in kernels.iter().enumerate() {
        let lhs_values: Vec<f64> = match lhs {
            EvaluationMode::Exact => {
                let law = exact_distribution(k, opts.budget)?;
                p_list.iter().map(|&p| law.abs_moment(p)).collect()
            }
            EvaluationMode::MonteCarlo { samples, seed } => {
                let spec = SummarySpec {
                    moment_orders: p_list.to_vec(),
                    t_grid: vec![],
                    keep_samples: false,
                };
                let run = sample_ustatistic(k, seed, samples, &spec);
                run.moments.iter().map(|m| m.value).collect()
            }
        };
        for (&p, &lhs_value) in p_list.iter().zip(&lhs_values) {
            let rhs = moment_bound(k, p, opts)?.total;
            out.push((format!("{prefix}-{i}-p{p}"), p, lhs_value, rhs));
        }
    }
    Ok(out)
}

fn run_moment(exp: &MomentExperiment, base: &Path) -> Result<ExperimentOutput> {
    check_schema(exp.schema_version)?;
    let unit_opts = BoundOptions {
        constant: 1.0,
        ..exp.options
    };

    let mut csv = String::from("series,label,p,lhs,rhs,ratio,pass\n");
    let calibration = match &exp.calibration {
        Some(family) => moment_instances(
            &family.kernels()?,
            "cal",
            &exp.p_list,
            exp.lhs,
            &unit_opts,
        )?,
        None => Vec::new(),
    };
    let mut fit = if calibration.is_empty() {
        None
    } else {
        let triples: Vec<(String, f64, f64)> = calibration
            .iter()
            .map(|(label, _, lhs, rhs)| (label.clone(), *lhs, *rhs))
            .collect();
        Some(fit_constant(&triples)?)
    };

    let constant = match (exp.constant, &fit) {
        (Some(c), _) => c,
        (None, Some(f)) => f.constant * exp.safety_factor,
        (None, None) => {
            return Err(Error::InvalidArgument(
                "give a constant or a calibration family to fit one".into(),
            ))
        }
    };

    let held_out = match &exp.held_out {
        Some(family) => moment_instances(
            &family.kernels()?,
            "held",
            &exp.p_list,
            exp.lhs,
            &unit_opts,
        )?,
        None => Vec::new(),
    };
    let mut held_violations = 0usize;
    if !held_out.is_empty() {
        let triples: Vec<(String, f64, f64)> = held_out
            .iter()
            .map(|(label, _, lhs, rhs)| (label.clone(), *lhs, *rhs))
            .collect();
        let fit = fit.get_or_insert_with(|| FitResult {
            constant,
            calibration: Vec::new(),
            max_ratio: 0.0,
            held_out: Vec::new(),
            violations: 0,
        });
        fit.constant = constant;
        held_violations = fit.validate(&triples)?;
    }

    for (series, rows) in
        [("calibration", &calibration), ("heldOut", &held_out)]
    {
        for (label, p, lhs, rhs) in rows {
            let ratio = if *rhs > 0.0 { lhs / rhs } else { 0.0 };
            let pass = *lhs <= constant * rhs;
            writeln!(csv, "{series},{label},{p},{lhs},{rhs},{ratio},{pass}")
                .expect("write to string");
        }
    }

    let kernel_rows = match &exp.kernel {
        Some(source) => {
            let input = source.resolve(base)?;
            let k = input.ensemble()?;
            let opts = BoundOptions {
                constant,
                ..exp.options
            };
            let verification =
                verify_moment_bound(&k, &exp.p_list, &opts, exp.lhs)?;
            for row in &verification.rows {
                writeln!(
                    csv,
                    "kernel,kernel-p{},{},{},{},{},{}",
                    row.p, row.p, row.lhs, row.rhs, row.ratio, row.pass
                )
                .expect("write to string");
            }
            Some(verification)
        }
        None => None,
    };

    let pass = held_violations == 0
        && kernel_rows.as_ref().map_or(true, |v| v.pass);
    let report = MomentReport {
        schema_version: 1,
        kind: "momentVerification",
        constant,
        fit,
        kernel: kernel_rows,
        pass,
    };
    Ok(ExperimentOutput {
        report_json: to_pretty(&report)?,
        csv,
        manifest_json: manifest(&[(
            "moment ratio by order",
            "p",
            &["ratio"],
        )])?,
        pass,
        unresolvable: 0,
    })
}

struct TailUnitPlan {
    label: String,
    n: Option<usize>,
    t_grid: Vec<f64>,
}

fn tail_units(
    exp: &TailExperiment,
    input: &KernelInput,
) -> Result<Vec<TailUnitPlan>> {
    let scale = |t: f64, n: usize, d: usize| match exp.t_scaling {
        TScaling::None => t,
        TScaling::Nd2 => t * (n as f64).powf(d as f64 / 2.0),
    };
    match (&exp.n_values, input) {
        (Some(ns), KernelInput::Shared(shared)) => Ok(ns
            .iter()
            .map(|&n| TailUnitPlan {
                label: format!("n={n}"),
                n: Some(n),
                t_grid: exp
                    .t_grid
                    .iter()
                    .map(|&t| scale(t, n, shared.d))
                    .collect(),
            })
            .collect()),
        (Some(_), KernelInput::Ensemble(_)) => Err(Error::InvalidArgument(
            "nValues needs a shared kernel".into(),
        )),
        (None, KernelInput::Shared(shared)) => Ok(vec![TailUnitPlan {
            label: format!("n={}", shared.n),
            n: Some(shared.n),
            t_grid: exp
                .t_grid
                .iter()
                .map(|&t| scale(t, shared.n, shared.d))
                .collect(),
        }]),
        (None, KernelInput::Ensemble(k)) => Ok(vec![TailUnitPlan {
            label: "kernel".into(),
            n: None,
            t_grid: exp
                .t_grid
                .iter()
                .map(|&t| scale(t, k.n(), k.d()))
                .collect(),
        }]),
    }
}

fn run_tail_units(
    input: &KernelInput,
    units: &[TailUnitPlan],
    samples: u64,
    seed: u64,
    opts: &BoundOptions,
) -> Result<Vec<TailVerification>> {
    units
        .iter()
        .map(|unit| match (unit.n, input) {
            (Some(n), KernelInput::Shared(shared)) => verify_iid_tail_bound(
                shared,
                n,
                &unit.t_grid,
                samples,
                seed,
                opts,
            ),
            _ => verify_tail_bound(
                &input.ensemble()?,
                &unit.t_grid,
                samples,
                seed,
                opts,
            ),
        })
        .collect()
}

fn run_tail(exp: &TailExperiment, base: &Path) -> Result<ExperimentOutput> {
    check_schema(exp.schema_version)?;
    let input = exp.kernel.resolve(base)?;
    let units = tail_units(exp, &input)?;

    let mut fit = None;
    let constant = match exp.constant {
        Some(c) => c,
        None => {
            let cal_seed = exp.calibration_seed.unwrap_or(exp.seed + 1);
            let cal_samples =
                exp.calibration_samples.unwrap_or(exp.samples);
            // The exponent at each level does not depend on the constant,
            // so one calibration pass per unit fixes everything the fit
            // predicate needs.
            let unit_opts = BoundOptions {
                constant: 1.0,
                ..exp.options
            };
            let runs = run_tail_units(
                &input, &units, cal_samples, cal_seed, &unit_opts,
            )?;
            let mut rows: Vec<(f64, Option<f64>)> = Vec::new();
            for (unit, run) in units.iter().zip(&runs) {
                let reports: Result<Vec<_>> = unit
                    .t_grid
                    .iter()
                    .map(|&t| match (unit.n, &input) {
                        (Some(n), KernelInput::Shared(shared)) => {
                            crate::bounds::iid_tail_bound(
                                shared, n, t, &unit_opts,
                            )
                        }
                        _ => crate::bounds::tail_bound(
                            &input.ensemble()?,
                            t,
                            &unit_opts,
                        ),
                    })
                    .collect();
                for (row, report) in run.rows.iter().zip(reports?) {
                    rows.push((row.ci_upper, report.exponent));
                }
            }
            let passes = |k: f64| {
                rows.iter().all(|&(ci, exponent)| match exponent {
                    Some(e) => {
                        let bound = (k * (-e / k).exp()).min(1.0);
                        bound >= 1.0 || ci <= bound
                    }
                    // No finite exponent: the bound is 0 (or vacuous);
                    // only an exactly-zero CI can pass, which Wilson
                    // upper limits never produce.
                    None => false,
                })
            };
            let fitted =
                smallest_passing(1e-6, 1e9, passes).ok_or_else(|| {
                    Error::InfeasibleFit(
                        "no constant covers the calibration tails".into(),
                    )
                })?;
            fit = Some(FitSummary {
                fitted_constant: fitted,
                safety_factor: exp.safety_factor,
                calibration_seed: Some(cal_seed),
                calibration_samples: Some(cal_samples),
            });
            fitted * exp.safety_factor
        }
    };

    let opts = BoundOptions {
        constant,
        ..exp.options
    };
    let runs =
        run_tail_units(&input, &units, exp.samples, exp.seed, &opts)?;
    let mut csv = String::from(
        "series,t,count,empirical,ciUpper,bound,gated,resolvable,pass\n",
    );
    let mut unresolvable = 0usize;
    for (unit, run) in units.iter().zip(&runs) {
        for row in &run.rows {
            if row.gated && !row.resolvable {
                unresolvable += 1;
            }
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                unit.label,
                row.t,
                row.count,
                row.empirical,
                row.ci_upper,
                row.bound,
                row.gated,
                row.resolvable,
                row.pass
            )
            .expect("write to string");
        }
    }
    let pass = runs.iter().all(|r| r.pass);
    let report = TailReport {
        schema_version: 1,
        kind: "tailVerification",
        constant,
        fit,
        units: units
            .iter()
            .zip(runs)
            .map(|(unit, verification)| TailUnit {
                label: unit.label.clone(),
                n: unit.n,
                verification,
            })
            .collect(),
        pass,
    };
    Ok(ExperimentOutput {
        report_json: to_pretty(&report)?,
        csv,
        manifest_json: manifest(&[(
            "empirical tail against bound",
            "t",
            &["empirical", "ciUpper", "bound"],
        )])?,
        pass,
        unresolvable,
    })
}

fn run_theorem8(
    exp: &Theorem8Experiment,
    base: &Path,
) -> Result<ExperimentOutput> {
    check_schema(exp.schema_version)?;
    let kernel = exp.step_kernel.resolve(base)?;
    let process = match (&exp.process, exp.rate) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument(
                "give either a process or a rate, not both".into(),
            ))
        }
        (Some(source), None) => source.resolve(base)?,
        (None, rate) => {
            ProcessSpec::homogeneous(&kernel, rate.unwrap_or(1.0))?
        }
    };

    let mut fit = None;
    let constant = match exp.constant {
        Some(c) => c,
        None => {
            let cal_seed = exp.calibration_seed.unwrap_or(exp.seed + 1);
            let cal_samples =
                exp.calibration_samples.unwrap_or(exp.samples);
            // Thresholds scale linearly in the constant, so one kept
            // sample set answers every candidate via rank queries.
            let summary = SummarySpec {
                moment_orders: vec![],
                t_grid: vec![],
                keep_samples: true,
            };
            let run = sample_multiple_integral(
                &kernel,
                &process,
                cal_seed,
                cal_samples,
                &summary,
            )?;
            let mut abs: Vec<f64> = run
                .draws
                .as_ref()
                .expect("draws kept")
                .iter()
                .map(|z| z.abs())
                .collect();
            abs.sort_by(f64::total_cmp);
            let unit_opts = BoundOptions {
                constant: 1.0,
                ..exp.options
            };
            let unit_thresholds: Vec<f64> = exp
                .p_grid
                .iter()
                .map(|&p| {
                    crate::poisson::theorem8_threshold(
                        &kernel, &process, p, &unit_opts,
                    )
                    .map(|r| r.total)
                })
                .collect::<Result<_>>()?;
            let min_resolvable = 20.0 / cal_samples as f64;
            let passes = |k: f64| {
                exp.p_grid.iter().zip(&unit_thresholds).all(
                    |(&p, &unit_threshold)| {
                        let target = (-p).exp();
                        if target < min_resolvable {
                            return true;
                        }
                        let threshold = k * unit_threshold;
                        let below =
                            abs.partition_point(|&x| x < threshold);
                        let count = (abs.len() - below) as u64;
                        crate::montecarlo::verify::wilson_upper(
                            count,
                            cal_samples,
                            crate::montecarlo::verify::Z99,
                        ) <= target
                    },
                )
            };
            let fitted =
                smallest_passing(1e-6, 1e9, passes).ok_or_else(|| {
                    Error::InfeasibleFit(
                        "no constant covers the calibration tails".into(),
                    )
                })?;
            fit = Some(FitSummary {
                fitted_constant: fitted,
                safety_factor: exp.safety_factor,
                calibration_seed: Some(cal_seed),
                calibration_samples: Some(cal_samples),
            });
            fitted * exp.safety_factor
        }
    };

    let opts = BoundOptions {
        constant,
        ..exp.options
    };
    let verification = verify_theorem8(
        &kernel,
        &process,
        &exp.p_grid,
        exp.samples,
        exp.seed,
        &opts,
    )?;
    let mut csv = String::from(
        "p,threshold,target,count,empirical,ciUpper,resolvable,pass\n",
    );
    let unresolvable =
        verification.rows.iter().filter(|r| !r.resolvable).count();
    for row in &verification.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            row.p,
            row.threshold,
            row.target,
            row.count,
            row.empirical,
            row.ci_upper,
            row.resolvable,
            row.pass
        )
        .expect("write to string");
    }
    let pass = verification.pass;
    let report = Theorem8Report {
        schema_version: 1,
        kind: "theorem8Verification",
        constant,
        fit,
        verification,
        pass,
    };
    Ok(ExperimentOutput {
        report_json: to_pretty(&report)?,
        csv,
        manifest_json: manifest(&[(
            "tail at threshold(p) against e^-p",
            "p",
            &["empirical", "ciUpper", "target"],
        )])?,
        pass,
        unresolvable,
    })
}

/// Runs one experiment. `base` is the directory file references resolve
/// against (normally the config's directory).
pub fn run_experiment(
    config: &ExperimentConfig,
    base: &Path,
) -> Result<ExperimentOutput> {
    match config {
        ExperimentConfig::MomentVerification(e) => run_moment(e, base),
        ExperimentConfig::TailVerification(e) => run_tail(e, base),
        ExperimentConfig::Theorem8Verification(e) => run_theorem8(e, base),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::SharedKernel;

    fn parse(config: &str) -> ExperimentConfig {
        serde_json::from_str(config).expect("valid config")
    }

    #[test]
    fn moment_config_with_fixed_constant() {
        let config = parse(
            r#"{
                "kind": "momentVerification",
                "schemaVersion": 1,
                "kernel": {"d": 1, "n": 2,
                    "space": {"atoms": ["-1", "+1"], "probs": [0.5, 0.5]},
                    "kernelTable": [-1.0, 1.0]},
                "pList": [2.0, 4.0],
                "constant": 1.0
            }"#,
        );
        let out = run_experiment(&config, Path::new(".")).unwrap();
        assert!(out.pass);
        assert!(out.report_json.contains("\"pass\": true"));
        assert!(out.csv.starts_with("series,label,p,lhs,rhs,ratio,pass\n"));
        assert!(out.csv.contains("kernel,kernel-p4,4,8,"));
        // Determinism of the emitted strings.
        let again = run_experiment(&config, Path::new(".")).unwrap();
        assert_eq!(out.report_json, again.report_json);
        assert_eq!(out.csv, again.csv);
        assert_eq!(out.manifest_json, again.manifest_json);
    }

    #[test]
    fn moment_fit_covers_held_out_family() {
        let config = parse(
            r#"{
                "kind": "momentVerification",
                "schemaVersion": 1,
                "pList": [2.0, 4.0],
                "calibration": {"count": 4, "seed": 100, "d": 2, "n": 2},
                "heldOut": {"count": 3, "seed": 900, "d": 2, "n": 2},
                "safetyFactor": 1.5
            }"#,
        );
        let out = run_experiment(&config, Path::new(".")).unwrap();
        assert!(out.pass, "report: {}", out.report_json);
        assert!(out.report_json.contains("fittedConstant")
            || out.report_json.contains("\"constant\""));
    }

    #[test]
    fn tail_fit_and_verify_product_kernel() {
        let shared = SharedKernel::rademacher_product(2, 2);
        let config = ExperimentConfig::TailVerification(TailExperiment {
            schema_version: 1,
            kernel: Source::Inline(KernelInput::Shared(shared)),
            n_values: Some(vec![2]),
            t_grid: vec![4.0],
            t_scaling: TScaling::None,
            samples: 20_000,
            seed: 7,
            constant: None,
            calibration_seed: None,
            calibration_samples: None,
            safety_factor: 1.2,
            options: BoundOptions::default(),
            outputs: None,
        });
        let out = run_experiment(&config, Path::new(".")).unwrap();
        assert!(out.pass, "report: {}", out.report_json);
        assert!(out.csv.starts_with("series,t,"));
        assert!(out.report_json.contains("\"fittedConstant\""));
    }

    #[test]
    fn theorem8_fit_and_verify() {
        let config = parse(
            r#"{
                "kind": "theorem8Verification",
                "schemaVersion": 1,
                "stepKernel": {"d": 1, "grids": [[0.0, 1.0]],
                               "coefficients": [1.0]},
                "pGrid": [2.0, 3.0],
                "samples": 20000,
                "seed": 5,
                "safetyFactor": 1.1
            }"#,
        );
        let out = run_experiment(&config, Path::new(".")).unwrap();
        assert!(out.pass, "report: {}", out.report_json);
        assert!(out.csv.starts_with("p,threshold,"));
    }

    #[test]
    fn schema_and_unknown_fields_are_rejected() {
        let bad_version = parse(
            r#"{
                "kind": "momentVerification",
                "schemaVersion": 2,
                "pList": [2.0],
                "constant": 1.0
            }"#,
        );
        assert!(matches!(
            run_experiment(&bad_version, Path::new(".")),
            Err(Error::Parse(_))
        ));
        let unknown: std::result::Result<ExperimentConfig, _> =
            serde_json::from_str(
                r#"{
                    "kind": "momentVerification",
                    "schemaVersion": 1,
                    "pList": [2.0],
                    "constant": 1.0,
                    "typo": true
                }"#,
            );
        assert!(unknown.is_err());
    }

    #[test]
    fn path_sources_resolve_relative_to_base() {
        let dir = std::env::temp_dir()
            .join(format!("ubound-exp-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let shared = SharedKernel::rademacher_product(1, 2);
        let kernel_path = dir.join("kernel.json");
        std::fs::write(
            &kernel_path,
            serde_json::to_string(&KernelInput::Shared(shared)).unwrap(),
        )
        .unwrap();
        let config = parse(
            r#"{
                "kind": "momentVerification",
                "schemaVersion": 1,
                "kernel": "kernel.json",
                "pList": [4.0],
                "constant": 1.0
            }"#,
        );
        let out = run_experiment(&config, &dir).unwrap();
        assert!(out.pass);
        std::fs::remove_dir_all(&dir).ok();
    }
}
