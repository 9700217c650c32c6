//! Moment and tail bounds for canonical decoupled statistics.
//!
//! All bounds share one family of coefficients: for every subset I of the
//! axes and every partition J of I, the conditional partition norm enters
//! with the p-weight p^(#I^c + deg(J)/2). Moment bounds sum
//! p^(p * pExponent) * E max ||.||^p over all (I, J); tail bounds invert the
//! moment growth into exp(-min (t / sup||.||)^(1 / pExponent)). The I = ∅
//! term uses the scalar convention ||h_i||_∅ = |h_i|, so it contributes the
//! plain maximum of the kernels.
//!
//! Every evaluator refuses non-canonical input by default: degeneracy is
//! what makes the dominant-term structure correct, and silently accepting a
//! non-degenerate kernel would produce a bound for a different statistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    expected_max_conditional_norm, sup_conditional_norm, EvaluationMode,
    KernelEnsemble, SharedKernel, CANONICAL_TOL,
};
use crate::numeric::CompensatedSum;
use crate::tensor::{
    enumerate_partitions, partition_norm, MultiIndexArray, NormConfig,
    NormMethod, Partition,
};

/// Shared evaluator options.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct BoundOptions {
    /// Multiplicative constant applied to the assembled bound.
    pub constant: f64,
    /// How expectations over conditioning outcomes are evaluated.
    pub mode: EvaluationMode,
    pub method: NormMethod,
    pub norm_config: NormConfig,
    /// State budget for exact enumerations.
    pub budget: u64,
    /// Skips the canonicality gate.
    pub allow_noncanonical: bool,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            constant: 1.0,
            mode: EvaluationMode::Exact,
            method: NormMethod::Auto,
            norm_config: NormConfig::default(),
            budget: 10_000_000,
            allow_noncanonical: false,
        }
    }
}

/// One (I, J) contribution. For moment reports `term_value` is the summand
/// p^(p * pExponent) * E max ||.||^p and `norm_value` its p-th root; for
/// tail reports `norm_value` is the sup norm and `term_value` the candidate
/// exponent (t / norm)^(1 / pExponent), absent when the norm vanishes and
/// the term is excluded from the min.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundTerm {
    pub i_set: Vec<usize>,
    pub partition: Partition,
    pub p_exponent: f64,
    pub norm_value: f64,
    pub term_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundReport {
    /// Which bound produced this report: "6" (moment), "7" (tail),
    /// "cor3" (i.i.d. tail), "8" (Poisson threshold).
    pub theorem: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub constant: f64,
    pub terms: Vec<BoundTerm>,
    /// Moment bound value, or the clamped tail probability.
    pub total: f64,
    /// Index into `terms` of the dominant contribution (largest summand for
    /// moments, smallest exponent for tails); ties resolve to the smallest
    /// (|I|, encoded J). Absent when every term is excluded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominant: Option<usize>,
    /// Tail reports: the achieved exponent min.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
}

/// Subsets of {1..d}, largest first, lexicographic within a size. This is
/// the term order of every report.
pub(crate) fn subsets_descending(d: usize) -> Vec<Vec<usize>> {
    let mut subs: Vec<Vec<usize>> = (0..(1u32 << d))
        .map(|mask| {
            (1..=d).filter(|&ax| (mask >> (ax - 1)) & 1 == 1).collect()
        })
        .collect();
    subs.sort_by(|a: &Vec<usize>, b| {
        b.len().cmp(&a.len()).then_with(|| a.cmp(b))
    });
    subs
}

fn tie_key(term: &BoundTerm) -> (usize, String) {
    (term.i_set.len(), term.partition.encode())
}

fn p_exponent(d: usize, i_set: &[usize], j: &Partition) -> f64 {
    (d - i_set.len()) as f64 + j.degree() as f64 / 2.0
}

fn gate_canonical(k: &KernelEnsemble, opts: &BoundOptions) -> Result<()> {
    if opts.allow_noncanonical {
        return Ok(());
    }
    k.require_canonical(CANONICAL_TOL)
}

pub(crate) fn check_constant(constant: f64) -> Result<()> {
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bound constant must be positive and finite, got {constant}"
        )));
    }
    Ok(())
}

/// Moment bound: constant * sum over (I, J) of
/// p^(p * (#I^c + deg(J)/2)) * E max_{i_{I^c}} ||(h_i)||_J^p.
/// Homogeneous of order p in the kernel. Requires p >= 2.
pub fn moment_bound(
    k: &KernelEnsemble,
    p: f64,
    opts: &BoundOptions,
) -> Result<BoundReport> {
    if !(p >= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "moment order p = {p} must be at least 2"
        )));
    }
    check_constant(opts.constant)?;
    gate_canonical(k, opts)?;

    let mut terms = Vec::new();
    let mut total = CompensatedSum::new();
    for i_set in subsets_descending(k.d()) {
        for j in enumerate_partitions(&i_set)? {
            let e = p_exponent(k.d(), &i_set, &j);
            let (emax, _se) = expected_max_conditional_norm(
                k,
                &j,
                p,
                opts.mode,
                opts.method,
                &opts.norm_config,
                opts.budget,
            )?;
            let term_value = (p.powf(e)).powf(p) * emax;
            total.add(term_value);
            terms.push(BoundTerm {
                i_set: i_set.clone(),
                partition: j,
                p_exponent: e,
                norm_value: emax.powf(1.0 / p),
                term_value: Some(term_value),
            });
        }
    }
    let dominant = pick_dominant(&terms, |v, best| v > best);
    Ok(BoundReport {
        theorem: "6".into(),
        p: Some(p),
        t: None,
        n: None,
        constant: opts.constant,
        total: opts.constant * total.value(),
        terms,
        dominant,
        exponent: None,
    })
}

/// Index of the best term under `prefer` (strict), with ties resolved to
/// the smallest (|I|, encoded J).
pub(crate) fn pick_dominant(
    terms: &[BoundTerm],
    prefer: impl Fn(f64, f64) -> bool,
) -> Option<usize> {
    let mut best: Option<(usize, f64, (usize, String))> = None;
    for (idx, term) in terms.iter().enumerate() {
        let Some(value) = term.term_value else {
            continue;
        };
        let key = tie_key(term);
        best = Some(match best {
            None => (idx, value, key),
            Some(cur) => {
                if prefer(value, cur.1) || (value == cur.1 && key < cur.2) {
                    (idx, value, key)
                } else {
                    cur
                }
            }
        });
    }
    best.map(|(idx, _, _)| idx)
}

fn tail_terms(
    k: &KernelEnsemble,
    t: f64,
    opts: &BoundOptions,
) -> Result<Vec<BoundTerm>> {
    let mut terms = Vec::new();
    for i_set in subsets_descending(k.d()) {
        for j in enumerate_partitions(&i_set)? {
            let e = p_exponent(k.d(), &i_set, &j);
            let sup = sup_conditional_norm(
                k,
                &j,
                opts.method,
                &opts.norm_config,
                opts.budget,
            )?;
            let term_value =
                if sup > 0.0 { Some((t / sup).powf(1.0 / e)) } else { None };
            terms.push(BoundTerm {
                i_set: i_set.clone(),
                partition: j,
                p_exponent: e,
                norm_value: sup,
                term_value,
            });
        }
    }
    Ok(terms)
}

fn assemble_tail(
    theorem: &str,
    t: f64,
    n: Option<usize>,
    terms: Vec<BoundTerm>,
    constant: f64,
) -> BoundReport {
    let dominant = pick_dominant(&terms, |v, best| v < best);
    let exponent = dominant.and_then(|idx| terms[idx].term_value);
    let total = match exponent {
        // Every norm vanished: the statistic is 0 almost surely.
        None => {
            if t > 0.0 {
                0.0
            } else {
                constant.min(1.0)
            }
        }
        Some(e) => (constant * (-e / constant).exp()).min(1.0),
    };
    BoundReport {
        theorem: theorem.into(),
        p: None,
        t: Some(t),
        n,
        constant,
        terms,
        total,
        dominant,
        exponent,
    }
}

/// Tail bound P(|Z| >= t) <= min(1, K exp(-min_(I,J) (t / sup ||.||)^(1/e) / K))
/// with e = #I^c + deg(J)/2. Zero-norm terms are excluded from the min and
/// reported with a null candidate.
pub fn tail_bound(
    k: &KernelEnsemble,
    t: f64,
    opts: &BoundOptions,
) -> Result<BoundReport> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tail level t = {t} must be nonnegative"
        )));
    }
    check_constant(opts.constant)?;
    gate_canonical(k, opts)?;
    let terms = tail_terms(k, t, opts)?;
    Ok(assemble_tail("7", t, None, terms, opts.constant))
}

/// Tail bound for n i.i.d. index copies of one shared kernel: the sup norms
/// of the expanded ensemble factor exactly as n^(#I/2) times the
/// single-kernel norm, so only the unit ensemble is ever evaluated.
pub fn iid_tail_bound(
    shared: &SharedKernel,
    n: usize,
    t: f64,
    opts: &BoundOptions,
) -> Result<BoundReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tail level t = {t} must be nonnegative"
        )));
    }
    check_constant(opts.constant)?;
    let unit = shared.unit_ensemble()?;
    gate_canonical(&unit, opts)?;
    let mut terms = tail_terms(&unit, t, opts)?;
    for term in &mut terms {
        let scale = (n as f64).powf(term.i_set.len() as f64 / 2.0);
        term.norm_value *= scale;
        term.term_value = if term.norm_value > 0.0 {
            Some((t / term.norm_value).powf(1.0 / term.p_exponent))
        } else {
            None
        };
    }
    Ok(assemble_tail("cor3", t, Some(n), terms, opts.constant))
}

/// Dominant regime along a t-grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegimePoint {
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_set: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
    pub bound: f64,
}

/// Tail bound swept over a grid, reporting which (I, J) attains the min at
/// each level. As t grows the winner drifts toward the largest pExponent
/// with a nonzero norm.
pub fn dominant_regime(
    k: &KernelEnsemble,
    t_grid: &[f64],
    opts: &BoundOptions,
) -> Result<Vec<RegimePoint>> {
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let report = tail_bound(k, t, opts)?;
        let dom = report.dominant.map(|idx| &report.terms[idx]);
        out.push(RegimePoint {
            t,
            exponent: report.exponent,
            i_set: dom.map(|term| term.i_set.clone()),
            partition: dom.map(|term| term.partition.clone()),
            bound: report.total,
        });
    }
    Ok(out)
}

/// One partition's contribution to a Gaussian chaos estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChaosTerm {
    pub partition: Partition,
    pub weight: f64,
    pub norm_value: f64,
    pub term_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChaosEstimate {
    pub p: f64,
    pub terms: Vec<ChaosTerm>,
    /// The two-sided estimate: (E|Z|^p)^(1/p) is within universal constant
    /// factors of this value, so lower and upper agree and differ only by
    /// the constants they are read with.
    pub lower: f64,
    pub upper: f64,
}

fn partition_sweep(
    a: &MultiIndexArray,
    weight: impl Fn(&Partition) -> f64,
    method: NormMethod,
    config: &NormConfig,
) -> Result<(Vec<ChaosTerm>, f64)> {
    let ground: Vec<usize> = (1..=a.order()).collect();
    let mut terms = Vec::new();
    let mut total = CompensatedSum::new();
    for j in enumerate_partitions(&ground)? {
        let w = weight(&j);
        let cert = partition_norm(a, &j, method, config)?;
        let term_value = w * cert.value;
        total.add(term_value);
        terms.push(ChaosTerm {
            partition: j,
            weight: w,
            norm_value: cert.value,
            term_value,
        });
    }
    Ok((terms, total.value()))
}

/// Two-sided moment estimate for a homogeneous Gaussian chaos with
/// coefficient array `a`: E(p) = sum over partitions J of p^(deg(J)/2) ||a||_J.
pub fn gaussian_chaos_estimate(
    a: &MultiIndexArray,
    p: f64,
    method: NormMethod,
    config: &NormConfig,
) -> Result<ChaosEstimate> {
    if !(p >= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "chaos estimate needs p >= 2, got {p}"
        )));
    }
    let (terms, total) = partition_sweep(
        a,
        |j| p.powf(j.degree() as f64 / 2.0),
        method,
        config,
    )?;
    Ok(ChaosEstimate {
        p,
        terms,
        lower: total,
        upper: total,
    })
}

/// Right-hand side of the Gaussian matrix-norm bound for an order-d array
/// whose last axis carries the Gaussian coefficients:
/// sum over partitions J of p^((1 + deg(J) - d)/2) ||a||_J.
pub fn gaussian_matrix_rhs(
    a: &MultiIndexArray,
    p: f64,
    method: NormMethod,
    config: &NormConfig,
) -> Result<(Vec<ChaosTerm>, f64)> {
    if a.order() < 2 {
        return Err(Error::InvalidArgument(
            "matrix-norm bound needs order >= 2".into(),
        ));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "matrix-norm bound needs p >= 1, got {p}"
        )));
    }
    let d = a.order() as f64;
    partition_sweep(
        a,
        |j| p.powf((1.0 + j.degree() as f64 - d) / 2.0),
        method,
        config,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{random_canonical_ensemble, DiscreteSpace};
    use crate::numeric::rel_diff;

    fn rademacher_sum() -> KernelEnsemble {
        // d = 1, n = 2, h_i(x) = x on {-1, +1}.
        KernelEnsemble::iid(1, 2, DiscreteSpace::rademacher(), vec![-1.0, 1.0])
            .unwrap()
    }

    fn xy() -> KernelEnsemble {
        SharedKernel::rademacher_product(2, 1).expand().unwrap()
    }

    #[test]
    fn moment_bound_worked_example() {
        // p = 4: 16 * 4 from (I = {1}, J = {{1}}) plus 256 * 1 from I = ∅.
        let report =
            moment_bound(&rademacher_sum(), 4.0, &BoundOptions::default())
                .unwrap();
        assert_eq!(report.terms.len(), 2);
        assert!(rel_diff(report.terms[0].term_value.unwrap(), 64.0) < 1e-12);
        assert!(rel_diff(report.terms[1].term_value.unwrap(), 256.0) < 1e-12);
        assert!(rel_diff(report.total, 320.0) < 1e-12);
        assert_eq!(report.dominant, Some(1));
    }

    #[test]
    fn moment_bound_is_p_homogeneous() {
        let k = random_canonical_ensemble(2, 2, &[2, 2], 9, true).unwrap();
        let scaled = k.scaled(-3.0).unwrap();
        for p in [2.0, 4.0] {
            let base = moment_bound(&k, p, &BoundOptions::default()).unwrap();
            let big =
                moment_bound(&scaled, p, &BoundOptions::default()).unwrap();
            assert!(
                rel_diff(big.total, 3f64.powf(p) * base.total) < 1e-9,
                "p = {p}"
            );
        }
    }

    #[test]
    fn tail_bound_candidate_exponents() {
        // Sup norms are all 1, so candidates are t^2, t, t^(2/3), t^(1/2).
        let k = xy();
        let report = tail_bound(&k, 4.0, &BoundOptions::default()).unwrap();
        assert_eq!(report.terms.len(), 5);
        let exps: Vec<f64> =
            report.terms.iter().map(|t| t.term_value.unwrap()).collect();
        assert!(rel_diff(exps[0], 16.0) < 1e-12); // {1,2}: t^2
        assert!(rel_diff(exps[1], 4.0) < 1e-12); // {1}|{2}: t
        assert!(rel_diff(exps[2], 4f64.powf(2.0 / 3.0)) < 1e-12); // {1}
        assert!(rel_diff(exps[3], 4f64.powf(2.0 / 3.0)) < 1e-12); // {2}
        assert!(rel_diff(exps[4], 2.0) < 1e-12); // ∅: sqrt(t)
        assert!(rel_diff(report.exponent.unwrap(), 2.0) < 1e-12);
        let dom = &report.terms[report.dominant.unwrap()];
        assert!(dom.i_set.is_empty());
        assert!(rel_diff(report.total, (-2.0f64).exp()) < 1e-12);
    }

    #[test]
    fn tail_bound_small_t_regime_and_tie() {
        let k = xy();
        // Below 1 the full-set one-block term wins.
        let low = tail_bound(&k, 0.5, &BoundOptions::default()).unwrap();
        let dom = &low.terms[low.dominant.unwrap()];
        assert_eq!(dom.i_set, vec![1, 2]);
        assert_eq!(dom.partition.encode(), "{1,2}");
        // Above 1 the scalar term takes over.
        let high = tail_bound(&k, 1.2, &BoundOptions::default()).unwrap();
        let dom = &high.terms[high.dominant.unwrap()];
        assert!(dom.i_set.is_empty());
        // t = 0 clamps to min(1, constant).
        let zero = tail_bound(&k, 0.0, &BoundOptions::default()).unwrap();
        assert_eq!(zero.total, 1.0);
        let small_constant = BoundOptions {
            constant: 0.05,
            ..BoundOptions::default()
        };
        let clamped = tail_bound(&k, 0.0, &small_constant).unwrap();
        assert_eq!(clamped.total, 0.05);
    }

    #[test]
    fn dominant_tie_breaks_on_set_size_then_partition() {
        let term = |i_set: Vec<usize>, j: &str, v: f64| BoundTerm {
            i_set,
            partition: Partition::parse(j).unwrap(),
            p_exponent: 1.0,
            norm_value: 1.0,
            term_value: Some(v),
        };
        let terms = vec![
            term(vec![1, 2], "{1}|{2}", 2.0),
            term(vec![2], "{2}", 2.0),
            term(vec![1], "{1}", 2.0),
            term(vec![1], "{1}", 1.0),
        ];
        // Max: three-way tie at 2.0; |I| = 1 beats |I| = 2, then "{1}" < "{2}".
        assert_eq!(pick_dominant(&terms, |v, best| v > best), Some(2));
        // Min: unique smallest.
        assert_eq!(pick_dominant(&terms, |v, best| v < best), Some(3));
        // Excluded terms never win.
        let excluded = vec![BoundTerm {
            i_set: vec![1],
            partition: Partition::parse("{1}").unwrap(),
            p_exponent: 1.0,
            norm_value: 0.0,
            term_value: None,
        }];
        assert_eq!(pick_dominant(&excluded, |v, best| v < best), None);
    }

    #[test]
    fn zero_kernel_tail_is_zero() {
        let k = KernelEnsemble::iid(
            1,
            2,
            DiscreteSpace::rademacher(),
            vec![0.0, 0.0],
        )
        .unwrap();
        let report = tail_bound(&k, 0.5, &BoundOptions::default()).unwrap();
        assert_eq!(report.total, 0.0);
        assert!(report.dominant.is_none());
        assert!(report.terms.iter().all(|t| t.term_value.is_none()));
    }

    #[test]
    fn noncanonical_input_is_rejected() {
        let k = KernelEnsemble::iid(
            1,
            1,
            DiscreteSpace::rademacher(),
            vec![1.0, 0.0],
        )
        .unwrap();
        let err = moment_bound(&k, 2.0, &BoundOptions::default());
        assert!(matches!(err, Err(Error::NotCanonical { .. })));
        let opts = BoundOptions {
            allow_noncanonical: true,
            ..BoundOptions::default()
        };
        assert!(moment_bound(&k, 2.0, &opts).is_ok());
    }

    #[test]
    fn iid_bound_matches_expanded_at_n1() {
        let shared = SharedKernel::rademacher_product(2, 1);
        let opts = BoundOptions::default();
        for t in [0.25, 1.0, 3.0] {
            let a = iid_tail_bound(&shared, 1, t, &opts).unwrap();
            let b = tail_bound(&shared.expand().unwrap(), t, &opts).unwrap();
            assert!(rel_diff(a.total, b.total) < 1e-12);
            assert_eq!(
                a.exponent.unwrap().to_bits(),
                b.exponent.unwrap().to_bits()
            );
        }
    }

    #[test]
    fn chaos_estimate_identity_terms() {
        for n in [4usize, 16] {
            let a = MultiIndexArray::from_fn(vec![n, n], |ix| {
                if ix[0] == ix[1] {
                    1.0
                } else {
                    0.0
                }
            })
            .unwrap();
            let est = gaussian_chaos_estimate(
                &a,
                2.0,
                NormMethod::Auto,
                &NormConfig::default(),
            )
            .unwrap();
            let expected = 2f64.sqrt() * (n as f64).sqrt() + 2.0;
            assert!(rel_diff(est.lower, expected) < 1e-12);
            assert_eq!(est.lower, est.upper);
        }
    }

    #[test]
    fn regime_sweep_moves_to_small_sets() {
        let k = xy();
        let points = dominant_regime(
            &k,
            &[0.25, 0.5, 2.0, 8.0],
            &BoundOptions::default(),
        )
        .unwrap();
        assert_eq!(points[0].i_set.as_deref(), Some(&[1, 2][..]));
        assert_eq!(points[3].i_set.as_deref(), Some(&[][..]));
        // Bounds are probabilities.
        assert!(points.iter().all(|pt| (0.0..=1.0).contains(&pt.bound)));
    }
}
