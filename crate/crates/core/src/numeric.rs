//! Compensated summation and small numeric helpers shared across modules.

/// Neumaier-compensated accumulator. Addition order still matters for the
/// final bits, so deterministic pipelines must feed values in a fixed order;
/// the compensation keeps cancellation error near one ulp of the true sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Merges another accumulator; equivalent to adding its compensated value.
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator.
pub fn sum_compensated(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Euclidean norm with compensated accumulation of squares.
pub fn l2_norm(values: &[f64]) -> f64 {
    sum_compensated(values.iter().map(|v| v * v)).sqrt()
}

/// Relative gap |a - b| / max(|a|, |b|), zero when both vanish.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Checked product of dimensions, guarding against overflow in table sizes.
pub fn checked_product(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Largest x in [lo, hi] with f(x) <= target, for nondecreasing f.
/// Bisection stops once the bracketed f-gap is within `tol` (relative to
/// max(1, |target|)); the lower end is returned so f(x) <= target holds.
/// None when even f(lo) exceeds the target.
pub fn invert_nondecreasing(
    lo: f64,
    hi: f64,
    target: f64,
    tol: f64,
    f: impl Fn(f64) -> f64,
) -> Option<f64> {
    debug_assert!(lo <= hi && tol > 0.0);
    let scale = target.abs().max(1.0);
    let f_lo = f(lo);
    if f_lo > target {
        return None;
    }
    if f(hi) <= target {
        return Some(hi);
    }
    let (mut lo, mut hi) = (lo, hi);
    let mut f_lo = f_lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid <= target {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if target - f_lo <= tol * scale {
            break;
        }
    }
    Some(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensation_recovers_cancelled_terms() {
        let mut acc = CompensatedSum::new();
        acc.add(1e16);
        acc.add(1.0);
        acc.add(-1e16);
        assert_eq!(acc.value(), 1.0);
    }

    #[test]
    fn merge_matches_sequential() {
        let mut a = CompensatedSum::new();
        let mut b = CompensatedSum::new();
        for i in 0..100 {
            a.add(0.1 * i as f64);
            b.add(-0.05 * i as f64);
        }
        let mut merged = a;
        merged.merge(&b);
        let mut seq = CompensatedSum::new();
        for i in 0..100 {
            seq.add(0.1 * i as f64);
        }
        for i in 0..100 {
            seq.add(-0.05 * i as f64);
        }
        assert!((merged.value() - seq.value()).abs() < 1e-12);
    }

    #[test]
    fn rel_diff_handles_zero() {
        assert_eq!(rel_diff(0.0, 0.0), 0.0);
        assert!((rel_diff(1.0, 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inversion_finds_last_point_below_target() {
        let f = |x: f64| x * x + x.sqrt();
        // f(3) = 9 + sqrt(3); the inverse must land on 3 from below.
        let target = 9.0 + 3.0f64.sqrt();
        let x = invert_nondecreasing(2.0, 64.0, target, 1e-9, f).unwrap();
        assert!(x <= 3.0 && 3.0 - x < 1e-6);
        assert!(f(x) <= target);
        // Out-of-bracket cases.
        assert_eq!(invert_nondecreasing(2.0, 64.0, 1e9, 1e-9, f), Some(64.0));
        assert_eq!(invert_nondecreasing(2.0, 64.0, 1.0, 1e-9, f), None);
    }
}
