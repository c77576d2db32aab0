//! Small numeric helpers shared across modules.

pub(crate) const LN_2PI: f64 = 1.8378770664093453;

/// log(sum(exp(x))) with max subtraction.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// ln(n!) by direct summation; exact enough for the count magnitudes seen
/// in Poisson data at desk scale.
pub(crate) fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Euclidean distance between two flattened points.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean norm of a flattened point.
pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// exp(a) - exp(b) evaluated against the common scale max(a, b); avoids the
/// total cancellation of naive exponentiation when both logs are far below 0.
pub(crate) fn exp_diff(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return 0.0;
    }
    if a >= b {
        -m.exp() * (b - m).exp_m1()
    } else {
        m.exp() * (a - m).exp_m1()
    }
}
