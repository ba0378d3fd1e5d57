//! Shared helpers for the integration suites.
#![allow(dead_code)]

/// Pearson chi-square statistic over matched observed/expected counts.
/// Expected counts must be positive.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            assert!(e > 0.0, "expected count must be positive");
            let diff = o as f64 - e;
            diff * diff / e
        })
        .sum()
}

/// Upper critical values of the chi-square distribution at significance
/// 0.001 for the degrees of freedom used by the sampler tests. A statistic
/// above the critical value rejects the hypothesized distribution with
/// false-positive probability 0.1%.
pub fn chi_square_critical_001(df: usize) -> f64 {
    match df {
        1 => 10.828,
        2 => 13.816,
        3 => 16.266,
        _ => panic!("no critical value tabulated for df={df}"),
    }
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}
