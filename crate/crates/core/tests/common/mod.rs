#![allow(dead_code)]

/// Upper 0.001 quantiles of the chi-square distribution, indexed by degrees
/// of freedom.
pub fn chi2_critical_001(dof: usize) -> f64 {
    match dof {
        1 => 10.828,
        2 => 13.816,
        3 => 16.266,
        4 => 18.467,
        5 => 20.515,
        6 => 22.458,
        7 => 24.322,
        8 => 26.124,
        15 => 37.697,
        other => panic!("no table entry for {other} degrees of freedom"),
    }
}

/// Pearson statistic of observed counts against expected probabilities.
pub fn chi2_gof(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
