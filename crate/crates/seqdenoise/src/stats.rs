//! Small statistics helpers shared by tests and the stats subcommand.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Kolmogorov-Smirnov statistic of a sample against U(0, 1):
/// sup_x |F_n(x) - x|. Sorts a copy of the input.
pub fn ks_statistic_uniform(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let lo = (x - i as f64 / n).abs();
        let hi = ((i + 1) as f64 / n - x).abs();
        d = d.max(lo).max(hi);
    }
    d
}
