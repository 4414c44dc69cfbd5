/// Pairwise (cascade) summation. The result depends only on the order of
/// `xs`, not on how work is split, and has O(log n) error growth.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and standard error of the mean (`s / sqrt(n)` with the
/// unbiased sample deviation). A single sample has zero standard error.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let squares: alloc::vec::Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&squares) / (n - 1) as f64;
    (mean, libm::sqrt(var / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples() {
        assert_eq!(mean_and_stderr(&[0.0; 100]), (0.0, 0.0));
        assert_eq!(mean_and_stderr(&[2.5]), (2.5, 0.0));
        assert_eq!(mean_and_stderr(&[]), (0.0, 0.0));
    }

    #[test]
    fn known_values() {
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        // sample variance 5/3, se = sqrt(5/12)
        assert!((se - libm::sqrt(5.0 / 12.0)).abs() < 1e-15);
        let xs: alloc::vec::Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }
}
