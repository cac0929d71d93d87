//! Shared statistical utilities: summary statistics, effective sample size,
//! goodness-of-fit tests, total variation distance and stable log-space sums.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

/// Sample mean. Empty input yields NaN.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance. Fewer than two points yields 0.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn stderr_of_mean(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Unbiased sample covariance of paired observations.
pub fn sample_covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = mean(xs);
    let my = mean(ys);
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() - 1) as f64
}

/// Effective sample size of a stationary scalar series.
///
/// Uses the autocorrelation-sum estimator truncated at the first lag pair
/// with a non-positive sum (Geyer's initial positive sequence). A series
/// with zero variance is reported as fully effective.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(xs);
    let c0 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let acov = |lag: usize| -> f64 {
        xs[..n - lag]
            .iter()
            .zip(&xs[lag..])
            .map(|(x, y)| (x - m) * (y - m))
            .sum::<f64>()
            / n as f64
    };
    let mut tau = 1.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = (acov(lag) + acov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau).min(n as f64)
}

/// Two-sided delta-method standard error of the ratio `mean(xs)/mean(ys)`
/// for paired samples (common random numbers).
pub fn ratio_stderr(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    if my == 0.0 {
        return f64::NAN;
    }
    let r = mx / my;
    let vx = sample_variance(xs);
    let vy = sample_variance(ys);
    let cxy = sample_covariance(xs, ys);
    let var = (vx - 2.0 * r * cxy + r * r * vy) / (my * my) / n;
    var.max(0.0).sqrt()
}

/// CDF of the standard normal distribution.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max((f - (i + 1) as f64 / n).abs());
    }
    d
}

/// Asymptotic p-value of the one-sample KS statistic `d` at effective sample
/// size `n_eff`, with the Stephens small-sample correction.
pub fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    if n_eff <= 0.0 || !d.is_finite() {
        return f64::NAN;
    }
    let sqrt_n = n_eff.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100u32 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Chi-square goodness-of-fit test.
///
/// `observed` are bin counts and `expected` the matching expected counts.
/// Bins with expected count below `min_expected` are pooled into their
/// neighbour. Returns `(statistic, dof, p_value)`.
pub fn chi_square_gof(observed: &[f64], expected: &[f64], min_expected: f64) -> (f64, usize, f64) {
    assert_eq!(observed.len(), expected.len());
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        acc.0 += o;
        acc.1 += e;
        if acc.1 >= min_expected {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 {
        if let Some(last) = pooled.last_mut() {
            last.0 += acc.0;
            last.1 += acc.1;
        } else {
            pooled.push(acc);
        }
    }
    if pooled.len() < 2 {
        return (0.0, 0, 1.0);
    }
    let stat: f64 = pooled
        .iter()
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = pooled.len() - 1;
    let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    (stat, dof, p)
}

/// Total variation distance between two probability vectors over the same
/// support (any residual mass off the common support should be appended by
/// the caller as extra entries).
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Streaming log-sum-exp accumulator for sums of positive terms given in
/// log space.
#[derive(Debug, Clone)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn push(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.sum += (log_term - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        }
    }

    /// Natural log of the accumulated sum.
    pub fn log_sum(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

/// ln(n!).
pub fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Binomial coefficient as f64, with the convention C(n,k) = 0 for k > n.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_and_variance() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(mean(&xs), 2.5);
        assert_abs_diff_eq!(sample_variance(&xs), 5.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ess_iid_is_near_n() {
        // White noise from a fixed linear congruential stream.
        let mut x = 1u64;
        let xs: Vec<f64> = (0..4000)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        let ess = effective_sample_size(&xs);
        assert!(ess > 2000.0, "ess = {ess}");
    }

    #[test]
    fn ess_correlated_is_small() {
        // AR(1) with strong positive correlation.
        let mut x = 1u64;
        let mut prev = 0.0;
        let xs: Vec<f64> = (0..4000)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u = (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                prev = 0.95 * prev + u;
                prev
            })
            .collect();
        let ess = effective_sample_size(&xs);
        assert!(ess < 400.0, "ess = {ess}");
    }

    #[test]
    fn ess_constant_series() {
        let xs = vec![2.0; 100];
        assert_abs_diff_eq!(effective_sample_size(&xs), 100.0);
    }

    #[test]
    fn ks_uniform_sample_accepts() {
        let mut x = 7u64;
        let xs: Vec<f64> = (0..2000)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        let d = ks_statistic(&xs, |t| t.clamp(0.0, 1.0));
        let p = ks_pvalue(d, xs.len() as f64);
        assert!(p > 0.01, "d = {d}, p = {p}");
    }

    #[test]
    fn ks_shifted_sample_rejects() {
        let xs: Vec<f64> = (0..1000).map(|i| 0.5 + 0.5 * (i as f64 / 1000.0)).collect();
        let d = ks_statistic(&xs, |t| t.clamp(0.0, 1.0));
        let p = ks_pvalue(d, xs.len() as f64);
        assert!(p < 1e-6);
    }

    #[test]
    fn chi_square_exact_fit() {
        let exp = [25.0, 25.0, 25.0, 25.0];
        let (stat, dof, p) = chi_square_gof(&exp, &exp, 5.0);
        assert_abs_diff_eq!(stat, 0.0);
        assert_eq!(dof, 3);
        assert_abs_diff_eq!(p, 1.0);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let terms = [0.5f64, 1.5, 2.5, 0.25];
        let mut lse = LogSumExp::new();
        for t in terms {
            lse.push(t.ln());
        }
        assert_abs_diff_eq!(lse.log_sum().exp(), terms.iter().sum::<f64>(), epsilon = 1e-12);
    }

    #[test]
    fn log_sum_exp_extreme_scales() {
        let mut lse = LogSumExp::new();
        lse.push(800.0);
        lse.push(800.0 + (2.0f64).ln());
        assert_abs_diff_eq!(lse.log_sum(), 800.0 + (3.0f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(3, 5), 0.0);
        assert_eq!(binomial(10, 0), 1.0);
    }

    #[test]
    fn ln_factorial_small() {
        assert_abs_diff_eq!(ln_factorial(5), 120.0f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(ln_factorial(0), 0.0, epsilon = 1e-14);
    }
}
