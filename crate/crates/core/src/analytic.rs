//! Exact and series evaluation of the model's closed forms: the
//! orientation-count law of the full-dimensional submodel, its interior mass
//! and product moment, intersection-count sums, the B-series bounding
//! correlation functions, correlation limits, Monte Carlo correlation
//! estimation, and asymptotic covariances of the standardized U-statistics.
//!
//! All infinite sums are truncated per coordinate at a cap `K` and carry a
//! certified bound on the neglected mass, using that the interaction weight
//! `exp(ν·…)` never exceeds one for `ν ≤ 0`, so tails are dominated by
//! Poisson tails. Sums accumulate in log space; at the intensities where
//! the series matter, linear-space products of weights underflow.

use rand::Rng;
use serde::Serialize;

use crate::geometry::Facet;
use crate::model::{sample_poisson, BaseMeasure, ModelConfig};
use crate::stats::{self, LogSumExp};
use crate::ustats::{delta_g, g_single, reduced_kernel_g1};
use crate::{Error, Result};

/// Per-coordinate cap for truncated multi-series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationSpec {
    pub k_cap: usize,
}

impl TruncationSpec {
    /// Default cap for a Poisson-type rate: `ceil(rate + 10·sqrt(rate) + 20)`.
    pub fn for_rate(rate: f64) -> Self {
        TruncationSpec {
            k_cap: (rate + 10.0 * rate.sqrt() + 20.0).ceil() as usize,
        }
    }

    pub fn with_cap(k_cap: usize) -> Self {
        TruncationSpec { k_cap }
    }
}

/// Upper Poisson tail `P(Poisson(rate) > cap)`, summed directly in log
/// space until the terms stop contributing.
fn poisson_upper_tail_log(rate: f64, cap: usize) -> f64 {
    let ln_rate = rate.ln();
    let mut lse = LogSumExp::new();
    let mut best = f64::NEG_INFINITY;
    for k in cap + 1..cap + 2000 {
        let log_term = k as f64 * ln_rate - stats::ln_factorial(k) - rate;
        lse.push(log_term);
        best = best.max(log_term);
        if log_term < best - 80.0 {
            break;
        }
    }
    lse.log_sum()
}

/// Upper tail of the size-biased sum `Σ_{k>cap} k·pmf(k)/rate`.
fn poisson_sizebiased_tail_log(rate: f64, cap: usize) -> f64 {
    let ln_rate = rate.ln();
    let mut lse = LogSumExp::new();
    let mut best = f64::NEG_INFINITY;
    for k in cap + 1..cap + 2000 {
        let log_term =
            (k as f64).ln() + k as f64 * ln_rate - stats::ln_factorial(k) - rate - ln_rate;
        lse.push(log_term);
        best = best.max(log_term);
        if log_term < best - 80.0 {
            break;
        }
    }
    lse.log_sum()
}

/// Iterate over all multi-indices in `[0..=cap]^dims`.
fn for_each_multi_index(dims: usize, cap: usize, mut f: impl FnMut(&[usize])) {
    let mut index = vec![0usize; dims];
    loop {
        f(&index);
        let mut pos = 0;
        loop {
            if pos == dims {
                return;
            }
            if index[pos] < cap {
                index[pos] += 1;
                break;
            }
            index[pos] = 0;
            pos += 1;
        }
    }
}

/// The exact law `π` of the orientation counts under the full-dimensional
/// submodel, normalized over the truncated box `[0..K]^d`:
/// `π(k) ∝ A^{Σk}/(∏ k_i!) · exp(ν_d ∏ k_i)`.
#[derive(Debug, Clone)]
pub struct ExactPi {
    pub d: usize,
    /// Per-orientation rate `A = a·T/d`.
    pub rate: f64,
    pub nu_d: f64,
    pub k_cap: usize,
    log_norm: f64,
    /// Certified relative normalization error from the neglected tail.
    pub tail_bound: f64,
}

impl ExactPi {
    pub fn new(d: usize, rate: f64, nu_d: f64, trunc: TruncationSpec) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument("pi needs dimension >= 2".into()));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidArgument("pi rate must be positive".into()));
        }
        if nu_d > 0.0 {
            return Err(Error::InvalidArgument(
                "nu_d must be <= 0 (the law is not normalizable otherwise)".into(),
            ));
        }
        let k_cap = trunc.k_cap;
        if (k_cap + 1).pow(d as u32) > 200_000_000 {
            return Err(Error::EnumerationGuard(format!(
                "pi box (K+1)^d = {}^{d} too large",
                k_cap + 1
            )));
        }
        let ln_fact: Vec<f64> = (0..=k_cap).map(stats::ln_factorial).collect();
        let ln_rate = rate.ln();
        let mut lse = LogSumExp::new();
        for_each_multi_index(d, k_cap, |k| {
            let sum: usize = k.iter().sum();
            let mut log_w = sum as f64 * ln_rate;
            let mut product = 1.0f64;
            for &ki in k {
                log_w -= ln_fact[ki];
                product *= ki as f64;
            }
            log_w += nu_d * product;
            lse.push(log_w);
        });
        let log_norm = lse.log_sum();
        // Unnormalized tail: exp(nu·…) <= 1 bounds it by d times the
        // one-dimensional Poisson tail, scaled to the unnormalized weights.
        let log_q = poisson_upper_tail_log(rate, k_cap);
        let log_tail = d as f64 * rate + (d as f64).ln() + log_q;
        let tail_bound = (log_tail - log_norm).exp();
        Ok(ExactPi {
            d,
            rate,
            nu_d,
            k_cap,
            log_norm,
            tail_bound,
        })
    }

    fn log_weight(&self, counts: &[usize]) -> f64 {
        let ln_rate = self.rate.ln();
        let mut log_w = 0.0;
        let mut product = 1.0f64;
        for &ki in counts {
            log_w += ki as f64 * ln_rate - stats::ln_factorial(ki);
            product *= ki as f64;
        }
        log_w + self.nu_d * product
    }

    /// `π(k_1..k_d)`, normalized over the truncated box; the normalization
    /// error is at most [`ExactPi::tail_bound`] relatively.
    pub fn pmf(&self, counts: &[usize]) -> Result<f64> {
        if counts.len() != self.d {
            return Err(Error::InvalidArgument("counts length must equal d".into()));
        }
        if counts.iter().any(|&k| k > self.k_cap) {
            return Ok(0.0);
        }
        Ok((self.log_weight(counts) - self.log_norm).exp())
    }

    /// Mass of the interior `{k : k_i ≥ 1 for all i}` with a certified
    /// absolute error bound.
    pub fn interior_mass(&self) -> (f64, f64) {
        let mut lse = LogSumExp::new();
        // Interior box [1..=K]^d, iterated via an offset index.
        for_each_multi_index(self.d, self.k_cap - 1, |k0| {
            let k: Vec<usize> = k0.iter().map(|&v| v + 1).collect();
            lse.push(self.log_weight(&k));
        });
        let value = (lse.log_sum() - self.log_norm).exp();
        (value, self.tail_bound)
    }

    /// `E ∏ θ_i = Σ (∏ k_i) π(k)` with a certified absolute error bound.
    pub fn product_moment(&self) -> (f64, f64) {
        let mut lse = LogSumExp::new();
        for_each_multi_index(self.d, self.k_cap - 1, |k0| {
            let mut log_w = 0.0;
            let ln_rate = self.rate.ln();
            for &v in k0 {
                let ki = v + 1;
                log_w +=
                    (ki as f64).ln() + ki as f64 * ln_rate - stats::ln_factorial(ki);
            }
            let product: f64 = k0.iter().map(|&v| (v + 1) as f64).product();
            log_w += self.nu_d * product;
            lse.push(log_w);
        });
        let value = (lse.log_sum() - self.log_norm).exp();
        // Tail of the product-weighted sum, with exp(nu·…) <= 1:
        // d · (rate·e^rate)^d/…  times the size-biased one-dimensional tail.
        let log_qm = poisson_sizebiased_tail_log(self.rate, self.k_cap);
        let log_pm_tail = self.d as f64 * (self.rate.ln() + self.rate)
            + (self.d as f64).ln()
            + log_qm;
        let err = (log_pm_tail - self.log_norm).exp() + value * self.tail_bound;
        (value, err)
    }
}

/// Convenience wrapper: one probability `π(counts)` built from scratch.
pub fn pi_pmf(counts: &[usize], rate: f64, nu_d: f64, trunc: TruncationSpec) -> Result<f64> {
    ExactPi::new(counts.len(), rate, nu_d, trunc)?.pmf(counts)
}

/// `A(c,q,s,θ) = Σ_{F ⊆ [s], c−q ≤ |F| ≤ c, |F ∪ [q]| ≥ c} ∏_{j∈F} θ_j`.
///
/// The subset sum runs over orientation sets of the non-fixed facets; all
/// values are exact integers in f64.
pub fn a_count(c: usize, q: usize, s: usize, theta: &[usize]) -> Result<f64> {
    if c < 2 {
        return Err(Error::InvalidArgument("a_count needs c >= 2".into()));
    }
    if q > s || s > theta.len().max(s) || theta.len() < s {
        return Err(Error::InvalidArgument(format!(
            "a_count needs q <= s <= len(theta); got q={q}, s={s}, len={}",
            theta.len()
        )));
    }
    if s > 20 {
        return Err(Error::EnumerationGuard("a_count subset space too large".into()));
    }
    let lower = c.saturating_sub(q);
    let mut total = 0.0f64;
    for mask in 0u32..(1u32 << s) {
        let size = mask.count_ones() as usize;
        if size < lower || size > c {
            continue;
        }
        let outside_q = (mask >> q).count_ones() as usize;
        if q + outside_q < c {
            continue;
        }
        let mut product = 1.0f64;
        for j in 0..s {
            if mask & (1 << j) != 0 {
                product *= theta[j] as f64;
                if product == 0.0 {
                    break;
                }
            }
        }
        total += product;
    }
    Ok(total)
}

/// A truncated B-series value with its certified tail bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BSum {
    pub value: f64,
    pub tail_bound: f64,
    pub k_cap: usize,
}

/// `B(c,Q,rate,q,s) = Σ_{n ∈ N_0^d} rate^{Σn}/(∏ n_i!)
/// · exp(ν_c Q^{d−c} A(c,q,s,n) − rate(c−1))`.
///
/// `rate` is the already-substituted per-orientation intensity `a·T/d`.
/// Coordinates beyond `s` do not enter `A` and are summed in closed form;
/// the first `s` coordinates are truncated at the cap with a certified
/// tail bound.
pub fn b_sum(
    d: usize,
    c: usize,
    q_size: f64,
    rate: f64,
    q: usize,
    s: usize,
    nu_c: f64,
    trunc: TruncationSpec,
) -> Result<BSum> {
    if !(nu_c < 0.0) {
        return Err(Error::InvalidArgument("b_sum needs nu_c < 0".into()));
    }
    if c < 2 || q > c || c > s || s > d {
        return Err(Error::InvalidArgument(format!(
            "b_sum needs q <= c <= s <= d with c >= 2; got c={c}, q={q}, s={s}, d={d}"
        )));
    }
    if !(rate > 0.0) || !(q_size > 0.0) {
        return Err(Error::InvalidArgument("b_sum needs positive rate and Q".into()));
    }
    let k_cap = trunc.k_cap;
    if (k_cap + 1).pow(s as u32) > 200_000_000 {
        return Err(Error::EnumerationGuard(format!(
            "b_sum box (K+1)^s = {}^{s} too large",
            k_cap + 1
        )));
    }
    let interaction = nu_c * q_size.powi((d - c) as i32);
    let ln_rate = rate.ln();
    let ln_fact: Vec<f64> = (0..=k_cap).map(stats::ln_factorial).collect();
    let mut lse = LogSumExp::new();
    let mut err: Option<Error> = None;
    for_each_multi_index(s, k_cap, |n| {
        if err.is_some() {
            return;
        }
        match a_count(c, q, s, n) {
            Ok(count) => {
                let mut log_term = interaction * count;
                for &ni in n {
                    log_term += ni as f64 * ln_rate - ln_fact[ni];
                }
                lse.push(log_term);
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    // Free coordinates s+1..d contribute exp(rate) each, in closed form.
    let log_free = (d - s) as f64 * rate;
    let log_norm = -rate * (c as f64 - 1.0);
    let value = (lse.log_sum() + log_free + log_norm).exp();
    // Neglected terms have exp(ν·…) <= 1, so the truncated s coordinates
    // are bounded by s times the one-dimensional Poisson tail:
    // tail <= exp(rate(d−c+1)) · s · P(Poisson(rate) > K).
    let log_q_tail = poisson_upper_tail_log(rate, k_cap);
    let tail_bound =
        (rate * (d as f64 - c as f64 + 1.0) + (s as f64).ln() + log_q_tail).exp();
    Ok(BSum {
        value,
        tail_bound,
        k_cap,
    })
}

/// [`b_sum`] with the cap escalated until the certified tail is below
/// `rel_tol` relative to the value (or an absolute floor), capped at four
/// escalations.
pub fn b_sum_auto(
    d: usize,
    c: usize,
    q_size: f64,
    rate: f64,
    q: usize,
    s: usize,
    nu_c: f64,
    rel_tol: f64,
) -> Result<BSum> {
    let mut trunc = TruncationSpec::for_rate(rate);
    let mut result = b_sum(d, c, q_size, rate, q, s, nu_c, trunc)?;
    for _ in 0..4 {
        if result.tail_bound <= rel_tol * result.value.max(1e-300) {
            break;
        }
        trunc = TruncationSpec::with_cap(trunc.k_cap + 16);
        result = b_sum(d, c, q_size, rate, q, s, nu_c, trunc)?;
    }
    Ok(result)
}

/// Series bounds on the `p`-th correlation function of the order-`c`
/// submodel at per-orientation rate `rate = a·T/d`, for `p` facets with
/// distinct orientations:
/// `B(c,2b,rate,p,d)/B(c,b,rate,0,d) ≤ ρ_p ≤ B(c,b,rate,p,d)/B(c,2b,rate,0,d)`.
///
/// The returned interval is widened by the certified series tails.
pub fn rho_bounds(
    d: usize,
    c: usize,
    b: f64,
    rate: f64,
    p: usize,
    nu_c: f64,
    trunc: TruncationSpec,
) -> Result<(f64, f64)> {
    if p > d {
        return Err(Error::InvalidArgument("rho_bounds needs p <= d".into()));
    }
    let num_lower = b_sum(d, c, 2.0 * b, rate, p, d, nu_c, trunc)?;
    let den_lower = b_sum(d, c, b, rate, 0, d, nu_c, trunc)?;
    let num_upper = b_sum(d, c, b, rate, p, d, nu_c, trunc)?;
    let den_upper = b_sum(d, c, 2.0 * b, rate, 0, d, nu_c, trunc)?;
    let lower = ((num_lower.value - num_lower.tail_bound).max(0.0))
        / (den_lower.value + den_lower.tail_bound);
    let upper = (num_upper.value + num_upper.tail_bound)
        / (den_upper.value - den_upper.tail_bound).max(f64::MIN_POSITIVE);
    Ok((lower, upper))
}

/// Limit of the correlation functions as the intensity grows:
/// `C(d−k, d−c+1)/C(d, d−c+1)` for `k` distinct orientations among the
/// inserted facets.
pub fn rho_limit(d: usize, c: usize, k: usize) -> Result<f64> {
    if c < 2 || c > d {
        return Err(Error::InvalidArgument("rho_limit needs 2 <= c <= d".into()));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidArgument("rho_limit needs 1 <= k <= d".into()));
    }
    let choose = (d - c + 1) as u64;
    Ok(stats::binomial((d - k) as u64, choose) / stats::binomial(d as u64, choose))
}

/// Monte Carlo estimate of a correlation function.
#[derive(Debug, Clone, Serialize)]
pub struct RhoEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Relative standard error of the denominator `E exp(ν_c G_c(η_a))`.
    pub denominator_rel_stderr: f64,
    pub warnings: Vec<String>,
}

/// `ρ_p(x; μ_a^{(c)})` as the ratio of the exponential moments
/// `E exp(ν_c G_c(η_a ∪ x)) / E exp(ν_c G_c(η_a))`, both estimated over the
/// same Poisson replicates (common random numbers) with a delta-method
/// standard error.
pub fn rho_mc_estimate<R: Rng>(
    x: &[Facet],
    c: usize,
    config: &ModelConfig,
    reps: usize,
    rng: &mut R,
) -> Result<RhoEstimate> {
    if c < 2 || c > config.d {
        return Err(Error::InvalidArgument("rho_mc_estimate needs 2 <= c <= d".into()));
    }
    let nu_c = config.nu[c - 1];
    if !(nu_c < 0.0) {
        return Err(Error::InvalidArgument("rho_mc_estimate needs nu_c < 0".into()));
    }
    if reps < 2 {
        return Err(Error::InvalidArgument("rho_mc_estimate needs reps >= 2".into()));
    }
    let mut numer = Vec::with_capacity(reps);
    let mut denom = Vec::with_capacity(reps);
    let mut extended: Vec<Facet> = Vec::new();
    for _ in 0..reps {
        let eta = sample_poisson(rng, config)?;
        let g_c = g_single(&eta, c, config);
        let weight = (nu_c * g_c).exp();
        denom.push(weight);
        extended.clear();
        extended.extend_from_slice(eta.facets());
        let mut delta = 0.0;
        for f in x {
            delta += delta_g(&extended, f, c, config);
            extended.push(f.clone());
        }
        numer.push(weight * (nu_c * delta).exp());
    }
    let denom_mean = stats::mean(&denom);
    let denominator_rel_stderr = stats::stderr_of_mean(&denom) / denom_mean;
    let mut warnings = Vec::new();
    if denominator_rel_stderr > 0.10 {
        warnings.push(format!(
            "denominator relative stderr {denominator_rel_stderr:.3} exceeds 10%; use rho_bounds at this intensity"
        ));
    }
    Ok(RhoEstimate {
        estimate: stats::mean(&numer) / denom_mean,
        stderr: stats::ratio_stderr(&numer, &denom),
        denominator_rel_stderr,
        warnings,
    })
}

/// Monte Carlo sizes for the covariance quadrature.
#[derive(Debug, Clone, Copy)]
pub struct CovQuadSpec {
    /// Outer draws over the base measure.
    pub outer: usize,
    /// Inner draws per reduced-kernel evaluation.
    pub inner: usize,
}

impl Default for CovQuadSpec {
    fn default() -> Self {
        CovQuadSpec {
            outer: 4000,
            inner: 64,
        }
    }
}

/// Asymptotic covariance `C_ij = ⟨g_1^(i), g_1^(j)⟩` in `L²` of the base
/// measure, with standard error. Closed form for `i = j = 1`; otherwise the
/// two reduced kernels are estimated from independent inner draws so the
/// product stays unbiased.
pub fn asymptotic_covariance<R: Rng>(
    i: usize,
    j: usize,
    config: &ModelConfig,
    base: BaseMeasure,
    quad: CovQuadSpec,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if i == 0 || j == 0 || i > config.d || j > config.d {
        return Err(Error::InvalidArgument("covariance indices must lie in 1..=d".into()));
    }
    base.validate(config.d)?;
    let mass = base.total(config);
    if i == 1 && j == 1 {
        let g = (2.0 * config.b).powi(config.d as i32 - 1);
        return Ok((g * g * mass, 0.0));
    }
    if quad.outer < 2 || quad.inner == 0 {
        return Err(Error::InvalidArgument("covariance quadrature sizes too small".into()));
    }
    let mut values = Vec::with_capacity(quad.outer);
    for _ in 0..quad.outer {
        let y = base.sample_facet(rng, config)?;
        let (gi, _) = reduced_kernel_g1(i, &y, config, base, quad.inner, rng)?;
        let (gj, _) = reduced_kernel_g1(j, &y, config, base, quad.inner, rng)?;
        values.push(mass * gi * gj);
    }
    Ok((stats::mean(&values), stats::stderr_of_mean(&values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::task_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pi_degenerates_to_product_poisson() {
        let rate = 1.5f64;
        let pi = ExactPi::new(2, rate, 0.0, TruncationSpec::for_rate(rate)).unwrap();
        for (k1, k2) in [(0usize, 0usize), (1, 2), (3, 1)] {
            let expected = ((-rate).exp() * rate.powi(k1 as i32)
                / (1..=k1).map(|v| v as f64).product::<f64>())
                * ((-rate).exp() * rate.powi(k2 as i32)
                    / (1..=k2).map(|v| v as f64).product::<f64>());
            let got = pi.pmf(&[k1, k2]).unwrap();
            assert!((got - expected).abs() <= expected * (pi.tail_bound + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn pi_weight_ratio() {
        let pi = ExactPi::new(2, 1.0, -1.0, TruncationSpec::for_rate(1.0)).unwrap();
        let ratio = pi.pmf(&[1, 1]).unwrap() / pi.pmf(&[0, 0]).unwrap();
        assert_abs_diff_eq!(ratio, (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn pi_is_symmetric() {
        let pi = ExactPi::new(3, 2.0, -0.5, TruncationSpec::for_rate(2.0)).unwrap();
        let p = pi.pmf(&[1, 2, 4]).unwrap();
        assert_abs_diff_eq!(p, pi.pmf(&[4, 1, 2]).unwrap(), epsilon = 1e-15);
        assert_abs_diff_eq!(p, pi.pmf(&[2, 4, 1]).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn pi_sums_to_one_within_tail() {
        let pi = ExactPi::new(2, 4.0, -1.0, TruncationSpec::for_rate(4.0)).unwrap();
        let mut total = 0.0;
        for_each_multi_index(2, pi.k_cap, |k| {
            total += pi.pmf(k).unwrap();
        });
        assert!((total - 1.0).abs() <= pi.tail_bound + 1e-12, "total = {total}");
    }

    #[test]
    fn pi_stable_under_cap_doubling() {
        let rate = 3.0;
        let small = ExactPi::new(2, rate, -1.0, TruncationSpec::for_rate(rate)).unwrap();
        let big = ExactPi::new(2, rate, -1.0, TruncationSpec::with_cap(2 * small.k_cap)).unwrap();
        for k in [[0usize, 0], [1, 1], [2, 5], [4, 0]] {
            let a = small.pmf(&k).unwrap();
            let b = big.pmf(&k).unwrap();
            assert!((a - b).abs() <= small.tail_bound + 1e-14);
        }
    }

    #[test]
    fn pi_rejects_positive_interaction() {
        assert!(ExactPi::new(2, 1.0, 0.5, TruncationSpec::for_rate(1.0)).is_err());
    }

    #[test]
    fn interior_mass_closed_form_for_independent_case() {
        for rate in [0.5f64, 2.0, 6.0] {
            let pi = ExactPi::new(2, rate, 0.0, TruncationSpec::for_rate(rate)).unwrap();
            let (mass, err) = pi.interior_mass();
            let expected = (1.0 - (-rate).exp()).powi(2);
            assert!((mass - expected).abs() <= err + 1e-12, "rate {rate}: {mass} vs {expected}");
        }
    }

    #[test]
    fn interior_mass_decreases_and_vanishes() {
        let grid = [2.0f64, 5.0, 10.0, 20.0];
        let masses: Vec<f64> = grid
            .iter()
            .map(|&rate| {
                ExactPi::new(2, rate, -1.0, TruncationSpec::for_rate(rate))
                    .unwrap()
                    .interior_mass()
                    .0
            })
            .collect();
        for w in masses.windows(2) {
            assert!(w[1] < w[0], "interior mass not decreasing: {masses:?}");
        }
        assert!(masses[masses.len() - 1] < 0.01, "{masses:?}");
    }

    #[test]
    fn interior_mass_vanishes_at_zero_rate() {
        let pi = ExactPi::new(2, 1e-3, -1.0, TruncationSpec::with_cap(40)).unwrap();
        assert!(pi.interior_mass().0 < 1e-5);
    }

    #[test]
    fn product_moment_closed_form_for_independent_case() {
        for rate in [0.5f64, 2.0] {
            let pi = ExactPi::new(2, rate, 0.0, TruncationSpec::for_rate(rate)).unwrap();
            let (pm, err) = pi.product_moment();
            assert!((pm - rate * rate).abs() <= err + 1e-10, "{pm} vs {}", rate * rate);
        }
    }

    #[test]
    fn product_moment_dominates_interior_mass_and_decays() {
        let grid = [1.0f64, 2.0, 5.0, 10.0, 20.0];
        let mut tail_values = Vec::new();
        for &rate in &grid {
            let pi = ExactPi::new(2, rate, -1.0, TruncationSpec::for_rate(rate)).unwrap();
            let (pm, _) = pi.product_moment();
            let (im, _) = pi.interior_mass();
            assert!(pm >= im, "rate {rate}: product moment {pm} < interior {im}");
            if rate >= 5.0 {
                tail_values.push(pm);
            }
        }
        // The moment peaks near rate 3 and then falls off to zero.
        for w in tail_values.windows(2) {
            assert!(w[1] < w[0], "not decreasing: {tail_values:?}");
        }
        assert!(tail_values[tail_values.len() - 1] < 1e-2, "{tail_values:?}");
    }

    /// Elementary symmetric polynomial e_c of the orientation class sizes:
    /// the true number of distinct-orientation c-subsets.
    fn exact_subset_count(c: usize, q: usize, s: usize, theta: &[usize]) -> f64 {
        let sizes: Vec<f64> = (0..s)
            .map(|jj| theta[jj] as f64 + if jj < q { 1.0 } else { 0.0 })
            .collect();
        let mut e = vec![0.0f64; c + 1];
        e[0] = 1.0;
        for &x in &sizes {
            for deg in (1..=c).rev() {
                e[deg] += e[deg - 1] * x;
            }
        }
        e[c]
    }

    #[test]
    fn a_count_examples() {
        assert_abs_diff_eq!(a_count(2, 0, 2, &[3, 4]).unwrap(), 12.0);
        // c=2, q=1, s=3: n2 + n3 + n1n2 + n1n3 + n2n3.
        let n = [2usize, 3, 4];
        let expected = 3.0 + 4.0 + 6.0 + 8.0 + 12.0;
        assert_abs_diff_eq!(a_count(2, 1, 3, &n).unwrap(), expected);
    }

    #[test]
    fn a_count_matches_subset_oracle_where_exact() {
        // The subset formula counts each admissible orientation set once, so
        // it equals the true c-subset count whenever q <= 1, or when the
        // fixed facets exhaust the orientation range (q = c = s).
        for s in 2..=4usize {
            for c in 2..=s {
                for q in 0..=1usize {
                    let mut theta = vec![0usize; s];
                    loop {
                        let got = a_count(c, q, s, &theta).unwrap();
                        let expected = exact_subset_count(c, q, s, &theta);
                        assert_abs_diff_eq!(got, expected);
                        let mut pos = 0;
                        loop {
                            if pos == s {
                                break;
                            }
                            if theta[pos] < 3 {
                                theta[pos] += 1;
                                break;
                            }
                            theta[pos] = 0;
                            pos += 1;
                        }
                        if pos == s {
                            break;
                        }
                    }
                }
            }
        }
        for c in 2..=4usize {
            let theta = vec![2usize; c];
            assert_abs_diff_eq!(
                a_count(c, c, c, &theta).unwrap(),
                exact_subset_count(c, c, c, &theta)
            );
        }
    }

    #[test]
    fn a_count_is_lower_bound_in_general() {
        // For q >= 2 with spare orientations the formula merges fixed-facet
        // choices and undercounts; it must never exceed the true count.
        let mut saw_strict = false;
        for s in 3..=4usize {
            for c in 2..=3usize.min(s) {
                for q in 2..=c {
                    let mut theta = vec![0usize; s];
                    loop {
                        let got = a_count(c, q, s, &theta).unwrap();
                        let expected = exact_subset_count(c, q, s, &theta);
                        assert!(got <= expected + 1e-9);
                        if got < expected {
                            saw_strict = true;
                        }
                        let mut pos = 0;
                        loop {
                            if pos == s {
                                break;
                            }
                            if theta[pos] < 2 {
                                theta[pos] += 1;
                                break;
                            }
                            theta[pos] = 0;
                            pos += 1;
                        }
                        if pos == s {
                            break;
                        }
                    }
                }
            }
        }
        assert!(saw_strict);
    }

    #[test]
    fn b_sum_zero_rate_limit() {
        // Only the n = 0 term survives: exp(nu·Q^{d−c}·A(c,q,s,0)).
        let b = b_sum(2, 2, 1.0, 1e-9, 0, 2, -1.0, TruncationSpec::with_cap(30)).unwrap();
        assert_abs_diff_eq!(b.value, 1.0, epsilon = 1e-6);
        let b = b_sum(2, 2, 1.0, 1e-9, 2, 2, -1.0, TruncationSpec::with_cap(30)).unwrap();
        assert_abs_diff_eq!(b.value, (-1.0f64).exp(), epsilon = 1e-6);
        // d > c makes the facet size enter through Q^{d−c}.
        let b = b_sum(3, 2, 2.0, 1e-9, 2, 3, -1.0, TruncationSpec::with_cap(20)).unwrap();
        assert_abs_diff_eq!(b.value, (-2.0f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn b_sum_converges_to_binomial_targets() {
        // (c,q,s) -> C(s−q, s−c+1): 2, 1, 0 for the three planar cases.
        let targets = [((2usize, 0usize, 2usize), 2.0), ((2, 1, 2), 1.0), ((2, 2, 2), 0.0)];
        for ((c, q, s), target) in targets {
            let mut last = f64::INFINITY;
            for rate in [2.5f64, 5.0, 10.0, 20.0] {
                let b = b_sum_auto(2, c, 1.0, rate, q, s, -1.0, 1e-9).unwrap();
                let gap = (b.value - target).abs();
                assert!(gap < last, "(c,q,s)=({c},{q},{s}) rate {rate}: gap {gap} >= {last}");
                last = gap;
            }
            assert!(last < 0.01, "final gap {last} for target {target}");
        }
    }

    #[test]
    fn b_sum_tail_certificate() {
        // Raising the cap moves the value by less than the reported tail.
        for rate in [2.0f64, 8.0] {
            let base = TruncationSpec::for_rate(rate);
            let b1 = b_sum(2, 2, 1.0, rate, 0, 2, -1.0, base).unwrap();
            let b2 = b_sum(2, 2, 1.0, rate, 0, 2, -1.0, TruncationSpec::with_cap(base.k_cap + 5))
                .unwrap();
            assert!((b1.value - b2.value).abs() <= b1.tail_bound);
        }
    }

    #[test]
    fn b_sum_validates_arguments() {
        assert!(b_sum(2, 2, 1.0, 1.0, 0, 2, 0.0, TruncationSpec::with_cap(10)).is_err());
        assert!(b_sum(2, 2, 1.0, 1.0, 3, 2, -1.0, TruncationSpec::with_cap(10)).is_err());
        assert!(b_sum(2, 1, 1.0, 1.0, 0, 1, -1.0, TruncationSpec::with_cap(10)).is_err());
    }

    #[test]
    fn rho_limit_values() {
        assert_abs_diff_eq!(rho_limit(2, 2, 1).unwrap(), 0.5);
        assert_abs_diff_eq!(rho_limit(2, 2, 2).unwrap(), 0.0);
        assert_abs_diff_eq!(rho_limit(3, 2, 1).unwrap(), 1.0 / 3.0);
        assert_abs_diff_eq!(rho_limit(3, 3, 1).unwrap(), 2.0 / 3.0);
        // d−k < d−c+1 kills the numerator.
        assert_abs_diff_eq!(rho_limit(3, 2, 2).unwrap(), 0.0);
    }

    #[test]
    fn rho_bounds_bracket_and_converge() {
        let mut gap_last = f64::INFINITY;
        for rate in [2.5f64, 5.0, 10.0, 20.0] {
            let (lo, hi) =
                rho_bounds(2, 2, 1.0, rate, 1, -1.0, TruncationSpec::for_rate(rate)).unwrap();
            assert!(lo <= hi, "rate {rate}: {lo} > {hi}");
            let gap = (hi - 0.5).abs().max((lo - 0.5).abs());
            assert!(gap < gap_last);
            gap_last = gap;
        }
        assert!(gap_last < 0.02, "bounds did not approach 1/2: {gap_last}");

        // Two distinct inserted orientations in the plane: limit 0.
        let (lo, hi) =
            rho_bounds(2, 2, 1.0, 20.0, 2, -1.0, TruncationSpec::for_rate(20.0)).unwrap();
        assert!(lo >= 0.0 && hi < 0.02, "({lo}, {hi})");
    }

    #[test]
    fn rho_mc_matches_bounds_and_limit() {
        let cfg = crate::model::ModelConfig::submodel(
            2,
            1.0,
            20.0,
            crate::model::SubmodelSpec::new(2, -1.0).unwrap(),
        )
        .unwrap();
        let x = vec![Facet::new(vec![0.5, 0.5], 1).unwrap()];
        let mut rng = task_rng(40, 0);
        let est = rho_mc_estimate(&x, 2, &cfg, 30_000, &mut rng).unwrap();
        let (lo, hi) = rho_bounds(2, 2, 1.0, 10.0, 1, -1.0, TruncationSpec::for_rate(10.0)).unwrap();
        let ci = (est.estimate - 4.0 * est.stderr, est.estimate + 4.0 * est.stderr);
        assert!(ci.1 >= lo && ci.0 <= hi, "CI {ci:?} misses [{lo}, {hi}]");
        assert!((est.estimate - 0.5).abs() < 0.1, "estimate {}", est.estimate);
    }

    #[test]
    fn rho_mc_near_zero_interaction_is_one() {
        let cfg = crate::model::ModelConfig::new(
            2,
            1.0,
            5.0,
            crate::model::Chi::Constant(1.0),
            vec![0.0, -1e-12],
        )
        .unwrap();
        let x = vec![
            Facet::new(vec![0.2, 0.6], 1).unwrap(),
            Facet::new(vec![0.8, 0.1], 2).unwrap(),
        ];
        let mut rng = task_rng(41, 0);
        let est = rho_mc_estimate(&x, 2, &cfg, 2000, &mut rng).unwrap();
        assert_abs_diff_eq!(est.estimate, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn covariance_closed_forms() {
        let cfg = crate::model::ModelConfig::poisson(2, 1.0, 1.0).unwrap();
        let mut rng = task_rng(42, 0);
        let (c11, se) =
            asymptotic_covariance(1, 1, &cfg, BaseMeasure::Full, CovQuadSpec::default(), &mut rng)
                .unwrap();
        assert_abs_diff_eq!(c11, 4.0);
        assert_abs_diff_eq!(se, 0.0);
        let (c11r, _) = asymptotic_covariance(
            1,
            1,
            &cfg,
            BaseMeasure::Restricted(1),
            CovQuadSpec::default(),
            &mut rng,
        )
        .unwrap();
        assert_abs_diff_eq!(c11r, 2.0);
    }

    #[test]
    fn covariance_mc_against_hand_values() {
        // Planar full measure: g_1^(2) ≡ 1/2, so C_12 = 1 and C_22 = 1/4.
        let cfg = crate::model::ModelConfig::poisson(2, 1.0, 1.0).unwrap();
        let quad = CovQuadSpec {
            outer: 3000,
            inner: 64,
        };
        let mut rng = task_rng(43, 0);
        let (c12, s12) =
            asymptotic_covariance(1, 2, &cfg, BaseMeasure::Full, quad, &mut rng).unwrap();
        assert!((c12 - 1.0).abs() < 4.0 * s12, "C_12 = {c12} +- {s12}");
        let (c22, s22) =
            asymptotic_covariance(2, 2, &cfg, BaseMeasure::Full, quad, &mut rng).unwrap();
        assert!((c22 - 0.25).abs() < 4.0 * s22, "C_22 = {c22} +- {s22}");
    }

    #[test]
    fn covariance_symmetry() {
        let cfg = crate::model::ModelConfig::poisson(3, 1.0, 1.0).unwrap();
        let quad = CovQuadSpec {
            outer: 1500,
            inner: 32,
        };
        let mut rng = task_rng(44, 0);
        let (cij, sij) =
            asymptotic_covariance(1, 2, &cfg, BaseMeasure::Restricted(2), quad, &mut rng).unwrap();
        let (cji, sji) =
            asymptotic_covariance(2, 1, &cfg, BaseMeasure::Restricted(2), quad, &mut rng).unwrap();
        let combined = (sij * sij + sji * sji).sqrt();
        assert!((cij - cji).abs() < 4.0 * combined, "{cij} vs {cji}");
    }
}
