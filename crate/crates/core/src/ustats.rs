//! The intersection U-statistics `G_1..G_d`, their drivers and reduced
//! kernels, orientation counts and standardization.
//!
//! `G_j` sums the driver `g^(j) = H^{d−j}(∩ x_i)/j!` over all ordered
//! `j`-tuples of distinct facets, equivalently `H^{d−j}` over unordered
//! `j`-subsets. Only subsets with pairwise-distinct orientations contribute,
//! so the enumeration iterates over orientation subsets first and then over
//! facet choices within each orientation class. For `j = d` the counting
//! measure makes `G_d` a pure function of the orientation counts:
//! `G_d = θ_1·θ_2·…·θ_d`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{measure_refs, Facet, FacetPattern};
use crate::model::{BaseMeasure, ModelConfig};
use crate::stats;
use crate::{Error, Result};

/// Facet counts per orientation: `θ ∈ N_0^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrientationCounts(pub Vec<usize>);

impl OrientationCounts {
    pub fn sum(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn product(&self) -> f64 {
        self.0.iter().map(|&k| k as f64).product()
    }
}

/// The vector `(G_1, …, G_d)` of a pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UStatVector {
    pub values: Vec<f64>,
}

impl UStatVector {
    pub fn g(&self, j: usize) -> f64 {
        self.values[j - 1]
    }

    /// `G̃_j = (G_j − mean_j)/a^{j−1/2}` for each component.
    pub fn standardized(&self, means: &[f64], a: f64) -> Vec<f64> {
        standardize(&self.values, means, a)
    }
}

/// Driver `g^(j)(x_1..x_j) = H^{d−j}(∩ x_i)/j!`.
pub fn driver_g(facets: &[Facet], b: f64) -> Result<f64> {
    let j = facets.len();
    let measure = crate::geometry::intersection_measure(facets, b)?;
    Ok(measure / factorial(j))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Orientation counts of a pattern in dimension `d`.
pub fn orientation_counts(pattern: &FacetPattern, d: usize) -> OrientationCounts {
    let mut theta = vec![0usize; d];
    for f in pattern.iter() {
        theta[f.axis()] += 1;
    }
    OrientationCounts(theta)
}

/// Indices of the pattern's facets grouped by orientation class.
fn orientation_buckets(pattern: &FacetPattern, d: usize) -> Vec<Vec<usize>> {
    let mut buckets = vec![Vec::new(); d];
    for (i, f) in pattern.iter().enumerate() {
        buckets[f.axis()].push(i);
    }
    buckets
}

/// `G_j` by explicit enumeration of `j`-subsets with pairwise-distinct
/// orientations. Correct for arbitrary centres; used directly for
/// `2 ≤ j ≤ d−1` and as the independent route for the product identity.
pub fn g_enumerated(pattern: &FacetPattern, j: usize, d: usize, b: f64) -> f64 {
    assert!(j >= 1 && j <= d);
    let buckets = orientation_buckets(pattern, d);
    let facets = pattern.facets();
    let mut chosen: Vec<&Facet> = Vec::with_capacity(j);
    let mut total = 0.0;

    // Advancing `start_axis` past each used class visits every orientation
    // subset exactly once.
    fn recurse<'a>(
        buckets: &[Vec<usize>],
        facets: &'a [Facet],
        b: f64,
        start_axis: usize,
        remaining: usize,
        chosen: &mut Vec<&'a Facet>,
        total: &mut f64,
    ) {
        if remaining == 0 {
            *total += measure_refs(chosen, b);
            return;
        }
        if buckets.len() - start_axis < remaining {
            return;
        }
        for axis in start_axis..buckets.len() {
            for &idx in &buckets[axis] {
                chosen.push(&facets[idx]);
                recurse(buckets, facets, b, axis + 1, remaining - 1, chosen, total);
                chosen.pop();
            }
        }
    }
    recurse(&buckets, facets, b, 0, j, &mut chosen, &mut total);
    total
}

/// One component `G_j` of a pattern, with closed-form fast paths for
/// `j = 1` (constant facet measure) and, for window patterns, `j = d`
/// (product of orientation counts).
pub fn g_single(pattern: &FacetPattern, j: usize, config: &ModelConfig) -> f64 {
    let d = config.d;
    let b = config.b;
    assert!(j >= 1 && j <= d);
    if j == 1 {
        return (2.0 * b).powi(d as i32 - 1) * pattern.len() as f64;
    }
    if j == d && pattern.all_in_window(b) {
        return orientation_counts(pattern, d).product();
    }
    g_enumerated(pattern, j, d, b)
}

/// The full vector `(G_1, …, G_d)`.
pub fn compute_g(pattern: &FacetPattern, config: &ModelConfig) -> UStatVector {
    let values = (1..=config.d)
        .map(|j| g_single(pattern, j, config))
        .collect();
    UStatVector { values }
}

/// `G_j(x ∪ {u}) − G_j(x)`: the total intersection measure of `u` with all
/// `(j−1)`-subsets of `x` whose orientations are pairwise distinct and
/// different from `u`'s.
///
/// Fast paths: `j = 1` is the constant facet measure, and `j = d` for window
/// patterns is the product of the orientation counts over the axes other
/// than `u`'s.
pub fn delta_g(pattern: &[Facet], u: &Facet, j: usize, config: &ModelConfig) -> f64 {
    let d = config.d;
    let b = config.b;
    debug_assert!(j >= 1 && j <= d);
    if j == 1 {
        return (2.0 * b).powi(d as i32 - 1);
    }
    if j == 2 {
        let mut total = 0.0;
        for f in pattern {
            if f.axis() != u.axis() {
                total += measure_refs(&[u, f], b);
            }
        }
        return total;
    }
    if j == d && u.in_window(b) && pattern.iter().all(|f| f.in_window(b)) {
        let mut product = 1.0;
        let mut theta = vec![0usize; d];
        for f in pattern {
            theta[f.axis()] += 1;
        }
        for (axis, &count) in theta.iter().enumerate() {
            if axis != u.axis() {
                product *= count as f64;
            }
        }
        return product;
    }
    let mut buckets = vec![Vec::new(); d];
    for (i, f) in pattern.iter().enumerate() {
        if f.axis() != u.axis() {
            buckets[f.axis()].push(i);
        }
    }
    let mut chosen: Vec<&Facet> = Vec::with_capacity(j);
    chosen.push(u);
    let mut total = 0.0;

    fn recurse<'a>(
        buckets: &[Vec<usize>],
        facets: &'a [Facet],
        b: f64,
        start_axis: usize,
        remaining: usize,
        chosen: &mut Vec<&'a Facet>,
        total: &mut f64,
    ) {
        if remaining == 0 {
            *total += measure_refs(chosen, b);
            return;
        }
        if buckets.len() - start_axis < remaining {
            return;
        }
        for axis in start_axis..buckets.len() {
            for &idx in &buckets[axis] {
                chosen.push(&facets[idx]);
                recurse(buckets, facets, b, axis + 1, remaining - 1, chosen, total);
                chosen.pop();
            }
        }
    }
    recurse(&buckets, pattern, b, 0, j - 1, &mut chosen, &mut total);
    total
}

/// Analytic `E G_j(η_a)` for constant `χ` over the given base measure:
/// `a^j · C(r,j) · (T/d)^j · (b(j+3)/(j+1))^{d−j}`, where `r` is the number
/// of orientations carrying mass.
pub fn poisson_mean_g(j: usize, config: &ModelConfig, base: BaseMeasure) -> Result<f64> {
    if !matches!(config.chi, crate::model::Chi::Constant(_)) {
        return Err(Error::InvalidArgument(
            "analytic Poisson means require constant chi".into(),
        ));
    }
    base.validate(config.d)?;
    let d = config.d;
    let r = base.orientations(d);
    if j > r {
        return Ok(0.0);
    }
    let t = config.lambda_total();
    let per_orientation = config.a * t / d as f64;
    let free = config.b * (j as f64 + 3.0) / (j as f64 + 1.0);
    Ok(stats::binomial(r as u64, j as u64)
        * per_orientation.powi(j as i32)
        * free.powi((d - j) as i32))
}

/// Monte Carlo estimate of the reduced kernel
/// `g_1^(j)(y) = j ∫ g^(j)(y, x_1..x_{j−1}) dm^{j−1}` over the base measure
/// `m`, returning `(estimate, stderr)`. Exact for `j = 1`.
pub fn reduced_kernel_g1<R: Rng>(
    j: usize,
    y: &Facet,
    config: &ModelConfig,
    base: BaseMeasure,
    mc_samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if j == 0 || j > config.d {
        return Err(Error::InvalidArgument(format!(
            "reduced kernel order {j} outside 1..={}",
            config.d
        )));
    }
    base.validate(config.d)?;
    if j == 1 {
        return Ok(((2.0 * config.b).powi(config.d as i32 - 1), 0.0));
    }
    if mc_samples == 0 {
        return Err(Error::InvalidArgument("mc_samples must be >= 1".into()));
    }
    let mass = base.total(config).powi(j as i32 - 1);
    let scale = j as f64 * mass;
    let mut values = Vec::with_capacity(mc_samples);
    let mut partners: Vec<Facet> = Vec::with_capacity(j);
    for _ in 0..mc_samples {
        partners.clear();
        partners.push(y.clone());
        for _ in 0..j - 1 {
            partners.push(base.sample_facet(rng, config)?);
        }
        let refs: Vec<&Facet> = partners.iter().collect();
        values.push(scale * measure_refs(&refs, config.b) / factorial(j));
    }
    Ok((stats::mean(&values), stats::stderr_of_mean(&values)))
}

/// `G̃_j = (G_j − mean_j)/a^{j−1/2}` componentwise.
pub fn standardize(values: &[f64], means: &[f64], a: f64) -> Vec<f64> {
    assert_eq!(values.len(), means.len());
    assert!(a > 0.0);
    values
        .iter()
        .zip(means)
        .enumerate()
        .map(|(idx, (g, mean))| (g - mean) / a.powf(idx as f64 + 0.5))
        .collect()
}
