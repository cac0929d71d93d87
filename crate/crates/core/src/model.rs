//! The reference facet measure, Poisson facet process sampling, the Gibbs
//! density and conditional intensities.
//!
//! The reference measure factorizes as `χ(z) dz` on centres, a point mass on
//! the fixed size `2b`, and uniform weight `1/d` on each axis orientation.
//! The Gibbs process has unnormalized density `exp(Σ ν_i G_i(x))` with
//! respect to the Poisson process of intensity `a·λ`; the normalizing
//! constant is never computed — every algorithm in this crate works with
//! density ratios only.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::ser::SerializeStruct;
use serde::Serialize;

use crate::geometry::{Facet, FacetPattern};
use crate::ustats;
use crate::{Error, Result};

/// Maximum proposals per rejection-sampled centre before giving up.
const REJECTION_CAP: usize = 1_000_000;

/// Intensity function of facet centres on `[0,b]^d`.
#[derive(Clone)]
pub enum Chi {
    /// `χ(z) ≡ value`.
    Constant(f64),
    /// Arbitrary bounded nonnegative intensity with a declared upper bound
    /// and total mass `∫ χ`.
    Custom {
        f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        bound: f64,
        total: f64,
    },
}

impl Chi {
    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            Chi::Constant(v) => *v,
            Chi::Custom { f, .. } => f(z),
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            Chi::Constant(v) => *v,
            Chi::Custom { bound, .. } => *bound,
        }
    }

    /// `∫_{[0,b]^d} χ(z) dz`.
    pub fn total(&self, d: usize, b: f64) -> f64 {
        match self {
            Chi::Constant(v) => v * b.powi(d as i32),
            Chi::Custom { total, .. } => *total,
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, Chi::Constant(_))
    }
}

impl fmt::Debug for Chi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Chi::Constant(v) => write!(f, "Chi::Constant({v})"),
            Chi::Custom { bound, total, .. } => {
                write!(f, "Chi::Custom {{ bound: {bound}, total: {total} }}")
            }
        }
    }
}

impl Serialize for Chi {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Chi", 3)?;
        match self {
            Chi::Constant(v) => {
                s.serialize_field("kind", "constant")?;
                s.serialize_field("value", v)?;
            }
            Chi::Custom { bound, total, .. } => {
                s.serialize_field("kind", "custom")?;
                s.serialize_field("bound", bound)?;
                s.serialize_field("total", total)?;
            }
        }
        s.end()
    }
}

/// Full model parameterization: dimension, window size, intensity multiplier,
/// centre intensity and interaction parameters.
#[derive(Debug, Clone, Serialize)]
pub struct ModelConfig {
    pub d: usize,
    pub b: f64,
    pub a: f64,
    pub chi: Chi,
    /// Interaction parameters `ν_1..ν_d`; `ν_1` is unrestricted, `ν_i ≤ 0`
    /// for `i ≥ 2` (integrability of the density).
    pub nu: Vec<f64>,
}

impl ModelConfig {
    pub fn new(d: usize, b: f64, a: f64, chi: Chi, nu: Vec<f64>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidConfig("dimension d must be at least 2".into()));
        }
        if d > 16 {
            return Err(Error::InvalidConfig("dimension d must be at most 16".into()));
        }
        if !(b > 0.0) {
            return Err(Error::InvalidConfig("window size b must be positive".into()));
        }
        if !(a >= 1.0) {
            return Err(Error::InvalidConfig("intensity multiplier a must be >= 1".into()));
        }
        if nu.len() != d {
            return Err(Error::InvalidConfig(format!(
                "nu must have length d = {d}, got {}",
                nu.len()
            )));
        }
        if nu.iter().skip(1).any(|&v| v > 0.0) {
            return Err(Error::InvalidConfig(
                "nu_i must be <= 0 for i >= 2 (density integrability)".into(),
            ));
        }
        if nu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("nu must be finite".into()));
        }
        let total = chi.total(d, b);
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidConfig("chi must have positive finite total".into()));
        }
        if !(chi.bound() > 0.0) {
            return Err(Error::InvalidConfig("chi bound must be positive".into()));
        }
        Ok(ModelConfig { d, b, a, chi, nu })
    }

    /// Poisson reference model: `χ ≡ 1` and no interactions.
    pub fn poisson(d: usize, b: f64, a: f64) -> Result<Self> {
        ModelConfig::new(d, b, a, Chi::Constant(1.0), vec![0.0; d])
    }

    /// Pure submodel of order `c` with `χ ≡ 1`.
    pub fn submodel(d: usize, b: f64, a: f64, spec: SubmodelSpec) -> Result<Self> {
        spec.validate(d)?;
        let mut nu = vec![0.0; d];
        nu[spec.c - 1] = spec.nu_c;
        ModelConfig::new(d, b, a, Chi::Constant(1.0), nu)
    }

    /// Total mass `λ(Y) = ∫ χ` of the reference measure (the orientation
    /// marginal sums to one).
    pub fn lambda_total(&self) -> f64 {
        self.chi.total(self.d, self.b)
    }

    /// Expected facet count `a·λ(Y)` of the Poisson reference process.
    pub fn poisson_mean_count(&self) -> f64 {
        self.a * self.lambda_total()
    }

    pub fn is_poisson(&self) -> bool {
        self.nu.iter().all(|&v| v == 0.0)
    }
}

/// A single-interaction submodel: only `ν_c < 0` active, `2 ≤ c ≤ d`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SubmodelSpec {
    pub c: usize,
    pub nu_c: f64,
}

impl SubmodelSpec {
    pub fn new(c: usize, nu_c: f64) -> Result<Self> {
        if !(nu_c < 0.0) {
            return Err(Error::InvalidConfig("submodel interaction nu_c must be negative".into()));
        }
        Ok(SubmodelSpec { c, nu_c })
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.c < 2 || self.c > d {
            return Err(Error::InvalidConfig(format!(
                "submodel order c = {} outside 2..={d}",
                self.c
            )));
        }
        if !(self.nu_c < 0.0) {
            return Err(Error::InvalidConfig("submodel interaction nu_c must be negative".into()));
        }
        Ok(())
    }
}

/// `λ(Y) = ∫_{[0,b]^d} χ(z) dz`.
pub fn lambda_total(config: &ModelConfig) -> f64 {
    config.lambda_total()
}

fn sample_center<R: Rng>(rng: &mut R, config: &ModelConfig) -> Result<Vec<f64>> {
    let d = config.d;
    let b = config.b;
    if config.chi.is_constant() {
        return Ok((0..d).map(|_| rng.random::<f64>() * b).collect());
    }
    let bound = config.chi.bound();
    for _ in 0..REJECTION_CAP {
        let z: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * b).collect();
        let v = config.chi.value(&z);
        if v < 0.0 || v > bound {
            return Err(Error::InvalidConfig(format!(
                "chi({z:?}) = {v} violates its declared bound {bound}"
            )));
        }
        if rng.random::<f64>() * bound < v {
            return Ok(z);
        }
    }
    Err(Error::InvalidConfig(
        "rejection sampling of chi exceeded the proposal cap; the declared bound is too loose".into(),
    ))
}

/// One facet from `λ/λ(Y)`: centre with density `χ/T`, orientation uniform
/// on `{1..d}` and independent of the centre.
pub fn sample_facet<R: Rng>(rng: &mut R, config: &ModelConfig) -> Result<Facet> {
    let center = sample_center(rng, config)?;
    let orientation = rng.random_range(0..config.d) + 1;
    Facet::new(center, orientation)
}

/// A Poisson facet pattern: `N ~ Poisson(a·λ(Y))` facets drawn i.i.d. from
/// `λ/λ(Y)`.
pub fn sample_poisson<R: Rng>(rng: &mut R, config: &ModelConfig) -> Result<FacetPattern> {
    let rate = config.poisson_mean_count();
    let poisson = Poisson::new(rate)
        .map_err(|e| Error::InvalidConfig(format!("invalid Poisson rate {rate}: {e}")))?;
    let n = poisson.sample(rng) as usize;
    let mut facets = Vec::with_capacity(n);
    for _ in 0..n {
        facets.push(sample_facet(rng, config)?);
    }
    Ok(FacetPattern::new(facets))
}

/// `Σ_i ν_i G_i(x)`: the log of the Gibbs density up to the normalizing
/// constant. Finite for every finite pattern (hereditary density).
pub fn log_density_unnormalized(pattern: &FacetPattern, config: &ModelConfig) -> f64 {
    if config.is_poisson() {
        return 0.0;
    }
    let g = ustats::compute_g(pattern, config);
    config
        .nu
        .iter()
        .zip(g.values.iter())
        .map(|(nu, g)| if *nu == 0.0 { 0.0 } else { nu * g })
        .sum()
}

/// Conditional intensity of order `n = new_facets.len()`:
/// `λ*_n(u_1..u_n; x) = exp(Σ_i ν_i (G_i(x ∪ u) − G_i(x)))`.
///
/// Symmetric in the inserted facets; identically 1 in the Poisson case.
pub fn conditional_intensity(
    pattern: &FacetPattern,
    new_facets: &[Facet],
    config: &ModelConfig,
) -> Result<f64> {
    for f in new_facets {
        if f.dim() != config.d {
            return Err(Error::InvalidArgument("inserted facet dimension mismatch".into()));
        }
    }
    if config.is_poisson() {
        return Ok(1.0);
    }
    let base = log_density_unnormalized(pattern, config);
    let mut extended = pattern.clone();
    for f in new_facets {
        extended.push(f.clone());
    }
    let full = log_density_unnormalized(&extended, config);
    Ok((full - base).exp())
}

/// Base measure for kernel integrals and covariances: the full reference
/// measure `λ`, or its restriction `λ_r` to the facets with orientations
/// `{1..r}` (the space with `d−r` orientations omitted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BaseMeasure {
    Full,
    /// Restriction to orientations `1..=r`; each kept orientation retains
    /// its weight `1/d`.
    Restricted(usize),
}

impl BaseMeasure {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            BaseMeasure::Full => Ok(()),
            BaseMeasure::Restricted(r) => {
                if *r == 0 || *r >= d {
                    Err(Error::InvalidArgument(format!(
                        "restricted base measure needs 1 <= r < d, got r = {r}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Number of orientations carrying mass.
    pub fn orientations(&self, d: usize) -> usize {
        match self {
            BaseMeasure::Full => d,
            BaseMeasure::Restricted(r) => *r,
        }
    }

    /// Total mass of the base measure.
    pub fn total(&self, config: &ModelConfig) -> f64 {
        let kept = self.orientations(config.d) as f64;
        config.lambda_total() * kept / config.d as f64
    }

    /// One facet from the normalized base measure.
    pub fn sample_facet<R: Rng>(&self, rng: &mut R, config: &ModelConfig) -> Result<Facet> {
        let center = sample_center(rng, config)?;
        let orientation = rng.random_range(0..self.orientations(config.d)) + 1;
        Facet::new(center, orientation)
    }
}
