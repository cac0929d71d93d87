//! Birth-death-move Metropolis-Hastings sampling of the Gibbs facet
//! process.
//!
//! The chain targets the density `exp(Σ ν_i G_i)` with respect to the
//! Poisson process of intensity `a·λ`. A birth proposes a facet from
//! `λ/λ(Y)` and accepts with `min(1, a·λ(Y)/(n+1) · λ*_1(u; x))`; a death
//! removes a uniformly chosen facet and accepts with
//! `min(1, n/(a·λ(Y)) / λ*_1(u; x∖u))`; a move resamples one facet from
//! `λ/λ(Y)`. Deaths and moves from the empty pattern are automatic
//! rejections. The U-statistic vector is maintained incrementally from the
//! same insertion deltas that drive the acceptance ratios.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::geometry::{Facet, FacetPattern};
use crate::model::{sample_facet, ModelConfig};
use crate::seeding::task_rng;
use crate::stats;
use crate::ustats::{compute_g, delta_g, OrientationCounts, UStatVector};
use crate::{Error, Result};

/// Tuning of one chain run.
#[derive(Debug, Clone, Serialize)]
pub struct ChainConfig {
    pub n_steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// `(p_birth, p_death, p_move)`, nonnegative, summing to one.
    pub move_probabilities: [f64; 3],
    pub seed: u64,
    /// Also keep the thinned patterns (memory-heavy; off by default).
    pub record_patterns: bool,
}

impl ChainConfig {
    pub fn new(n_steps: usize, burn_in: usize, thin: usize, seed: u64) -> Result<Self> {
        let cfg = ChainConfig {
            n_steps,
            burn_in,
            thin,
            move_probabilities: [1.0 / 3.0; 3],
            seed,
            record_patterns: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults scaled to the typical pattern size `a·λ(Y)`:
    /// `burn_in = 10·a·λ(Y)`, `thin = max(1, a·λ(Y)/2)`, and enough steps
    /// for `n_samples` thinned draws.
    pub fn for_model(model: &ModelConfig, n_samples: usize, seed: u64) -> Self {
        let mean_count = model.poisson_mean_count();
        let burn_in = (10.0 * mean_count).ceil() as usize;
        let thin = (mean_count / 2.0).round().max(1.0) as usize;
        ChainConfig {
            n_steps: burn_in + n_samples * thin,
            burn_in,
            thin,
            move_probabilities: [1.0 / 3.0; 3],
            seed,
            record_patterns: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_steps {
            return Err(Error::InvalidConfig("burn_in must be smaller than n_steps".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be positive".into()));
        }
        let p = &self.move_probabilities;
        if p.iter().any(|&v| v < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "move probabilities must be nonnegative and sum to 1".into(),
            ));
        }
        Ok(())
    }

    /// Thinned sample count produced by this configuration.
    pub fn sample_count(&self) -> usize {
        (self.n_steps - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MoveKind {
    Birth = 0,
    Death = 1,
    Move = 2,
}

/// Proposal and acceptance counters per move type.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct MoveStats {
    pub proposed: [u64; 3],
    pub accepted: [u64; 3],
}

impl MoveStats {
    pub fn rate(&self, kind: MoveKind) -> f64 {
        let idx = kind as usize;
        if self.proposed[idx] == 0 {
            f64::NAN
        } else {
            self.accepted[idx] as f64 / self.proposed[idx] as f64
        }
    }
}

/// Output of one chain run.
#[derive(Debug, Clone, Serialize)]
pub struct ChainOutput {
    pub samples: Vec<UStatVector>,
    pub thetas: Vec<OrientationCounts>,
    pub patterns: Option<Vec<FacetPattern>>,
    pub acceptance: MoveStats,
    /// Effective sample size of each thinned `G_j` series.
    pub ess: Vec<f64>,
    pub warnings: Vec<String>,
    pub final_pattern: FacetPattern,
}

/// Mutable chain state with incrementally maintained orientation counts and
/// U-statistics.
struct ChainState<'a> {
    cfg: &'a ModelConfig,
    facets: Vec<Facet>,
    theta: Vec<usize>,
    g: Vec<f64>,
    /// Indices `j` with `ν_j != 0`, entering the acceptance ratio.
    active: Vec<usize>,
}

impl<'a> ChainState<'a> {
    fn from_pattern(cfg: &'a ModelConfig, pattern: &FacetPattern) -> Result<Self> {
        for f in pattern.iter() {
            if f.dim() != cfg.d || !f.in_window(cfg.b) {
                return Err(Error::InvalidArgument(
                    "initial pattern must consist of window facets of dimension d".into(),
                ));
            }
        }
        let theta = crate::ustats::orientation_counts(pattern, cfg.d).0;
        let g = compute_g(pattern, cfg).values;
        let active = cfg
            .nu
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i + 1)
            .collect();
        Ok(ChainState {
            cfg,
            facets: pattern.facets().to_vec(),
            theta,
            g,
            active,
        })
    }

    fn len(&self) -> usize {
        self.facets.len()
    }

    /// `Σ_j ν_j ΔG_j` for inserting `u` into the current pattern.
    fn weighted_delta(&self, u: &Facet) -> f64 {
        self.active
            .iter()
            .map(|&j| self.cfg.nu[j - 1] * delta_g(&self.facets, u, j, self.cfg))
            .sum()
    }

    fn apply_insert(&mut self, u: Facet) {
        for j in 1..=self.cfg.d {
            self.g[j - 1] += delta_g(&self.facets, &u, j, self.cfg);
        }
        self.theta[u.axis()] += 1;
        self.facets.push(u);
    }

    /// Remove by index, returning the removed facet; `g` and `theta` are
    /// updated from the deltas against the remaining pattern.
    fn apply_remove(&mut self, idx: usize) -> Facet {
        let u = self.facets.swap_remove(idx);
        for j in 1..=self.cfg.d {
            self.g[j - 1] -= delta_g(&self.facets, &u, j, self.cfg);
        }
        self.theta[u.axis()] -= 1;
        u
    }

    fn pattern(&self) -> FacetPattern {
        FacetPattern::new(self.facets.clone())
    }
}

/// Log acceptance ratio of a birth proposal `u` on the current state.
fn birth_log_ratio(state: &ChainState<'_>, u: &Facet) -> f64 {
    let mean_count = state.cfg.poisson_mean_count();
    mean_count.ln() - ((state.len() + 1) as f64).ln() + state.weighted_delta(u)
}

/// Log acceptance ratio of removing the facet `u` already taken out of the
/// state (the remaining pattern is `x ∖ u` and `n` the size of `x`).
fn death_log_ratio(state: &ChainState<'_>, u: &Facet, n_before: usize) -> f64 {
    let mean_count = state.cfg.poisson_mean_count();
    (n_before as f64).ln() - mean_count.ln() - state.weighted_delta(u)
}

fn step<R: Rng>(state: &mut ChainState<'_>, rng: &mut R, probs: &[f64; 3]) -> (MoveKind, bool) {
    let which = rng.random::<f64>();
    if which < probs[0] {
        // Birth.
        let u = sample_facet(rng, state.cfg).expect("facet sampling failed");
        let log_r = birth_log_ratio(state, &u);
        let accept = log_r >= 0.0 || rng.random::<f64>().ln() < log_r;
        if accept {
            state.apply_insert(u);
        }
        (MoveKind::Birth, accept)
    } else if which < probs[0] + probs[1] {
        // Death; the empty pattern is an automatic rejection.
        let n = state.len();
        if n == 0 {
            return (MoveKind::Death, false);
        }
        let idx = rng.random_range(0..n);
        let u = state.apply_remove(idx);
        let log_r = death_log_ratio(state, &u, n);
        let accept = log_r >= 0.0 || rng.random::<f64>().ln() < log_r;
        if !accept {
            state.apply_insert(u);
        }
        (MoveKind::Death, accept)
    } else {
        // Move: resample one facet's centre and orientation.
        let n = state.len();
        if n == 0 {
            return (MoveKind::Move, false);
        }
        let idx = rng.random_range(0..n);
        let v = sample_facet(rng, state.cfg).expect("facet sampling failed");
        let old = state.apply_remove(idx);
        let log_r = state.weighted_delta(&v) - state.weighted_delta(&old);
        let accept = log_r >= 0.0 || rng.random::<f64>().ln() < log_r;
        if accept {
            state.apply_insert(v);
        } else {
            state.apply_insert(old);
        }
        (MoveKind::Move, accept)
    }
}

/// One Metropolis-Hastings transition from `pattern`, preserving the Gibbs
/// law of `config`.
pub fn bdm_step(
    pattern: &FacetPattern,
    config: &ModelConfig,
    chain: &ChainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FacetPattern> {
    chain.validate()?;
    let mut state = ChainState::from_pattern(config, pattern)?;
    step(&mut state, rng, &chain.move_probabilities);
    Ok(state.pattern())
}

/// Run a chain from the empty pattern.
pub fn run_chain(config: &ModelConfig, chain: &ChainConfig) -> Result<ChainOutput> {
    run_chain_from(config, chain, &FacetPattern::empty())
}

/// Run a chain from an explicit initial pattern. Deterministic in
/// `(config, chain)`; the RNG is derived from the chain seed alone.
pub fn run_chain_from(
    config: &ModelConfig,
    chain: &ChainConfig,
    init: &FacetPattern,
) -> Result<ChainOutput> {
    chain.validate()?;
    let mut rng = task_rng(chain.seed, 0);
    let mut state = ChainState::from_pattern(config, init)?;
    let n_samples = chain.sample_count();
    let mut samples = Vec::with_capacity(n_samples);
    let mut thetas = Vec::with_capacity(n_samples);
    let mut patterns = chain.record_patterns.then(Vec::new);
    let mut acceptance = MoveStats::default();
    for s in 1..=chain.n_steps {
        let (kind, accepted) = step(&mut state, &mut rng, &chain.move_probabilities);
        acceptance.proposed[kind as usize] += 1;
        if accepted {
            acceptance.accepted[kind as usize] += 1;
        }
        if s > chain.burn_in && (s - chain.burn_in) % chain.thin == 0 {
            samples.push(UStatVector {
                values: state.g.clone(),
            });
            thetas.push(OrientationCounts(state.theta.clone()));
            if let Some(p) = patterns.as_mut() {
                p.push(state.pattern());
            }
        }
    }
    // Guard against drift of the incrementally maintained statistics.
    if cfg!(debug_assertions) {
        let fresh = compute_g(&state.pattern(), config).values;
        for (inc, scratch) in state.g.iter().zip(&fresh) {
            debug_assert!(
                (inc - scratch).abs() <= 1e-6 * (1.0 + scratch.abs()),
                "incremental G drifted: {inc} vs {scratch}"
            );
        }
    }

    let ess: Vec<f64> = (0..config.d)
        .map(|j| {
            let series: Vec<f64> = samples.iter().map(|g| g.values[j]).collect();
            stats::effective_sample_size(&series)
        })
        .collect();
    let mut warnings = Vec::new();
    for (kind, name) in [
        (MoveKind::Birth, "birth"),
        (MoveKind::Death, "death"),
        (MoveKind::Move, "move"),
    ] {
        let idx = kind as usize;
        if acceptance.proposed[idx] >= 100 && acceptance.rate(kind) < 0.01 {
            warnings.push(format!(
                "{name} acceptance rate {:.4} below 1%",
                acceptance.rate(kind)
            ));
        }
    }
    for (j, &e) in ess.iter().enumerate() {
        if e < 50.0 {
            warnings.push(format!("ESS of G_{} is {e:.1} (< 50)", j + 1));
        }
    }
    Ok(ChainOutput {
        samples,
        thetas,
        patterns,
        acceptance,
        ess,
        warnings,
        final_pattern: state.pattern(),
    })
}

/// Thinned orientation-count samples of the full-dimensional submodel
/// (requires `ν_j = 0` for `j < d`).
pub fn sample_theta_chain(config: &ModelConfig, chain: &ChainConfig) -> Result<Vec<OrientationCounts>> {
    if config.nu[..config.d - 1].iter().any(|&v| v != 0.0) {
        return Err(Error::InvalidConfig(
            "theta chain requires the full-dimensional submodel (only nu_d may be nonzero)".into(),
        ));
    }
    Ok(run_chain(config, chain)?.thetas)
}
