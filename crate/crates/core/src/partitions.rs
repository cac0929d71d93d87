//! Compatible set partitions and the joint-moment formulas for Poisson and
//! Gibbs U-statistic vectors.
//!
//! For exponents `m = (m_1..m_s)` the index set `[k]`, `k = Σ j·m_j`, is cut
//! into consecutive base blocks of sizes `1,…,1,…,s,…,s` (size `j` repeated
//! `m_j` times), one block per driver copy of the tensor product
//! `⊗_j (g^(j))^{⊗ m_j}`. A partition `σ` of `[k]` is compatible when every
//! block of `σ` meets every base block in at most one element; the moment of
//! the product is then a sum over compatible `σ` of `a^{|σ|}` times the
//! integral of the contracted kernel (against the correlation function in
//! the Gibbs case, Poisson otherwise).

use rand::Rng;

use crate::geometry::{measure_refs, Facet};
use crate::model::{sample_facet, sample_poisson, BaseMeasure, ModelConfig};
use crate::stats;
use crate::ustats::{delta_g, g_single};
use crate::{Error, Result};

/// Size guard for partition enumeration (Bell-number growth).
pub const MAX_PARTITION_ELEMENTS: usize = 12;

/// A partition of `[k]` compatible with a base partition into consecutive
/// blocks. Elements are 0-based; blocks are in order of their smallest
/// element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    pub blocks: Vec<Vec<usize>>,
    pub base_sizes: Vec<usize>,
}

impl BlockPartition {
    /// `|σ|`, the number of blocks.
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }
}

/// Base-block sizes for exponents `m`: size `j` repeated `m[j−1]` times.
pub fn base_sizes_from_multiplicities(m: &[usize]) -> Vec<usize> {
    let mut sizes = Vec::new();
    for (idx, &count) in m.iter().enumerate() {
        for _ in 0..count {
            sizes.push(idx + 1);
        }
    }
    sizes
}

fn base_block_of(sizes: &[usize]) -> Vec<usize> {
    let mut owner = Vec::new();
    for (block, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            owner.push(block);
        }
    }
    owner
}

/// Whether every block meets every base block in at most one element.
pub fn is_compatible(blocks: &[Vec<usize>], base_sizes: &[usize]) -> bool {
    let owner = base_block_of(base_sizes);
    for block in blocks {
        let mut seen = 0u32;
        for &e in block {
            let bit = 1u32 << owner[e];
            if seen & bit != 0 {
                return false;
            }
            seen |= bit;
        }
    }
    true
}

/// All partitions of `[Σ sizes]` compatible with the base partition, in the
/// canonical restricted-growth-string order.
pub fn enumerate_partitions(sizes: &[usize]) -> Result<Vec<BlockPartition>> {
    let k: usize = sizes.iter().sum();
    if k == 0 {
        return Err(Error::InvalidArgument("base partition must be non-empty".into()));
    }
    if k > MAX_PARTITION_ELEMENTS {
        return Err(Error::EnumerationGuard(format!(
            "partition enumeration over {k} elements exceeds the guard {MAX_PARTITION_ELEMENTS}"
        )));
    }
    let owner = base_block_of(sizes);
    // Restricted growth string: element t may join blocks 0..=t's running
    // maximum label + 1, rejecting blocks that already meet its base block.
    let mut assignment = vec![0usize; k];
    let mut block_masks: Vec<u32> = Vec::with_capacity(k);

    fn recurse(
        t: usize,
        k: usize,
        owner: &[usize],
        assignment: &mut Vec<usize>,
        block_masks: &mut Vec<u32>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if t == k {
            out.push(assignment.clone());
            return;
        }
        let bit = 1u32 << owner[t];
        for label in 0..=block_masks.len() {
            if label == block_masks.len() {
                assignment[t] = label;
                block_masks.push(bit);
                recurse(t + 1, k, owner, assignment, block_masks, out);
                block_masks.pop();
            } else if block_masks[label] & bit == 0 {
                assignment[t] = label;
                block_masks[label] |= bit;
                recurse(t + 1, k, owner, assignment, block_masks, out);
                block_masks[label] &= !bit;
            }
        }
    }
    let mut strings = Vec::new();
    recurse(0, k, &owner, &mut assignment, &mut block_masks, &mut strings);

    Ok(strings
        .into_iter()
        .map(|assignment| {
            let n_blocks = assignment.iter().max().unwrap() + 1;
            let mut blocks = vec![Vec::new(); n_blocks];
            for (e, &label) in assignment.iter().enumerate() {
                blocks[label].push(e);
            }
            BlockPartition {
                blocks,
                base_sizes: sizes.to_vec(),
            }
        })
        .collect())
}

/// Evaluator for the contracted tensor product
/// `(⊗_i g^{(k_i)})_σ : Y^{|σ|} → R`: one facet per block of `σ`, routed to
/// every tensor slot in that block, driver values multiplied.
#[derive(Debug, Clone)]
pub struct ContractedKernel {
    driver_orders: Vec<usize>,
    slot_block: Vec<usize>,
    n_blocks: usize,
}

impl ContractedKernel {
    pub fn arity(&self) -> usize {
        self.n_blocks
    }

    /// Evaluate on one facet per block (in block order).
    pub fn eval(&self, facets: &[&Facet], b: f64) -> f64 {
        assert_eq!(facets.len(), self.n_blocks);
        let mut product = 1.0;
        let mut offset = 0;
        let mut args: Vec<&Facet> = Vec::with_capacity(4);
        for &order in &self.driver_orders {
            args.clear();
            for slot in offset..offset + order {
                args.push(facets[self.slot_block[slot]]);
            }
            let factorial: f64 = (1..=order).map(|v| v as f64).product();
            product *= measure_refs(&args, b) / factorial;
            if product == 0.0 {
                return 0.0;
            }
            offset += order;
        }
        product
    }
}

/// Build the contraction of the driver copies `driver_orders` (one order per
/// base block) along `sigma`.
pub fn contract_kernel(driver_orders: &[usize], sigma: &BlockPartition) -> Result<ContractedKernel> {
    let k: usize = driver_orders.iter().sum();
    let assigned: usize = sigma.blocks.iter().map(|b| b.len()).sum();
    if k != assigned {
        return Err(Error::InvalidArgument(format!(
            "driver slots ({k}) do not match partition elements ({assigned})"
        )));
    }
    if driver_orders != sigma.base_sizes.as_slice() {
        return Err(Error::InvalidArgument(
            "driver orders do not match the partition's base sizes".into(),
        ));
    }
    let mut slot_block = vec![0usize; k];
    for (block_idx, block) in sigma.blocks.iter().enumerate() {
        for &e in block {
            slot_block[e] = block_idx;
        }
    }
    Ok(ContractedKernel {
        driver_orders: driver_orders.to_vec(),
        slot_block,
        n_blocks: sigma.blocks.len(),
    })
}

fn check_moment_guard(m: &[usize]) -> Result<usize> {
    let k: usize = m.iter().enumerate().map(|(idx, &c)| (idx + 1) * c).sum();
    if k == 0 {
        return Err(Error::InvalidArgument("moment multi-index must be non-zero".into()));
    }
    if k > MAX_PARTITION_ELEMENTS {
        return Err(Error::EnumerationGuard(format!(
            "total moment order {k} exceeds the guard {MAX_PARTITION_ELEMENTS}"
        )));
    }
    Ok(k)
}

/// `E ∏_j G_j^{m_j}` under the Poisson process with intensity `a·base`:
/// `Σ_σ a^{|σ|} ∫ g_σ dm^{|σ|}`, each integral estimated by Monte Carlo over
/// the base measure. Returns `(estimate, stderr)`.
pub fn poisson_joint_moment<R: Rng>(
    m: &[usize],
    config: &ModelConfig,
    base: BaseMeasure,
    mc_samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_moment_guard(m)?;
    base.validate(config.d)?;
    if mc_samples == 0 {
        return Err(Error::InvalidArgument("mc_samples must be >= 1".into()));
    }
    let sizes = base_sizes_from_multiplicities(m);
    let partitions = enumerate_partitions(&sizes)?;
    let mass = base.total(config);
    let mut estimate = 0.0;
    let mut variance = 0.0;
    let mut values = Vec::with_capacity(mc_samples);
    for sigma in &partitions {
        let kernel = contract_kernel(&sizes, sigma)?;
        let scale = (config.a * mass).powi(sigma.block_count() as i32);
        values.clear();
        let mut nodes: Vec<Facet> = Vec::with_capacity(kernel.arity());
        for _ in 0..mc_samples {
            nodes.clear();
            for _ in 0..kernel.arity() {
                nodes.push(base.sample_facet(rng, config)?);
            }
            let refs: Vec<&Facet> = nodes.iter().collect();
            values.push(scale * kernel.eval(&refs, config.b));
        }
        estimate += stats::mean(&values);
        let se = stats::stderr_of_mean(&values);
        variance += se * se;
    }
    Ok((estimate, variance.sqrt()))
}

/// Monte Carlo sizes for the Gibbs joint-moment formula.
#[derive(Debug, Clone, Copy)]
pub struct GibbsMomentSpec {
    /// Integration nodes per partition term.
    pub nodes_per_term: usize,
    /// Poisson replicates behind the shared correlation-function estimator.
    pub rho_reps: usize,
}

impl Default for GibbsMomentSpec {
    fn default() -> Self {
        GibbsMomentSpec {
            nodes_per_term: 400,
            rho_reps: 400,
        }
    }
}

/// Result of [`gibbs_joint_moment`].
#[derive(Debug, Clone)]
pub struct GibbsMomentEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Relative standard error of the shared denominator
    /// `E exp(ν_c G_c(η_a))`.
    pub denominator_rel_stderr: f64,
    pub warnings: Vec<String>,
}

/// `E ∏_j G_j^{m_j}` under the submodel of order `c`:
/// `Σ_σ a^{|σ|} ∫ g_σ ρ_{|σ|} dλ^{|σ|}` with the correlation function
/// estimated through the exponential-moment ratio over a single set of
/// Poisson replicates shared by every node and partition term (common
/// random numbers; the denominator is node-independent).
pub fn gibbs_joint_moment<R: Rng>(
    m: &[usize],
    config: &ModelConfig,
    spec: GibbsMomentSpec,
    rng: &mut R,
) -> Result<GibbsMomentEstimate> {
    check_moment_guard(m)?;
    let c = submodel_order(config)?;
    let nu_c = config.nu[c - 1];
    if spec.nodes_per_term == 0 || spec.rho_reps == 0 {
        return Err(Error::InvalidArgument("Monte Carlo sizes must be >= 1".into()));
    }
    let sizes = base_sizes_from_multiplicities(m);
    let partitions = enumerate_partitions(&sizes)?;
    let mass = config.lambda_total();

    // Shared denominator replicates: eta_r and exp(nu_c G_c(eta_r)).
    let reps: Vec<(Vec<Facet>, f64)> = (0..spec.rho_reps)
        .map(|_| {
            let eta = sample_poisson(rng, config)?;
            let g_c = g_single(&eta, c, config);
            let weight = (nu_c * g_c).exp();
            Ok((eta.facets().to_vec(), weight))
        })
        .collect::<Result<_>>()?;
    let denom: Vec<f64> = reps.iter().map(|(_, w)| w).copied().collect();
    let denom_mean = stats::mean(&denom);
    let denom_rel_stderr = stats::stderr_of_mean(&denom) / denom_mean;

    let mut warnings = Vec::new();
    if denom_rel_stderr > 0.10 {
        warnings.push(format!(
            "denominator relative stderr {denom_rel_stderr:.3} exceeds 10%; prefer series bounds at this intensity"
        ));
    }

    let mut numer_by_rep = vec![0.0f64; spec.rho_reps];
    let mut node_variance = 0.0f64;
    let mut extended: Vec<Facet> = Vec::new();
    for sigma in &partitions {
        let kernel = contract_kernel(&sizes, sigma)?;
        let scale = (config.a * mass).powi(sigma.block_count() as i32);
        let mut node_values = Vec::with_capacity(spec.nodes_per_term);
        for _ in 0..spec.nodes_per_term {
            let nodes: Vec<Facet> = (0..kernel.arity())
                .map(|_| sample_facet(rng, config))
                .collect::<Result<_>>()?;
            let refs: Vec<&Facet> = nodes.iter().collect();
            let g_sigma = kernel.eval(&refs, config.b);
            if g_sigma == 0.0 {
                node_values.push(0.0);
                continue;
            }
            // exp(nu_c G_c(eta_r ∪ nodes)) via incremental insertion.
            let mut numer_sum = 0.0;
            for (r, (eta, weight)) in reps.iter().enumerate() {
                extended.clear();
                extended.extend_from_slice(eta);
                let mut delta = 0.0;
                for node in &nodes {
                    delta += delta_g(&extended, node, c, config);
                    extended.push(node.clone());
                }
                let x = weight * (nu_c * delta).exp();
                numer_by_rep[r] += scale * g_sigma * x / spec.nodes_per_term as f64;
                numer_sum += x;
            }
            let rho_hat = numer_sum / spec.rho_reps as f64 / denom_mean;
            node_values.push(scale * g_sigma * rho_hat);
        }
        let node_se = stats::stderr_of_mean(&node_values);
        node_variance += node_se * node_se;
    }
    let ratio_se = stats::ratio_stderr(&numer_by_rep, &denom);
    let estimate = stats::mean(&numer_by_rep) / denom_mean;
    Ok(GibbsMomentEstimate {
        estimate,
        stderr: (ratio_se * ratio_se + node_variance).sqrt(),
        denominator_rel_stderr: denom_rel_stderr,
        warnings,
    })
}

/// The order `c` of a pure submodel configuration (exactly one active
/// interaction, negative, at index >= 2).
pub fn submodel_order(config: &ModelConfig) -> Result<usize> {
    let active: Vec<usize> = config
        .nu
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| i + 1)
        .collect();
    match active.as_slice() {
        [c] if *c >= 2 && config.nu[c - 1] < 0.0 => Ok(*c),
        _ => Err(Error::InvalidConfig(
            "configuration is not a pure submodel (exactly one nu_c < 0 with c >= 2)".into(),
        )),
    }
}

/// Centered standardized joint moment
/// `E ∏_j G̃_j^{m_j} = a^{−q} Σ_i ∏ C(m_j, i_j) (−1)^{Σ i_j} ∏ mean_j^{i_j}
/// · rawmoment(m − i)` with `q = Σ (j − 1/2) m_j`.
///
/// `raw_moment` supplies `(value, stderr)` for each sub-multi-index; the
/// returned pair propagates those errors linearly.
pub fn centered_joint_moment<F>(
    m: &[usize],
    means: &[f64],
    mut raw_moment: F,
    a: f64,
) -> Result<(f64, f64)>
where
    F: FnMut(&[usize]) -> Result<(f64, f64)>,
{
    if means.len() < m.len() {
        return Err(Error::InvalidArgument("means shorter than the multi-index".into()));
    }
    let q: f64 = m
        .iter()
        .enumerate()
        .map(|(idx, &mj)| (idx as f64 + 0.5) * mj as f64)
        .sum();
    let scale = a.powf(q);
    let mut index = vec![0usize; m.len()];
    let mut value = 0.0;
    let mut stderr = 0.0;
    loop {
        let mut coef = 1.0;
        let mut parity = 0usize;
        for (j, (&i, &mj)) in index.iter().zip(m).enumerate() {
            coef *= stats::binomial(mj as u64, i as u64) * means[j].powi(i as i32);
            parity += i;
        }
        if parity % 2 == 1 {
            coef = -coef;
        }
        let residual: Vec<usize> = m.iter().zip(&index).map(|(&mj, &i)| mj - i).collect();
        if residual.iter().all(|&r| r == 0) {
            value += coef;
        } else {
            let (raw, raw_se) = raw_moment(&residual)?;
            value += coef * raw;
            stderr += (coef * raw_se).abs();
        }
        // Odometer over 0..=m_j.
        let mut pos = 0;
        loop {
            if pos == index.len() {
                return Ok((value / scale, stderr / scale));
            }
            if index[pos] < m[pos] {
                index[pos] += 1;
                break;
            }
            index[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::task_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn partition_counts() {
        assert_eq!(enumerate_partitions(&[1, 1]).unwrap().len(), 2);
        assert_eq!(enumerate_partitions(&[2, 2]).unwrap().len(), 7);
        for k in 1..=6 {
            assert_eq!(enumerate_partitions(&[k]).unwrap().len(), 1);
        }
    }

    #[test]
    fn singleton_bases_count_bell_numbers() {
        let bell = [1usize, 2, 5, 15, 52, 203];
        for (k, &expected) in bell.iter().enumerate() {
            let sizes = vec![1usize; k + 1];
            assert_eq!(enumerate_partitions(&sizes).unwrap().len(), expected);
        }
    }

    #[test]
    fn enumeration_matches_brute_force_predicate() {
        // Every unrestricted partition passing the predicate is enumerated,
        // and everything enumerated passes it.
        for sizes in [vec![2, 2], vec![2, 1, 1], vec![3, 2], vec![2, 2, 2], vec![4, 3]] {
            let k: usize = sizes.iter().sum();
            let all = enumerate_partitions(&vec![1usize; k]).unwrap();
            let expected: Vec<_> = all
                .iter()
                .filter(|p| is_compatible(&p.blocks, &sizes))
                .map(|p| p.blocks.clone())
                .collect();
            let got: Vec<_> = enumerate_partitions(&sizes)
                .unwrap()
                .into_iter()
                .map(|p| p.blocks)
                .collect();
            assert_eq!(got, expected, "sizes {sizes:?}");
        }
    }

    #[test]
    fn enumeration_guard() {
        assert!(enumerate_partitions(&[7, 6]).is_err());
        assert!(enumerate_partitions(&[]).is_err());
    }

    #[test]
    fn contraction_examples() {
        let b = 1.0;
        let u = Facet::new(vec![0.3, 0.4], 1).unwrap();
        let v = Facet::new(vec![0.7, 0.2], 2).unwrap();

        // Two copies of g^(1), split and merged.
        let sizes = base_sizes_from_multiplicities(&[2]);
        let parts = enumerate_partitions(&sizes).unwrap();
        let split = parts.iter().find(|p| p.block_count() == 2).unwrap();
        let merged = parts.iter().find(|p| p.block_count() == 1).unwrap();
        let k_split = contract_kernel(&sizes, split).unwrap();
        let k_merged = contract_kernel(&sizes, merged).unwrap();
        assert_abs_diff_eq!(k_split.eval(&[&u, &v], b), 4.0);
        assert_abs_diff_eq!(k_merged.eval(&[&u], b), 4.0);

        // g^(1) ⊗ g^(2) with the g^(1) slot glued to one g^(2) slot:
        // (u,v) -> g^(1)(u) · g^(2)(u,v).
        let sizes = base_sizes_from_multiplicities(&[1, 1]);
        let parts = enumerate_partitions(&sizes).unwrap();
        let glued = parts
            .iter()
            .find(|p| p.blocks.contains(&vec![0, 1]))
            .unwrap();
        let kernel = contract_kernel(&sizes, glued).unwrap();
        let expected = 2.0 * measure_refs(&[&u, &v], b) / 2.0;
        assert_abs_diff_eq!(kernel.eval(&[&u, &v], b), expected);
    }

    #[test]
    fn contraction_arity_mismatch() {
        let sizes = vec![1, 2];
        let parts = enumerate_partitions(&sizes).unwrap();
        assert!(contract_kernel(&[1, 1], &parts[0]).is_err());
    }

    #[test]
    fn poisson_moment_closed_forms() {
        let cfg = ModelConfig::poisson(2, 1.0, 5.0).unwrap();
        let mut rng = task_rng(30, 0);

        // E G_1: constant kernels, exact.
        let (m1, s1) =
            poisson_joint_moment(&[1], &cfg, BaseMeasure::Full, 200, &mut rng).unwrap();
        assert_abs_diff_eq!(m1, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s1, 0.0, epsilon = 1e-12);

        // E G_1^2 = a^2·4 + a·4 = 120, again exact.
        let (m2, s2) =
            poisson_joint_moment(&[2], &cfg, BaseMeasure::Full, 200, &mut rng).unwrap();
        assert_abs_diff_eq!(m2, 120.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s2, 0.0, epsilon = 1e-12);

        // E G_2 = 25/4 within Monte Carlo error.
        let (m3, s3) =
            poisson_joint_moment(&[0, 1], &cfg, BaseMeasure::Full, 60_000, &mut rng).unwrap();
        assert!((m3 - 6.25).abs() < 4.0 * s3, "E G_2 = {m3} +- {s3}");
    }

    #[test]
    fn poisson_moment_matches_analytic_on_restricted_measure() {
        let cfg = ModelConfig::poisson(3, 1.0, 4.0).unwrap();
        let mut rng = task_rng(31, 0);
        let (m, s) = poisson_joint_moment(&[0, 1], &cfg, BaseMeasure::Restricted(2), 60_000, &mut rng)
            .unwrap();
        let expected = crate::ustats::poisson_mean_g(2, &cfg, BaseMeasure::Restricted(2)).unwrap();
        assert!((m - expected).abs() < 4.0 * s, "{m} vs {expected}");
    }

    #[test]
    fn moment_symmetry_under_block_permutation() {
        // Permuting equal-size base blocks leaves the estimate distribution
        // unchanged; with a fixed seed the partition sums agree exactly
        // because the enumeration is canonical.
        let a = enumerate_partitions(&[2, 2]).unwrap();
        let blocks: Vec<usize> = a.iter().map(|p| p.block_count()).collect();
        let mut sorted = blocks.clone();
        sorted.sort_unstable();
        // |sigma| multiset is invariant: {2,2,3,3,3,3,4}.
        assert_eq!(sorted, vec![2, 2, 3, 3, 3, 3, 4]);
    }

    #[test]
    fn gibbs_moment_recovers_poisson_for_tiny_interaction() {
        let cfg =
            ModelConfig::new(2, 1.0, 3.0, crate::model::Chi::Constant(1.0), vec![0.0, -1e-9])
                .unwrap();
        let mut rng = task_rng(32, 0);
        let spec = GibbsMomentSpec {
            nodes_per_term: 4000,
            rho_reps: 64,
        };
        let est = gibbs_joint_moment(&[0, 1], &cfg, spec, &mut rng).unwrap();
        // Poisson value a^2/4 = 2.25.
        assert!(
            (est.estimate - 2.25).abs() < 4.0 * est.stderr,
            "{} +- {}",
            est.estimate,
            est.stderr
        );
    }

    #[test]
    fn gibbs_moment_shows_repulsion() {
        let cfg = ModelConfig::submodel(2, 1.0, 5.0, crate::model::SubmodelSpec::new(2, -1.0).unwrap())
            .unwrap();
        let mut rng = task_rng(33, 0);
        let est = gibbs_joint_moment(&[0, 1], &cfg, GibbsMomentSpec::default(), &mut rng).unwrap();
        assert!(
            est.estimate + 4.0 * est.stderr < 6.25,
            "Gibbs E G_2 = {} +- {} not below Poisson 6.25",
            est.estimate,
            est.stderr
        );
    }

    #[test]
    fn submodel_order_detection() {
        let cfg = ModelConfig::submodel(3, 1.0, 2.0, crate::model::SubmodelSpec::new(3, -0.5).unwrap())
            .unwrap();
        assert_eq!(submodel_order(&cfg).unwrap(), 3);
        let cfg = ModelConfig::poisson(2, 1.0, 2.0).unwrap();
        assert!(submodel_order(&cfg).is_err());
    }

    #[test]
    fn centered_moment_examples() {
        // First centered moment vanishes.
        let (v, _) = centered_joint_moment(&[1], &[10.0], |_| Ok((10.0, 0.0)), 5.0).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);

        // Var G̃_1 for the planar Poisson process: (E G_1^2 − (E G_1)^2)/a = 4.
        for a in [2.0f64, 5.0, 50.0] {
            let mean = 2.0 * a;
            let raw = move |idx: &[usize]| -> Result<(f64, f64)> {
                match idx {
                    [1] => Ok((2.0 * a, 0.0)),
                    [2] => Ok((4.0 * a * a + 4.0 * a, 0.0)),
                    _ => Err(Error::InvalidArgument("unexpected index".into())),
                }
            };
            let (v, _) = centered_joint_moment(&[2], &[mean], raw, a).unwrap();
            assert_abs_diff_eq!(v, 4.0, epsilon = 1e-9);
        }

        // Restricted measure: E G_1 = a, E G_1^2 = a^2 + 2a, variance 2.
        let a = 7.0;
        let raw = move |idx: &[usize]| -> Result<(f64, f64)> {
            match idx {
                [1] => Ok((a, 0.0)),
                [2] => Ok((a * a + 2.0 * a, 0.0)),
                _ => Err(Error::InvalidArgument("unexpected index".into())),
            }
        };
        let (v, _) = centered_joint_moment(&[2], &[a], raw, a).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-9);
    }
}
