//! Coding rates and the graph rate-reduction objective.
//!
//! For embeddings `Z` (`d × N`, one column per node):
//!
//! ```text
//! R(Z)        = ½ logdet(I + d/(N ε²) Z Zᵀ)
//! R_i(Z)      = tr(A_i)/(2N) · logdet(I + d/(tr(A_i) ε²) Z A_i Zᵀ)
//! ΔR(Z)       = 1/(2γ₁) logdet(I + dγ₂/(N ε²) Z Zᵀ)  −  (s/d̄) Σ_{i ∈ sample} R_i(Z)
//! ```
//!
//! where `A_i = diag(a_i)` is node `i`'s membership row, `d̄` the average
//! membership size and `s = N / |sample|` rescales a sampled sum to the full
//! one. Every log-determinant is evaluated on whichever Gram side is smaller.
//! Logs are natural.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{degree_stats, Graph};
use crate::linalg::{gram, logdet_psd, solve_psd, DenseMatrix, GramSide};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateParams {
    pub epsilon: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl Default for RateParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            gamma1: 0.5,
            gamma2: 0.5,
        }
    }
}

impl RateParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("gamma1", self.gamma1), ("gamma2", self.gamma2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// One diagonal membership matrix, stored by its non-zero support.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipGroup {
    node: usize,
    support: Vec<usize>,
    weights: Vec<f64>,
    trace: f64,
}

impl MembershipGroup {
    /// Group with the given sparse weights; zero weights are dropped.
    pub fn new(node: usize, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut pairs: Vec<(usize, f64)> = entries.into_iter().filter(|&(_, w)| w != 0.0).collect();
        pairs.sort_by_key(|&(i, _)| i);
        if let Some(&(i, w)) = pairs.iter().find(|&&(_, w)| !(0.0..=1.0).contains(&w)) {
            return Err(Error::InvalidArgument(format!("membership weight {w} at node {i} outside [0, 1]")));
        }
        let (support, weights): (Vec<usize>, Vec<f64>) = pairs.into_iter().unzip();
        let trace: f64 = weights.iter().sum();
        if trace <= 0.0 {
            return Err(Error::ZeroTraceGroup);
        }
        Ok(Self {
            node,
            support,
            weights,
            trace,
        })
    }

    pub fn from_dense(node: usize, weights: &[f64]) -> Result<Self> {
        Self::new(node, weights.iter().copied().enumerate())
    }

    /// Adjacency row of `node`, plus the node itself when `include_self`.
    /// `None` if the row is empty.
    pub fn from_adjacency(g: &Graph, node: usize, include_self: bool) -> Option<Self> {
        let mut support: Vec<usize> = g.neighbors(node).to_vec();
        if include_self {
            let pos = support.partition_point(|&v| v < node);
            support.insert(pos, node);
        }
        if support.is_empty() {
            return None;
        }
        let weights = vec![1.0; support.len()];
        let trace = support.len() as f64;
        Some(Self {
            node,
            support,
            weights,
            trace,
        })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut w = vec![0.0; n];
        for (&i, &v) in self.support.iter().zip(&self.weights) {
            w[i] = v;
        }
        w
    }

    /// `Z_S · diag(√w_S)`, the only columns that enter `Z A_i Zᵀ`.
    fn weighted_columns(&self, z: &DenseMatrix) -> DenseMatrix {
        let roots: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        DenseMatrix::from_fn(z.rows(), self.support.len(), |r, c| z[(r, self.support[c])] * roots[c])
    }
}

/// The membership groups entering one evaluation of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipSample {
    num_nodes: usize,
    groups: Vec<MembershipGroup>,
    scale: f64,
    avg_degree: f64,
}

impl MembershipSample {
    pub fn new(num_nodes: usize, groups: Vec<MembershipGroup>, scale: f64, avg_degree: f64) -> Result<Self> {
        if let Some(g) = groups.iter().find(|g| g.support.last().is_some_and(|&i| i >= num_nodes)) {
            return Err(Error::InconsistentDimensions(format!(
                "group of node {} references nodes beyond {num_nodes}",
                g.node
            )));
        }
        if !(scale > 0.0 && avg_degree > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scale ({scale}) and average degree ({avg_degree}) must be positive"
            )));
        }
        Ok(Self {
            num_nodes,
            groups,
            scale,
            avg_degree,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn groups(&self) -> &[MembershipGroup] {
        &self.groups
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn avg_degree(&self) -> f64 {
        self.avg_degree
    }
}

fn eligible_groups(g: &Graph, include_self: bool) -> Vec<MembershipGroup> {
    (0..g.num_nodes())
        .filter_map(|i| MembershipGroup::from_adjacency(g, i, include_self))
        .collect()
}

/// Samples `num_samples` membership rows uniformly without replacement from
/// the nodes whose row is non-empty. Sampled groups are kept in node order.
pub fn build_memberships<R: rand::Rng + ?Sized>(
    g: &Graph,
    num_samples: usize,
    include_self: bool,
    rng: &mut R,
) -> Result<MembershipSample> {
    let eligible = eligible_groups(g, include_self);
    if eligible.is_empty() {
        return Err(Error::NoEligibleNodes);
    }
    if num_samples == 0 || num_samples > eligible.len() {
        return Err(Error::InvalidArgument(format!(
            "num_samples must be in 1..={}, got {num_samples}",
            eligible.len()
        )));
    }
    let mut picked = index::sample(rng, eligible.len(), num_samples).into_vec();
    picked.sort_unstable();
    let mut slots: Vec<Option<MembershipGroup>> = eligible.into_iter().map(Some).collect();
    let groups = picked.into_iter().map(|i| slots[i].take().expect("distinct")).collect();
    MembershipSample::new(
        g.num_nodes(),
        groups,
        g.num_nodes() as f64 / num_samples as f64,
        degree_stats(g, include_self).avg_degree,
    )
}

/// Every eligible membership row, no sampling.
pub fn all_memberships(g: &Graph, include_self: bool) -> Result<MembershipSample> {
    let groups = eligible_groups(g, include_self);
    if groups.is_empty() {
        return Err(Error::NoEligibleNodes);
    }
    let scale = g.num_nodes() as f64 / groups.len() as f64;
    MembershipSample::new(g.num_nodes(), groups, scale, degree_stats(g, include_self).avg_degree)
}

/// `logdet(I + α Y Yᵀ)` on the smaller Gram side.
fn regularized_logdet(y: &DenseMatrix, alpha: f64) -> Result<f64> {
    let side = GramSide::smaller(y.rows(), y.cols());
    logdet_psd(&gram(y, side).identity_plus_scaled(alpha))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")))
    }
}

/// `R(Z, ε) = ½ logdet(I + d/(N ε²) Z Zᵀ)`
pub fn coding_rate(z: &DenseMatrix, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let (d, n) = z.shape();
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("coding rate of an empty {d}x{n} matrix")));
    }
    let alpha = d as f64 / (n as f64 * epsilon * epsilon);
    Ok(0.5 * regularized_logdet(z, alpha)?)
}

fn group_rate(z: &DenseMatrix, group: &MembershipGroup, epsilon: f64) -> Result<f64> {
    let (d, n) = z.shape();
    let y = group.weighted_columns(z);
    let alpha = d as f64 / (group.trace * epsilon * epsilon);
    Ok(group.trace / (2.0 * n as f64) * regularized_logdet(&y, alpha)?)
}

/// `tr(Π)/(2N) · logdet(I + d/(tr(Π) ε²) Z Π Zᵀ)` with `Π = diag(weights)`.
pub fn group_coding_rate(z: &DenseMatrix, weights: &[f64], epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    if weights.len() != z.cols() {
        return Err(Error::shape("group_coding_rate", z.cols(), weights.len()));
    }
    group_rate(z, &MembershipGroup::from_dense(0, weights)?, epsilon)
}

/// The two halves of the objective; `value() = expansion − compression`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTerms {
    /// `1/(2γ₁) logdet(I + dγ₂/(N ε²) Z Zᵀ)`
    pub expansion: f64,
    /// `(s/d̄) Σ R_i(Z)`
    pub compression: f64,
}

impl RateTerms {
    pub fn value(&self) -> f64 {
        self.expansion - self.compression
    }
}

fn check_inputs(z: &DenseMatrix, sample: &MembershipSample, params: &RateParams) -> Result<()> {
    params.validate()?;
    if z.cols() != sample.num_nodes {
        return Err(Error::shape("rate_reduction", format!("{} columns", sample.num_nodes), z.cols()));
    }
    if z.rows() == 0 {
        return Err(Error::InvalidArgument("embedding dimension is zero".into()));
    }
    Ok(())
}

fn expansion_alpha(d: usize, n: usize, params: &RateParams) -> f64 {
    d as f64 * params.gamma2 / (n as f64 * params.epsilon * params.epsilon)
}

pub fn rate_reduction_terms(z: &DenseMatrix, sample: &MembershipSample, params: &RateParams) -> Result<RateTerms> {
    check_inputs(z, sample, params)?;
    let (d, n) = z.shape();
    let expansion = 1.0 / (2.0 * params.gamma1) * regularized_logdet(z, expansion_alpha(d, n, params))?;
    let mut sum = 0.0;
    for group in &sample.groups {
        sum += group_rate(z, group, params.epsilon)?;
    }
    Ok(RateTerms {
        expansion,
        compression: sample.scale / sample.avg_degree * sum,
    })
}

pub fn rate_reduction(z: &DenseMatrix, sample: &MembershipSample, params: &RateParams) -> Result<f64> {
    rate_reduction_terms(z, sample, params).map(|t| t.value())
}

/// Which side the `(I + α Y Yᵀ)⁻¹ Y` products are solved on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseRoute {
    /// Per term, whichever of the two systems is smaller.
    Auto,
    /// `(I + α Y Yᵀ)⁻¹ Y`, a `d × d` system
    FeatureSide,
    /// `Y (I + α Yᵀ Y)⁻¹`, a `cols(Y) × cols(Y)` system
    NodeSide,
}

/// `(I + α Y Yᵀ)⁻¹ Y`
fn resolvent_times(y: &DenseMatrix, alpha: f64, route: InverseRoute) -> Result<DenseMatrix> {
    let side = match route {
        InverseRoute::Auto => GramSide::smaller(y.rows(), y.cols()),
        InverseRoute::FeatureSide => GramSide::FeatureSide,
        InverseRoute::NodeSide => GramSide::NodeSide,
    };
    let system = gram(y, side).identity_plus_scaled(alpha);
    match side {
        GramSide::FeatureSide => solve_psd(&system, y),
        GramSide::NodeSide => Ok(solve_psd(&system, &y.transpose())?.transpose()),
    }
}

/// `∂ΔR/∂Z`, `d × N`.
pub fn rate_reduction_grad(z: &DenseMatrix, sample: &MembershipSample, params: &RateParams) -> Result<DenseMatrix> {
    rate_reduction_grad_via(z, sample, params, InverseRoute::Auto)
}

pub fn rate_reduction_grad_via(
    z: &DenseMatrix,
    sample: &MembershipSample,
    params: &RateParams,
    route: InverseRoute,
) -> Result<DenseMatrix> {
    check_inputs(z, sample, params)?;
    let (d, n) = z.shape();
    let alpha = expansion_alpha(d, n, params);
    let mut grad = resolvent_times(z, alpha, route)?.scale(alpha / params.gamma1);

    let weight = sample.scale / sample.avg_degree;
    let eps2 = params.epsilon * params.epsilon;
    for group in &sample.groups {
        let c = d as f64 / (group.trace * eps2);
        let coef = weight * group.trace / (2.0 * n as f64) * 2.0 * c;
        let y = group.weighted_columns(z);
        let g = resolvent_times(&y, c, route)?;
        for (j, (&node, &w)) in group.support.iter().zip(&group.weights).enumerate() {
            let root = w.sqrt();
            for r in 0..d {
                grad[(r, node)] -= coef * root * g[(r, j)];
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::linalg::svd;
    use crate::seeded_rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random(d: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut rng = seeded_rng(seed, 99);
        DenseMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn path_graph(n: usize) -> Graph {
        Graph::new(n, (1..n).map(|i| (i - 1, i)), DenseMatrix::zeros(1, n), None, None).unwrap()
    }

    #[test]
    fn coding_rate_examples() {
        assert_eq!(coding_rate(&DenseMatrix::zeros(3, 5), 0.05).unwrap(), 0.0);
        let r = coding_rate(&DenseMatrix::identity(2), 0.05).unwrap();
        assert_relative_eq!(r, 401f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn coding_rate_matches_singular_values() {
        let z = random(4, 10, 1);
        let eps = 0.3;
        let alpha = 4.0 / (10.0 * eps * eps);
        let oracle: f64 = svd(&z)
            .unwrap()
            .singular_values
            .iter()
            .map(|s| 0.5 * (1.0 + alpha * s * s).ln())
            .sum();
        assert!((coding_rate(&z, eps).unwrap() - oracle).abs() < 1e-8);
    }

    #[test]
    fn coding_rate_grows_with_each_singular_value() {
        for seed in 0..10 {
            let z = random(3, 7, seed);
            let s = svd(&z).unwrap();
            for k in 0..3 {
                let mut sv = s.singular_values.clone();
                sv[k] *= 1.5;
                let inflated = crate::linalg::Svd {
                    singular_values: sv,
                    ..s.clone()
                }
                .reconstruct();
                assert!(coding_rate(&inflated, 0.5).unwrap() >= coding_rate(&z, 0.5).unwrap());
            }
        }
    }

    #[test]
    fn group_rate_examples() {
        let z = random(3, 6, 2);
        let full = group_coding_rate(&z, &[1.0; 6], 0.05).unwrap();
        assert_eq!(full, coding_rate(&z, 0.05).unwrap());

        let r = group_coding_rate(&DenseMatrix::identity(2), &[1.0, 0.0], 0.05).unwrap();
        assert_relative_eq!(r, 0.25 * 801f64.ln(), epsilon = 1e-12);

        assert!(matches!(
            group_coding_rate(&z, &[0.0; 6], 0.05),
            Err(Error::ZeroTraceGroup)
        ));
        assert!(matches!(
            group_coding_rate(&z, &[1.0; 5], 0.05),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn fractional_group_weights_match_dense_formula() {
        let z = random(3, 5, 3);
        let w = [0.2, 0.0, 1.0, 0.7, 0.4];
        let tr: f64 = w.iter().sum();
        let zpz = z.matmul(&DenseMatrix::from_diag(&w)).matmul_tr(&z);
        let oracle = tr / 10.0 * logdet_psd(&zpz.identity_plus_scaled(3.0 / (tr * 0.01))).unwrap();
        assert!((group_coding_rate(&z, &w, 0.1).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn memberships_full_sample() {
        let g = path_graph(5);
        let mut rng = seeded_rng(0, 0);
        let s = build_memberships(&g, 5, true, &mut rng).unwrap();
        assert_eq!(s.groups().len(), 5);
        assert_eq!(s.scale(), 1.0);
        assert_eq!(s.groups()[1].support(), &[0, 1, 2]);
        assert_eq!(s.avg_degree(), degree_stats(&g, true).avg_degree);
    }

    #[test]
    fn isolated_node_is_never_sampled() {
        let g = Graph::new(4, [(0, 1), (1, 2)], DenseMatrix::zeros(1, 4), None, None).unwrap();
        for seed in 0..20 {
            let s = build_memberships(&g, 2, false, &mut seeded_rng(seed, 0)).unwrap();
            assert!(s.groups().iter().all(|grp| grp.node() != 3));
            assert_eq!(s.scale(), 2.0);
        }
        assert!(build_memberships(&g, 4, false, &mut seeded_rng(0, 0)).is_err());
        let empty = Graph::new(3, [], DenseMatrix::zeros(1, 3), None, None).unwrap();
        assert!(matches!(
            build_memberships(&empty, 1, false, &mut seeded_rng(0, 0)),
            Err(Error::NoEligibleNodes)
        ));
    }

    #[test]
    fn sampled_group_sum_is_unbiased() {
        let g = Graph::new(
            7,
            [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 6), (6, 3)],
            DenseMatrix::zeros(1, 7),
            None,
            None,
        )
        .unwrap();
        let z = random(3, 7, 4);
        let eps = 0.5;
        let full: f64 = (0..7)
            .map(|i| group_coding_rate(&z, &MembershipGroup::from_adjacency(&g, i, true).unwrap().to_dense(7), eps).unwrap())
            .sum();
        let mut rng = seeded_rng(42, 0);
        let trials = 10_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let s = build_memberships(&g, 3, true, &mut rng).unwrap();
            let sum: f64 = s.groups().iter().map(|grp| group_rate(&z, grp, eps).unwrap()).sum();
            acc += s.scale() * sum;
        }
        let mean = acc / trials as f64;
        assert!((mean - full).abs() / full < 0.02, "{mean} vs {full}");
    }

    #[test]
    fn single_full_group_has_zero_reduction() {
        let z = random(4, 9, 5);
        let sample = MembershipSample::new(9, vec![MembershipGroup::from_dense(0, &[1.0; 9]).unwrap()], 1.0, 1.0).unwrap();
        let params = RateParams {
            epsilon: 0.05,
            gamma1: 1.0,
            gamma2: 1.0,
        };
        assert!(rate_reduction(&z, &sample, &params).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gamma1_scales_expansion_term() {
        let z = random(3, 8, 6);
        let g = path_graph(8);
        let sample = all_memberships(&g, true).unwrap();
        let p1 = RateParams {
            gamma1: 1.0,
            ..RateParams::default()
        };
        let half = RateParams {
            gamma1: 0.5,
            ..p1
        };
        let t1 = rate_reduction_terms(&z, &sample, &p1).unwrap();
        let diff = rate_reduction(&z, &sample, &half).unwrap() - rate_reduction(&z, &sample, &p1).unwrap();
        assert!((diff - t1.expansion).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_pair_beats_collinear_pair() {
        let groups = vec![
            MembershipGroup::from_dense(0, &[1.0, 0.0]).unwrap(),
            MembershipGroup::from_dense(1, &[0.0, 1.0]).unwrap(),
        ];
        let sample = MembershipSample::new(2, groups, 1.0, 1.0).unwrap();
        let params = RateParams::default();
        let orth = DenseMatrix::identity(2);
        let same = DenseMatrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]]);
        assert!(rate_reduction(&orth, &sample, &params).unwrap() > rate_reduction(&same, &sample, &params).unwrap());
    }

    #[test]
    fn full_sample_matches_term_by_term_formula() {
        let g = path_graph(6);
        let z = random(3, 6, 7);
        let eps = 0.2;
        let params = RateParams {
            epsilon: eps,
            gamma1: 1.0,
            gamma2: 1.0,
        };
        let sample = all_memberships(&g, false).unwrap();
        let dbar = degree_stats(&g, false).avg_degree;
        let mut groups = 0.0;
        for i in 0..6 {
            let mut w = vec![0.0; 6];
            for &j in g.neighbors(i) {
                w[j] = 1.0;
            }
            groups += group_coding_rate(&z, &w, eps).unwrap();
        }
        let oracle = coding_rate(&z, eps).unwrap() - groups / dbar;
        assert!((rate_reduction(&z, &sample, &params).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn gradient_vanishes_at_zero() {
        let g = path_graph(4);
        let sample = all_memberships(&g, true).unwrap();
        let grad = rate_reduction_grad(&DenseMatrix::zeros(3, 4), &sample, &RateParams::default()).unwrap();
        assert_eq!(grad.max_abs(), 0.0);
    }

    #[test]
    fn gradient_routes_agree() {
        let g = path_graph(8);
        let z = random(5, 8, 8);
        let sample = all_memberships(&g, true).unwrap();
        let p = RateParams::default();
        let a = rate_reduction_grad_via(&z, &sample, &p, InverseRoute::FeatureSide).unwrap();
        let b = rate_reduction_grad_via(&z, &sample, &p, InverseRoute::NodeSide).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-9 * a.max_abs().max(1.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = Graph::new(8, [(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7), (3, 4), (0, 7)], DenseMatrix::zeros(1, 8), None, None).unwrap();
        let z = random(5, 8, 9);
        let sample = all_memberships(&g, true).unwrap();
        let p = RateParams {
            epsilon: 0.5,
            ..RateParams::default()
        };
        let grad = rate_reduction_grad(&z, &sample, &p).unwrap();
        let h = 1e-5;
        for r in 0..5 {
            for c in 0..8 {
                let mut plus = z.clone();
                plus[(r, c)] += h;
                let mut minus = z.clone();
                minus[(r, c)] -= h;
                let fd = (rate_reduction(&plus, &sample, &p).unwrap() - rate_reduction(&minus, &sample, &p).unwrap()) / (2.0 * h);
                let err = (fd - grad[(r, c)]).abs() / grad[(r, c)].abs().max(1.0);
                assert!(err < 1e-5, "({r},{c}): {fd} vs {}", grad[(r, c)]);
            }
        }
    }
}
