use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Metrics document written by the command-line tools; absent values are
/// `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: Option<f64>,
    pub modularity: Option<f64>,
    pub coverage: Option<f64>,
    pub performance: Option<f64>,
    pub k: Option<usize>,
}

fn check_assignments(g: &Graph, assignments: &[usize]) -> Result<()> {
    if assignments.len() != g.num_nodes() {
        return Err(Error::shape("partition", g.num_nodes(), assignments.len()));
    }
    Ok(())
}

fn intra_edges(g: &Graph, a: &[usize]) -> usize {
    g.edges().iter().filter(|&&(u, v)| a[u] == a[v]).count()
}

/// `Q = Σ_c [ L_c/m − γ (k_c / 2m)² ]`
pub fn modularity(g: &Graph, assignments: &[usize], resolution: f64) -> Result<f64> {
    check_assignments(g, assignments)?;
    let m = g.num_edges();
    if m == 0 {
        return Err(Error::EmptyGraph);
    }
    let k = assignments.iter().max().map_or(0, |x| x + 1);
    let mut intra = vec![0usize; k];
    let mut degree = vec![0usize; k];
    for &(u, v) in g.edges() {
        if assignments[u] == assignments[v] {
            intra[assignments[u]] += 1;
        }
    }
    for (i, &c) in assignments.iter().enumerate() {
        degree[c] += g.neighbors(i).len();
    }
    let m = m as f64;
    Ok((0..k)
        .map(|c| intra[c] as f64 / m - resolution * (degree[c] as f64 / (2.0 * m)).powi(2))
        .sum())
}

/// Fraction of edges that fall inside a community.
pub fn coverage(g: &Graph, assignments: &[usize]) -> Result<f64> {
    check_assignments(g, assignments)?;
    if g.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok(intra_edges(g, assignments) as f64 / g.num_edges() as f64)
}

/// Fraction of node pairs classified correctly: intra-community edges plus
/// inter-community non-edges over all `N(N−1)/2` pairs.
pub fn performance_metric(g: &Graph, assignments: &[usize]) -> Result<f64> {
    check_assignments(g, assignments)?;
    let n = g.num_nodes();
    if n < 2 {
        return Err(Error::InvalidArgument("performance needs at least two nodes".into()));
    }
    let k = assignments.iter().max().map_or(0, |x| x + 1);
    let mut sizes = vec![0usize; k];
    for &c in assignments {
        sizes[c] += 1;
    }
    let pairs = n * (n - 1) / 2;
    let intra_pairs: usize = sizes.iter().map(|s| s * s.saturating_sub(1) / 2).sum();
    let intra = intra_edges(g, assignments);
    let inter_edges = g.num_edges() - intra;
    let inter_non_edges = pairs - intra_pairs - inter_edges;
    Ok((intra + inter_non_edges) as f64 / pairs as f64)
}

/// Modularity of the graph's own labels at resolution 1.
pub fn planted_modularity(g: &Graph) -> Result<f64> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::InvalidArgument("graph has no labels".into()))?;
    modularity(g, labels, 1.0)
}
