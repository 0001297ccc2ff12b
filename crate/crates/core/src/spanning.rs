//! Edge appearance probabilities for the reweighted updates.

use nalgebra::DMatrix;

use crate::error::{MrfError, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Valid point in the spanning tree polytope.
    Trw,
    /// All weights fixed to 1; ordinary sum-product. Not a valid spanning
    /// tree polytope point on graphs with cycles, kept for comparison runs.
    BpHeuristic,
}

/// Per-edge appearance probabilities `rho_st` in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    rho: Vec<f64>,
    mode: WeightMode,
}

impl EdgeWeights {
    pub fn trw(graph: &Graph, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != graph.num_edges() {
            return Err(MrfError::InvalidEdgeWeights("length mismatch".into()));
        }
        if rho.iter().any(|&r| !(r > 0.0 && r <= 1.0 + 1e-12)) {
            return Err(MrfError::InvalidEdgeWeights(
                "weights must lie in (0, 1]".into(),
            ));
        }
        let sum: f64 = rho.iter().sum();
        let want = (graph.num_nodes() - 1) as f64;
        if (sum - want).abs() > 1e-9 {
            return Err(MrfError::InvalidEdgeWeights(format!(
                "weights sum to {sum}, spanning tree polytope requires {want}"
            )));
        }
        Ok(EdgeWeights { rho, mode: WeightMode::Trw })
    }

    pub fn bp_heuristic(graph: &Graph) -> Self {
        EdgeWeights { rho: vec![1.0; graph.num_edges()], mode: WeightMode::BpHeuristic }
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn get(&self, e: usize) -> f64 {
        self.rho[e]
    }
}

/// Probability that each edge appears in a uniformly random spanning tree,
/// via the matrix-tree theorem: for unit conductances this is the effective
/// resistance across the edge. Weights sum to `N - 1` (Foster's theorem).
pub fn uniform_spanning_tree_edge_probs(graph: &Graph) -> Result<EdgeWeights> {
    let n = graph.num_nodes();
    if graph.is_tree() {
        return EdgeWeights::trw(graph, vec![1.0; graph.num_edges()]);
    }
    // Grounded Laplacian (node 0 removed) is positive definite on a
    // connected graph.
    let mut l = DMatrix::<f64>::zeros(n - 1, n - 1);
    for &(s, t) in graph.edges() {
        if s > 0 {
            l[(s - 1, s - 1)] += 1.0;
        }
        if t > 0 {
            l[(t - 1, t - 1)] += 1.0;
        }
        if s > 0 && t > 0 {
            l[(s - 1, t - 1)] -= 1.0;
            l[(t - 1, s - 1)] -= 1.0;
        }
    }
    let inv = l
        .clone()
        .cholesky()
        .ok_or_else(|| MrfError::InvalidGraph("Laplacian not positive definite".into()))?
        .inverse();
    let rho: Vec<f64> = graph
        .edges()
        .iter()
        .map(|&(s, t)| match (s, t) {
            (0, t) => inv[(t - 1, t - 1)],
            (s, t) => inv[(s - 1, s - 1)] + inv[(t - 1, t - 1)] - 2.0 * inv[(s - 1, t - 1)],
        })
        .collect();
    // Clamp roundoff, then rescale so the polytope identity holds exactly
    // enough for the strict constructor.
    let sum: f64 = rho.iter().sum();
    let want = (n - 1) as f64;
    let rho = rho.into_iter().map(|r| r.clamp(1e-12, 1.0) * want / sum).collect();
    EdgeWeights::trw(graph, rho)
}
