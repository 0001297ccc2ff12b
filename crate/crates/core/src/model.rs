//! Exponential-family parameterization of pairwise multinomial MRFs.
//!
//! Potentials are stored in overcomplete form: a full `m`-vector per node and
//! a full `m x m` table per edge. The minimal (state-0 excluded) coordinates
//! used for Hessians and asymptotics are obtained via [`ExponentialParams::canonical`]
//! and [`MinimalLayout`].

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{MrfError, Result};
use crate::graph::{Graph, GridShape};

/// One state label per node, each in `{0, ..., m-1}`.
pub type Configuration = Vec<usize>;

/// Node and edge potential tables defining `p(x) ∝ exp(Σ θ_s(x_s) + Σ θ_st(x_s, x_t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialParams {
    graph: Arc<Graph>,
    num_states: usize,
    /// N tables of m entries.
    node: Vec<Vec<f64>>,
    /// |E| tables of m*m entries, row-major in the state of the first endpoint.
    edge: Vec<Vec<f64>>,
}

impl ExponentialParams {
    pub fn zeros(graph: Arc<Graph>, num_states: usize) -> Result<Self> {
        if num_states < 2 {
            return Err(MrfError::InvalidArgument("num_states must be >= 2".into()));
        }
        let node = vec![vec![0.0; num_states]; graph.num_nodes()];
        let edge = vec![vec![0.0; num_states * num_states]; graph.num_edges()];
        Ok(ExponentialParams { graph, num_states, node, edge })
    }

    pub fn from_tables(
        graph: Arc<Graph>,
        num_states: usize,
        node: Vec<Vec<f64>>,
        edge: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if node.len() != graph.num_nodes() || edge.len() != graph.num_edges() {
            return Err(MrfError::ShapeMismatch("table count does not match graph".into()));
        }
        if node.iter().any(|t| t.len() != num_states)
            || edge.iter().any(|t| t.len() != num_states * num_states)
        {
            return Err(MrfError::ShapeMismatch("table size does not match num_states".into()));
        }
        let finite = node.iter().flatten().chain(edge.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(MrfError::InvalidArgument("non-finite potential entry".into()));
        }
        Ok(ExponentialParams { graph, num_states, node, edge })
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn node(&self, s: usize) -> &[f64] {
        &self.node[s]
    }

    pub fn node_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.node[s]
    }

    /// Edge potential table for edge index `e`; entry `(j, k)` is at `j * m + k`
    /// where `j` indexes the smaller endpoint of the edge.
    pub fn edge_table(&self, e: usize) -> &[f64] {
        &self.edge[e]
    }

    pub fn edge_table_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.edge[e]
    }

    pub fn edge_entry(&self, e: usize, j: usize, k: usize) -> f64 {
        self.edge[e][j * self.num_states + k]
    }

    /// `Σ_s θ_s(x_s) + Σ_(s,t) θ_st(x_s, x_t)`.
    pub fn energy(&self, x: &Configuration) -> Result<f64> {
        if x.len() != self.graph.num_nodes() {
            return Err(MrfError::ShapeMismatch(format!(
                "configuration length {} != {} nodes",
                x.len(),
                self.graph.num_nodes()
            )));
        }
        if x.iter().any(|&xs| xs >= self.num_states) {
            return Err(MrfError::ShapeMismatch("state label out of range".into()));
        }
        let mut e = 0.0;
        for (s, pot) in self.node.iter().enumerate() {
            e += pot[x[s]];
        }
        for (ei, &(s, t)) in self.graph.edges().iter().enumerate() {
            e += self.edge[ei][x[s] * self.num_states + x[t]];
        }
        Ok(e)
    }

    /// Equivalent parameters with state-0 entries (and row/column 0 of each
    /// edge table) zeroed. The induced distribution is unchanged; only a
    /// constant is absorbed into the log partition function.
    pub fn canonical(&self) -> Self {
        let m = self.num_states;
        let mut out = self.clone();
        for t in out.edge.iter_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        for t in out.node.iter_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        for s in 0..self.graph.num_nodes() {
            for j in 1..m {
                out.node[s][j] = self.node[s][j] - self.node[s][0];
            }
        }
        for (ei, &(s, t)) in self.graph.edges().iter().enumerate() {
            let tab = &self.edge[ei];
            for j in 1..m {
                for k in 1..m {
                    out.edge[ei][j * m + k] =
                        tab[j * m + k] - tab[j * m] - tab[k] + tab[0];
                }
            }
            // Row and column effects fold into the incident node potentials.
            for j in 1..m {
                out.node[s][j] += tab[j * m] - tab[0];
                out.node[t][j] += tab[j] - tab[0];
            }
        }
        out
    }

    /// Minimal-coordinate vector (state 0 excluded) of the canonical form.
    pub fn to_minimal(&self) -> DVector<f64> {
        let canon = self.canonical();
        let layout = MinimalLayout::new(&self.graph, self.num_states);
        let mut v = DVector::zeros(layout.dim());
        let m = self.num_states;
        for s in 0..self.graph.num_nodes() {
            for j in 1..m {
                v[layout.node_index(s, j)] = canon.node[s][j];
            }
        }
        for e in 0..self.graph.num_edges() {
            for j in 1..m {
                for k in 1..m {
                    v[layout.edge_index(e, j, k)] = canon.edge[e][j * m + k];
                }
            }
        }
        v
    }

    pub fn from_minimal(graph: Arc<Graph>, num_states: usize, v: &DVector<f64>) -> Result<Self> {
        let layout = MinimalLayout::new(&graph, num_states);
        if v.len() != layout.dim() {
            return Err(MrfError::ShapeMismatch(format!(
                "minimal vector length {} != dimension {}",
                v.len(),
                layout.dim()
            )));
        }
        let mut p = Self::zeros(graph, num_states)?;
        for s in 0..p.graph.num_nodes() {
            for j in 1..num_states {
                p.node[s][j] = v[layout.node_index(s, j)];
            }
        }
        for e in 0..p.graph.num_edges() {
            for j in 1..num_states {
                for k in 1..num_states {
                    p.edge[e][j * num_states + k] = v[layout.edge_index(e, j, k)];
                }
            }
        }
        Ok(p)
    }

    /// Entrywise sum, e.g. for combining a fitted model with an observation
    /// offset. Both operands must share the graph and state count.
    pub fn combined(&self, other: &ExponentialParams) -> Result<ExponentialParams> {
        if !Arc::ptr_eq(&self.graph, &other.graph) && self.graph != other.graph {
            return Err(MrfError::ShapeMismatch("graphs differ".into()));
        }
        if self.num_states != other.num_states {
            return Err(MrfError::ShapeMismatch("state counts differ".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.node.iter_mut().zip(&other.node) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in out.edge.iter_mut().zip(&other.edge) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(out)
    }

    /// Serialize in the plain-text model format: header `N m |E|`, optional
    /// `grid rows cols` line, edge list, node tables, then edge tables,
    /// floats at 17 significant digits so the round trip is exact.
    pub fn to_model_string(&self) -> String {
        let g = &self.graph;
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", g.num_nodes(), self.num_states, g.num_edges());
        if let Some(GridShape { rows, cols }) = g.grid_shape() {
            let _ = writeln!(out, "grid {rows} {cols}");
        }
        for &(s, t) in g.edges() {
            let _ = writeln!(out, "{s} {t}");
        }
        for t in &self.node {
            let _ = writeln!(out, "{}", join_floats(t));
        }
        for t in &self.edge {
            let _ = writeln!(out, "{}", join_floats(t));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_model_string())?;
        Ok(())
    }

    pub fn from_model_string(text: &str, origin: &str) -> Result<Self> {
        let perr = |msg: &str| MrfError::Parse { path: origin.to_string(), msg: msg.to_string() };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| perr("missing header"))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| perr("bad header")))
            .collect::<Result<_>>()?;
        let [n, m, ne] = head[..] else {
            return Err(perr("header must be `N m |E|`"));
        };
        let mut lines = lines.peekable();
        let grid = match lines.peek() {
            Some(l) if l.starts_with("grid ") => {
                let toks: Vec<usize> = l[5..]
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| perr("bad grid line")))
                    .collect::<Result<_>>()?;
                lines.next();
                let [rows, cols] = toks[..] else {
                    return Err(perr("grid line must be `grid rows cols`"));
                };
                Some((rows, cols))
            }
            _ => None,
        };
        let mut edges = Vec::with_capacity(ne);
        for _ in 0..ne {
            let l = lines.next().ok_or_else(|| perr("truncated edge list"))?;
            let toks: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| perr("bad edge line")))
                .collect::<Result<_>>()?;
            let [s, t] = toks[..] else {
                return Err(perr("edge line must be `s t`"));
            };
            edges.push((s, t));
        }
        let graph = match grid {
            Some((rows, cols)) => Graph::grid(rows, cols)?,
            None => Graph::new(n, edges.clone())?,
        };
        if graph.num_nodes() != n || graph.num_edges() != ne {
            return Err(perr("header inconsistent with edge list"));
        }
        let mut read_table = |len: usize| -> Result<Vec<f64>> {
            let l = lines.next().ok_or_else(|| perr("truncated potential tables"))?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| perr("bad float")))
                .collect::<Result<_>>()?;
            if vals.len() != len {
                return Err(perr("wrong table length"));
            }
            Ok(vals)
        };
        let node: Vec<Vec<f64>> = (0..n).map(|_| read_table(m)).collect::<Result<_>>()?;
        let edge: Vec<Vec<f64>> = (0..ne).map(|_| read_table(m * m)).collect::<Result<_>>()?;
        Self::from_tables(Arc::new(graph), m, node, edge)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_model_string(&text, &path.display().to_string())
    }
}

fn join_floats(vals: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v:.16e}");
    }
    s
}

/// Index map for the minimal coordinates: node blocks first
/// (`j = 1..m` per node), then edge blocks (`(j, k) ∈ {1..m}²` per edge).
/// Dimension `d = N(m-1) + |E|(m-1)²`.
#[derive(Debug, Clone, Copy)]
pub struct MinimalLayout {
    num_nodes: usize,
    num_edges: usize,
    num_states: usize,
}

impl MinimalLayout {
    pub fn new(graph: &Graph, num_states: usize) -> Self {
        MinimalLayout {
            num_nodes: graph.num_nodes(),
            num_edges: graph.num_edges(),
            num_states,
        }
    }

    pub fn dim(&self) -> usize {
        let k = self.num_states - 1;
        self.num_nodes * k + self.num_edges * k * k
    }

    pub fn node_index(&self, s: usize, j: usize) -> usize {
        debug_assert!((1..self.num_states).contains(&j));
        s * (self.num_states - 1) + (j - 1)
    }

    pub fn edge_index(&self, e: usize, j: usize, k: usize) -> usize {
        debug_assert!((1..self.num_states).contains(&j));
        debug_assert!((1..self.num_states).contains(&k));
        let b = self.num_states - 1;
        self.num_nodes * b + e * b * b + (j - 1) * b + (k - 1)
    }
}

/// Provenance tag for a marginal set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalKind {
    /// True marginals of some distribution.
    Exact,
    /// Element of the local polytope produced by message passing.
    Pseudo,
    /// Frequency tables computed from samples.
    Empirical,
}

/// Node and edge probability tables.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSet {
    graph: Arc<Graph>,
    num_states: usize,
    kind: MarginalKind,
    node: Vec<Vec<f64>>,
    edge: Vec<Vec<f64>>,
}

impl MarginalSet {
    pub fn new(
        graph: Arc<Graph>,
        num_states: usize,
        kind: MarginalKind,
        node: Vec<Vec<f64>>,
        edge: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if node.len() != graph.num_nodes() || edge.len() != graph.num_edges() {
            return Err(MrfError::ShapeMismatch("table count does not match graph".into()));
        }
        if node.iter().any(|t| t.len() != num_states)
            || edge.iter().any(|t| t.len() != num_states * num_states)
        {
            return Err(MrfError::ShapeMismatch("table size does not match num_states".into()));
        }
        Ok(MarginalSet { graph, num_states, kind, node, edge })
    }

    pub fn uniform(graph: Arc<Graph>, num_states: usize, kind: MarginalKind) -> Self {
        let m = num_states as f64;
        let node = vec![vec![1.0 / m; num_states]; graph.num_nodes()];
        let edge = vec![vec![1.0 / (m * m); num_states * num_states]; graph.num_edges()];
        MarginalSet { graph, num_states, kind, node, edge }
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn kind(&self) -> MarginalKind {
        self.kind
    }

    pub fn set_kind(&mut self, kind: MarginalKind) {
        self.kind = kind;
    }

    pub fn node(&self, s: usize) -> &[f64] {
        &self.node[s]
    }

    pub fn node_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.node[s]
    }

    pub fn edge_table(&self, e: usize) -> &[f64] {
        &self.edge[e]
    }

    pub fn edge_table_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.edge[e]
    }

    pub fn edge_entry(&self, e: usize, j: usize, k: usize) -> f64 {
        self.edge[e][j * self.num_states + k]
    }

    /// Minimal-coordinate mean vector: `P(X_s = j)` and `P(X_s = j, X_t = k)`
    /// for `j, k >= 1`, in [`MinimalLayout`] order.
    pub fn to_minimal(&self) -> DVector<f64> {
        let layout = MinimalLayout::new(&self.graph, self.num_states);
        let mut v = DVector::zeros(layout.dim());
        let m = self.num_states;
        for s in 0..self.graph.num_nodes() {
            for j in 1..m {
                v[layout.node_index(s, j)] = self.node[s][j];
            }
        }
        for e in 0..self.graph.num_edges() {
            for j in 1..m {
                for k in 1..m {
                    v[layout.edge_index(e, j, k)] = self.edge[e][j * m + k];
                }
            }
        }
        v
    }

    /// Flat overcomplete vector (all node entries then all edge entries), for
    /// inner products `θᵀτ` in overcomplete coordinates.
    pub fn to_overcomplete(&self) -> Vec<f64> {
        self.node.iter().flatten().chain(self.edge.iter().flatten()).copied().collect()
    }

    /// Max-norm distance over all node and edge entries.
    pub fn max_abs_diff(&self, other: &MarginalSet) -> f64 {
        let mut d: f64 = 0.0;
        for (a, b) in self.node.iter().zip(&other.node) {
            for (x, y) in a.iter().zip(b) {
                d = d.max((x - y).abs());
            }
        }
        for (a, b) in self.edge.iter().zip(&other.edge) {
            for (x, y) in a.iter().zip(b) {
                d = d.max((x - y).abs());
            }
        }
        d
    }

    /// Euclidean norm of the difference in overcomplete coordinates.
    pub fn l2_diff(&self, other: &MarginalSet) -> f64 {
        let mut sum = 0.0;
        for (a, b) in self.node.iter().zip(&other.node) {
            for (x, y) in a.iter().zip(b) {
                sum += (x - y) * (x - y);
            }
        }
        for (a, b) in self.edge.iter().zip(&other.edge) {
            for (x, y) in a.iter().zip(b) {
                sum += (x - y) * (x - y);
            }
        }
        sum.sqrt()
    }
}

/// `θᵀτ` in overcomplete coordinates.
pub fn inner_product(params: &ExponentialParams, marginals: &MarginalSet) -> f64 {
    let m = params.num_states();
    let mut acc = 0.0;
    for s in 0..params.graph().num_nodes() {
        for j in 0..m {
            acc += params.node(s)[j] * marginals.node(s)[j];
        }
    }
    for e in 0..params.graph().num_edges() {
        for jk in 0..m * m {
            acc += params.edge_table(e)[jk] * marginals.edge_table(e)[jk];
        }
    }
    acc
}
