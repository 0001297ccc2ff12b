//! Undirected graphs with optional grid structure.

use crate::error::{MrfError, Result};

/// Grid dimensions recorded when a graph is built as a 2-D lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

/// Connected undirected graph. Edges are stored as `(s, t)` with `s < t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    grid: Option<GridShape>,
}

impl Graph {
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::build(num_nodes, edges, None)
    }

    /// rows x cols 4-nearest-neighbor lattice. Node `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MrfError::InvalidGraph("empty grid".into()));
        }
        let idx = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((idx(r, c), idx(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((idx(r, c), idx(r + 1, c)));
                }
            }
        }
        Self::build(rows * cols, edges, Some(GridShape { rows, cols }))
    }

    /// Path graph 0-1-2-...-(n-1).
    pub fn path(num_nodes: usize) -> Result<Self> {
        let edges = (0..num_nodes.saturating_sub(1)).map(|s| (s, s + 1)).collect();
        Self::build(num_nodes, edges, None)
    }

    /// Single cycle 0-1-...-(n-1)-0.
    pub fn cycle(num_nodes: usize) -> Result<Self> {
        if num_nodes < 3 {
            return Err(MrfError::InvalidGraph("cycle needs at least 3 nodes".into()));
        }
        let mut edges: Vec<(usize, usize)> =
            (0..num_nodes - 1).map(|s| (s, s + 1)).collect();
        edges.push((0, num_nodes - 1));
        Self::build(num_nodes, edges, None)
    }

    fn build(
        num_nodes: usize,
        mut edges: Vec<(usize, usize)>,
        grid: Option<GridShape>,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(MrfError::InvalidGraph("graph has no nodes".into()));
        }
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
            if e.0 == e.1 {
                return Err(MrfError::InvalidGraph(format!("self-loop at node {}", e.0)));
            }
            if e.1 >= num_nodes {
                return Err(MrfError::InvalidGraph(format!(
                    "edge ({}, {}) references node out of range",
                    e.0, e.1
                )));
            }
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(MrfError::InvalidGraph("duplicate edge".into()));
        }
        let mut neighbors = vec![Vec::new(); num_nodes];
        for &(s, t) in &edges {
            neighbors[s].push(t);
            neighbors[t].push(s);
        }
        let g = Graph { num_nodes, edges, neighbors, grid };
        if !g.is_connected() {
            return Err(MrfError::InvalidGraph("graph is not connected".into()));
        }
        Ok(g)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.num_nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(s) = stack.pop() {
            for &t in &self.neighbors[s] {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen.into_iter().all(|b| b)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, s: usize) -> &[usize] {
        &self.neighbors[s]
    }

    pub fn grid_shape(&self) -> Option<GridShape> {
        self.grid
    }

    /// Index of edge `(s, t)` (order-insensitive) in the edge list.
    pub fn edge_index(&self, s: usize, t: usize) -> Option<usize> {
        let key = if s < t { (s, t) } else { (t, s) };
        self.edges.binary_search(&key).ok()
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() == self.num_nodes - 1
    }
}
