//! Exact inference on grids by column-wise transfer matrices.
//!
//! Each grid column is treated as a single super-variable with `m^rows`
//! states, turning the lattice into a chain that admits exact forward-backward
//! sweeps, marginal readout, and forward-filter backward sampling. This is the
//! exact baseline on grids too large for enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{MrfError, Result};
use crate::model::{Configuration, ExponentialParams, MarginalKind, MarginalSet};

/// Cap on the per-column state space `m^rows`.
pub const COLUMN_STATE_CAP: usize = 1 << 12;

struct ColumnChain<'a> {
    params: &'a ExponentialParams,
    rows: usize,
    cols: usize,
    m: usize,
    /// m^rows
    states: usize,
    /// Per-column log potentials (node + vertical edges), length `states`.
    log_psi: Vec<Vec<f64>>,
    /// Per column pair, scaled linear coupling matrix, row-major `a * states + b`.
    phi: Vec<Vec<f64>>,
    /// Normalized forward weights including the local psi of each column.
    forward: Vec<Vec<f64>>,
    /// Normalized backward weights excluding the local psi of each column.
    backward: Vec<Vec<f64>>,
    /// `digits[a * rows + r]` = state of row `r` in column state `a`.
    digits: Vec<u8>,
    /// Horizontal edge ids, `h_edge[c][r]` joins (r, c) and (r, c + 1).
    h_edge: Vec<Vec<usize>>,
    /// Vertical edge ids, `v_edge[c][r]` joins (r, c) and (r + 1, c).
    v_edge: Vec<Vec<usize>>,
}

impl<'a> ColumnChain<'a> {
    fn new(params: &'a ExponentialParams) -> Result<Self> {
        let graph = params.graph();
        let shape = graph.grid_shape().ok_or(MrfError::NotAGrid)?;
        let (rows, cols) = (shape.rows, shape.cols);
        let m = params.num_states();
        let mut states: usize = 1;
        for _ in 0..rows {
            states = states.saturating_mul(m);
            if states > COLUMN_STATE_CAP {
                return Err(MrfError::ColumnCapExceeded { rows, cap: COLUMN_STATE_CAP });
            }
        }
        let node_at = |r: usize, c: usize| r * cols + c;

        let mut digits = vec![0u8; states * rows];
        for a in 0..states {
            let mut v = a;
            for r in 0..rows {
                digits[a * rows + r] = (v % m) as u8;
                v /= m;
            }
        }
        let digit = |a: usize, r: usize| digits[a * rows + r] as usize;

        let mut h_edge = vec![Vec::new(); cols.saturating_sub(1)];
        let mut v_edge = vec![Vec::new(); cols];
        for c in 0..cols {
            if c + 1 < cols {
                h_edge[c] = (0..rows)
                    .map(|r| {
                        graph
                            .edge_index(node_at(r, c), node_at(r, c + 1))
                            .expect("horizontal grid edge")
                    })
                    .collect();
            }
            v_edge[c] = (0..rows - 1)
                .map(|r| {
                    graph
                        .edge_index(node_at(r, c), node_at(r + 1, c))
                        .expect("vertical grid edge")
                })
                .collect();
        }

        let mut log_psi = vec![vec![0.0; states]; cols];
        for c in 0..cols {
            for (a, slot) in log_psi[c].iter_mut().enumerate() {
                let mut acc = 0.0;
                for r in 0..rows {
                    acc += params.node(node_at(r, c))[digit(a, r)];
                }
                for r in 0..rows - 1 {
                    acc += params.edge_entry(v_edge[c][r], digit(a, r), digit(a, r + 1));
                }
                *slot = acc;
            }
        }

        // The pair coupling separates across rows, so grow the table one
        // row digit at a time instead of touching every (a, b, r) triple:
        // states of row r occupy the r-th digit, i.e. a = hi * m^r + lo.
        let mut phi = Vec::with_capacity(cols.saturating_sub(1));
        for c in 0..cols.saturating_sub(1) {
            let mut log_tab = vec![0.0f64];
            let mut size = 1usize; // m^r after r rows folded in
            for r in 0..rows {
                let e = h_edge[c][r];
                let next_size = size * m;
                let mut next = vec![0.0f64; next_size * next_size];
                for ja in 0..m {
                    for jb in 0..m {
                        let w = params.edge_entry(e, ja, jb);
                        for lo_a in 0..size {
                            let a = ja * size + lo_a;
                            let dst =
                                &mut next[a * next_size + jb * size..a * next_size + jb * size + size];
                            let src = &log_tab[lo_a * size..(lo_a + 1) * size];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d = s + w;
                            }
                        }
                    }
                }
                log_tab = next;
                size = next_size;
            }
            let max = log_tab.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            phi.push(log_tab.into_iter().map(|v| (v - max).exp()).collect());
        }

        let mut chain = ColumnChain {
            params,
            rows,
            cols,
            m,
            states,
            log_psi,
            phi,
            forward: Vec::new(),
            backward: Vec::new(),
            digits,
            h_edge,
            v_edge,
        };
        chain.sweep();
        Ok(chain)
    }

    fn exp_psi(&self, c: usize) -> Vec<f64> {
        let max = self.log_psi[c].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.log_psi[c].iter().map(|&v| (v - max).exp()).collect()
    }

    fn sweep(&mut self) {
        let s = self.states;
        let mut forward: Vec<Vec<f64>> = Vec::with_capacity(self.cols);
        forward.push(normalize(self.exp_psi(0)));
        for c in 1..self.cols {
            let prev = &forward[c - 1];
            let phi = &self.phi[c - 1];
            let psi = self.exp_psi(c);
            let mut next = vec![0.0; s];
            for a in 0..s {
                let fa = prev[a];
                if fa == 0.0 {
                    continue;
                }
                let row = &phi[a * s..(a + 1) * s];
                for (b, nb) in next.iter_mut().enumerate() {
                    *nb += fa * row[b];
                }
            }
            for (b, nb) in next.iter_mut().enumerate() {
                *nb *= psi[b];
            }
            forward.push(normalize(next));
        }

        let mut backward = vec![vec![1.0 / s as f64; s]; self.cols];
        for c in (0..self.cols.saturating_sub(1)).rev() {
            let phi = &self.phi[c];
            let psi = self.exp_psi(c + 1);
            let nxt = &backward[c + 1];
            let mut cur = vec![0.0; s];
            for (a, ca) in cur.iter_mut().enumerate() {
                let row = &phi[a * s..(a + 1) * s];
                let mut acc = 0.0;
                for b in 0..s {
                    acc += row[b] * psi[b] * nxt[b];
                }
                *ca = acc;
            }
            backward[c] = normalize(cur);
        }
        self.forward = forward;
        self.backward = backward;
    }

    fn digit(&self, a: usize, r: usize) -> usize {
        self.digits[a * self.rows + r] as usize
    }

    /// Normalized belief over the states of column `c`.
    fn column_belief(&self, c: usize) -> Vec<f64> {
        let mut bel: Vec<f64> = self.forward[c]
            .iter()
            .zip(&self.backward[c])
            .map(|(f, b)| f * b)
            .collect();
        bel = normalize(std::mem::take(&mut bel));
        bel
    }

    fn marginals(&self) -> Result<MarginalSet> {
        let graph = self.params.graph().clone();
        let m = self.m;
        let s = self.states;
        let node_at = |r: usize, c: usize| r * self.cols + c;
        let mut node = vec![vec![0.0; m]; graph.num_nodes()];
        let mut edge = vec![vec![0.0; m * m]; graph.num_edges()];

        for c in 0..self.cols {
            let bel = self.column_belief(c);
            for (a, &p) in bel.iter().enumerate() {
                for r in 0..self.rows {
                    node[node_at(r, c)][self.digit(a, r)] += p;
                }
                for r in 0..self.rows - 1 {
                    edge[self.v_edge[c][r]][self.digit(a, r) * m + self.digit(a, r + 1)] += p;
                }
            }
        }

        for c in 0..self.cols.saturating_sub(1) {
            let phi = &self.phi[c];
            let psi = self.exp_psi(c + 1);
            let f = &self.forward[c];
            let b = &self.backward[c + 1];
            let mut acc = vec![vec![0.0f64; m * m]; self.rows];
            let mut total = 0.0;
            for a in 0..s {
                let fa = f[a];
                if fa == 0.0 {
                    continue;
                }
                let da = &self.digits[a * self.rows..(a + 1) * self.rows];
                let row = &phi[a * s..(a + 1) * s];
                for bb in 0..s {
                    let w = fa * row[bb] * psi[bb] * b[bb];
                    if w == 0.0 {
                        continue;
                    }
                    total += w;
                    let db = &self.digits[bb * self.rows..(bb + 1) * self.rows];
                    for (r, slot) in acc.iter_mut().enumerate() {
                        slot[da[r] as usize * m + db[r] as usize] += w;
                    }
                }
            }
            for (r, slot) in acc.iter().enumerate() {
                let tab = &mut edge[self.h_edge[c][r]];
                for jk in 0..m * m {
                    tab[jk] += slot[jk] / total;
                }
            }
        }

        // Renormalize against the accumulated numerical dust.
        for t in node.iter_mut() {
            let z: f64 = t.iter().sum();
            t.iter_mut().for_each(|v| *v /= z);
        }
        for t in edge.iter_mut() {
            let z: f64 = t.iter().sum();
            t.iter_mut().for_each(|v| *v /= z);
        }
        MarginalSet::new(graph, m, MarginalKind::Exact, node, edge)
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> Configuration {
        let s = self.states;
        let mut col_states = vec![0usize; self.cols];
        // Last-column filtered distribution is its exact marginal.
        let last = self.cols - 1;
        col_states[last] = sample_categorical(&self.forward[last], rng);
        for c in (0..last).rev() {
            let bstar = col_states[c + 1];
            let phi = &self.phi[c];
            let weights: Vec<f64> = (0..s)
                .map(|a| self.forward[c][a] * phi[a * s + bstar])
                .collect();
            col_states[c] = sample_categorical(&normalize(weights), rng);
        }
        let mut x = vec![0usize; self.rows * self.cols];
        for c in 0..self.cols {
            for r in 0..self.rows {
                x[r * self.cols + c] = self.digit(col_states[c], r);
            }
        }
        x
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let z: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= z);
    v
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha12Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Exact node and edge marginals of a grid model.
pub fn exact_marginals_transfer(params: &ExponentialParams) -> Result<MarginalSet> {
    ColumnChain::new(params)?.marginals()
}

/// Exact i.i.d. samples from a grid model (forward filter, backward sample).
pub fn sample_transfer(
    params: &ExponentialParams,
    seed: u64,
    count: usize,
) -> Result<Vec<Configuration>> {
    let chain = ColumnChain::new(params)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| chain.sample(&mut rng)).collect())
}


/// Exact marginals by the cheapest available exact engine: transfer chain
/// for grids whose columns fit the cap, enumeration otherwise.
pub fn exact_marginals_auto(params: &ExponentialParams) -> Result<MarginalSet> {
    if let Some(shape) = params.graph().grid_shape() {
        if (params.num_states() as u64).pow(shape.rows as u32) <= COLUMN_STATE_CAP as u64 {
            return exact_marginals_transfer(params);
        }
    }
    crate::exact::exact_marginals_bruteforce(params)
}

/// Exact i.i.d. samples by the cheapest available exact engine.
pub fn sample_auto(
    params: &ExponentialParams,
    seed: u64,
    count: usize,
) -> Result<Vec<Configuration>> {
    if let Some(shape) = params.graph().grid_shape() {
        if (params.num_states() as u64).pow(shape.rows as u32) <= COLUMN_STATE_CAP as u64 {
            return sample_transfer(params, seed, count);
        }
    }
    crate::exact::sample_bruteforce(params, seed, count)
}
