//! Local polytope constraints and brute-force marginal polytope membership.

use crate::error::{MrfError, Result};
use crate::graph::Graph;
use crate::model::{MarginalKind, MarginalSet, MinimalLayout};
use std::sync::Arc;

/// Outcome of checking the local consistency conditions.
#[derive(Debug, Clone, Copy)]
pub struct ConsistencyReport {
    pub consistent: bool,
    pub max_violation: f64,
}

pub const LOCAL_CONSISTENCY_TOL: f64 = 1e-8;

/// Nonnegativity, node normalization, and edge-to-node marginalization,
/// all within `tol`.
pub fn local_consistency_check(tau: &MarginalSet, tol: f64) -> ConsistencyReport {
    let m = tau.num_states();
    let mut worst: f64 = 0.0;
    for s in 0..tau.graph().num_nodes() {
        let t = tau.node(s);
        for &v in t {
            worst = worst.max(-v);
        }
        worst = worst.max((t.iter().sum::<f64>() - 1.0).abs());
    }
    for (e, &(s, t)) in tau.graph().edges().iter().enumerate() {
        let tab = tau.edge_table(e);
        for &v in tab {
            worst = worst.max(-v);
        }
        worst = worst.max((tab.iter().sum::<f64>() - 1.0).abs());
        for j in 0..m {
            let row: f64 = (0..m).map(|k| tab[j * m + k]).sum();
            let col: f64 = (0..m).map(|k| tab[k * m + j]).sum();
            worst = worst.max((row - tau.node(s)[j]).abs());
            worst = worst.max((col - tau.node(t)[j]).abs());
        }
    }
    ConsistencyReport { consistent: worst <= tol, max_violation: worst }
}

/// True iff some joint distribution over configurations realizes `tau`
/// exactly, decided by phase-1 simplex over the probability simplex on
/// `m^N` configurations. Test oracle, not a performance path.
pub fn marginal_polytope_membership_bruteforce(tau: &MarginalSet) -> Result<bool> {
    let graph = tau.graph();
    let m = tau.num_states();
    let n = graph.num_nodes();
    let total = (m as u128).pow(n as u32);
    if total > 1 << 16 {
        return Err(MrfError::CapExceeded { states: total, cap: 1 << 16 });
    }
    let total = total as usize;
    let layout = MinimalLayout::new(graph, m);
    let d = layout.dim();

    // Equality system: sum-to-one row plus one row per minimal statistic.
    let rows = d + 1;
    let mut a = vec![vec![0.0f64; total]; rows];
    let mut b = vec![0.0f64; rows];
    b[0] = 1.0;
    a[0].iter_mut().for_each(|v| *v = 1.0);
    let target = tau.to_minimal();
    for r in 0..d {
        b[r + 1] = target[r];
    }
    let mut x = vec![0usize; n];
    for (idx, _) in (0..total).enumerate() {
        let mut v = idx;
        for slot in x.iter_mut() {
            *slot = v % m;
            v /= m;
        }
        for (s, &xs) in x.iter().enumerate() {
            if xs >= 1 {
                a[layout.node_index(s, xs) + 1][idx] = 1.0;
            }
        }
        for (e, &(s, t)) in graph.edges().iter().enumerate() {
            if x[s] >= 1 && x[t] >= 1 {
                a[layout.edge_index(e, x[s], x[t]) + 1][idx] = 1.0;
            }
        }
    }
    Ok(phase_one_feasible(a, b, 1e-9))
}

/// Phase-1 simplex with Bland's rule: feasibility of `Ax = b, x >= 0`.
fn phase_one_feasible(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, tol: f64) -> bool {
    let rows = a.len();
    let n = a[0].len();
    for r in 0..rows {
        if b[r] < 0.0 {
            b[r] = -b[r];
            a[r].iter_mut().for_each(|v| *v = -*v);
        }
    }
    // Append identity columns for the artificial variables.
    for (r, row) in a.iter_mut().enumerate() {
        row.extend((0..rows).map(|i| if i == r { 1.0 } else { 0.0 }));
    }
    let cols = n + rows;
    let mut basis: Vec<usize> = (n..cols).collect();
    // Reduced objective row for minimizing the artificial sum, stored as
    // z_j - c_j so a positive entry improves the objective.
    let mut obj = vec![0.0f64; cols];
    for j in 0..cols {
        let zj: f64 = (0..rows).map(|r| a[r][j]).sum();
        let cj = if j >= n { 1.0 } else { 0.0 };
        obj[j] = zj - cj;
    }
    let mut obj_val: f64 = b.iter().sum();

    let pivot_tol = 1e-11;
    for _ in 0..200_000 {
        let Some(enter) = (0..cols).find(|&j| obj[j] > tol && !basis.contains(&j)) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..rows {
            if a[r][enter] > pivot_tol {
                let ratio = b[r] / a[r][enter];
                if ratio < best - 1e-15
                    || (ratio < best + 1e-15
                        && leave.map(|l| basis[r] < basis[l]).unwrap_or(false))
                {
                    best = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(lr) = leave else {
            // Unbounded phase-1 cannot happen with artificials; bail safe.
            break;
        };
        let piv = a[lr][enter];
        for v in a[lr].iter_mut() {
            *v /= piv;
        }
        b[lr] /= piv;
        for r in 0..rows {
            if r != lr && a[r][enter].abs() > 0.0 {
                let f = a[r][enter];
                for j in 0..cols {
                    a[r][j] -= f * a[lr][j];
                }
                b[r] -= f * b[lr];
            }
        }
        let f = obj[enter];
        for j in 0..cols {
            obj[j] -= f * a[lr][j];
        }
        obj_val -= f * b[lr];
        basis[lr] = enter;
    }
    obj_val.abs() <= tol
}

/// The 3-cycle pseudomarginal family with uniform node marginals and
/// symmetric edge tables `[[a, 0.5 - a], [0.5 - a, a]]` per edge.
pub fn three_cycle_family(alphas: [f64; 3]) -> MarginalSet {
    let graph = Arc::new(Graph::cycle(3).expect("3-cycle"));
    let node = vec![vec![0.5, 0.5]; 3];
    let edge = alphas
        .iter()
        .map(|&a| vec![a, 0.5 - a, 0.5 - a, a])
        .collect();
    MarginalSet::new(graph, 2, MarginalKind::Pseudo, node, edge).expect("valid family")
}
