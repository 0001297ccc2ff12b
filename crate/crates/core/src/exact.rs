//! Oracle-grade inference by exhaustive enumeration.
//!
//! Everything here is exponential in the number of nodes and guarded by a
//! configuration cap (default 2^20). These routines serve as ground truth for
//! the variational machinery and as the exact baseline on small graphs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{MrfError, Result};
use crate::model::{Configuration, ExponentialParams, MarginalKind, MarginalSet, MinimalLayout};

/// Default enumeration cap: number of configurations, not nodes.
pub const DEFAULT_ENUM_CAP: u128 = 1 << 20;

pub fn config_count(params: &ExponentialParams) -> u128 {
    let m = params.num_states() as u128;
    let mut total: u128 = 1;
    for _ in 0..params.graph().num_nodes() {
        total = total.saturating_mul(m);
    }
    total
}

fn check_cap(params: &ExponentialParams, cap: u128) -> Result<usize> {
    let states = config_count(params);
    if states > cap {
        return Err(MrfError::CapExceeded { states, cap });
    }
    Ok(states as usize)
}

fn decode(mut idx: usize, num_nodes: usize, m: usize, out: &mut Configuration) {
    for slot in out.iter_mut().take(num_nodes) {
        *slot = idx % m;
        idx /= m;
    }
}

/// Unnormalized log-weights (energies) of every configuration, in index order
/// (node 0 is the fastest-varying digit).
fn energies(params: &ExponentialParams, cap: u128) -> Result<Vec<f64>> {
    let total = check_cap(params, cap)?;
    let n = params.graph().num_nodes();
    let m = params.num_states();
    let mut x = vec![0usize; n];
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        decode(idx, n, m, &mut x);
        out.push(params.energy(&x)?);
    }
    Ok(out)
}

fn log_sum_exp(vals: &[f64]) -> f64 {
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_partition_bruteforce(params: &ExponentialParams) -> Result<f64> {
    log_partition_bruteforce_capped(params, DEFAULT_ENUM_CAP)
}

pub fn log_partition_bruteforce_capped(params: &ExponentialParams, cap: u128) -> Result<f64> {
    Ok(log_sum_exp(&energies(params, cap)?))
}

/// Normalized probability of every configuration, in index order.
pub fn distribution_bruteforce(params: &ExponentialParams) -> Result<Vec<f64>> {
    let mut e = energies(params, DEFAULT_ENUM_CAP)?;
    let logz = log_sum_exp(&e);
    for v in e.iter_mut() {
        *v = (*v - logz).exp();
    }
    Ok(e)
}

pub fn exact_marginals_bruteforce(params: &ExponentialParams) -> Result<MarginalSet> {
    let probs = distribution_bruteforce(params)?;
    let graph = params.graph().clone();
    let n = graph.num_nodes();
    let m = params.num_states();
    let mut node = vec![vec![0.0; m]; n];
    let mut edge = vec![vec![0.0; m * m]; graph.num_edges()];
    let mut x = vec![0usize; n];
    for (idx, &p) in probs.iter().enumerate() {
        decode(idx, n, m, &mut x);
        for s in 0..n {
            node[s][x[s]] += p;
        }
        for (ei, &(s, t)) in graph.edges().iter().enumerate() {
            edge[ei][x[s] * m + x[t]] += p;
        }
    }
    MarginalSet::new(graph, m, MarginalKind::Exact, node, edge)
}

/// Entropy `-Σ p log p` of the full joint, by enumeration.
pub fn entropy_bruteforce(params: &ExponentialParams) -> Result<f64> {
    let probs = distribution_bruteforce(params)?;
    Ok(probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum())
}

/// Total variation distance between the joints of two models on the same graph.
pub fn total_variation_bruteforce(
    a: &ExponentialParams,
    b: &ExponentialParams,
) -> Result<f64> {
    let pa = distribution_bruteforce(a)?;
    let pb = distribution_bruteforce(b)?;
    if pa.len() != pb.len() {
        return Err(MrfError::ShapeMismatch("models enumerate different spaces".into()));
    }
    Ok(0.5 * pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Minimal sufficient-statistic indices active in configuration `x`.
fn active_minimal_indices(
    params: &ExponentialParams,
    layout: &MinimalLayout,
    x: &Configuration,
    out: &mut Vec<usize>,
) {
    out.clear();
    for (s, &xs) in x.iter().enumerate() {
        if xs >= 1 {
            out.push(layout.node_index(s, xs));
        }
    }
    for (e, &(s, t)) in params.graph().edges().iter().enumerate() {
        if x[s] >= 1 && x[t] >= 1 {
            out.push(layout.edge_index(e, x[s], x[t]));
        }
    }
}

/// Covariance of the minimal sufficient statistics: the Hessian of the log
/// partition function in minimal coordinates (Lemma-1-style cumulant identity).
pub fn hessian_log_partition(params: &ExponentialParams) -> Result<DMatrix<f64>> {
    let probs = distribution_bruteforce(params)?;
    let layout = MinimalLayout::new(params.graph(), params.num_states());
    let d = layout.dim();
    let n = params.graph().num_nodes();
    let m = params.num_states();
    let mut second = DMatrix::<f64>::zeros(d, d);
    let mut mean = DVector::<f64>::zeros(d);
    let mut x = vec![0usize; n];
    let mut active = Vec::new();
    for (idx, &p) in probs.iter().enumerate() {
        decode(idx, n, m, &mut x);
        active_minimal_indices(params, &layout, &x, &mut active);
        for &a in &active {
            mean[a] += p;
            for &b in &active {
                second[(a, b)] += p;
            }
        }
    }
    for a in 0..d {
        for b in 0..d {
            second[(a, b)] -= mean[a] * mean[b];
        }
    }
    Ok(second)
}

/// Exact i.i.d. samples via cumulative-probability inversion.
pub fn sample_bruteforce(
    params: &ExponentialParams,
    seed: u64,
    count: usize,
) -> Result<Vec<Configuration>> {
    let probs = distribution_bruteforce(params)?;
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let n = params.graph().num_nodes();
    let m = params.num_states();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random();
        let idx = cdf.partition_point(|&c| c < u).min(probs.len() - 1);
        let mut x = vec![0usize; n];
        decode(idx, n, m, &mut x);
        out.push(x);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::graph::Graph;
    use std::sync::Arc;

    pub fn random_params(graph: Arc<Graph>, m: usize, scale: f64, seed: u64) -> ExponentialParams {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut p = ExponentialParams::zeros(graph, m).unwrap();
        for s in 0..p.graph().num_nodes() {
            for v in p.node_mut(s) {
                *v = rng.random_range(-scale..scale);
            }
        }
        for e in 0..p.graph().num_edges() {
            for v in p.edge_table_mut(e) {
                *v = rng.random_range(-scale..scale);
            }
        }
        p
    }
}
