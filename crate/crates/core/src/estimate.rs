//! Parameter estimation: empirical moments, the closed-form reweighted
//! estimator, and (surrogate or exact) maximum-likelihood optimization.

use nalgebra::{DMatrix, DVector};

use crate::error::{MrfError, Result};
use crate::exact::{exact_marginals_bruteforce, hessian_log_partition, log_partition_bruteforce};
use crate::graph::Graph;
use crate::model::{Configuration, ExponentialParams, MarginalKind, MarginalSet};
use crate::spanning::EdgeWeights;
use crate::trw::{
    hessian_surrogate, trw_sum_product_with_messages, ConvergenceReport, TrwOptions,
};
use std::sync::Arc;

/// Relative-frequency node and edge tables from i.i.d. configurations.
pub fn empirical_marginals(
    graph: &Arc<Graph>,
    num_states: usize,
    samples: &[Configuration],
) -> Result<MarginalSet> {
    if samples.is_empty() {
        return Err(MrfError::EmptyInput);
    }
    let m = num_states;
    let mut node = vec![vec![0.0; m]; graph.num_nodes()];
    let mut edge = vec![vec![0.0; m * m]; graph.num_edges()];
    for x in samples {
        if x.len() != graph.num_nodes() {
            return Err(MrfError::ShapeMismatch("sample length != node count".into()));
        }
        if x.iter().any(|&v| v >= m) {
            return Err(MrfError::ShapeMismatch("state label out of range".into()));
        }
        for (s, &xs) in x.iter().enumerate() {
            node[s][xs] += 1.0;
        }
        for (e, &(s, t)) in graph.edges().iter().enumerate() {
            edge[e][x[s] * m + x[t]] += 1.0;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    node.iter_mut().chain(edge.iter_mut()).for_each(|t| {
        t.iter_mut().for_each(|v| *v *= inv);
    });
    MarginalSet::new(graph.clone(), m, MarginalKind::Empirical, node, edge)
}

/// Additive smoothing: add `1/n` to every cell of every table, then
/// renormalize each table. Guarantees strictly positive moments so the
/// closed-form estimator is defined.
pub fn smooth_marginals(tau: &mut MarginalSet, sample_count: usize) {
    let add = 1.0 / sample_count.max(1) as f64;
    let n = tau.graph().num_nodes();
    let ne = tau.graph().num_edges();
    for s in 0..n {
        let t = tau.node_mut(s);
        t.iter_mut().for_each(|v| *v += add);
        let z: f64 = t.iter().sum();
        t.iter_mut().for_each(|v| *v /= z);
    }
    for e in 0..ne {
        let t = tau.edge_table_mut(e);
        t.iter_mut().for_each(|v| *v += add);
        let z: f64 = t.iter().sum();
        t.iter_mut().for_each(|v| *v /= z);
    }
}

/// Closed-form reweighted estimator from moment tables:
/// `theta_s(j) = log mu_s(j)` and
/// `theta_st(j,k) = rho_st log[mu_st(j,k) / (mu_s(j) mu_t(k))]`.
/// By construction the pseudomarginals of the estimate reproduce `mu`.
pub fn trw_closed_form_estimate(
    mu: &MarginalSet,
    weights: &EdgeWeights,
) -> Result<ExponentialParams> {
    let graph = mu.graph().clone();
    let m = mu.num_states();
    if weights.rho().len() != graph.num_edges() {
        return Err(MrfError::ShapeMismatch("edge weights do not match graph".into()));
    }
    let check = |v: f64, what: String| -> Result<f64> {
        if v <= 0.0 {
            return Err(MrfError::ZeroMomentCell(what));
        }
        Ok(v)
    };
    let mut node = Vec::with_capacity(graph.num_nodes());
    for s in 0..graph.num_nodes() {
        let mut t = Vec::with_capacity(m);
        for j in 0..m {
            t.push(check(mu.node(s)[j], format!("node {s} state {j}"))?.ln());
        }
        node.push(t);
    }
    let mut edge = Vec::with_capacity(graph.num_edges());
    for (e, &(s, t)) in graph.edges().iter().enumerate() {
        let rho = weights.get(e);
        let mut tab = Vec::with_capacity(m * m);
        for j in 0..m {
            for k in 0..m {
                let joint = check(
                    mu.edge_entry(e, j, k),
                    format!("edge ({s},{t}) cell ({j},{k})"),
                )?;
                tab.push(rho * (joint / (mu.node(s)[j] * mu.node(t)[k])).ln());
            }
        }
        edge.push(tab);
    }
    ExponentialParams::from_tables(graph, m, node, edge)
}

/// Node-only estimator that ignores all couplings: `theta_s(j) = log mu_s(j)`,
/// edge potentials zero.
pub fn independence_estimate(mu: &MarginalSet) -> Result<ExponentialParams> {
    let graph = mu.graph().clone();
    let m = mu.num_states();
    let mut p = ExponentialParams::zeros(graph, m)?;
    for s in 0..p.graph().num_nodes() {
        for j in 0..m {
            let v = mu.node(s)[j];
            if v <= 0.0 {
                return Err(MrfError::ZeroMomentCell(format!("node {s} state {j}")));
            }
            p.node_mut(s)[j] = v.ln();
        }
    }
    Ok(p)
}

/// Ridge penalty `lambda/2 ||theta||^2` in minimal coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Regularizer {
    pub lambda: f64,
}

impl Regularizer {
    pub fn none() -> Self {
        Regularizer { lambda: 0.0 }
    }

    /// Sample-size scaled strength `c / n`.
    pub fn scaled(c: f64, sample_count: usize) -> Self {
        Regularizer { lambda: c / sample_count.max(1) as f64 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    /// Max-norm of the gradient at which to stop.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { grad_tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OptimReport {
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub objective: f64,
}

/// Maximize `theta' mu - F(theta) - lambda/2 ||theta||^2` by gradient ascent
/// with Armijo backtracking, where `F` and its gradient are supplied by the
/// closure (log partition or its convex surrogate, minimal coordinates).
fn maximize_likelihood<F>(
    graph: &Arc<Graph>,
    num_states: usize,
    mu_min: &DVector<f64>,
    reg: Regularizer,
    opts: &OptimOptions,
    mut value_and_grad: F,
) -> Result<(ExponentialParams, OptimReport)>
where
    F: FnMut(&ExponentialParams) -> Result<(f64, DVector<f64>)>,
{
    let d = mu_min.len();
    let mut theta = DVector::<f64>::zeros(d);
    let objective = |theta: &DVector<f64>, f_val: f64| {
        mu_min.dot(theta) - f_val - 0.5 * reg.lambda * theta.norm_squared()
    };
    let mut params = ExponentialParams::from_minimal(graph.clone(), num_states, &theta)?;
    let (mut f_val, mut f_grad) = value_and_grad(&params)?;
    let mut obj = objective(&theta, f_val);
    let mut report = OptimReport { converged: false, iterations: 0, grad_norm: 0.0, objective: obj };
    let mut step: f64 = 1.0;
    for iter in 1..=opts.max_iter {
        report.iterations = iter;
        let grad = mu_min - &f_grad - reg.lambda * &theta;
        report.grad_norm = grad.amax();
        if report.grad_norm <= opts.grad_tol {
            report.converged = true;
            break;
        }
        let g2 = grad.norm_squared();
        step = (step * 2.0).min(4.0);
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &theta + step * &grad;
            let trial_params =
                ExponentialParams::from_minimal(graph.clone(), num_states, &trial)?;
            let (tv, tg) = value_and_grad(&trial_params)?;
            let tobj = objective(&trial, tv);
            if tobj >= obj + 1e-4 * step * g2 {
                theta = trial;
                params = trial_params;
                f_val = tv;
                f_grad = tg;
                obj = tobj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(MrfError::LineSearchFailed(iter));
        }
    }
    report.objective = obj;
    // Final gradient norm, recomputed at the accepted point.
    let grad = mu_min - &f_grad - reg.lambda * &theta;
    report.grad_norm = grad.amax();
    report.converged = report.grad_norm <= opts.grad_tol;
    let _ = f_val;
    Ok((params, report))
}

/// Fit by maximizing the surrogate likelihood
/// `theta' mu - B_rho(theta) - lambda/2 ||theta||^2`. With `lambda = 0` the
/// optimum coincides with [`trw_closed_form_estimate`] applied to `mu`
/// (pseudomoment matching).
pub fn surrogate_mle_optimize(
    mu: &MarginalSet,
    weights: &EdgeWeights,
    reg: Regularizer,
    opts: &OptimOptions,
    trw_opts: &TrwOptions,
) -> Result<(ExponentialParams, OptimReport)> {
    let graph = mu.graph().clone();
    let m = mu.num_states();
    let mu_min = mu.to_minimal();
    let mut warm = None;
    maximize_likelihood(&graph, m, &mu_min, reg, opts, move |p| {
        let (tau, msgs, rep): (_, _, ConvergenceReport) =
            trw_sum_product_with_messages(p, weights, trw_opts, warm.as_ref())?;
        if !rep.converged {
            return Err(MrfError::InnerNotConverged(rep.final_delta));
        }
        warm = Some(msgs);
        let value = crate::model::inner_product(p, &tau)
            + crate::trw::bethe_entropy_rho(&tau, weights);
        Ok((value, tau.to_minimal()))
    })
}

/// Fit by maximizing the true (regularized) likelihood with brute-force
/// inference; only feasible on enumerable models. Reference implementation
/// for consistency checks.
pub fn exact_mle_optimize(
    mu: &MarginalSet,
    reg: Regularizer,
    opts: &OptimOptions,
) -> Result<(ExponentialParams, OptimReport)> {
    let graph = mu.graph().clone();
    let m = mu.num_states();
    let mu_min = mu.to_minimal();
    maximize_likelihood(&graph, m, &mu_min, reg, opts, |p| {
        let a = log_partition_bruteforce(p)?;
        let marg = exact_marginals_bruteforce(p)?;
        Ok((a, marg.to_minimal()))
    })
}

/// Asymptotic covariance of the surrogate estimator in minimal coordinates:
/// `inv(H_B(theta_hat)) H_A(theta_star) inv(H_B(theta_hat))` where `H_B` is
/// the surrogate Hessian and `H_A` the true Fisher information.
pub fn sandwich_covariance(
    theta_hat: &ExponentialParams,
    theta_star: &ExponentialParams,
    weights: &EdgeWeights,
    trw_opts: &TrwOptions,
) -> Result<DMatrix<f64>> {
    let hb = hessian_surrogate(theta_hat, weights, trw_opts)?;
    let ha = hessian_log_partition(theta_star)?;
    let svd = hb.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || smax / smin > 1e12 {
        return Err(MrfError::SingularMatrix(1e12));
    }
    let inv = hb
        .try_inverse()
        .ok_or(MrfError::SingularMatrix(1e12))?;
    Ok(&inv * ha * &inv)
}
