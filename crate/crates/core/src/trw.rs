//! Tree-reweighted (and ordinary) sum-product message passing, the
//! convexified Bethe entropy, and the induced convex surrogate to the log
//! partition function.
//!
//! Messages are kept in the log domain and renormalized after every update;
//! the recursion is scale invariant, so normalization is a free gauge that
//! only guards against under/overflow.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{MrfError, Result};
use crate::model::{inner_product, ExponentialParams, MarginalKind, MarginalSet};
use crate::spanning::EdgeWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// All directed edges updated from the previous iterate. Deterministic
    /// and data-parallel; the default.
    Synchronous,
    /// Directed edges updated in index order using the latest messages.
    Sequential,
}

#[derive(Debug, Clone, Copy)]
pub struct TrwOptions {
    /// Max-norm change of log-messages below which iteration stops.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Log-domain damping factor applied to the proposed update.
    pub damping: f64,
    pub schedule: Schedule,
}

impl Default for TrwOptions {
    fn default() -> Self {
        TrwOptions {
            tolerance: 1e-10,
            max_iter: 5000,
            damping: 0.5,
            schedule: Schedule::Synchronous,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm message change at the final iteration.
    pub final_delta: f64,
}

/// Log-domain messages, one positive `m`-vector per directed edge.
/// For edge index `e = (s, t)`, slot `2e` holds the message into `s`
/// (i.e. from `t`) and slot `2e + 1` the message into `t`.
#[derive(Debug, Clone)]
pub struct MessageSet {
    log: Vec<Vec<f64>>,
}

impl MessageSet {
    fn uniform(num_edges: usize, num_states: usize) -> Self {
        let v = vec![-(num_states as f64).ln(); num_states];
        MessageSet { log: vec![v; 2 * num_edges] }
    }

    fn slot(e: usize, into_smaller: bool) -> usize {
        2 * e + usize::from(!into_smaller)
    }

    /// Log-message along edge `e` into its smaller (`true`) or larger
    /// (`false`) endpoint.
    pub fn log_msg(&self, e: usize, into_smaller: bool) -> &[f64] {
        &self.log[Self::slot(e, into_smaller)]
    }

    /// Multiply one message vector by a positive constant (gauge change).
    pub fn scale(&mut self, e: usize, into_smaller: bool, factor: f64) {
        assert!(factor > 0.0);
        let lf = factor.ln();
        for v in self.log[Self::slot(e, into_smaller)].iter_mut() {
            *v += lf;
        }
    }

    fn normalize(&mut self) {
        for msg in self.log.iter_mut() {
            let lse = log_sum_exp(msg);
            msg.iter_mut().for_each(|v| *v -= lse);
        }
    }
}

fn log_sum_exp(vals: &[f64]) -> f64 {
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

struct Solver<'a> {
    params: &'a ExponentialParams,
    weights: &'a EdgeWeights,
    m: usize,
    /// (edge index, neighbor) per node, for the belief-field accumulation.
    incident: Vec<Vec<(usize, usize)>>,
}

impl<'a> Solver<'a> {
    fn new(params: &'a ExponentialParams, weights: &'a EdgeWeights) -> Self {
        let graph = params.graph();
        let mut incident = vec![Vec::new(); graph.num_nodes()];
        for (e, &(s, t)) in graph.edges().iter().enumerate() {
            incident[s].push((e, t));
            incident[t].push((e, s));
        }
        Solver { params, weights, m: params.num_states(), incident }
    }

    /// `b_t(x_t) = theta_t(x_t) + sum_u rho_ut log M_ut(x_t)`.
    fn belief_field(&self, msgs: &MessageSet, t: usize, out: &mut [f64]) {
        out.copy_from_slice(self.params.node(t));
        for &(e, _) in &self.incident[t] {
            let (a, _) = self.params.graph().edges()[e];
            let incoming = msgs.log_msg(e, a == t);
            let rho = self.weights.get(e);
            for (j, slot) in out.iter_mut().enumerate() {
                *slot += rho * incoming[j];
            }
        }
    }

    /// Proposed log-message along edge `e` from `src` into `dst`.
    fn propose(&self, msgs: &MessageSet, e: usize, src: usize, field_src: &[f64]) -> Vec<f64> {
        let m = self.m;
        let rho = self.weights.get(e);
        let (a, _) = self.params.graph().edges()[e];
        // Reverse message: the one flowing into `src`.
        let reverse = msgs.log_msg(e, a == src);
        let mut scratch = vec![0.0; m];
        let mut out = vec![0.0; m];
        for (xd, slot) in out.iter_mut().enumerate() {
            for (xs, sv) in scratch.iter_mut().enumerate() {
                let pot = if a == src {
                    self.params.edge_entry(e, xs, xd)
                } else {
                    self.params.edge_entry(e, xd, xs)
                };
                *sv = pot / rho + field_src[xs] - reverse[xs];
            }
            *slot = log_sum_exp(&scratch);
        }
        // Normalize before damping so the convergence delta is gauge free.
        let lse = log_sum_exp(&out);
        out.iter_mut().for_each(|v| *v -= lse);
        out
    }

    fn iterate(&self, msgs: &mut MessageSet, opts: &TrwOptions) -> Result<ConvergenceReport> {
        let graph = self.params.graph();
        let m = self.m;
        let mut delta = f64::INFINITY;
        let mut iterations = 0;
        let lambda = opts.damping;
        let mut fields = vec![vec![0.0; m]; graph.num_nodes()];
        for iter in 1..=opts.max_iter {
            iterations = iter;
            delta = 0.0;
            match opts.schedule {
                Schedule::Synchronous => {
                    for (t, field) in fields.iter_mut().enumerate() {
                        self.belief_field(msgs, t, field);
                    }
                    let mut next = msgs.clone();
                    for (e, &(s, t)) in graph.edges().iter().enumerate() {
                        for (src, dst) in [(t, s), (s, t)] {
                            let proposed = self.propose(msgs, e, src, &fields[src]);
                            let slot = MessageSet::slot(e, dst == s);
                            delta = delta.max(apply_damped(&mut next.log[slot], &proposed, lambda));
                        }
                    }
                    next.normalize();
                    *msgs = next;
                }
                Schedule::Sequential => {
                    let mut field = vec![0.0; m];
                    for (e, &(s, t)) in graph.edges().iter().enumerate() {
                        for (src, dst) in [(t, s), (s, t)] {
                            self.belief_field(msgs, src, &mut field);
                            let proposed = self.propose(msgs, e, src, &field);
                            let slot = MessageSet::slot(e, dst == s);
                            delta = delta.max(apply_damped(&mut msgs.log[slot], &proposed, lambda));
                            let lse = log_sum_exp(&msgs.log[slot]);
                            msgs.log[slot].iter_mut().for_each(|v| *v -= lse);
                        }
                    }
                }
            }
            if msgs.log.iter().flatten().any(|v| v.is_nan()) {
                return Err(MrfError::NanInMessages(iter));
            }
            if delta <= opts.tolerance {
                return Ok(ConvergenceReport { converged: true, iterations, final_delta: delta });
            }
        }
        Ok(ConvergenceReport { converged: false, iterations, final_delta: delta })
    }

    fn readout(&self, msgs: &MessageSet) -> Result<MarginalSet> {
        let graph = self.params.graph();
        let m = self.m;
        let mut field = vec![vec![0.0; m]; graph.num_nodes()];
        for (t, f) in field.iter_mut().enumerate() {
            self.belief_field(msgs, t, f);
        }
        let node: Vec<Vec<f64>> = field
            .iter()
            .map(|f| {
                let lse = log_sum_exp(f);
                f.iter().map(|v| (v - lse).exp()).collect()
            })
            .collect();
        let mut edge = Vec::with_capacity(graph.num_edges());
        for (e, &(s, t)) in graph.edges().iter().enumerate() {
            let rho = self.weights.get(e);
            let into_s = msgs.log_msg(e, true);
            let into_t = msgs.log_msg(e, false);
            let mut tab = vec![0.0; m * m];
            for js in 0..m {
                for jt in 0..m {
                    tab[js * m + jt] = self.params.edge_entry(e, js, jt) / rho
                        + field[s][js]
                        - into_s[js]
                        + field[t][jt]
                        - into_t[jt];
                }
            }
            let lse = log_sum_exp(&tab);
            edge.push(tab.into_iter().map(|v| (v - lse).exp()).collect());
        }
        MarginalSet::new(graph.clone(), m, MarginalKind::Pseudo, node, edge)
    }
}

/// Damped log-domain update; returns the max-norm change actually applied.
fn apply_damped(current: &mut [f64], proposed: &[f64], lambda: f64) -> f64 {
    let mut delta: f64 = 0.0;
    for (c, &p) in current.iter_mut().zip(proposed) {
        let new = (1.0 - lambda) * *c + lambda * p;
        delta = delta.max((new - *c).abs());
        *c = new;
    }
    delta
}

/// Run the reweighted recursion to a fixed point and read out
/// pseudomarginals. With all weights equal to 1 this is ordinary
/// sum-product.
pub fn trw_sum_product(
    params: &ExponentialParams,
    weights: &EdgeWeights,
    opts: &TrwOptions,
) -> Result<(MarginalSet, ConvergenceReport)> {
    let (tau, _, report) = trw_sum_product_with_messages(params, weights, opts, None)?;
    Ok((tau, report))
}

/// As [`trw_sum_product`] but optionally warm-started and returning the
/// fixed-point messages.
pub fn trw_sum_product_with_messages(
    params: &ExponentialParams,
    weights: &EdgeWeights,
    opts: &TrwOptions,
    init: Option<&MessageSet>,
) -> Result<(MarginalSet, MessageSet, ConvergenceReport)> {
    if weights.rho().len() != params.graph().num_edges() {
        return Err(MrfError::ShapeMismatch("edge weights do not match graph".into()));
    }
    let solver = Solver::new(params, weights);
    let mut msgs = match init {
        Some(m) => m.clone(),
        None => MessageSet::uniform(params.graph().num_edges(), params.num_states()),
    };
    let report = solver.iterate(&mut msgs, opts)?;
    let tau = solver.readout(&msgs)?;
    Ok((tau, msgs, report))
}

/// Pseudomarginal readout from an explicit message set, without iterating.
pub fn readout_from_messages(
    params: &ExponentialParams,
    weights: &EdgeWeights,
    msgs: &MessageSet,
) -> Result<MarginalSet> {
    Solver::new(params, weights).readout(msgs)
}

/// One synchronous update pass; returns the max-norm change. Used to verify
/// fixed points.
pub fn fixed_point_residual(
    params: &ExponentialParams,
    weights: &EdgeWeights,
    msgs: &MessageSet,
) -> Result<f64> {
    let solver = Solver::new(params, weights);
    let mut probe = msgs.clone();
    let opts = TrwOptions { max_iter: 1, damping: 1.0, tolerance: 0.0, ..Default::default() };
    let report = solver.iterate(&mut probe, &opts)?;
    Ok(report.final_delta)
}

fn entropy(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

fn mutual_information(tab: &[f64], row: &[f64], col: &[f64], m: usize) -> f64 {
    let mut acc = 0.0;
    for j in 0..m {
        for k in 0..m {
            let p = tab[j * m + k];
            if p > 0.0 {
                acc += p * (p / (row[j] * col[k])).ln();
            }
        }
    }
    acc
}

/// Convexified Bethe entropy `Σ_s H_s - Σ_(s,t) rho_st I_st` with the
/// `0 log 0 = 0` convention.
pub fn bethe_entropy_rho(tau: &MarginalSet, weights: &EdgeWeights) -> f64 {
    let m = tau.num_states();
    let mut acc: f64 = (0..tau.graph().num_nodes()).map(|s| entropy(tau.node(s))).sum();
    for (e, &(s, t)) in tau.graph().edges().iter().enumerate() {
        acc -= weights.get(e)
            * mutual_information(tau.edge_table(e), tau.node(s), tau.node(t), m);
    }
    acc
}

/// Surrogate value `B_rho(theta) = theta' tau(theta) + H_rho(tau(theta))`
/// at the converged pseudomarginals.
pub fn surrogate_value(
    params: &ExponentialParams,
    weights: &EdgeWeights,
    opts: &TrwOptions,
) -> Result<(f64, ConvergenceReport)> {
    let (tau, report) = trw_sum_product(params, weights, opts)?;
    Ok((inner_product(params, &tau) + bethe_entropy_rho(&tau, weights), report))
}

/// `∇B(theta) = tau(theta)`.
pub fn surrogate_gradient(
    params: &ExponentialParams,
    weights: &EdgeWeights,
    opts: &TrwOptions,
) -> Result<(MarginalSet, ConvergenceReport)> {
    trw_sum_product(params, weights, opts)
}

/// Finite-difference Jacobian of `tau(theta)` in minimal coordinates,
/// symmetrized. Positive definite for strictly positive edge weights.
pub fn hessian_surrogate(
    params: &ExponentialParams,
    weights: &EdgeWeights,
    opts: &TrwOptions,
) -> Result<DMatrix<f64>> {
    let graph = params.graph().clone();
    let m = params.num_states();
    let theta0 = params.to_minimal();
    let d = theta0.len();
    let step = 1e-4;
    // Warm-start every probe from the base fixed point.
    let (_, base_msgs, base_rep) =
        trw_sum_product_with_messages(params, weights, opts, None)?;
    if !base_rep.converged {
        return Err(MrfError::InnerNotConverged(base_rep.final_delta));
    }
    let mut h = DMatrix::<f64>::zeros(d, d);
    for a in 0..d {
        let solve_at = |offset: f64| -> Result<nalgebra::DVector<f64>> {
            let mut th = theta0.clone();
            th[a] += offset;
            let p = ExponentialParams::from_minimal(graph.clone(), m, &th)?;
            let (tau, _, rep) =
                trw_sum_product_with_messages(&p, weights, opts, Some(&base_msgs))?;
            if !rep.converged {
                return Err(MrfError::InnerNotConverged(rep.final_delta));
            }
            Ok(tau.to_minimal())
        };
        let hi = solve_at(step)?;
        let lo = solve_at(-step)?;
        for b in 0..d {
            h[(b, a)] = (hi[b] - lo[b]) / (2.0 * step);
        }
    }
    Ok(0.5 * (&h + h.transpose()))
}

/// Result of a randomized Lipschitz probe of the map `theta -> tau(theta)`.
#[derive(Debug, Clone, Copy)]
pub struct StabilityEstimate {
    /// Max over probes of `||tau(theta + delta) - tau(theta)|| / ||delta||`,
    /// minimal coordinates.
    pub max_ratio: f64,
    pub all_converged: bool,
}

/// Empirical Lipschitz estimate from random perturbations of norm at most
/// `radius`. Deterministic given `seed`.
pub fn stability_probe(
    params: &ExponentialParams,
    weights: &EdgeWeights,
    num_perturbations: usize,
    radius: f64,
    seed: u64,
    opts: &TrwOptions,
) -> Result<StabilityEstimate> {
    let graph = params.graph().clone();
    let m = params.num_states();
    let theta0 = params.to_minimal();
    let d = theta0.len();
    let (tau0, msgs0, rep0) = trw_sum_product_with_messages(params, weights, opts, None)?;
    let base = tau0.to_minimal();
    let mut all_converged = rep0.converged;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    for _ in 0..num_perturbations {
        let mut delta: Vec<f64> = (0..d)
            .map(|_| {
                // Box-Muller keeps the dependency surface small.
                let u1: f64 = rng.random::<f64>().max(1e-300);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = radius * rng.random::<f64>().powf(1.0 / d as f64) / norm;
        delta.iter_mut().for_each(|v| *v *= scale);
        let dnorm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dnorm == 0.0 {
            continue;
        }
        let mut th = theta0.clone();
        for (i, v) in delta.iter().enumerate() {
            th[i] += v;
        }
        let p = ExponentialParams::from_minimal(graph.clone(), m, &th)?;
        let (tau, _, rep) = trw_sum_product_with_messages(&p, weights, opts, Some(&msgs0))?;
        all_converged &= rep.converged;
        let diff = (tau.to_minimal() - &base).norm();
        max_ratio = max_ratio.max(diff / dnorm);
    }
    Ok(StabilityEstimate { max_ratio, all_converged })
}
