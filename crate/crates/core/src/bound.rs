//! Upper bounds on the denoising penalty paid for using an approximate
//! model plus approximate inference instead of the exact posterior mean,
//! together with Monte Carlo estimates of the realized penalty.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{MrfError, Result};
use crate::exact::hessian_log_partition;
use crate::transfer::exact_marginals_auto;
use crate::model::{Configuration, ExponentialParams};
use crate::predict::{
    component_estimator, gamma_from_observation, gamma_norm, mean_squared_error, predict,
    sample_observation, MixtureSpec, ObservationDraw, SnrParam,
};
use crate::spanning::EdgeWeights;
use crate::trw::{hessian_surrogate, trw_sum_product, TrwOptions};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl MonteCarloEstimate {
    pub fn from_samples(vals: &[f64]) -> Result<Self> {
        if vals.is_empty() {
            return Err(MrfError::EmptyInput);
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(MonteCarloEstimate {
            mean,
            stderr: (var / n).sqrt(),
            count: vals.len(),
        })
    }
}

/// One observation draw per hidden-field sample, with per-draw seeds
/// derived from `seed`.
pub fn draw_observations(
    x_samples: &[Configuration],
    spec: &MixtureSpec,
    alpha: SnrParam,
    seed: u64,
) -> Result<Vec<ObservationDraw>> {
    x_samples
        .iter()
        .enumerate()
        .map(|(i, x)| sample_observation(x, spec, alpha, seed.wrapping_add(i as u64)))
        .collect()
}

fn require_binary(spec: &MixtureSpec) -> Result<()> {
    if spec.num_components() != 2 {
        return Err(MrfError::InvalidArgument(
            "penalty bound is stated for two-component mixtures".into(),
        ));
    }
    Ok(())
}

/// Per-draw value of the general bound integrand
/// `min(1, L ||gamma(Y)|| / sqrt(N)) sqrt(sum_s |g_1(Y_s) - g_0(Y_s)|^4 / N)`.
fn general_integrand(
    l: f64,
    spec: &MixtureSpec,
    graph: &std::sync::Arc<crate::graph::Graph>,
    draw: &ObservationDraw,
) -> Result<f64> {
    let n = graph.num_nodes() as f64;
    let gamma = gamma_from_observation(graph, spec, &draw.obs)?;
    let clip = (l * gamma_norm(&gamma) / n.sqrt()).min(1.0);
    let alpha = draw.obs.alpha;
    let quartic: f64 = draw
        .obs
        .values
        .iter()
        .map(|&y| {
            let gap = component_estimator(spec, 1, alpha, y)
                - component_estimator(spec, 0, alpha, y);
            gap.powi(4)
        })
        .sum::<f64>()
        / n;
    Ok(clip * quartic.sqrt())
}

/// Monte Carlo estimate of the general penalty bound for a two-component
/// mixture, given the stability constant `l`.
pub fn theorem_bound(
    l: f64,
    spec: &MixtureSpec,
    graph: &std::sync::Arc<crate::graph::Graph>,
    draws: &[ObservationDraw],
) -> Result<MonteCarloEstimate> {
    require_binary(spec)?;
    let vals: Vec<f64> = draws
        .iter()
        .map(|d| general_integrand(l, spec, graph, d))
        .collect::<Result<_>>()?;
    MonteCarloEstimate::from_samples(&vals)
}

/// Equal-variance specialization: the quartic factor collapses to the
/// constant `(1 - omega)^2 (nu_1 - nu_0)^2`.
pub fn bound_equal_variance(
    l: f64,
    spec: &MixtureSpec,
    graph: &std::sync::Arc<crate::graph::Graph>,
    draws: &[ObservationDraw],
) -> Result<MonteCarloEstimate> {
    require_binary(spec)?;
    if (spec.sigma2(0) - spec.sigma2(1)).abs() > 1e-12 {
        return Err(MrfError::InvalidArgument(
            "equal-variance bound requires matching component variances".into(),
        ));
    }
    let n = (graph.num_nodes() as f64).sqrt();
    let vals: Vec<f64> = draws
        .iter()
        .map(|d| {
            let omega = crate::predict::blse_weight(spec, 0, d.obs.alpha);
            let prefactor = (1.0 - omega).powi(2) * (spec.nu(1) - spec.nu(0)).powi(2);
            let gamma = gamma_from_observation(graph, spec, &d.obs)?;
            Ok(prefactor * (l * gamma_norm(&gamma) / n).min(1.0))
        })
        .collect::<Result<_>>()?;
    MonteCarloEstimate::from_samples(&vals)
}

/// Equal-means specialization: the estimator gap is
/// `(omega_1 - omega_0)(Y_s - nu)`, leaving a quartic moment of the
/// centered observations.
pub fn bound_equal_means(
    l: f64,
    spec: &MixtureSpec,
    graph: &std::sync::Arc<crate::graph::Graph>,
    draws: &[ObservationDraw],
) -> Result<MonteCarloEstimate> {
    require_binary(spec)?;
    if (spec.nu(0) - spec.nu(1)).abs() > 1e-12 {
        return Err(MrfError::InvalidArgument(
            "equal-means bound requires matching component means".into(),
        ));
    }
    let n = graph.num_nodes() as f64;
    let nu = spec.nu(0);
    let vals: Vec<f64> = draws
        .iter()
        .map(|d| {
            let dw = crate::predict::blse_weight(spec, 1, d.obs.alpha)
                - crate::predict::blse_weight(spec, 0, d.obs.alpha);
            let gamma = gamma_from_observation(graph, spec, &d.obs)?;
            let clip = (l * gamma_norm(&gamma) / n.sqrt()).min(1.0);
            let quartic: f64 =
                d.obs.values.iter().map(|&y| (y - nu).powi(4)).sum::<f64>() / n;
            Ok(dw * dw * clip * quartic.sqrt())
        })
        .collect::<Result<_>>()?;
    MonteCarloEstimate::from_samples(&vals)
}

/// Randomized estimate of the stability constant
/// `sup_delta sigma_max(H_A(theta* + delta) - H_B(theta_hat + delta))`:
/// the supremum over a ball is replaced by a max over `num_deltas` random
/// offsets plus the center `delta = 0`. Always a lower bound on the true
/// supremum, tightening as `num_deltas` grows.
pub fn lipschitz_constant_estimate(
    theta_star: &ExponentialParams,
    theta_hat: &ExponentialParams,
    weights: &EdgeWeights,
    trw_opts: &TrwOptions,
    num_deltas: usize,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    let graph = theta_star.graph().clone();
    let m = theta_star.num_states();
    let star0 = theta_star.to_minimal();
    let hat0 = theta_hat.to_minimal();
    let d = star0.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for probe in 0..=num_deltas {
        let mut delta = nalgebra::DVector::<f64>::zeros(d);
        if probe > 0 {
            for v in delta.iter_mut() {
                *v = crate::util::standard_normal(&mut rng);
            }
            let scale = radius * rng.random::<f64>().powf(1.0 / d as f64) / delta.norm();
            delta *= scale;
        }
        let ps = ExponentialParams::from_minimal(graph.clone(), m, &(&star0 + &delta))?;
        let ph = ExponentialParams::from_minimal(graph.clone(), m, &(&hat0 + &delta))?;
        let ha = hessian_log_partition(&ps)?;
        let hb = hessian_surrogate(&ph, weights, trw_opts)?;
        let gap = ha - hb;
        let sigma = gap
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        best = best.max(sigma);
    }
    Ok(best)
}

/// Realized denoising penalty, estimated two ways from the same draws.
#[derive(Debug, Clone, Copy)]
pub struct DeltaMseReport {
    /// Direct difference of per-draw errors of the two predictors.
    pub delta: MonteCarloEstimate,
    /// Mean squared gap between the predictors; equals the penalty in
    /// expectation because the exact posterior mean is an orthogonal
    /// projection.
    pub gap: MonteCarloEstimate,
    pub mse_app: f64,
    pub mse_opt: f64,
}

/// Compare the exact posterior-mean predictor under `theta_star` with the
/// reweighted plug-in predictor under `theta_hat`, over the given draws.
/// Exact posterior inference must be feasible (small model or grid).
pub fn empirical_delta_mse(
    theta_star: &ExponentialParams,
    theta_hat: &ExponentialParams,
    spec: &MixtureSpec,
    weights: &EdgeWeights,
    trw_opts: &TrwOptions,
    draws: &[ObservationDraw],
) -> Result<DeltaMseReport> {
    let graph = theta_star.graph().clone();
    let mut diffs = Vec::with_capacity(draws.len());
    let mut gaps = Vec::with_capacity(draws.len());
    let mut mse_app = 0.0;
    let mut mse_opt = 0.0;
    for draw in draws {
        let gamma = gamma_from_observation(&graph, spec, &draw.obs)?;
        let post_star = theta_star.combined(&gamma)?;
        let mu = exact_marginals_auto(&post_star)?;
        let z_opt = predict(&mu, spec, &draw.obs)?;

        let post_hat = theta_hat.combined(&gamma)?;
        let (tau, rep) = trw_sum_product(&post_hat, weights, trw_opts)?;
        if !rep.converged {
            return Err(MrfError::InnerNotConverged(rep.final_delta));
        }
        let z_app = predict(&tau, spec, &draw.obs)?;

        let e_app = mean_squared_error(&z_app, &draw.z);
        let e_opt = mean_squared_error(&z_opt, &draw.z);
        mse_app += e_app;
        mse_opt += e_opt;
        diffs.push(e_app - e_opt);
        gaps.push(mean_squared_error(&z_app, &z_opt));
    }
    let n = draws.len() as f64;
    Ok(DeltaMseReport {
        delta: MonteCarloEstimate::from_samples(&diffs)?,
        gap: MonteCarloEstimate::from_samples(&gaps)?,
        mse_app: mse_app / n,
        mse_opt: mse_opt / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::trw_closed_form_estimate;
    use crate::exact::{
        exact_marginals_bruteforce, sample_bruteforce, test_support::random_params,
    };
    use crate::graph::Graph;
    use crate::spanning::uniform_spanning_tree_edge_probs;
    use std::sync::Arc;

    fn tight() -> TrwOptions {
        TrwOptions { tolerance: 1e-12, ..Default::default() }
    }

    #[test]
    fn variant_bounds_equal_general_bound_on_shared_draws() {
        let g = Arc::new(Graph::cycle(4).unwrap());
        let p = random_params(g.clone(), 2, 0.8, 1);
        let x = sample_bruteforce(&p, 3, 50).unwrap();
        let alpha = SnrParam::new(0.5).unwrap();

        let spec_a = MixtureSpec::ensemble_a();
        let draws = draw_observations(&x, &spec_a, alpha, 10).unwrap();
        let gen = theorem_bound(0.2, &spec_a, &g, &draws).unwrap();
        let eqv = bound_equal_variance(0.2, &spec_a, &g, &draws).unwrap();
        assert!((gen.mean - eqv.mean).abs() < 1e-12);

        let spec_b = MixtureSpec::ensemble_b();
        let draws = draw_observations(&x, &spec_b, alpha, 10).unwrap();
        let gen = theorem_bound(0.2, &spec_b, &g, &draws).unwrap();
        let eqm = bound_equal_means(0.2, &spec_b, &g, &draws).unwrap();
        assert!((gen.mean - eqm.mean).abs() < 1e-12);

        // mismatched specializations are rejected
        assert!(bound_equal_means(0.2, &spec_a, &g, &draws).is_err());
        assert!(bound_equal_variance(0.2, &spec_b, &g, &draws).is_err());
    }

    #[test]
    fn huge_stability_constant_saturates_clip() {
        let g = Arc::new(Graph::cycle(3).unwrap());
        let p = random_params(g.clone(), 2, 0.5, 2);
        let x = sample_bruteforce(&p, 5, 30).unwrap();
        let spec = MixtureSpec::ensemble_a();
        let alpha = SnrParam::new(0.5).unwrap();
        let draws = draw_observations(&x, &spec, alpha, 3).unwrap();
        let capped = theorem_bound(1e12, &spec, &g, &draws).unwrap();
        // With the clip at 1 the integrand is just the quartic factor.
        let manual: Vec<f64> = draws
            .iter()
            .map(|d| {
                let q: f64 = d
                    .obs
                    .values
                    .iter()
                    .map(|&y| {
                        (component_estimator(&spec, 1, alpha, y)
                            - component_estimator(&spec, 0, alpha, y))
                        .powi(4)
                    })
                    .sum::<f64>()
                    / 3.0;
                q.sqrt()
            })
            .collect();
        let manual = MonteCarloEstimate::from_samples(&manual).unwrap();
        assert!((capped.mean - manual.mean).abs() < 1e-12);
    }

    #[test]
    fn stability_constant_vanishes_when_surrogate_is_exact() {
        // Tree, unit weights, identical models: the two Hessian maps agree.
        let g = Arc::new(Graph::path(3).unwrap());
        let p = random_params(g.clone(), 2, 0.7, 4);
        let w = EdgeWeights::trw(&g, vec![1.0; 2]).unwrap();
        let l =
            lipschitz_constant_estimate(&p, &p, &w, &tight(), 5, 0.5, 11).unwrap();
        assert!(l < 1e-3, "l {l}");
    }

    #[test]
    fn delta_mse_estimators_cross_validate() {
        // The direct difference and the predictor-gap estimator target the
        // same quantity; they must agree within Monte Carlo error.
        let g = Arc::new(Graph::cycle(4).unwrap());
        let p = random_params(g.clone(), 2, 1.0, 6);
        let mu = exact_marginals_bruteforce(&p).unwrap();
        let w = uniform_spanning_tree_edge_probs(&g).unwrap();
        let hat = trw_closed_form_estimate(&mu, &w).unwrap();
        let spec = MixtureSpec::ensemble_a();
        let alpha = SnrParam::new(0.5).unwrap();
        let x = sample_bruteforce(&p, 7, 300).unwrap();
        let draws = draw_observations(&x, &spec, alpha, 8).unwrap();
        let rep = empirical_delta_mse(&p, &hat, &spec, &w, &tight(), &draws).unwrap();
        let tol = 3.0 * (rep.delta.stderr + rep.gap.stderr) + 1e-6;
        assert!(
            (rep.delta.mean - rep.gap.mean).abs() < tol,
            "direct {} vs gap {}",
            rep.delta.mean,
            rep.gap.mean
        );
        assert!(rep.gap.mean >= 0.0);
        assert!((rep.mse_app - rep.mse_opt - rep.delta.mean).abs() < 1e-12);
    }

    #[test]
    fn bound_dominates_realized_penalty() {
        let g = Arc::new(Graph::cycle(4).unwrap());
        let p = random_params(g.clone(), 2, 0.9, 12);
        let mu = exact_marginals_bruteforce(&p).unwrap();
        let w = uniform_spanning_tree_edge_probs(&g).unwrap();
        let hat = trw_closed_form_estimate(&mu, &w).unwrap();
        let spec = MixtureSpec::ensemble_a();
        let alpha = SnrParam::new(0.4).unwrap();
        let x = sample_bruteforce(&p, 13, 200).unwrap();
        let draws = draw_observations(&x, &spec, alpha, 14).unwrap();
        let l = lipschitz_constant_estimate(&p, &hat, &w, &tight(), 10, 1.0, 15).unwrap();
        let bound = theorem_bound(l, &spec, &g, &draws).unwrap();
        let rep = empirical_delta_mse(&p, &hat, &spec, &w, &tight(), &draws).unwrap();
        assert!(
            rep.delta.mean - 3.0 * rep.delta.stderr <= bound.mean + 3.0 * bound.stderr,
            "penalty {} exceeds bound {}",
            rep.delta.mean,
            bound.mean
        );
    }

    #[test]
    fn omega_gap_closed_form() {
        // omega_1 - omega_0 = alpha (1 - alpha^2)(sigma2_1 - sigma2_0) / (v0 v1)
        let spec = MixtureSpec::ensemble_b();
        for a in [0.1, 0.5, 0.9] {
            let alpha = SnrParam::new(a).unwrap();
            let dw = crate::predict::blse_weight(&spec, 1, alpha)
                - crate::predict::blse_weight(&spec, 0, alpha);
            let v0 = spec.obs_var(0, alpha);
            let v1 = spec.obs_var(1, alpha);
            let want = a * (1.0 - a * a) * (9.0 - 1.0) / (v0 * v1);
            assert!((dw - want).abs() < 1e-12, "alpha {a}");
        }
    }
}
