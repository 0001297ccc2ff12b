//! Gaussian-mixture observation model and least-squares denoising.
//!
//! Each hidden label selects a mixture component: `Z_s | X_s = j` is
//! `N(nu_j, sigma2_j)`, and the observation is the SNR-weighted blend
//! `Y_s = alpha Z_s + sqrt(1 - alpha^2) W_s` with standard normal `W_s`.
//! Conditioning on `y` shifts the field model by a node-only offset
//! `gamma(y)`, so posterior inference reuses the machinery for the prior.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{MrfError, Result};
use crate::graph::Graph;
use crate::model::{Configuration, ExponentialParams, MarginalSet};
use crate::util::{gaussian_log_density, standard_normal};

/// Per-state Gaussian component parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    nu: Vec<f64>,
    sigma2: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(nu: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        if nu.len() != sigma2.len() || nu.len() < 2 {
            return Err(MrfError::InvalidArgument(
                "mixture needs matching mean/variance lists of length >= 2".into(),
            ));
        }
        if sigma2.iter().any(|&v| !(v > 0.0)) {
            return Err(MrfError::InvalidArgument("component variances must be positive".into()));
        }
        Ok(MixtureSpec { nu, sigma2 })
    }

    /// Symmetric well-separated means, equal variances.
    pub fn ensemble_a() -> Self {
        MixtureSpec { nu: vec![-1.0, 1.0], sigma2: vec![0.5, 0.5] }
    }

    /// Equal means, strongly different variances.
    pub fn ensemble_b() -> Self {
        MixtureSpec { nu: vec![0.0, 0.0], sigma2: vec![1.0, 9.0] }
    }

    pub fn num_components(&self) -> usize {
        self.nu.len()
    }

    pub fn nu(&self, j: usize) -> f64 {
        self.nu[j]
    }

    pub fn sigma2(&self, j: usize) -> f64 {
        self.sigma2[j]
    }

    /// Marginal law of `Y_s` given `X_s = j`: normal with these moments.
    pub fn obs_mean(&self, j: usize, alpha: SnrParam) -> f64 {
        alpha.value() * self.nu[j]
    }

    pub fn obs_var(&self, j: usize, alpha: SnrParam) -> f64 {
        let a2 = alpha.value() * alpha.value();
        a2 * self.sigma2[j] + (1.0 - a2)
    }
}

/// SNR blend parameter, constrained to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SnrParam(f64);

impl SnrParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(MrfError::InvalidArgument(format!(
                "snr parameter {alpha} outside [0, 1]"
            )));
        }
        Ok(SnrParam(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// One observation per node at a fixed SNR level.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationVector {
    pub alpha: SnrParam,
    pub values: Vec<f64>,
}

impl ObservationVector {
    /// Text form: header `N alpha`, then one value per line, 17 significant
    /// digits so the round trip is exact.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {:.16e}\n", self.values.len(), self.alpha.value());
        for v in &self.values {
            out.push_str(&format!("{v:.16e}\n"));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let perr = |msg: &str| MrfError::Parse { path: origin.to_string(), msg: msg.to_string() };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| perr("missing header"))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        let [n, alpha] = toks[..] else {
            return Err(perr("header must be `N alpha`"));
        };
        let n: usize = n.parse().map_err(|_| perr("bad node count"))?;
        let alpha: f64 = alpha.parse().map_err(|_| perr("bad alpha"))?;
        let values: Vec<f64> = lines
            .map(|l| l.trim().parse().map_err(|_| perr("bad observation value")))
            .collect::<Result<_>>()?;
        if values.len() != n {
            return Err(perr("value count does not match header"));
        }
        Ok(ObservationVector { alpha: SnrParam::new(alpha)?, values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text, &path.display().to_string())
    }
}

/// Latent field values and the noisy observation generated from them.
#[derive(Debug, Clone)]
pub struct ObservationDraw {
    pub z: Vec<f64>,
    pub obs: ObservationVector,
}

/// Draw `Z_s ~ N(nu_{x_s}, sigma2_{x_s})` and blend with fresh noise.
pub fn sample_observation(
    x: &Configuration,
    spec: &MixtureSpec,
    alpha: SnrParam,
    seed: u64,
) -> Result<ObservationDraw> {
    if x.iter().any(|&xs| xs >= spec.num_components()) {
        return Err(MrfError::ShapeMismatch("state label outside mixture".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let a = alpha.value();
    let noise = (1.0 - a * a).sqrt();
    let mut z = Vec::with_capacity(x.len());
    let mut y = Vec::with_capacity(x.len());
    for &xs in x {
        let zs = spec.nu(xs) + spec.sigma2(xs).sqrt() * standard_normal(&mut rng);
        z.push(zs);
        y.push(a * zs + noise * standard_normal(&mut rng));
    }
    Ok(ObservationDraw { z, obs: ObservationVector { alpha, values: y } })
}

/// Shrinkage weight `omega_j(alpha) = alpha sigma2_j / (alpha^2 sigma2_j + 1 - alpha^2)`.
pub fn blse_weight(spec: &MixtureSpec, j: usize, alpha: SnrParam) -> f64 {
    let a = alpha.value();
    a * spec.sigma2(j) / spec.obs_var(j, alpha)
}

/// Per-component estimator `g_j(y) = omega_j (y - nu_j) + nu_j`.
pub fn component_estimator(spec: &MixtureSpec, j: usize, alpha: SnrParam, y: f64) -> f64 {
    blse_weight(spec, j, alpha) * (y - spec.nu(j)) + spec.nu(j)
}

/// Node-only offset turning the prior into the posterior given `y`:
/// `gamma_{s;j} = log p(y_s | j) - log p(y_s | 0)`, zero edge potentials.
/// Adding it to any field on `graph` and normalizing yields `p(x | y)`.
pub fn gamma_from_observation(
    graph: &Arc<Graph>,
    spec: &MixtureSpec,
    obs: &ObservationVector,
) -> Result<ExponentialParams> {
    if obs.values.len() != graph.num_nodes() {
        return Err(MrfError::ShapeMismatch("observation length != node count".into()));
    }
    let m = spec.num_components();
    let alpha = obs.alpha;
    let mut gamma = ExponentialParams::zeros(graph.clone(), m)?;
    for (s, &y) in obs.values.iter().enumerate() {
        let base = gaussian_log_density(y, spec.obs_mean(0, alpha), spec.obs_var(0, alpha));
        for j in 1..m {
            gamma.node_mut(s)[j] =
                gaussian_log_density(y, spec.obs_mean(j, alpha), spec.obs_var(j, alpha)) - base;
        }
    }
    Ok(gamma)
}

/// Squared Euclidean norm of the node offset, `||gamma(y)||^2` in minimal
/// coordinates; the quantity entering the performance-gap bound.
pub fn gamma_norm(gamma: &ExponentialParams) -> f64 {
    let m = gamma.num_states();
    let mut acc = 0.0;
    for s in 0..gamma.graph().num_nodes() {
        for j in 1..m {
            let v = gamma.node(s)[j];
            acc += v * v;
        }
    }
    acc.sqrt()
}

/// Posterior-mean denoiser: `z_s = sum_j marg_s(j) g_j(y_s)`. Fed exact
/// posterior marginals this is the Bayes least-squares estimate; fed
/// pseudomarginals it is the surrogate-based approximation.
pub fn predict(
    marginals: &MarginalSet,
    spec: &MixtureSpec,
    obs: &ObservationVector,
) -> Result<Vec<f64>> {
    let n = marginals.graph().num_nodes();
    if obs.values.len() != n {
        return Err(MrfError::ShapeMismatch("observation length != node count".into()));
    }
    if marginals.num_states() != spec.num_components() {
        return Err(MrfError::ShapeMismatch("marginal states != mixture components".into()));
    }
    let m = spec.num_components();
    let alpha = obs.alpha;
    let mut out = Vec::with_capacity(n);
    for (s, &y) in obs.values.iter().enumerate() {
        let mut z = 0.0;
        for j in 0..m {
            z += marginals.node(s)[j] * component_estimator(spec, j, alpha, y);
        }
        out.push(z);
    }
    Ok(out)
}

/// `||zhat - z||^2 / N`.
pub fn mean_squared_error(zhat: &[f64], z: &[f64]) -> f64 {
    assert_eq!(zhat.len(), z.len());
    zhat.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / z.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{exact_marginals_bruteforce, test_support::random_params};
    use crate::graph::Graph;
    use crate::model::MarginalKind;

    #[test]
    fn binary_gamma_matches_closed_form() {
        // Two components: the offset has the explicit half-difference form.
        let g = Arc::new(Graph::path(3).unwrap());
        let spec = MixtureSpec::new(vec![-1.0, 2.0], vec![0.5, 3.0]).unwrap();
        let alpha = SnrParam::new(0.6).unwrap();
        let obs = ObservationVector { alpha, values: vec![0.3, -1.1, 2.4] };
        let gamma = gamma_from_observation(&g, &spec, &obs).unwrap();
        let a2: f64 = 0.36;
        let v0 = a2 * 0.5 + (1.0 - a2);
        let v1 = a2 * 3.0 + (1.0 - a2);
        for (s, &y) in obs.values.iter().enumerate() {
            let want = 0.5
                * ((v0 / v1).ln() + (y - 0.6 * -1.0).powi(2) / v0
                    - (y - 0.6 * 2.0).powi(2) / v1);
            assert!((gamma.node(s)[1] - want).abs() < 1e-12);
            assert_eq!(gamma.node(s)[0], 0.0);
        }
        assert!(gamma.edge_table(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shifted_model_marginals_equal_direct_posterior() {
        // Brute-force posterior p(x | y) against marginals of theta + gamma(y).
        let g = Arc::new(Graph::cycle(4).unwrap());
        let p = random_params(g.clone(), 3, 0.8, 5);
        let spec = MixtureSpec::new(vec![-1.0, 0.0, 1.5], vec![0.5, 1.0, 2.0]).unwrap();
        let alpha = SnrParam::new(0.7).unwrap();
        let x = vec![0, 2, 1, 1];
        let draw = sample_observation(&x, &spec, alpha, 42).unwrap();
        let gamma = gamma_from_observation(&g, &spec, &draw.obs).unwrap();
        let shifted = p.combined(&gamma).unwrap();
        let via_shift = exact_marginals_bruteforce(&shifted).unwrap();

        // Direct route: weight every configuration by prior times likelihood.
        let prior = crate::exact::distribution_bruteforce(&p).unwrap();
        let m = 3;
        let total = prior.len();
        let mut post = vec![0.0; total];
        for (idx, post_slot) in post.iter_mut().enumerate() {
            let mut v = idx;
            let mut loglik = 0.0;
            for s in 0..4 {
                let xs = v % m;
                v /= m;
                loglik += gaussian_log_density(
                    draw.obs.values[s],
                    spec.obs_mean(xs, alpha),
                    spec.obs_var(xs, alpha),
                );
            }
            *post_slot = prior[idx] * loglik.exp();
        }
        let z: f64 = post.iter().sum();
        let mut node = vec![vec![0.0; m]; 4];
        for (idx, &pv) in post.iter().enumerate() {
            let mut v = idx;
            for nslot in node.iter_mut() {
                nslot[v % m] += pv / z;
                v /= m;
            }
        }
        for s in 0..4 {
            for j in 0..m {
                assert!(
                    (via_shift.node(s)[j] - node[s][j]).abs() < 1e-10,
                    "node {s} state {j}"
                );
            }
        }
    }

    #[test]
    fn extreme_snr_limits() {
        let g = Arc::new(Graph::path(2).unwrap());
        let spec = MixtureSpec::ensemble_a();
        // alpha = 1: weights hit 1, prediction is the observation itself.
        let one = SnrParam::new(1.0).unwrap();
        let obs = ObservationVector { alpha: one, values: vec![0.7, -0.2] };
        let tau = MarginalSet::uniform(g.clone(), 2, MarginalKind::Exact);
        let z = predict(&tau, &spec, &obs).unwrap();
        assert!((z[0] - 0.7).abs() < 1e-12 && (z[1] + 0.2).abs() < 1e-12);
        // alpha = 0: observation carries no signal, gamma vanishes and the
        // prediction falls back to the prior mixture mean.
        let zero = SnrParam::new(0.0).unwrap();
        let obs = ObservationVector { alpha: zero, values: vec![0.7, -0.2] };
        let gamma = gamma_from_observation(&g, &spec, &obs).unwrap();
        assert!(gamma_norm(&gamma) < 1e-14);
        let z = predict(&tau, &spec, &obs).unwrap();
        // uniform over components with means -1 and 1
        assert!(z.iter().all(|&v| v.abs() < 1e-12));
        assert!(SnrParam::new(1.2).is_err());
        assert!(SnrParam::new(-0.1).is_err());
    }

    #[test]
    fn equal_variance_estimator_gap_is_constant() {
        let spec = MixtureSpec::ensemble_a();
        let alpha = SnrParam::new(0.4).unwrap();
        let w = blse_weight(&spec, 0, alpha);
        assert!((w - blse_weight(&spec, 1, alpha)).abs() < 1e-15);
        for y in [-2.0, 0.0, 1.3] {
            let gap = component_estimator(&spec, 1, alpha, y)
                - component_estimator(&spec, 0, alpha, y);
            assert!((gap - (1.0 - w) * 2.0).abs() < 1e-12, "y {y}");
        }
    }

    #[test]
    fn equal_mean_estimator_gap_scales_with_observation() {
        let spec = MixtureSpec::ensemble_b();
        let alpha = SnrParam::new(0.5).unwrap();
        let dw = blse_weight(&spec, 1, alpha) - blse_weight(&spec, 0, alpha);
        for y in [-3.0, 0.4, 2.2] {
            let gap = component_estimator(&spec, 1, alpha, y)
                - component_estimator(&spec, 0, alpha, y);
            assert!((gap - dw * y).abs() < 1e-12);
        }
    }

    #[test]
    fn observation_file_roundtrip() {
        let alpha = SnrParam::new(0.35).unwrap();
        let obs = ObservationVector {
            alpha,
            values: vec![0.123456789123456789, -2.5, 1e-17],
        };
        let text = obs.to_text();
        let back = ObservationVector::from_text(&text, "test").unwrap();
        assert_eq!(obs, back);
        assert!(ObservationVector::from_text("2 0.5\n1.0\n", "test").is_err());
        assert!(ObservationVector::from_text("", "test").is_err());
    }

    #[test]
    fn sampler_moments_and_determinism() {
        let spec = MixtureSpec::ensemble_b();
        let alpha = SnrParam::new(0.6).unwrap();
        let x = vec![1usize; 2000];
        let a = sample_observation(&x, &spec, alpha, 7).unwrap();
        let b = sample_observation(&x, &spec, alpha, 7).unwrap();
        assert_eq!(a.obs.values, b.obs.values);
        assert_eq!(a.z, b.z);
        let n = x.len() as f64;
        let mean: f64 = a.obs.values.iter().sum::<f64>() / n;
        let var: f64 =
            a.obs.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.2, "mean {mean}");
        let want_var = spec.obs_var(1, alpha); // 0.36 * 9 + 0.64
        assert!((var - want_var).abs() < 0.4, "var {var} vs {want_var}");
        // latent draws follow the component law
        let zmean: f64 = a.z.iter().sum::<f64>() / n;
        assert!(zmean.abs() < 0.2);
    }

    #[test]
    fn mse_of_bayes_predictor_not_worse_than_plugin() {
        // BLSE optimality, checked by Monte Carlo on a tiny chain.
        let g = Arc::new(Graph::path(3).unwrap());
        let p = random_params(g.clone(), 2, 0.8, 9);
        let spec = MixtureSpec::ensemble_a();
        let alpha = SnrParam::new(0.5).unwrap();
        let mut mse_opt = 0.0;
        let mut mse_naive = 0.0;
        let trials = 400;
        for trial in 0..trials {
            let x = crate::exact::sample_bruteforce(&p, 1000 + trial, 1).unwrap().remove(0);
            let draw = sample_observation(&x, &spec, alpha, 5000 + trial).unwrap();
            let gamma = gamma_from_observation(&g, &spec, &draw.obs).unwrap();
            let post = p.combined(&gamma).unwrap();
            let marg = exact_marginals_bruteforce(&post).unwrap();
            let zopt = predict(&marg, &spec, &draw.obs).unwrap();
            // naive competitor ignores the observation's evidence
            let prior_marg = exact_marginals_bruteforce(&p).unwrap();
            let znaive = predict(&prior_marg, &spec, &draw.obs).unwrap();
            mse_opt += mean_squared_error(&zopt, &draw.z);
            mse_naive += mean_squared_error(&znaive, &draw.z);
        }
        assert!(
            mse_opt < mse_naive,
            "bayes {mse_opt} vs naive {mse_naive}"
        );
    }
}
