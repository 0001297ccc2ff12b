//! Small numeric helpers shared across modules.

use rand::Rng;

/// Standard normal draw via Box-Muller; keeps the dependency surface small.
pub(crate) fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Log-density of `N(mean, var)` at `y`.
pub(crate) fn gaussian_log_density(y: f64, mean: f64, var: f64) -> f64 {
    let d = y - mean;
    -0.5 * (d * d / var + var.ln() + (std::f64::consts::TAU).ln())
}
