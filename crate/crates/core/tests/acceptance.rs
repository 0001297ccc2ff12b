//! End-to-end acceptance checks for the toolkit. Each test covers one
//! numbered criterion and prints a single pass/fail line (visible with
//! `cargo test --test acceptance -- --nocapture`).

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use trwmrf::config::{CouplingKind, ExperimentConfig};
use trwmrf::estimate::{empirical_marginals, sandwich_covariance, trw_closed_form_estimate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use trwmrf::exact::{exact_marginals_bruteforce, hessian_log_partition, sample_bruteforce};
use trwmrf::experiment::{draw_true_model, run_experiment, run_polytope_demo, run_stability_probe, Method};
use trwmrf::graph::Graph;
use trwmrf::model::{ExponentialParams, MinimalLayout};
use trwmrf::predict::{predict, MixtureSpec, SnrParam};
use trwmrf::seed::derive_seed;
use trwmrf::spanning::{uniform_spanning_tree_edge_probs, EdgeWeights};
use trwmrf::transfer::{exact_marginals_auto, sample_auto};
use trwmrf::trw::{trw_sum_product, TrwOptions};

fn check(id: u32, name: &str, ok: bool, detail: &str) {
    println!("criterion {id:02} {name}: {}", if ok { "pass" } else { "fail" });
    assert!(ok, "criterion {id:02} {name}: {detail}");
}

fn tight_opts() -> TrwOptions {
    TrwOptions { tolerance: 1e-10, max_iter: 5000, ..Default::default() }
}

/// Max absolute difference between two marginal sets over all tables.
fn marginal_gap(a: &trwmrf::model::MarginalSet, b: &trwmrf::model::MarginalSet) -> f64 {
    let mut worst: f64 = 0.0;
    let n = a.graph().num_nodes();
    let ne = a.graph().num_edges();
    for s in 0..n {
        for (x, y) in a.node(s).iter().zip(b.node(s)) {
            worst = worst.max((x - y).abs());
        }
    }
    for e in 0..ne {
        for (x, y) in a.edge_table(e).iter().zip(b.edge_table(e)) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

/// Independent uniform potentials on every node and edge table.
fn random_params(graph: Arc<Graph>, m: usize, scale: f64, seed: u64) -> ExponentialParams {
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

/// Random tree on `n` nodes: each node past the first attaches to a
/// uniformly chosen earlier node (seeded, deterministic).
fn random_tree(n: usize, seed: u64) -> Arc<Graph> {
    let mut state = seed;
    let mut next = move || {
        // splitmix-style scramble; only low-entropy uniformity is needed.
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    };
    let edges: Vec<(usize, usize)> = (1..n).map(|i| ((next() as usize) % i, i)).collect();
    Arc::new(Graph::new(n, edges).unwrap())
}

#[test]
fn c01_tree_models_are_solved_exactly() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for rep in 0..20u64 {
        let n = 4 + (rep as usize) % 7; // 4..=10
        let m = 2 + (rep as usize) % 2; // {2, 3}
        let graph = random_tree(n, derive_seed(100, &[rep]));
        let params = random_params(graph.clone(), m, 1.0, derive_seed(101, &[rep]));
        let weights = EdgeWeights::trw(&graph, vec![1.0; graph.num_edges()]).unwrap();
        let (tau, rep_conv) = trw_sum_product(&params, &weights, &tight_opts()).unwrap();
        assert!(rep_conv.converged);
        let exact = exact_marginals_bruteforce(&params).unwrap();
        worst = worst.max(marginal_gap(&tau, &exact));
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        1,
        "tree-exactness",
        worst <= 1e-8 && elapsed < 10.0,
        &format!("max gap {worst:.3e}, elapsed {elapsed:.1}s"),
    );
}

#[test]
fn c02_closed_form_fit_matches_moments() {
    let graph = Arc::new(Graph::grid(4, 4).unwrap());
    let weights = uniform_spanning_tree_edge_probs(&graph).unwrap();
    let mut worst: f64 = 0.0;
    for rep in 0..10u64 {
        let params = random_params(graph.clone(), 2, 1.0, derive_seed(200, &[rep]));
        let mu = exact_marginals_auto(&params).unwrap();
        let theta_hat = trw_closed_form_estimate(&mu, &weights).unwrap();
        let (tau, conv) = trw_sum_product(&theta_hat, &weights, &tight_opts()).unwrap();
        assert!(conv.converged);
        worst = worst.max(marginal_gap(&tau, &mu));
    }
    check(2, "pseudomoment-matching", worst <= 1e-6, &format!("max gap {worst:.3e}"));
}

#[test]
fn c03_predictions_coincide_at_zero_snr() {
    let graph = Arc::new(Graph::grid(3, 3).unwrap());
    let weights = uniform_spanning_tree_edge_probs(&graph).unwrap();
    let spec = MixtureSpec::ensemble_a();
    let alpha = SnrParam::new(0.0).unwrap();
    let mut worst: f64 = 0.0;
    for rep in 0..10u64 {
        let truth = draw_true_model(&graph, CouplingKind::Attractive, 0.7, derive_seed(300, &[rep]))
            .unwrap();
        let mu = exact_marginals_auto(&truth).unwrap();
        let theta_hat = trw_closed_form_estimate(&mu, &weights).unwrap();
        for draw in 0..3u64 {
            let x = sample_auto(&truth, derive_seed(301, &[rep, draw]), 1).unwrap().remove(0);
            let obs = trwmrf::predict::sample_observation(
                &x,
                &spec,
                alpha,
                derive_seed(302, &[rep, draw]),
            )
            .unwrap()
            .obs;
            // At zero snr the observation offset vanishes, so both chains
            // run on the unshifted models.
            let gamma = trwmrf::predict::gamma_from_observation(&graph, &spec, &obs).unwrap();
            let opt_marg = exact_marginals_auto(&truth.combined(&gamma).unwrap()).unwrap();
            let (app_marg, conv) = trw_sum_product(
                &theta_hat.combined(&gamma).unwrap(),
                &weights,
                &tight_opts(),
            )
            .unwrap();
            assert!(conv.converged);
            let z_opt = predict(&opt_marg, &spec, &obs).unwrap();
            let z_app = predict(&app_marg, &spec, &obs).unwrap();
            for (a, b) in z_app.iter().zip(&z_opt) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check(3, "zero-snr-cancellation", worst <= 1e-10, &format!("max gap {worst:.3e}"));
}

#[test]
fn c04_penalty_bound_dominates_realized_penalty() {
    let start = Instant::now();
    let graph = Arc::new(Graph::grid(3, 3).unwrap());
    let weights = uniform_spanning_tree_edge_probs(&graph).unwrap();
    let opts = tight_opts();
    let spec = MixtureSpec::ensemble_a();

    let truth = draw_true_model(&graph, CouplingKind::Attractive, 0.7, 4001).unwrap();
    let mu = exact_marginals_auto(&truth).unwrap();
    let theta_hat = trw_closed_form_estimate(&mu, &weights).unwrap();
    let x_samples = sample_auto(&truth, 4002, 10_000).unwrap();

    let l = trwmrf::bound::lipschitz_constant_estimate(
        &truth, &theta_hat, &weights, &opts, 20, 1.0, 4003,
    )
    .unwrap();

    let mut ok = true;
    let mut detail = String::new();
    for i in 1..=9 {
        let alpha = SnrParam::new(0.1 * i as f64).unwrap();
        let draws =
            trwmrf::bound::draw_observations(&x_samples, &spec, alpha, derive_seed(4004, &[i]))
                .unwrap();
        let bound = trwmrf::bound::theorem_bound(l, &spec, &graph, &draws).unwrap();
        let rep = trwmrf::bound::empirical_delta_mse(
            &truth, &theta_hat, &spec, &weights, &opts, &draws,
        )
        .unwrap();
        let slack = bound.mean + 3.0 * (bound.stderr + rep.delta.stderr) - rep.delta.mean;
        if slack < 0.0 {
            ok = false;
        }
        detail.push_str(&format!(
            "alpha={:.1} delta={:.3e} bound={:.3e}; ",
            0.1 * i as f64,
            rep.delta.mean,
            bound.mean
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        4,
        "penalty-bound-dominance",
        ok && elapsed < 300.0,
        &format!("L={l:.3}: {detail}elapsed {elapsed:.0}s"),
    );
}

fn sweep_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.rows = 8;
    cfg.cols = 8;
    cfg.coupling = CouplingKind::Attractive;
    cfg.gammas = vec![0.05, 0.7, 1.0];
    cfg.trials = 20;
    cfg.methods = vec![Method::Ind, Method::Bp, Method::Trw];
    cfg.seed = 2026;
    cfg
}

static SWEEP_CSV: OnceLock<String> = OnceLock::new();

fn sweep_csv() -> &'static str {
    SWEEP_CSV.get_or_init(|| run_experiment(&sweep_config()).unwrap())
}

#[test]
fn c05_method_comparison_reproduces_expected_ordering() {
    let start = Instant::now();
    let csv = sweep_csv();

    // mean pct_increase per (method, gamma, alpha) cell
    let mut sums: HashMap<(String, String, String), (f64, usize)> = HashMap::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let key = (f[0].to_string(), f[1].to_string(), f[2].to_string());
        let pct: f64 = f[7].parse().unwrap();
        let e = sums.entry(key).or_insert((0.0, 0));
        e.0 += pct;
        e.1 += 1;
    }
    let mean = |method: &str, gamma: &str, alpha: &str| -> f64 {
        let (s, c) = sums[&(method.to_string(), gamma.to_string(), alpha.to_string())];
        s / c as f64
    };
    let gammas = ["0.05", "0.7", "1"];
    let alphas: Vec<String> = (0..=10).map(|i| format!("{}", i as f64 / 10.0)).collect();

    // (a) weak coupling: every method loses at most 1% on average
    let mut weak_ok = true;
    let mut weak_worst: f64 = 0.0;
    for method in ["ind", "bp", "trw"] {
        for alpha in &alphas {
            let v = mean(method, "0.05", alpha);
            weak_worst = weak_worst.max(v);
            if v > 1.0 {
                weak_ok = false;
            }
        }
    }

    // (b) strong coupling, mid snr: averaged over the band, reweighting
    // beats plain sum-product at each strong coupling, and plain
    // sum-product falls behind even the independence fit somewhere
    let mid: Vec<&String> = alphas
        .iter()
        .filter(|a| matches!(a.as_str(), "0.2" | "0.3" | "0.4" | "0.5" | "0.6"))
        .collect();
    assert!(mid.len() == 5, "alpha grid labels drifted: {alphas:?}");
    let mut order_ok = true;
    let mut bp_over_ind = false;
    for gamma in ["0.7", "1"] {
        let band = |method: &str| -> f64 {
            mid.iter().map(|a| mean(method, gamma, a)).sum::<f64>() / mid.len() as f64
        };
        if band("bp") <= band("trw") {
            order_ok = false;
        }
        for alpha in &mid {
            if mean("bp", gamma, alpha) > mean("ind", gamma, alpha) {
                bp_over_ind = true;
            }
        }
    }

    // (c) reweighted fit stays within 15% of optimal everywhere
    let mut trw_ok = true;
    let mut trw_worst: f64 = 0.0;
    for gamma in gammas {
        for alpha in &alphas {
            let v = mean("trw", gamma, alpha);
            trw_worst = trw_worst.max(v);
            if v > 15.0 {
                trw_ok = false;
            }
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    check(
        5,
        "method-comparison-shape",
        weak_ok && order_ok && bp_over_ind && trw_ok && elapsed < 1800.0,
        &format!(
            "weak worst {weak_worst:.2}% (ok={weak_ok}), bp>trw at strong/mid {order_ok}, \
             bp>ind somewhere {bp_over_ind}, trw worst {trw_worst:.2}% (ok={trw_ok}), \
             elapsed {elapsed:.0}s"
        ),
    );
}

#[test]
fn c06_cycle_family_separates_local_and_global_consistency() {
    let report = run_polytope_demo();
    let row = |prefix: &str| -> Vec<String> {
        report
            .lines()
            .find(|l| l.starts_with(prefix))
            .unwrap_or_else(|| panic!("row {prefix} missing from:\n{report}"))
            .split_whitespace()
            .map(str::to_string)
            .collect()
    };
    let zero = row("0.00 ");
    let quarter = row("0.25 ");
    let ok = zero[1] == "true" && zero[3] == "false" && quarter[3] == "true";
    check(
        6,
        "local-vs-global-consistency",
        ok,
        &format!("rows: {} / {}", zero.join(" "), quarter.join(" ")),
    );
}

#[test]
fn c07_log_partition_curvature_is_bounded() {
    let mut worst_margin = f64::NEG_INFINITY;
    let mut ok = true;
    for rep in 0..50u64 {
        let n = 2 + (rep as usize) % 5; // 2..=6
        let m = 2 + (rep as usize) % 2;
        let graph = if n >= 3 && rep % 3 == 0 {
            // ring: adds one cycle to the tree cases
            let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            Arc::new(Graph::new(n, edges).unwrap())
        } else {
            random_tree(n, derive_seed(700, &[rep]))
        };
        let params = random_params(graph.clone(), m, 1.5, derive_seed(701, &[rep]));
        let h = hessian_log_partition(&params).unwrap();
        let lambda_max = h
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let d = MinimalLayout::new(&graph, m).dim() as f64;
        let margin = lambda_max - d / 4.0;
        worst_margin = worst_margin.max(margin);
        if margin > 1e-9 {
            ok = false;
        }
    }
    check(
        7,
        "curvature-bound",
        ok,
        &format!("worst lambda_max - d/4 = {worst_margin:.3e}"),
    );
}

#[test]
fn c08_reweighted_updates_converge_across_couplings() {
    let mut cfg = ExperimentConfig::default();
    cfg.rows = 4;
    cfg.cols = 4;
    cfg.coupling = CouplingKind::Attractive;
    cfg.gammas = vec![0.2, 0.4, 0.6, 0.8, 1.0];
    cfg.instances = 50;
    cfg.seed = 808;
    let report = run_stability_probe(&cfg).unwrap();
    let mut ok = true;
    let mut bp_at_one = String::from("?");
    for line in report.lines().skip(1) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let instances: usize = f[1].parse().unwrap();
        let trw_converged: usize = f[2].parse().unwrap();
        if trw_converged != instances {
            ok = false;
        }
        if f[0] == "1" || f[0].starts_with("1.0") || f[0] == "1.00" {
            bp_at_one = format!("{}/{}", f[3], f[1]);
        }
    }
    check(
        8,
        "convergence-stability",
        ok && bp_at_one != "?",
        &format!("plain sum-product convergence at strongest coupling: {bp_at_one}\n{report}"),
    );
    println!("  plain sum-product convergence at strongest coupling: {bp_at_one}");
}

#[test]
fn c09_sampling_covariance_matches_sandwich_formula() {
    let start = Instant::now();
    let graph = Arc::new(Graph::new(2, vec![(0, 1)]).unwrap());
    let truth = random_params(graph.clone(), 2, 0.8, 901);
    let weights = uniform_spanning_tree_edge_probs(&graph).unwrap();
    let opts = tight_opts();

    let mu_inf = exact_marginals_bruteforce(&truth).unwrap();
    let theta_inf = trw_closed_form_estimate(&mu_inf, &weights).unwrap();
    let predicted = sandwich_covariance(&theta_inf, &truth, &weights, &opts).unwrap();

    let n = 10_000usize;
    let reps = 500usize;
    let base = theta_inf.to_minimal();
    let d = base.len();
    let mut vectors = Vec::with_capacity(reps);
    for rep in 0..reps as u64 {
        let samples = sample_bruteforce(&truth, derive_seed(902, &[rep]), n).unwrap();
        let mu_n = empirical_marginals(&graph, 2, &samples).unwrap();
        let theta_n = trw_closed_form_estimate(&mu_n, &weights).unwrap();
        vectors.push((theta_n.to_minimal() - &base) * (n as f64).sqrt());
    }
    let mean = vectors.iter().fold(nalgebra_zero(d), |a, v| a + v) / reps as f64;
    let mut cov = nalgebra_zero_mat(d);
    for v in &vectors {
        let c = v - &mean;
        cov += &c * c.transpose();
    }
    cov /= reps as f64;

    let rel = (&cov - &predicted).norm() / predicted.norm();
    let elapsed = start.elapsed().as_secs_f64();
    check(
        9,
        "asymptotic-covariance",
        rel <= 0.15 && elapsed < 120.0,
        &format!("relative Frobenius distance {rel:.3}, elapsed {elapsed:.0}s"),
    );
}

fn nalgebra_zero(d: usize) -> nalgebra::DVector<f64> {
    nalgebra::DVector::zeros(d)
}

fn nalgebra_zero_mat(d: usize) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::zeros(d, d)
}

#[test]
fn c10_experiment_output_is_deterministic() {
    let first = sweep_csv();
    let second = run_experiment(&sweep_config()).unwrap();
    check(
        10,
        "determinism",
        first == second,
        "two runs with the same config and seed disagree",
    );
}
