//! Command-line front end: model sampling, fitting, inference, denoising,
//! and the experiment/bound/demo sweeps. Configuration comes from a flat
//! key=value file (see the `config` module docs); `--seed` overrides the
//! configured master seed and `--out` redirects output from stdout.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use trwmrf::config::ExperimentConfig;
use trwmrf::error::MrfError;
use trwmrf::estimate::{empirical_marginals, independence_estimate, smooth_marginals, trw_closed_form_estimate};
use trwmrf::experiment::{
    draw_true_model, edge_weights_for, independent_marginals, run_bound_comparison,
    run_experiment, run_polytope_demo, run_stability_probe, Method,
};
use trwmrf::graph::Graph;
use trwmrf::model::ExponentialParams;
use trwmrf::predict::{gamma_from_observation, predict, ObservationVector};
use trwmrf::transfer::{exact_marginals_auto, sample_auto};
use trwmrf::trw::trw_sum_product;

#[derive(Parser)]
#[command(name = "trwmrf", about = "Pairwise MRF estimation and denoising toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Flat key=value configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a random coupled field from the configured ensemble and write it
    /// in the model text format.
    SampleModel(Common),
    /// Fit the configured model from exact moments (infinite-data mode) or
    /// sampled configurations; writes the fitted model.
    Estimate(Common),
    /// Run the first configured method's inference on the configured model;
    /// writes marginal tables.
    Infer(Common),
    /// Denoise the configured observation file against the configured model;
    /// writes one estimate per line.
    Predict(Common),
    /// Full method-comparison sweep; writes CSV.
    Experiment(Common),
    /// Penalty bound versus realized penalty across mixture families; CSV.
    BoundCompare(Common),
    /// Local consistency versus exact realizability on the 3-cycle family.
    PolytopeDemo(Common),
    /// Convergence rates and perturbation stability across couplings.
    StabilityProbe(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig, MrfError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn emit(common: &Common, text: &str) -> Result<(), MrfError> {
    match &common.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn require_model(cfg: &ExperimentConfig) -> Result<ExponentialParams, MrfError> {
    let path = cfg.model_path.as_ref().ok_or_else(|| {
        MrfError::InvalidArgument("this subcommand needs a `model = path` config entry".into())
    })?;
    ExponentialParams::load(path.as_ref())
}

fn first_method(cfg: &ExperimentConfig) -> Method {
    *cfg.methods.first().expect("config validation ensures nonempty methods")
}

fn cmd_sample_model(cfg: &ExperimentConfig) -> Result<String, MrfError> {
    let graph = Arc::new(Graph::grid(cfg.rows, cfg.cols)?);
    let gamma = *cfg.gammas.first().expect("validated nonempty");
    let model = draw_true_model(&graph, cfg.coupling, gamma, cfg.seed)?;
    Ok(model.to_model_string())
}

fn cmd_estimate(cfg: &ExperimentConfig) -> Result<String, MrfError> {
    let truth = require_model(cfg)?;
    let graph = truth.graph().clone();
    let moments = if cfg.n_samples == 0 {
        exact_marginals_auto(&truth)?
    } else {
        let xs = sample_auto(&truth, cfg.seed, cfg.n_samples)?;
        let mut mu = empirical_marginals(&graph, truth.num_states(), &xs)?;
        if cfg.smoothing {
            smooth_marginals(&mut mu, cfg.n_samples);
        }
        mu
    };
    let method = first_method(cfg);
    let fitted = match edge_weights_for(method, &graph, &cfg.rho_source)? {
        None => independence_estimate(&moments)?,
        Some(w) => trw_closed_form_estimate(&moments, &w)?,
    };
    Ok(fitted.to_model_string())
}

fn cmd_infer(cfg: &ExperimentConfig) -> Result<String, MrfError> {
    let model = require_model(cfg)?;
    let graph = model.graph().clone();
    let method = first_method(cfg);
    let (marg, converged, iterations, delta) =
        match edge_weights_for(method, &graph, &cfg.rho_source)? {
            None => (independent_marginals(&model)?, true, 0, 0.0),
            Some(w) => {
                let (tau, rep) = trw_sum_product(&model, &w, &cfg.trw_options())?;
                (tau, rep.converged, rep.iterations, rep.final_delta)
            }
        };
    let mut out = format!(
        "# method {} converged {converged} iterations {iterations} delta {delta:.3e}\n",
        method.name()
    );
    for s in 0..graph.num_nodes() {
        let _ = write!(out, "node {s}");
        for v in marg.node(s) {
            let _ = write!(out, " {v:.16e}");
        }
        out.push('\n');
    }
    for (e, &(s, t)) in graph.edges().iter().enumerate() {
        let _ = write!(out, "edge {s} {t}");
        for v in marg.edge_table(e) {
            let _ = write!(out, " {v:.16e}");
        }
        out.push('\n');
    }
    Ok(out)
}

fn cmd_predict(cfg: &ExperimentConfig) -> Result<String, MrfError> {
    let model = require_model(cfg)?;
    let obs_path = cfg.observations.as_ref().ok_or_else(|| {
        MrfError::InvalidArgument("predict needs an `observations = path` config entry".into())
    })?;
    let obs = ObservationVector::load(obs_path.as_ref())?;
    let graph = model.graph().clone();
    let gamma = gamma_from_observation(&graph, &cfg.mixture, &obs)?;
    let post = model.combined(&gamma)?;
    let method = first_method(cfg);
    let marg = match edge_weights_for(method, &graph, &cfg.rho_source)? {
        None => independent_marginals(&post)?,
        Some(w) => trw_sum_product(&post, &w, &cfg.trw_options())?.0,
    };
    let z = predict(&marg, &cfg.mixture, &obs)?;
    let mut out = String::new();
    for v in z {
        let _ = writeln!(out, "{v:.16e}");
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), MrfError> {
    let (common, text) = match &cli.cmd {
        Cmd::SampleModel(c) => (c, cmd_sample_model(&load_config(c)?)?),
        Cmd::Estimate(c) => (c, cmd_estimate(&load_config(c)?)?),
        Cmd::Infer(c) => (c, cmd_infer(&load_config(c)?)?),
        Cmd::Predict(c) => (c, cmd_predict(&load_config(c)?)?),
        Cmd::Experiment(c) => (c, run_experiment(&load_config(c)?)?),
        Cmd::BoundCompare(c) => (c, run_bound_comparison(&load_config(c)?)?),
        Cmd::PolytopeDemo(c) => (c, run_polytope_demo()),
        Cmd::StabilityProbe(c) => (c, run_stability_probe(&load_config(c)?)?),
    };
    emit(common, &text)
}

fn exit_code_for(err: &MrfError) -> u8 {
    match err {
        MrfError::NanInMessages(_)
        | MrfError::InnerNotConverged(_)
        | MrfError::ZeroMomentCell(_)
        | MrfError::LineSearchFailed(_)
        | MrfError::SingularMatrix(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
