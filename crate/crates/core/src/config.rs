//! Flat key=value experiment configuration.
//!
//! Recognized keys (all optional; unknown keys are an error):
//!
//! ```text
//! # graph: either a grid ...
//! rows = 8
//! cols = 8
//! # ... or a model/graph read from a file (overrides rows/cols)
//! model = path/to/model.txt
//! observations = path/to/obs.txt   # for prediction
//! num_states = 2
//!
//! coupling = attractive          # or: mixed
//! gammas = 0.05, 0.7, 1.0        # coupling strengths, each in [0, 1]
//! alphas = 0.0, 0.1, ..., 1.0    # SNR grid, each in [0, 1]
//!
//! ensemble = a                   # a | b | explicit
//! mixture_means = -1.0, 1.0      # used when ensemble = explicit
//! mixture_vars = 0.5, 0.5
//!
//! trials = 20
//! obs_draws = 16                 # observation draws per trial
//! n_samples = 0                  # 0 = infinite-data mode (fit from exact moments)
//! smoothing = true
//! methods = trw, bp, ind
//! rho_source = ust               # ust | file:path
//! seed = 0
//!
//! tolerance = 1e-10
//! damping = 0.5
//! max_iter = 5000
//!
//! # bound comparison
//! l_fixed = 0.10
//! l_deltas = 20
//! l_radius = 1.0
//! y_samples = 500
//!
//! # stability probe
//! instances = 50
//! probes = 20
//! probe_radius = 0.5
//! ```

use std::path::Path;

use crate::error::{MrfError, Result};
use crate::experiment::Method;
use crate::predict::MixtureSpec;
use crate::trw::TrwOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    Attractive,
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RhoSource {
    UniformSpanningTree,
    File(String),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub rows: usize,
    pub cols: usize,
    pub model_path: Option<String>,
    /// Observation file consumed by the prediction entry point.
    pub observations: Option<String>,
    pub num_states: usize,
    pub coupling: CouplingKind,
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub mixture: MixtureSpec,
    pub trials: usize,
    pub obs_draws: usize,
    /// 0 selects infinite-data mode: fits use exact moments.
    pub n_samples: usize,
    pub smoothing: bool,
    pub methods: Vec<Method>,
    pub rho_source: RhoSource,
    pub seed: u64,
    pub tolerance: f64,
    pub damping: f64,
    pub max_iter: usize,
    pub l_fixed: f64,
    pub l_deltas: usize,
    pub l_radius: f64,
    pub y_samples: usize,
    pub instances: usize,
    pub probes: usize,
    pub probe_radius: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            rows: 8,
            cols: 8,
            model_path: None,
            observations: None,
            num_states: 2,
            coupling: CouplingKind::Attractive,
            gammas: vec![0.05, 0.25, 0.5, 0.7, 1.0],
            alphas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            mixture: MixtureSpec::ensemble_a(),
            trials: 20,
            obs_draws: 16,
            n_samples: 0,
            smoothing: true,
            methods: vec![Method::Ind, Method::Bp, Method::Trw],
            rho_source: RhoSource::UniformSpanningTree,
            seed: 0,
            tolerance: 1e-10,
            damping: 0.5,
            max_iter: 5000,
            l_fixed: 0.10,
            l_deltas: 20,
            l_radius: 1.0,
            y_samples: 500,
            instances: 50,
            probes: 20,
            probe_radius: 0.5,
        }
    }
}

impl ExperimentConfig {
    pub fn trw_options(&self) -> TrwOptions {
        TrwOptions {
            tolerance: self.tolerance,
            max_iter: self.max_iter,
            damping: self.damping,
            ..Default::default()
        }
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let perr = |msg: String| MrfError::Parse { path: origin.to_string(), msg };
        let mut cfg = ExperimentConfig::default();
        let mut means: Option<Vec<f64>> = None;
        let mut vars: Option<Vec<f64>> = None;
        let mut ensemble = "a".to_string();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(perr(format!("line {}: expected key = value", lineno + 1)));
            };
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| perr(format!("line {}: bad {what}: {value}", lineno + 1));
            match key {
                "rows" => cfg.rows = value.parse().map_err(|_| bad("rows"))?,
                "cols" => cfg.cols = value.parse().map_err(|_| bad("cols"))?,
                "model" => cfg.model_path = Some(value.to_string()),
                "observations" => cfg.observations = Some(value.to_string()),
                "num_states" => cfg.num_states = value.parse().map_err(|_| bad("num_states"))?,
                "coupling" => {
                    cfg.coupling = match value {
                        "attractive" => CouplingKind::Attractive,
                        "mixed" => CouplingKind::Mixed,
                        _ => return Err(bad("coupling kind")),
                    }
                }
                "gammas" => cfg.gammas = parse_list(value).map_err(|_| bad("gamma list"))?,
                "alphas" => cfg.alphas = parse_list(value).map_err(|_| bad("alpha list"))?,
                "ensemble" => ensemble = value.to_ascii_lowercase(),
                "mixture_means" => {
                    means = Some(parse_list(value).map_err(|_| bad("mixture means"))?)
                }
                "mixture_vars" => {
                    vars = Some(parse_list(value).map_err(|_| bad("mixture variances"))?)
                }
                "trials" => cfg.trials = value.parse().map_err(|_| bad("trials"))?,
                "obs_draws" => cfg.obs_draws = value.parse().map_err(|_| bad("obs_draws"))?,
                "n_samples" => cfg.n_samples = value.parse().map_err(|_| bad("n_samples"))?,
                "smoothing" => cfg.smoothing = parse_bool(value).map_err(|_| bad("smoothing"))?,
                "methods" => {
                    cfg.methods = value
                        .split(',')
                        .map(|t| Method::parse(t.trim()))
                        .collect::<Result<_>>()
                        .map_err(|_| bad("method list"))?
                }
                "rho_source" => {
                    cfg.rho_source = match value {
                        "ust" | "uniform-spanning-tree" => RhoSource::UniformSpanningTree,
                        v if v.starts_with("file:") => RhoSource::File(v[5..].to_string()),
                        _ => return Err(bad("rho source")),
                    }
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "tolerance" => cfg.tolerance = value.parse().map_err(|_| bad("tolerance"))?,
                "damping" => cfg.damping = value.parse().map_err(|_| bad("damping"))?,
                "max_iter" => cfg.max_iter = value.parse().map_err(|_| bad("max_iter"))?,
                "l_fixed" => cfg.l_fixed = value.parse().map_err(|_| bad("l_fixed"))?,
                "l_deltas" => cfg.l_deltas = value.parse().map_err(|_| bad("l_deltas"))?,
                "l_radius" => cfg.l_radius = value.parse().map_err(|_| bad("l_radius"))?,
                "y_samples" => cfg.y_samples = value.parse().map_err(|_| bad("y_samples"))?,
                "instances" => cfg.instances = value.parse().map_err(|_| bad("instances"))?,
                "probes" => cfg.probes = value.parse().map_err(|_| bad("probes"))?,
                "probe_radius" => {
                    cfg.probe_radius = value.parse().map_err(|_| bad("probe_radius"))?
                }
                _ => return Err(perr(format!("line {}: unknown key `{key}`", lineno + 1))),
            }
        }
        cfg.mixture = match ensemble.as_str() {
            "a" => MixtureSpec::ensemble_a(),
            "b" => MixtureSpec::ensemble_b(),
            "explicit" => {
                let (Some(m), Some(v)) = (means, vars) else {
                    return Err(perr(
                        "ensemble = explicit requires mixture_means and mixture_vars".into(),
                    ));
                };
                MixtureSpec::new(m, v)?
            }
            _ => return Err(perr(format!("unknown ensemble `{ensemble}`"))),
        };
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text, &path.display().to_string())
    }

    fn validate(&self, origin: &str) -> Result<()> {
        let perr = |msg: &str| MrfError::Parse { path: origin.to_string(), msg: msg.to_string() };
        if self.trials == 0 {
            return Err(perr("trials must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(perr("methods must be nonempty"));
        }
        if self.gammas.iter().any(|&g| !(0.0..=1.0).contains(&g)) {
            return Err(perr("gammas must lie in [0, 1]"));
        }
        if self.alphas.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(perr("alphas must lie in [0, 1]"));
        }
        if self.gammas.is_empty() || self.alphas.is_empty() {
            return Err(perr("gammas and alphas must be nonempty"));
        }
        if self.model_path.is_none() && (self.rows == 0 || self.cols == 0) {
            return Err(perr("grid dimensions must be positive"));
        }
        Ok(())
    }
}

fn parse_list(value: &str) -> std::result::Result<Vec<f64>, ()> {
    let out: Vec<f64> = value
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| ()))
        .collect::<std::result::Result<_, _>>()?;
    if out.is_empty() {
        return Err(());
    }
    Ok(out)
}

fn parse_bool(value: &str) -> std::result::Result<bool, ()> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(()),
    }
}
