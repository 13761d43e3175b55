//! Experiment configuration, Monte Carlo execution, and metric rows.
//!
//! A JSON config names an ensemble (by file path or inline), an objective
//! family, initial states, and run parameters. [`ResolvedExperiment`]
//! turns that into validated runtime objects once — before any trial
//! runs — and [`run_experiment`] executes the trials in parallel,
//! appending mean-over-trials rows as the empirical stand-in for the
//! expectation the rate bound controls.
//!
//! Trial `m` uses seed `base_seed + m`, so results are independent of
//! execution order and reproducible bit for bit.

pub mod emit;
pub mod fit;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{averaged_gap_bound, BoundConstants, BoundsError, Gamma, RateBoundInputs};
use crate::consensus::{
    consensus_error, mpp_step, push_sum_step, ConsensusError, NetworkState, UniformPerturbation,
};
use crate::graph::{
    load_ensemble, EnsembleError, EnsembleSpec, GraphEnsemble, GraphSequenceSampler,
};
use crate::objective::{
    solve_centralized, Certificate, Objective, ObjectiveError, ObjectiveFamily,
};
use crate::optimize::{geometric_checkpoints, run_msp, run_sp, OptimizeError, RunPlan};
use crate::rng::{stream_rng, trial_seed, STREAM_INIT};
use fit::FitError;

/// A reported gap within this of zero counts as zero when the bound is
/// also zero, making the ratio 0 instead of 0/0.
pub const GAP_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl HarnessError {
    /// Stable machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidConfig(_) => "invalid_config",
            Self::Ensemble(_) => "ensemble",
            Self::Objective(_) => "objective",
            Self::Bounds(_) => "bounds",
            Self::Optimize(_) => "optimize",
            Self::Consensus(_) => "consensus",
            Self::Fit(_) => "fit",
            Self::Io { .. } => "io",
            Self::Parse { .. } => "parse",
        }
    }
}

/// Which protocol a run executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    /// Plain push-sum: no gating, no perturbation, no objective.
    Pushsum,
    /// Gated push-sum with a random norm-budgeted perturbation.
    Mpp,
    /// Ungated subgradient-push.
    Sp,
    /// Gated subgradient-push.
    #[default]
    Msp,
}

impl Algo {
    pub fn needs_objective(self) -> bool {
        matches!(self, Self::Sp | Self::Msp)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Pushsum => "pushsum",
            Self::Mpp => "mpp",
            Self::Sp => "sp",
            Self::Msp => "msp",
        };
        f.write_str(s)
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pushsum" => Ok(Self::Pushsum),
            "mpp" => Ok(Self::Mpp),
            "sp" => Ok(Self::Sp),
            "msp" => Ok(Self::Msp),
            other => Err(format!(
                "unknown algorithm {other:?}; expected pushsum, mpp, sp, or msp"
            )),
        }
    }
}

/// Where the graph ensemble comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleSource {
    /// Load from an ensemble JSON file (resolved relative to the config
    /// file's directory when the config was loaded from disk).
    Path(PathBuf),
    /// Inline ensemble in the same schema as the file format.
    Inline(EnsembleSpec),
}

/// Anchor vectors for the objective family: spelled out, or sampled once
/// (from the base seed, not per trial) from a box.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorSpec {
    Explicit(Vec<Vec<f64>>),
    RandomBox { lo: f64, hi: f64, dim: usize },
}

/// Objective family selector.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Abs { anchors: AnchorSpec },
    Huber { anchors: AnchorSpec, kappa: f64 },
}

/// Initial states `x(0)`.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    /// `x_i(0) = a_i`, node i starting at its own anchor.
    #[default]
    Anchors,
    Zeros,
    Explicit(Vec<Vec<f64>>),
    /// Sampled once from the base seed; shared by all trials so the rate
    /// bound (which depends on `x(0)`) is one number per checkpoint.
    RandomBox {
        lo: f64,
        hi: f64,
    },
}

fn default_gamma() -> f64 {
    0.6
}

fn default_trials() -> u64 {
    1
}

fn default_cap() -> f64 {
    1.0
}

/// One experiment, as written in a config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleSource,
    /// Required for `sp`/`msp`; optional for the consensus-only
    /// protocols, where it can still supply anchors for `init`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSpec>,
    #[serde(default)]
    pub init: InitSpec,
    /// Step exponent, open interval (0.5, 1).
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub horizon: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub algo: Algo,
    /// Optional cross-checks against the resolved ensemble/objective.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Explicit checkpoint rounds; defaults to powers of two plus the
    /// horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    /// Norm-budget constant `U` for `mpp` runs.
    #[serde(default = "default_cap")]
    pub perturbation_cap: f64,
    /// Default output directory; the CLI's `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// Read a config file (JSON).
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// A config turned into validated runtime objects. Construction performs
/// every check; a resolved experiment always runs.
#[derive(Clone, Debug)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub ensemble: Arc<GraphEnsemble>,
    pub family: Option<ObjectiveFamily>,
    pub certificate: Option<Certificate>,
    pub x0: Vec<Vec<f64>>,
    pub gamma: Gamma,
    /// `None` only for single-node networks, which have no ensemble
    /// constants.
    pub constants: Option<BoundConstants>,
    /// Assembled bound inputs when an objective and constants both exist.
    pub bound_inputs: Option<RateBoundInputs>,
    pub checkpoints: Vec<u64>,
}

impl ResolvedExperiment {
    /// Validate and resolve a config. `config_dir` anchors relative
    /// ensemble paths (pass the config file's parent directory).
    pub fn resolve(
        config: ExperimentConfig,
        config_dir: Option<&Path>,
    ) -> Result<Self, HarnessError> {
        if config.horizon < 1 {
            return Err(HarnessError::InvalidConfig(
                "horizon must be at least 1".into(),
            ));
        }
        if config.trials < 1 {
            return Err(HarnessError::InvalidConfig(
                "trials must be at least 1".into(),
            ));
        }
        let gamma = Gamma::new(config.gamma)?;
        if !(config.perturbation_cap.is_finite() && config.perturbation_cap >= 0.0) {
            return Err(HarnessError::InvalidConfig(format!(
                "perturbation_cap must be finite and non-negative, got {}",
                config.perturbation_cap
            )));
        }

        let ensemble = match &config.ensemble {
            EnsembleSource::Path(p) => {
                let path = match config_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.clone(),
                };
                Arc::new(load_ensemble(&path)?)
            }
            EnsembleSource::Inline(spec) => Arc::new(spec.build()?),
        };
        let n = ensemble.n();
        if let Some(expected) = config.n {
            if expected != n {
                return Err(HarnessError::InvalidConfig(format!(
                    "config says n = {expected} but the ensemble has {n} nodes"
                )));
            }
        }
        if config.algo.needs_objective() && config.objective.is_none() {
            return Err(HarnessError::InvalidConfig(format!(
                "algo {} needs an objective",
                config.algo
            )));
        }

        // One generator covers all one-time randomness, drawn in a fixed
        // order: anchors first, then initial states.
        let mut init_rng = stream_rng(config.seed, STREAM_INIT);

        let anchors = match &config.objective {
            Some(ObjectiveSpec::Abs { anchors }) | Some(ObjectiveSpec::Huber { anchors, .. }) => {
                Some(materialize_anchors(anchors, n, &mut init_rng)?)
            }
            None => None,
        };
        let family = match (&config.objective, &anchors) {
            (Some(ObjectiveSpec::Abs { .. }), Some(anchors)) => {
                let members = anchors
                    .iter()
                    .map(|a| Objective::abs(a.clone()))
                    .collect::<Result<Vec<_>, _>>()?;
                Some(ObjectiveFamily::new(members)?)
            }
            (Some(ObjectiveSpec::Huber { kappa, .. }), Some(anchors)) => {
                let members = anchors
                    .iter()
                    .map(|a| Objective::huber(a.clone(), *kappa))
                    .collect::<Result<Vec<_>, _>>()?;
                Some(ObjectiveFamily::new(members)?)
            }
            _ => None,
        };
        let certificate = family.as_ref().map(solve_centralized);

        let d = match (&family, config.d) {
            (Some(f), Some(d)) if f.dim() != d => {
                return Err(HarnessError::InvalidConfig(format!(
                    "config says d = {d} but the objective has dimension {}",
                    f.dim()
                )));
            }
            (Some(f), _) => f.dim(),
            (None, Some(d)) if d >= 1 => d,
            (None, Some(d)) => {
                return Err(HarnessError::InvalidConfig(format!(
                    "d must be at least 1, got {d}"
                )));
            }
            (None, None) => match &config.init {
                InitSpec::Explicit(rows) => rows.first().map(|r| r.len()).unwrap_or(0),
                _ => {
                    return Err(HarnessError::InvalidConfig(
                        "cannot infer the state dimension: give an objective, d, or explicit init"
                            .into(),
                    ));
                }
            },
        };
        if d == 0 {
            return Err(HarnessError::InvalidConfig(
                "state dimension must be at least 1".into(),
            ));
        }

        let x0 = match &config.init {
            InitSpec::Anchors => anchors.clone().ok_or_else(|| {
                HarnessError::InvalidConfig(
                    "init \"anchors\" needs an objective with anchors".into(),
                )
            })?,
            InitSpec::Zeros => vec![vec![0.0; d]; n],
            InitSpec::Explicit(rows) => {
                if rows.len() != n {
                    return Err(HarnessError::InvalidConfig(format!(
                        "init has {} states but the ensemble has {n} nodes",
                        rows.len()
                    )));
                }
                if rows.iter().any(|r| r.len() != d) {
                    return Err(HarnessError::InvalidConfig(format!(
                        "every init state must have dimension {d}"
                    )));
                }
                rows.clone()
            }
            InitSpec::RandomBox { lo, hi } => {
                check_box(*lo, *hi)?;
                (0..n)
                    .map(|_| (0..d).map(|_| init_rng.gen_range(*lo..*hi)).collect())
                    .collect()
            }
        };

        let constants = match BoundConstants::from_ensemble(&ensemble) {
            Ok(c) => Some(c),
            Err(BoundsError::TooFewNodes(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let bound_inputs = match (&family, &certificate, &constants) {
            (Some(family), Some(cert), Some(constants)) => {
                Some(RateBoundInputs::from_initial_states(
                    gamma,
                    family.lipschitz_sum(),
                    &x0,
                    cert.z_star.clone(),
                    constants.clone(),
                )?)
            }
            _ => None,
        };

        let checkpoints = match &config.checkpoints {
            Some(ts) => {
                let mut cps: Vec<u64> = ts
                    .iter()
                    .copied()
                    .filter(|&t| t >= 1 && t <= config.horizon)
                    .collect();
                cps.sort_unstable();
                cps.dedup();
                if cps.is_empty() {
                    return Err(HarnessError::InvalidConfig(
                        "checkpoints has no round within 1..=horizon".into(),
                    ));
                }
                cps
            }
            None => geometric_checkpoints(config.horizon),
        };

        Ok(Self {
            config,
            ensemble,
            family,
            certificate,
            x0,
            gamma,
            constants,
            bound_inputs,
            checkpoints,
        })
    }
}

fn check_box(lo: f64, hi: f64) -> Result<(), HarnessError> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(HarnessError::InvalidConfig(format!(
            "box bounds must be finite with lo < hi, got [{lo}, {hi}]"
        )))
    }
}

fn materialize_anchors(
    spec: &AnchorSpec,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>, HarnessError> {
    match spec {
        AnchorSpec::Explicit(rows) => {
            if rows.len() != n {
                return Err(HarnessError::InvalidConfig(format!(
                    "objective has {} anchors but the ensemble has {n} nodes",
                    rows.len()
                )));
            }
            let d = rows.first().map(|r| r.len()).unwrap_or(0);
            if d == 0 || rows.iter().any(|r| r.len() != d) {
                return Err(HarnessError::InvalidConfig(
                    "anchors must be non-empty vectors of one common dimension".into(),
                ));
            }
            Ok(rows.clone())
        }
        AnchorSpec::RandomBox { lo, hi, dim } => {
            check_box(*lo, *hi)?;
            if *dim == 0 {
                return Err(HarnessError::InvalidConfig(
                    "anchor dimension must be at least 1".into(),
                ));
            }
            Ok((0..n)
                .map(|_| (0..*dim).map(|_| rng.gen_range(*lo..*hi)).collect())
                .collect())
        }
    }
}

/// One checkpoint of one trial (or the mean over trials when `trial` is
/// `None`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    /// Trial index starting at 0; `None` marks a mean-over-trials row.
    pub trial: Option<u64>,
    pub t: u64,
    /// Ensemble index (0-based) of the graph realized at round `t`;
    /// `None` on mean rows. Serialized 1-based in CSV.
    pub graph_id: Option<usize>,
    pub gap_max: f64,
    pub gap_mean: f64,
    pub consensus_error: f64,
    pub min_y: f64,
    pub bound: f64,
    /// `gap_max / bound`, with 0/0 defined as 0.
    pub ratio: f64,
}

/// `gap / bound` with the degenerate conventions: a zero gap against a
/// zero bound is 0 (not NaN), and any finite gap against an infinite
/// bound is 0.
pub fn bound_ratio(gap: f64, bound: f64) -> f64 {
    if bound == 0.0 && gap.abs() <= GAP_ZERO_TOL {
        0.0
    } else {
        gap / bound
    }
}

/// Ratio `gap_max / averaged_gap_bound` per checkpoint row, recomputing the
/// bound from the inputs; mean rows included.
pub fn compare_bound(rows: &[MetricsRow], inputs: &RateBoundInputs) -> Vec<(u64, f64)> {
    rows.iter()
        .map(|row| {
            let bound = averaged_gap_bound(inputs, row.t.saturating_sub(1));
            (row.t, bound_ratio(row.gap_max, bound))
        })
        .collect()
}

fn subgradient_trial(
    exp: &ResolvedExperiment,
    trial: u64,
) -> Result<Vec<MetricsRow>, HarnessError> {
    let family = exp.family.as_ref().expect("validated at resolve time");
    let certificate = exp.certificate.as_ref().expect("validated at resolve time");
    let plan = RunPlan::new(
        exp.gamma,
        exp.config.horizon,
        trial_seed(exp.config.seed, trial),
    )
    .with_checkpoints(exp.checkpoints.iter().copied());
    let run = match exp.config.algo {
        Algo::Msp => run_msp(&exp.ensemble, family, exp.x0.clone(), certificate, &plan)?,
        Algo::Sp => run_sp(&exp.ensemble, family, exp.x0.clone(), certificate, &plan)?,
        _ => unreachable!("subgradient_trial only runs sp/msp"),
    };
    Ok(run
        .checkpoints
        .into_iter()
        .map(|cp| MetricsRow {
            trial: Some(trial),
            t: cp.t,
            graph_id: Some(cp.graph_id),
            gap_max: cp.gap_max,
            gap_mean: cp.gap_mean,
            consensus_error: cp.consensus_error,
            min_y: cp.min_y,
            bound: cp.bound,
            ratio: bound_ratio(cp.gap_max, cp.bound),
        })
        .collect())
}

fn consensus_trial(exp: &ResolvedExperiment, trial: u64) -> Result<Vec<MetricsRow>, HarnessError> {
    let seed = trial_seed(exp.config.seed, trial);
    let mut state = NetworkState::new(exp.x0.clone())?;
    let mut sampler = GraphSequenceSampler::new(Arc::clone(&exp.ensemble), seed);
    let (mut schedule, delta) = match exp.config.algo {
        Algo::Mpp => (
            Some(UniformPerturbation::new(
                exp.config.perturbation_cap,
                exp.gamma,
                seed,
            )?),
            exp.constants.as_ref().map(|c| c.delta).unwrap_or(0.0),
        ),
        Algo::Pushsum => (None, 0.0),
        _ => unreachable!("consensus_trial only runs pushsum/mpp"),
    };

    let mut rows = Vec::with_capacity(exp.checkpoints.len());
    let mut next = 0usize;
    for round in 1..=exp.config.horizon {
        let is_checkpoint = exp.checkpoints.get(next) == Some(&round);
        let x_bar_prev = if is_checkpoint {
            Some(state.x_bar())
        } else {
            None
        };

        let graph_id = sampler.sample_next();
        let graph = exp.ensemble.graph(graph_id);
        match schedule.as_mut() {
            Some(s) => {
                mpp_step(&mut state, graph, s, round, delta)?;
            }
            None => push_sum_step(&mut state, graph)?,
        }

        if let Some(x_bar_prev) = x_bar_prev {
            next += 1;
            // No averaged iterate and no certificate here: the gap, the
            // bound, and their ratio are reported as 0 by convention.
            rows.push(MetricsRow {
                trial: Some(trial),
                t: round,
                graph_id: Some(graph_id),
                gap_max: 0.0,
                gap_mean: 0.0,
                consensus_error: consensus_error(&state.z_snapshot(), &x_bar_prev),
                min_y: state.min_y(),
                bound: 0.0,
                ratio: 0.0,
            });
        }
    }
    Ok(rows)
}

fn run_trial(exp: &ResolvedExperiment, trial: u64) -> Result<Vec<MetricsRow>, HarnessError> {
    match exp.config.algo {
        Algo::Msp | Algo::Sp => subgradient_trial(exp, trial),
        Algo::Pushsum | Algo::Mpp => consensus_trial(exp, trial),
    }
}

/// Mean over trials per checkpoint, aggregated in trial-index order so
/// the result does not depend on execution order.
fn mean_rows(per_trial: &[Vec<MetricsRow>]) -> Vec<MetricsRow> {
    let Some(first) = per_trial.first() else {
        return Vec::new();
    };
    let m = per_trial.len() as f64;
    (0..first.len())
        .map(|j| {
            let mut gap_max = 0.0;
            let mut gap_mean = 0.0;
            let mut cons = 0.0;
            let mut min_y = 0.0;
            for rows in per_trial {
                gap_max += rows[j].gap_max;
                gap_mean += rows[j].gap_mean;
                cons += rows[j].consensus_error;
                min_y += rows[j].min_y;
            }
            // The bound depends only on the config, not the trial.
            let bound = first[j].bound;
            let gap_max = gap_max / m;
            MetricsRow {
                trial: None,
                t: first[j].t,
                graph_id: None,
                gap_max,
                gap_mean: gap_mean / m,
                consensus_error: cons / m,
                min_y: min_y / m,
                bound,
                ratio: bound_ratio(gap_max, bound),
            }
        })
        .collect()
}

/// Run all trials (in parallel, deterministically) and append the
/// mean-over-trials rows. Row order: trial 0's checkpoints, trial 1's, …,
/// then the mean rows.
pub fn run_experiment(exp: &ResolvedExperiment) -> Result<Vec<MetricsRow>, HarnessError> {
    let per_trial: Vec<Vec<MetricsRow>> = (0..exp.config.trials)
        .into_par_iter()
        .map(|trial| run_trial(exp, trial))
        .collect::<Result<_, _>>()?;
    let means = mean_rows(&per_trial);
    let mut rows: Vec<MetricsRow> = per_trial.into_iter().flatten().collect();
    rows.extend(means);
    Ok(rows)
}
