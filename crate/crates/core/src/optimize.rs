//! Subgradient-push and its gated variant, with the step-size schedule
//! and the step-weighted averaged iterate whose optimality gap the rate
//! bound controls.
//!
//! One round from `t` to `t+1` (simultaneously at every node `i`):
//!
//! ```text
//! w_i(t+1) = sum_{j -> i} x_j(t) / d_j(t)
//! y_i(t+1) = sum_{j -> i} y_j(t) / d_j(t)
//! z_i(t+1) = w_i(t+1) / y_i(t+1)
//! x_i(t+1) = w_i(t+1) - alpha(t+1) * g_i(z_i(t+1))
//! ```
//!
//! The plain variant (`sp_*`) mixes over the available graph as-is; the
//! gated variant (`msp_*`) first removes the outgoing cross edges of
//! nodes whose `y` fell below the threshold `1/n^(2n)`, exactly like the
//! gated consensus step. Writing `eps = -alpha * g` turns either into the
//! perturbed push-sum protocol, which is how the convergence analysis
//! treats the subgradient term; [`SubgradientPerturbation`] implements
//! that reduction literally and the tests pin the two code paths to
//! bitwise agreement.

use std::sync::Arc;

use thiserror::Error;

use crate::bounds::{averaged_gap_bound, BoundConstants, BoundsError, Gamma, RateBoundInputs};
use crate::consensus::{
    commit, consensus_error, gated_mix, ConsensusError, NetworkState, PerturbationSchedule,
    StepOutcome,
};
use crate::graph::{DiGraph, GraphEnsemble, GraphSequenceSampler};
use crate::objective::{Certificate, ObjectiveError, ObjectiveFamily};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("network has {nodes} nodes but the family has {members} objectives")]
    FamilySizeMismatch { nodes: usize, members: usize },
    #[error("objective dimension {objective} does not match state dimension {state}")]
    ObjectiveDimMismatch { objective: usize, state: usize },
}

/// `alpha(t) = 1 / t^gamma` for `t >= 1`: non-summable but
/// square-summable on the whole admissible gamma range.
pub fn step_size(t: u64, gamma: Gamma) -> f64 {
    1.0 / (t as f64).powf(gamma.value())
}

fn check_family(state: &NetworkState, family: &ObjectiveFamily) -> Result<(), OptimizeError> {
    if family.n() != state.n() {
        return Err(OptimizeError::FamilySizeMismatch {
            nodes: state.n(),
            members: family.n(),
        });
    }
    if family.dim() != state.dim() {
        return Err(OptimizeError::ObjectiveDimMismatch {
            objective: family.dim(),
            state: state.dim(),
        });
    }
    Ok(())
}

fn subgradient_step(
    state: &mut NetworkState,
    available: &DiGraph,
    family: &ObjectiveFamily,
    round: u64,
    gamma: Gamma,
    delta: f64,
) -> Result<StepOutcome, OptimizeError> {
    check_family(state, family)?;
    let mixed = gated_mix(state, available, delta)?;
    let alpha = step_size(round, gamma);

    let d = state.dim();
    let mut eps_sum = vec![0.0; d];
    let mut x_new = Vec::with_capacity(state.n());
    for (i, wi) in mixed.w.iter().enumerate() {
        let g = family.member(i).subgradient(&mixed.z[i]);
        let mut xi = Vec::with_capacity(d);
        for k in 0..d {
            let step = alpha * g[k];
            eps_sum[k] -= step;
            xi.push(wi[k] - step);
        }
        x_new.push(xi);
    }

    let gated = mixed.gated.clone();
    let effective = mixed.effective.clone();
    commit(state, mixed, x_new);
    Ok(StepOutcome {
        gated,
        effective,
        eps_sum,
    })
}

/// One ungated subgradient-push round over the available graph.
pub fn sp_step(
    state: &mut NetworkState,
    available: &DiGraph,
    family: &ObjectiveFamily,
    round: u64,
    gamma: Gamma,
) -> Result<StepOutcome, OptimizeError> {
    subgradient_step(state, available, family, round, gamma, 0.0)
}

/// One gated subgradient-push round: identical to [`sp_step`] except the
/// mixing runs over the effective graph at threshold `delta`.
pub fn msp_step(
    state: &mut NetworkState,
    available: &DiGraph,
    family: &ObjectiveFamily,
    round: u64,
    gamma: Gamma,
    delta: f64,
) -> Result<StepOutcome, OptimizeError> {
    subgradient_step(state, available, family, round, gamma, delta)
}

/// The subgradient term expressed as a perturbation:
/// `eps_i(round) = -alpha(round) * g_i(z_i(round))`, evaluated at the
/// freshly mixed ratios. Feeding this to the perturbed push-sum runner
/// reproduces the gated subgradient-push trajectory bit for bit.
///
/// The declared cap is `sqrt(d) * L`: each node's term satisfies
/// `||alpha * g_i||_1 <= alpha * sqrt(d) * ||g_i||_2 <= alpha * sqrt(d) * L_i`.
pub struct SubgradientPerturbation<'a> {
    family: &'a ObjectiveFamily,
    gamma: Gamma,
}

impl<'a> SubgradientPerturbation<'a> {
    pub fn new(family: &'a ObjectiveFamily, gamma: Gamma) -> Self {
        Self { family, gamma }
    }
}

impl PerturbationSchedule for SubgradientPerturbation<'_> {
    fn cap(&self) -> f64 {
        (self.family.dim() as f64).sqrt() * self.family.lipschitz_sum()
    }

    fn gamma(&self) -> Gamma {
        self.gamma
    }

    fn eval(&mut self, round: u64, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let alpha = step_size(round, self.gamma);
        z.iter()
            .enumerate()
            .map(|(i, zi)| {
                self.family
                    .member(i)
                    .subgradient(zi)
                    .into_iter()
                    .map(|gk| -(alpha * gk))
                    .collect()
            })
            .collect()
    }
}

/// `z~(t+1) = (alpha(t+1) z(t+1) + S(t) z~(t)) / S(t+1)` with
/// `S(t+1) = S(t) + alpha(t+1)`; the step-weighted running average of a
/// node's ratio estimates. `S(0) = 0` makes `z~(1) = z(1)` regardless of
/// the initialization.
pub fn averaged_iterate_update(
    z_tilde: &[f64],
    z_new: &[f64],
    step_sum: f64,
    alpha: f64,
) -> Vec<f64> {
    let total = step_sum + alpha;
    z_tilde
        .iter()
        .zip(z_new)
        .map(|(old, new)| (alpha * new + step_sum * old) / total)
        .collect()
}

/// State of a gated subgradient-push run after `t` rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct MspState {
    pub network: NetworkState,
    /// Averaged iterates, one per node.
    pub z_tilde: Vec<Vec<f64>>,
    /// `S(t) = sum_{s=0}^{t-1} alpha(s+1)`.
    pub step_sum: f64,
    pub t: u64,
}

/// Rounds at which a run reports metrics: powers of two up to the
/// horizon, plus the horizon itself. Evenly spaced in log t, which is
/// what the rate fit wants.
pub fn geometric_checkpoints(horizon: u64) -> Vec<u64> {
    let mut ts = Vec::new();
    let mut t = 1u64;
    while t <= horizon {
        ts.push(t);
        match t.checked_mul(2) {
            Some(next) => t = next,
            None => break,
        }
    }
    if horizon > 0 && ts.last() != Some(&horizon) {
        ts.push(horizon);
    }
    ts
}

/// Metrics reported at one checkpoint round.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    /// Round index `t >= 1`; the metrics describe the state after round t.
    pub t: u64,
    /// Ensemble index of the graph sampled at round t (0-based).
    pub graph_id: usize,
    /// `max_i F(z~_i(t)) - F*`.
    pub gap_max: f64,
    /// `mean_i F(z~_i(t)) - F*`.
    pub gap_mean: f64,
    /// `max_i ||z_i(t) - xbar(t-1)||_inf`.
    pub consensus_error: f64,
    pub min_y: f64,
    /// Rate-bound value for the averaged iterate at round t (infinite
    /// when the network bound constants are undefined, i.e. n = 1).
    pub bound: f64,
}

/// A finished subgradient-push run.
#[derive(Clone, Debug)]
pub struct MspRun {
    pub checkpoints: Vec<Checkpoint>,
    pub final_state: MspState,
}

/// Step exponent, horizon, seed, and checkpoint rounds of one run.
#[derive(Clone, Debug)]
pub struct RunPlan {
    pub gamma: Gamma,
    pub horizon: u64,
    pub seed: u64,
    checkpoints: Vec<u64>,
}

impl RunPlan {
    /// Plan with the default geometric checkpoint schedule.
    pub fn new(gamma: Gamma, horizon: u64, seed: u64) -> Self {
        Self {
            gamma,
            horizon,
            seed,
            checkpoints: geometric_checkpoints(horizon),
        }
    }

    /// Replace the checkpoint rounds; they are sorted, deduplicated, and
    /// clipped to `1..=horizon`.
    pub fn with_checkpoints(mut self, ts: impl IntoIterator<Item = u64>) -> Self {
        let mut cps: Vec<u64> = ts
            .into_iter()
            .filter(|&t| t >= 1 && t <= self.horizon)
            .collect();
        cps.sort_unstable();
        cps.dedup();
        self.checkpoints = cps;
        self
    }

    pub fn checkpoints(&self) -> &[u64] {
        &self.checkpoints
    }
}

fn run_subgradient(
    ensemble: &Arc<GraphEnsemble>,
    family: &ObjectiveFamily,
    x0: Vec<Vec<f64>>,
    certificate: &Certificate,
    plan: &RunPlan,
    gated: bool,
) -> Result<MspRun, OptimizeError> {
    let gamma = plan.gamma;
    if ensemble.n() != x0.len() {
        return Err(OptimizeError::Consensus(
            ConsensusError::NodeCountMismatch {
                ensemble: ensemble.n(),
                states: x0.len(),
            },
        ));
    }

    // The gate threshold and the rate bound both come from the ensemble
    // constants; a single-node network has no such constants and gets a
    // vacuous (infinite) bound and an inert gate.
    let (delta, bound_inputs) = match BoundConstants::from_ensemble(ensemble) {
        Ok(constants) => {
            let delta = if gated { constants.delta } else { 0.0 };
            let inputs = RateBoundInputs::from_initial_states(
                gamma,
                family.lipschitz_sum(),
                &x0,
                certificate.z_star.clone(),
                constants,
            )?;
            (delta, Some(inputs))
        }
        Err(BoundsError::TooFewNodes(_)) => (0.0, None),
        Err(e) => return Err(e.into()),
    };

    let mut state = NetworkState::new(x0)?;
    let mut z_tilde = state.z_snapshot();
    let mut step_sum = 0.0;
    let mut sampler = GraphSequenceSampler::new(Arc::clone(ensemble), plan.seed);

    let schedule = plan.checkpoints();
    let mut next_checkpoint = 0usize;
    let mut checkpoints = Vec::with_capacity(schedule.len());

    for round in 1..=plan.horizon {
        let is_checkpoint = schedule.get(next_checkpoint) == Some(&round);
        let x_bar_prev = if is_checkpoint {
            Some(state.x_bar())
        } else {
            None
        };

        let graph_id = sampler.sample_next();
        let available = ensemble.graph(graph_id);
        subgradient_step(&mut state, available, family, round, gamma, delta)?;

        let alpha = step_size(round, gamma);
        for (zt, node) in z_tilde.iter_mut().zip(state.nodes()) {
            *zt = averaged_iterate_update(zt, &node.z, step_sum, alpha);
        }
        step_sum += alpha;

        if let Some(x_bar_prev) = x_bar_prev {
            next_checkpoint += 1;
            let gaps: Vec<f64> = z_tilde
                .iter()
                .map(|zt| family.evaluate_total(zt) - certificate.f_star)
                .collect();
            let gap_max = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let gap_mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
            let bound = bound_inputs
                .as_ref()
                .map(|inputs| averaged_gap_bound(inputs, round - 1))
                .unwrap_or(f64::INFINITY);
            checkpoints.push(Checkpoint {
                t: round,
                graph_id,
                gap_max,
                gap_mean,
                consensus_error: consensus_error(&state.z_snapshot(), &x_bar_prev),
                min_y: state.min_y(),
                bound,
            });
        }
    }

    Ok(MspRun {
        checkpoints,
        final_state: MspState {
            network: state,
            z_tilde,
            step_sum,
            t: plan.horizon,
        },
    })
}

/// Run gated subgradient-push: graphs sampled from the ensemble by the
/// plan's seed, gate threshold `1/n^(2n)`, averaged iterates maintained
/// throughout, metrics at the plan's checkpoint rounds. `certificate`
/// supplies the reference optimum the gaps subtract.
pub fn run_msp(
    ensemble: &Arc<GraphEnsemble>,
    family: &ObjectiveFamily,
    x0: Vec<Vec<f64>>,
    certificate: &Certificate,
    plan: &RunPlan,
) -> Result<MspRun, OptimizeError> {
    run_subgradient(ensemble, family, x0, certificate, plan, true)
}

/// Run plain (ungated) subgradient-push; otherwise identical to
/// [`run_msp`].
pub fn run_sp(
    ensemble: &Arc<GraphEnsemble>,
    family: &ObjectiveFamily,
    x0: Vec<Vec<f64>>,
    certificate: &Certificate,
    plan: &RunPlan,
) -> Result<MspRun, OptimizeError> {
    run_subgradient(ensemble, family, x0, certificate, plan, false)
}
