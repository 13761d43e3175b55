//! Round-synchronous push-sum and its perturbed, gated variant.
//!
//! One round does, for every node `i` simultaneously:
//!
//! ```text
//! w_i(t+1) = sum_{j -> i} x_j(t) / d_j(t)      (d_j = out-degree in the
//! y_i(t+1) = sum_{j -> i} y_j(t) / d_j(t)       effective graph)
//! z_i(t+1) = w_i(t+1) / y_i(t+1)
//! x_i(t+1) = w_i(t+1) + eps_i(t+1)
//! ```
//!
//! Plain push-sum is the special case with no gating and `eps = 0`. The
//! gated variant first removes the outgoing cross edges of every node
//! whose `y` has fallen below a threshold `delta`; the node keeps its
//! self-loop, so the weight matrix of the effective graph stays
//! column-stochastic and the node simply holds its mass for the round.

use std::io;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bounds::Gamma;
use crate::graph::{DiGraph, GraphEnsemble, GraphSequenceSampler};
use crate::rng::{stream_rng, STREAM_PERTURBATION};

/// Relative slack allowed when checking a perturbation against its
/// declared budget, so that a schedule saturating the cap exactly does
/// not trip the check through rounding.
pub const PERTURBATION_CAP_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("network must have at least one node")]
    EmptyNetwork,
    #[error("state dimension must be at least 1")]
    ZeroDimension,
    #[error("vector length mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("initial state of node {node} has a non-finite entry")]
    NonFiniteInitial { node: usize },
    #[error("node {node} has out-degree 0; every node must keep a self-loop")]
    ZeroOutDegree { node: usize },
    #[error("weight y of node {node} is no longer positive")]
    NonPositiveWeight { node: usize },
    #[error("perturbation at round {round} has l1 norm {norm:e}, over the budget {budget:e}")]
    ScheduleViolation { round: u64, norm: f64, budget: f64 },
    #[error("ensemble has {ensemble} nodes but {states} initial states were given")]
    NodeCountMismatch { ensemble: usize, states: usize },
    #[error("perturbation cap must be finite and non-negative, got {0}")]
    InvalidCap(f64),
}

/// Per-node protocol variables after the most recent round.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    /// Value being pushed next round.
    pub x: Vec<f64>,
    /// Mixed value received this round (pre-perturbation).
    pub w: Vec<f64>,
    /// Push-sum weight; positive as long as self-loops are retained.
    pub y: f64,
    /// Ratio estimate `w / y`.
    pub z: Vec<f64>,
}

/// All node states of one network, plus the shared dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    nodes: Vec<NodeState>,
    dim: usize,
}

impl NetworkState {
    /// Start of a run: `x(0)` given, `w(0) = x(0)`, `y(0) = 1`,
    /// `z(0) = x(0)`.
    pub fn new(x0: Vec<Vec<f64>>) -> Result<Self, ConsensusError> {
        if x0.is_empty() {
            return Err(ConsensusError::EmptyNetwork);
        }
        let dim = x0[0].len();
        if dim == 0 {
            return Err(ConsensusError::ZeroDimension);
        }
        let mut nodes = Vec::with_capacity(x0.len());
        for (i, xi) in x0.into_iter().enumerate() {
            if xi.len() != dim {
                return Err(ConsensusError::DimensionMismatch {
                    expected: dim,
                    found: xi.len(),
                });
            }
            if xi.iter().any(|v| !v.is_finite()) {
                return Err(ConsensusError::NonFiniteInitial { node: i });
            }
            nodes.push(NodeState {
                x: xi.clone(),
                w: xi.clone(),
                y: 1.0,
                z: xi,
            });
        }
        Ok(Self { dim, nodes })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeState {
        &self.nodes[i]
    }

    /// Mean of the pushed values, `1'x / n`, per coordinate.
    pub fn x_bar(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for node in &self.nodes {
            for (a, v) in acc.iter_mut().zip(&node.x) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= self.nodes.len() as f64;
        }
        acc
    }

    /// `1'x` per coordinate; conserved by mixing, shifted only by
    /// perturbations.
    pub fn total_mass(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for node in &self.nodes {
            for (a, v) in acc.iter_mut().zip(&node.x) {
                *a += v;
            }
        }
        acc
    }

    /// `1'y`; stays equal to `n` under column-stochastic mixing.
    pub fn y_sum(&self) -> f64 {
        self.nodes.iter().map(|s| s.y).sum()
    }

    pub fn min_y(&self) -> f64 {
        self.nodes.iter().map(|s| s.y).fold(f64::INFINITY, f64::min)
    }

    /// Clone of all ratio estimates.
    pub fn z_snapshot(&self) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|s| s.z.clone()).collect()
    }
}

/// Remove the outgoing cross edges of every node `j` with `y_j < delta`.
///
/// Self-loops are always retained, including for gated nodes: dropping a
/// gated node's own loop would zero its weight-matrix column and break
/// column-stochasticity, so a node that does not send still keeps its own
/// mass. The result therefore always contains all self-loops, even if the
/// available graph omitted some.
pub fn effective_graph(available: &DiGraph, y: &[f64], delta: f64) -> DiGraph {
    assert_eq!(
        available.n(),
        y.len(),
        "one y value per node of the available graph"
    );
    let edges: Vec<(usize, usize)> = available
        .edges()
        .filter(|&(j, i)| j == i || y[j] >= delta)
        .chain((0..available.n()).map(|i| (i, i)))
        .collect();
    DiGraph::from_edges(available.n(), &edges).expect("edges come from a valid graph")
}

/// Mixed values of one round, before the state is committed.
pub(crate) struct Mixed {
    pub w: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    /// Nodes whose cross edges were gated this round.
    pub gated: Vec<usize>,
    /// Materialized effective graph, `None` when gating removed nothing
    /// and the available graph was used as-is.
    pub effective: Option<DiGraph>,
}

/// Gate, then mix `x` and `y` through the effective graph's
/// column-stochastic weights and form the ratios. `delta <= 0` disables
/// gating entirely.
pub(crate) fn gated_mix(
    state: &NetworkState,
    available: &DiGraph,
    delta: f64,
) -> Result<Mixed, ConsensusError> {
    let n = state.n();
    if available.n() != n {
        return Err(ConsensusError::DimensionMismatch {
            expected: n,
            found: available.n(),
        });
    }

    let gated: Vec<usize> = (0..n).filter(|&j| state.nodes[j].y < delta).collect();
    let effective = if gated.is_empty() {
        None
    } else {
        let y: Vec<f64> = state.nodes.iter().map(|s| s.y).collect();
        Some(effective_graph(available, &y, delta))
    };
    let graph = effective.as_ref().unwrap_or(available);

    for j in 0..n {
        if graph.out_degree(j) == 0 {
            return Err(ConsensusError::ZeroOutDegree { node: j });
        }
    }

    let d = state.dim();
    let mut w = vec![vec![0.0; d]; n];
    let mut y_new = vec![0.0; n];
    for i in 0..n {
        for &j in graph.in_neighbors(i) {
            let share = 1.0 / graph.out_degree(j) as f64;
            y_new[i] += share * state.nodes[j].y;
            let (wi, xj) = (&mut w[i], &state.nodes[j].x);
            for k in 0..d {
                wi[k] += share * xj[k];
            }
        }
    }

    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        if !(y_new[i] > 0.0 && y_new[i].is_finite()) {
            return Err(ConsensusError::NonPositiveWeight { node: i });
        }
        z.push(w[i].iter().map(|v| v / y_new[i]).collect());
    }

    Ok(Mixed {
        w,
        y: y_new,
        z,
        gated,
        effective,
    })
}

/// Write mixed values and the new pushed values into the state.
pub(crate) fn commit(state: &mut NetworkState, mixed: Mixed, x_new: Vec<Vec<f64>>) {
    for (i, node) in state.nodes.iter_mut().enumerate() {
        node.y = mixed.y[i];
    }
    for ((node, w), (z, x)) in state
        .nodes
        .iter_mut()
        .zip(mixed.w)
        .zip(mixed.z.into_iter().zip(x_new))
    {
        node.w = w;
        node.z = z;
        node.x = x;
    }
}

/// One plain push-sum round: no gating, no perturbation, `x = w`.
pub fn push_sum_step(state: &mut NetworkState, available: &DiGraph) -> Result<(), ConsensusError> {
    let mixed = gated_mix(state, available, 0.0)?;
    let x_new = mixed.w.clone();
    commit(state, mixed, x_new);
    Ok(())
}

/// A perturbation source for the perturbed protocol.
///
/// The run enforces the budget `||eps(round)||_1 <= cap / round^gamma`
/// (l1 norm over all nodes and coordinates together) and aborts with
/// [`ConsensusError::ScheduleViolation`] if the schedule exceeds it.
/// `eval` sees the freshly mixed ratios `z(round)`, which is what lets a
/// subgradient term be expressed as a perturbation.
pub trait PerturbationSchedule {
    /// The constant `U` of the budget `U / round^gamma`.
    fn cap(&self) -> f64;
    /// The decay exponent of the budget.
    fn gamma(&self) -> Gamma;
    /// Perturbation vectors for the given round (`round >= 1`), one per
    /// node.
    fn eval(&mut self, round: u64, z: &[Vec<f64>]) -> Vec<Vec<f64>>;
}

/// No perturbation at all; turns the perturbed protocol into gated
/// push-sum.
#[derive(Clone, Debug)]
pub struct ZeroPerturbation {
    gamma: Gamma,
}

impl ZeroPerturbation {
    pub fn new() -> Self {
        Self {
            gamma: Gamma::new(0.6).expect("0.6 is in range"),
        }
    }
}

impl Default for ZeroPerturbation {
    fn default() -> Self {
        Self::new()
    }
}

impl PerturbationSchedule for ZeroPerturbation {
    fn cap(&self) -> f64 {
        0.0
    }

    fn gamma(&self) -> Gamma {
        self.gamma
    }

    fn eval(&mut self, _round: u64, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
        z.iter().map(|zi| vec![0.0; zi.len()]).collect()
    }
}

/// Random perturbations that respect the norm budget: node `i` gets
/// `(U / (n * round^gamma)) * u_i` with `u_i` uniform on `[-1, 1]^d`, and
/// the whole vector is rescaled if the total l1 norm would exceed
/// `U / round^gamma`.
#[derive(Clone, Debug)]
pub struct UniformPerturbation {
    cap: f64,
    gamma: Gamma,
    rng: ChaCha8Rng,
}

impl UniformPerturbation {
    pub fn new(cap: f64, gamma: Gamma, seed: u64) -> Result<Self, ConsensusError> {
        if !cap.is_finite() || cap < 0.0 {
            return Err(ConsensusError::InvalidCap(cap));
        }
        Ok(Self {
            cap,
            gamma,
            rng: stream_rng(seed, STREAM_PERTURBATION),
        })
    }
}

impl PerturbationSchedule for UniformPerturbation {
    fn cap(&self) -> f64 {
        self.cap
    }

    fn gamma(&self) -> Gamma {
        self.gamma
    }

    fn eval(&mut self, round: u64, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = z.len();
        let budget = self.cap / (round as f64).powf(self.gamma.value());
        let scale = budget / n as f64;
        let mut eps: Vec<Vec<f64>> = z
            .iter()
            .map(|zi| {
                (0..zi.len())
                    .map(|_| scale * self.rng.gen_range(-1.0..=1.0))
                    .collect()
            })
            .collect();
        let total: f64 = eps.iter().flatten().map(|v| v.abs()).sum();
        if total > budget {
            let shrink = budget / total;
            for v in eps.iter_mut().flatten() {
                *v *= shrink;
            }
        }
        eps
    }
}

/// What one gated, perturbed round did besides updating the state.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Nodes whose outgoing cross edges were removed this round.
    pub gated: Vec<usize>,
    /// Effective graph if it differs from the available one.
    pub effective: Option<DiGraph>,
    /// Per-coordinate sum of the applied perturbations, `1'eps(round)`;
    /// this is exactly the change of total mass in the round.
    pub eps_sum: Vec<f64>,
}

/// One round of the perturbed protocol: gate at `delta`, mix, form
/// ratios, then push `x = w + eps` with `eps` drawn from the schedule.
///
/// `round` is the index of the state being produced (`t + 1` when
/// stepping from `t`), so the first call of a run passes 1.
pub fn mpp_step(
    state: &mut NetworkState,
    available: &DiGraph,
    schedule: &mut dyn PerturbationSchedule,
    round: u64,
    delta: f64,
) -> Result<StepOutcome, ConsensusError> {
    let mixed = gated_mix(state, available, delta)?;
    let eps = schedule.eval(round, &mixed.z);

    if eps.len() != state.n() {
        return Err(ConsensusError::DimensionMismatch {
            expected: state.n(),
            found: eps.len(),
        });
    }
    let mut norm = 0.0;
    let mut eps_sum = vec![0.0; state.dim()];
    for ei in &eps {
        if ei.len() != state.dim() {
            return Err(ConsensusError::DimensionMismatch {
                expected: state.dim(),
                found: ei.len(),
            });
        }
        for (k, v) in ei.iter().enumerate() {
            norm += v.abs();
            eps_sum[k] += v;
        }
    }
    let budget = schedule.cap() / (round as f64).powf(schedule.gamma().value());
    if norm > budget * (1.0 + PERTURBATION_CAP_TOL) {
        return Err(ConsensusError::ScheduleViolation {
            round,
            norm,
            budget,
        });
    }

    let x_new: Vec<Vec<f64>> = mixed
        .w
        .iter()
        .zip(&eps)
        .map(|(wi, ei)| wi.iter().zip(ei).map(|(w, e)| w + e).collect())
        .collect();
    let gated = mixed.gated.clone();
    let effective = mixed.effective.clone();
    commit(state, mixed, x_new);
    Ok(StepOutcome {
        gated,
        effective,
        eps_sum,
    })
}

/// Everything recorded about one traced round.
#[derive(Clone, Debug)]
pub struct RoundTrace {
    /// Round index, starting at 1.
    pub t: u64,
    /// Index of the sampled graph in the ensemble's list (0-based; the
    /// CSV export writes it 1-based like every serialized id).
    pub graph_id: usize,
    /// Graph actually used after gating; contains all self-loops.
    pub effective: DiGraph,
    /// Nodes that were gated this round.
    pub gated: Vec<usize>,
    /// Full state snapshot after the round.
    pub states: Vec<NodeState>,
    pub min_y: f64,
    /// `max_i ||z_i(t) - xbar(t-1)||_inf`.
    pub consensus_error: f64,
}

/// Horizon, seed, and trace decimation of one run.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub horizon: u64,
    pub seed: u64,
    /// Keep every `trace_every`-th round (the final round is always
    /// kept). Defaults to 1 for horizons up to 10^4 and scales up beyond
    /// that so a run never stores more than ~10^4 trace rows.
    pub trace_every: u64,
}

impl RunOptions {
    pub fn new(horizon: u64, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            trace_every: horizon.div_ceil(10_000).max(1),
        }
    }

    pub fn trace_every(mut self, k: u64) -> Self {
        self.trace_every = k.max(1);
        self
    }
}

/// A finished run: the state before round 1, the traced rounds, and the
/// state after the final round.
#[derive(Clone, Debug)]
pub struct ConsensusRun {
    pub initial: NetworkState,
    pub traces: Vec<RoundTrace>,
    pub final_state: NetworkState,
}

/// `max_i max_k |z_i[k] - target[k]|`: worst deviation of any node's
/// ratio estimate from a target vector, in the coordinate-wise max norm
/// so scalar runs reproduce plain absolute values.
pub fn consensus_error(z: &[Vec<f64>], target: &[f64]) -> f64 {
    z.iter()
        .flat_map(|zi| zi.iter().zip(target).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

fn run_engine(
    ensemble: &Arc<GraphEnsemble>,
    x0: Vec<Vec<f64>>,
    mut schedule: Option<&mut dyn PerturbationSchedule>,
    delta: f64,
    opts: &RunOptions,
) -> Result<ConsensusRun, ConsensusError> {
    if ensemble.n() != x0.len() {
        return Err(ConsensusError::NodeCountMismatch {
            ensemble: ensemble.n(),
            states: x0.len(),
        });
    }
    let mut state = NetworkState::new(x0)?;
    let initial = state.clone();
    let mut sampler = GraphSequenceSampler::new(Arc::clone(ensemble), opts.seed);
    let mut traces = Vec::new();

    for round in 1..=opts.horizon {
        let keep = round % opts.trace_every == 0 || round == opts.horizon;
        let x_bar_prev = if keep { Some(state.x_bar()) } else { None };

        let graph_id = sampler.sample_next();
        let available = ensemble.graph(graph_id);
        let outcome = match schedule.as_deref_mut() {
            Some(s) => mpp_step(&mut state, available, s, round, delta)?,
            None => {
                push_sum_step(&mut state, available)?;
                StepOutcome {
                    gated: Vec::new(),
                    effective: None,
                    eps_sum: vec![0.0; state.dim()],
                }
            }
        };

        if let Some(x_bar_prev) = x_bar_prev {
            let z = state.z_snapshot();
            traces.push(RoundTrace {
                t: round,
                graph_id,
                effective: outcome.effective.unwrap_or_else(|| available.clone()),
                gated: outcome.gated,
                states: state.nodes.clone(),
                min_y: state.min_y(),
                consensus_error: consensus_error(&z, &x_bar_prev),
            });
        }
    }

    Ok(ConsensusRun {
        initial,
        traces,
        final_state: state,
    })
}

/// Run plain push-sum (no gating, no perturbation) for `opts.horizon`
/// rounds over graphs sampled from the ensemble. Deterministic in
/// `opts.seed`.
pub fn run_push_sum(
    ensemble: &Arc<GraphEnsemble>,
    x0: Vec<Vec<f64>>,
    opts: &RunOptions,
) -> Result<ConsensusRun, ConsensusError> {
    run_engine(ensemble, x0, None, 0.0, opts)
}

/// Run the gated, perturbed protocol. `delta` is the gating threshold
/// (pass 0 to disable gating); `y(0)` is all ones.
pub fn run_mpp(
    ensemble: &Arc<GraphEnsemble>,
    x0: Vec<Vec<f64>>,
    schedule: &mut dyn PerturbationSchedule,
    delta: f64,
    opts: &RunOptions,
) -> Result<ConsensusRun, ConsensusError> {
    run_engine(ensemble, x0, Some(schedule), delta, opts)
}

/// Export traced rounds as CSV: `t,graph_id,min_y,consensus_error`, plus
/// one `z<i>` (or `z<i>_<k>` for d > 1) column per node when n <= 10.
/// Node and graph ids are 1-based in the file, matching the ensemble file
/// format; floats use the shortest round-trip decimal form, so re-running
/// the same seed reproduces the file byte for byte.
pub fn write_trace_csv<W: io::Write>(run: &ConsensusRun, mut out: W) -> io::Result<()> {
    let n = run.final_state.n();
    let d = run.final_state.dim();
    let with_z = n <= 10;

    let mut header = String::from("t,graph_id,min_y,consensus_error");
    if with_z {
        for i in 1..=n {
            if d == 1 {
                header.push_str(&format!(",z{i}"));
            } else {
                for k in 1..=d {
                    header.push_str(&format!(",z{i}_{k}"));
                }
            }
        }
    }
    writeln!(out, "{header}")?;

    for trace in &run.traces {
        let mut row = format!(
            "{},{},{},{}",
            trace.t,
            trace.graph_id + 1,
            trace.min_y,
            trace.consensus_error
        );
        if with_z {
            for state in &trace.states {
                for v in &state.z {
                    row.push_str(&format!(",{v}"));
                }
            }
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}
