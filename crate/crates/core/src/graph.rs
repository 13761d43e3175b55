//! Directed graphs, graph ensembles, and the i.i.d. random graph sequence.
//!
//! A [`DiGraph`] is an unweighted directed graph on nodes `0..n`; an edge
//! `(i, j)` means node `i` sends to node `j`. Communication rounds assume
//! self-loops at every node, so [`DiGraph::with_loops`] is the usual
//! constructor. A [`GraphEnsemble`] is a finite list of candidate graphs with
//! sampling probabilities; [`GraphSequenceSampler`] draws an independent
//! graph per round from it.
//!
//! Node ids are 0-based in the Rust API. The on-disk ensemble format
//! ([`EnsembleSpec`]) uses 1-based ids and implied self-loops; see the
//! schema notes on that type.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, STREAM_GRAPHS};

/// Probabilities must sum to one within this tolerance.
pub const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    EmptyNodeSet,
    #[error("node {node} out of range for n = {n}")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("node count mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("union of an empty graph list is undefined")]
    EmptyUnion,
}

/// Directed graph with a fixed node set `0..n`.
///
/// Immutable after construction; adjacency is precomputed in both
/// directions so mixing steps and reachability queries are allocation-free.
#[derive(Clone, PartialEq, Eq)]
pub struct DiGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    in_neighbors: Vec<Vec<usize>>,
    out_neighbors: Vec<Vec<usize>>,
}

impl DiGraph {
    /// Graph with the given cross edges plus a self-loop at every node.
    pub fn with_loops(n: usize, cross_edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        edges.extend_from_slice(cross_edges);
        Self::from_edges(n, &edges)
    }

    /// Graph with exactly the given edge set; self-loops are not implied.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::EmptyNodeSet);
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n {
                return Err(GraphError::NodeOutOfRange { node: i, n });
            }
            if j >= n {
                return Err(GraphError::NodeOutOfRange { node: j, n });
            }
            set.insert((i, j));
        }
        let mut in_neighbors = vec![Vec::new(); n];
        let mut out_neighbors = vec![Vec::new(); n];
        for &(i, j) in &set {
            out_neighbors[i].push(j);
            in_neighbors[j].push(i);
        }
        // BTreeSet iteration gives (i, j) ascending, so out lists are sorted;
        // in lists need a sort of their own.
        for l in &mut in_neighbors {
            l.sort_unstable();
        }
        Ok(Self {
            n,
            edges: set,
            in_neighbors,
            out_neighbors,
        })
    }

    /// Self-loops only.
    pub fn loops_only(n: usize) -> Result<Self, GraphError> {
        Self::with_loops(n, &[])
    }

    /// Complete graph (every ordered pair, loops included).
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let mut cross = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    cross.push((i, j));
                }
            }
        }
        Self::with_loops(n, &cross)
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0` plus loops.
    pub fn cycle(n: usize) -> Result<Self, GraphError> {
        let cross: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::with_loops(n, &cross)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    /// True when every node has its self-loop.
    pub fn has_all_loops(&self) -> bool {
        (0..self.n).all(|i| self.edges.contains(&(i, i)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Nodes `j` with an edge `j -> i`, ascending.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_neighbors[i]
    }

    /// Nodes `j` with an edge `i -> j`, ascending.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_neighbors[i]
    }

    /// Out-degree of `i`, counting its self-loop if present.
    pub fn out_degree(&self, i: usize) -> usize {
        self.out_neighbors[i].len()
    }

    /// True iff every ordered node pair is joined by a directed path.
    ///
    /// Forward and backward search from node 0: everything reachable from 0
    /// and everything that reaches 0 means every pair is connected through 0.
    pub fn is_strongly_connected(&self) -> bool {
        if self.n == 1 {
            return true;
        }
        self.reaches_all(&self.out_neighbors) && self.reaches_all(&self.in_neighbors)
    }

    fn reaches_all(&self, adj: &[Vec<usize>]) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.n
    }
}

impl fmt::Debug for DiGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DiGraph(n={}, edges={:?})", self.n, self.edges)
    }
}

/// Edge-set union of graphs on a common node set.
pub fn union(graphs: &[DiGraph]) -> Result<DiGraph, GraphError> {
    let first = graphs.first().ok_or(GraphError::EmptyUnion)?;
    let n = first.n;
    let mut edges = Vec::new();
    for g in graphs {
        if g.n != n {
            return Err(GraphError::DimensionMismatch {
                expected: n,
                found: g.n,
            });
        }
        edges.extend(g.edges());
    }
    DiGraph::from_edges(n, &edges)
}

/// One validation check of an ensemble.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail report over all ensemble invariants. Produced by validation,
/// never by panicking: callers decide what to do with failures.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleReport {
    pub checks: Vec<EnsembleCheck>,
}

impl EnsembleReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &EnsembleCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for EnsembleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {}{}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                if c.detail.is_empty() {
                    String::new()
                } else {
                    format!(": {}", c.detail)
                }
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble:\n{report}")]
    Invalid { report: EnsembleReport },
    #[error("malformed graph in ensemble spec: {0}")]
    Graph(#[from] GraphError),
    #[error("failed to read ensemble file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse ensemble file {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

/// Validate candidate ensemble parts without constructing anything.
///
/// Checks, in order: list shapes, per-graph node counts, self-loops,
/// probability signs, normalization, and strong connectivity of the union
/// of graphs with positive probability.
pub fn validate_ensemble(graphs: &[DiGraph], probs: &[f64]) -> EnsembleReport {
    let mut checks = Vec::new();

    let nonempty = !graphs.is_empty();
    checks.push(EnsembleCheck {
        name: "graph_list_nonempty",
        passed: nonempty,
        detail: if nonempty {
            format!("{} graphs", graphs.len())
        } else {
            "no graphs".into()
        },
    });

    let len_match = graphs.len() == probs.len();
    checks.push(EnsembleCheck {
        name: "probs_length_matches",
        passed: len_match,
        detail: format!("{} graphs, {} probs", graphs.len(), probs.len()),
    });

    let n = graphs.first().map(|g| g.n()).unwrap_or(0);
    let same_n = graphs.iter().all(|g| g.n() == n);
    checks.push(EnsembleCheck {
        name: "common_node_count",
        passed: same_n,
        detail: if same_n {
            format!("n = {n}")
        } else {
            format!(
                "node counts {:?}",
                graphs.iter().map(DiGraph::n).collect::<Vec<_>>()
            )
        },
    });

    let missing_loops: Vec<usize> = graphs
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.has_all_loops())
        .map(|(b, _)| b)
        .collect();
    checks.push(EnsembleCheck {
        name: "self_loops_everywhere",
        passed: missing_loops.is_empty(),
        detail: if missing_loops.is_empty() {
            String::new()
        } else {
            format!("graphs missing loops: {missing_loops:?}")
        },
    });

    let nonneg = probs.iter().all(|&p| p >= 0.0);
    checks.push(EnsembleCheck {
        name: "probs_nonnegative",
        passed: nonneg,
        detail: if nonneg {
            String::new()
        } else {
            format!("{probs:?}")
        },
    });

    let sum: f64 = probs.iter().sum();
    let normalized = (sum - 1.0).abs() <= PROB_SUM_TOL && probs.iter().all(|p| p.is_finite());
    checks.push(EnsembleCheck {
        name: "probs_normalized",
        passed: normalized,
        detail: format!("sum = {sum}"),
    });

    // Union over graphs with positive probability must be strongly connected.
    let support: Vec<DiGraph> = graphs
        .iter()
        .zip(probs.iter())
        .filter(|(_, &p)| p > 0.0)
        .map(|(g, _)| g.clone())
        .collect();
    let union_sc = if !same_n || support.is_empty() {
        false
    } else {
        union(&support)
            .map(|u| u.is_strongly_connected())
            .unwrap_or(false)
    };
    checks.push(EnsembleCheck {
        name: "support_union_strongly_connected",
        passed: union_sc,
        detail: format!("{} graphs with positive probability", support.len()),
    });

    EnsembleReport { checks }
}

/// A validated set of candidate round graphs with sampling probabilities.
///
/// Construction runs [`validate_ensemble`]; a value of this type always
/// satisfies all ensemble invariants.
#[derive(Clone, Debug)]
pub struct GraphEnsemble {
    n: usize,
    graphs: Vec<DiGraph>,
    probs: Vec<f64>,
}

impl GraphEnsemble {
    pub fn new(graphs: Vec<DiGraph>, probs: Vec<f64>) -> Result<Self, EnsembleError> {
        let report = validate_ensemble(&graphs, &probs);
        if !report.is_valid() {
            return Err(EnsembleError::Invalid { report });
        }
        let n = graphs[0].n();
        Ok(Self { n, graphs, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn graph(&self, b: usize) -> &DiGraph {
        &self.graphs[b]
    }

    pub fn graphs(&self) -> &[DiGraph] {
        &self.graphs
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Smallest positive sampling probability.
    pub fn min_positive_prob(&self) -> f64 {
        self.probs
            .iter()
            .copied()
            .filter(|&p| p > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Serializable form (1-based node ids, self-loops omitted).
    pub fn to_spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            n: self.n,
            graphs: self
                .graphs
                .iter()
                .map(|g| {
                    g.edges()
                        .filter(|&(i, j)| i != j)
                        .map(|(i, j)| (i + 1, j + 1))
                        .collect()
                })
                .collect(),
            probs: self.probs.clone(),
        }
    }
}

/// On-disk ensemble description.
///
/// JSON schema (1-based node ids; self-loops may be omitted and are always
/// implied):
///
/// ```json
/// {
///   "n": 3,
///   "graphs": [ [[1, 2], [2, 3]], [[3, 1]] ],
///   "probs": [0.5, 0.5]
/// }
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    pub graphs: Vec<Vec<(usize, usize)>>,
    pub probs: Vec<f64>,
}

impl EnsembleSpec {
    fn to_graphs(&self) -> Result<Vec<DiGraph>, GraphError> {
        self.graphs
            .iter()
            .map(|edges| {
                let cross: Result<Vec<(usize, usize)>, GraphError> = edges
                    .iter()
                    .map(|&(i, j)| {
                        if i == 0 || j == 0 {
                            // 1-based ids on disk; 0 cannot be a node.
                            Err(GraphError::NodeOutOfRange { node: 0, n: self.n })
                        } else {
                            Ok((i - 1, j - 1))
                        }
                    })
                    .collect();
                DiGraph::with_loops(self.n, &cross?)
            })
            .collect()
    }

    /// Validation report for the spec, including edge-range problems.
    pub fn validate(&self) -> EnsembleReport {
        match self.to_graphs() {
            Ok(graphs) => validate_ensemble(&graphs, &self.probs),
            Err(e) => EnsembleReport {
                checks: vec![EnsembleCheck {
                    name: "edges_in_range",
                    passed: false,
                    detail: e.to_string(),
                }],
            },
        }
    }

    /// Build the validated ensemble, refusing invalid input.
    pub fn build(&self) -> Result<GraphEnsemble, EnsembleError> {
        let graphs = self.to_graphs()?;
        GraphEnsemble::new(graphs, self.probs.clone())
    }
}

/// Load and validate an ensemble file (JSON, [`EnsembleSpec`] schema).
pub fn load_ensemble(path: &Path) -> Result<GraphEnsemble, EnsembleError> {
    let text = std::fs::read_to_string(path).map_err(|source| EnsembleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let spec: EnsembleSpec =
        serde_json::from_str(&text).map_err(|source| EnsembleError::Parse {
            path: path.display().to_string(),
            source,
        })?;
    spec.build()
}

/// I.i.d. sampler over a validated ensemble.
///
/// Identical `(ensemble, seed)` reproduces the identical graph sequence.
/// Each Monte Carlo trial owns its own sampler; they never share state.
pub struct GraphSequenceSampler {
    ensemble: Arc<GraphEnsemble>,
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    t: u64,
}

impl GraphSequenceSampler {
    pub fn new(ensemble: Arc<GraphEnsemble>, seed: u64) -> Self {
        let dist = WeightedIndex::new(ensemble.probs().iter().copied())
            .expect("validated ensemble has a positive-probability graph");
        Self {
            ensemble,
            dist,
            rng: stream_rng(seed, STREAM_GRAPHS),
            t: 0,
        }
    }

    /// Draw the graph index for the current round and advance the round counter.
    pub fn sample_next(&mut self) -> usize {
        self.t += 1;
        self.dist.sample(&mut self.rng)
    }

    /// Rounds drawn so far.
    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn ensemble(&self) -> &GraphEnsemble {
        &self.ensemble
    }

    pub fn graph(&self, b: usize) -> &DiGraph {
        self.ensemble.graph(b)
    }
}
