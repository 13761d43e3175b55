//! Acceptance suite: one test per acceptance criterion.
//!
//! Each test prints a single `criterion NN ...: PASS` line on success
//! (visible with `cargo test --test acceptance -- --nocapture`); a
//! failure panics with the offending values. The criteria pin down, at
//! desk scale: conservation laws of the mixing step, consensus of plain
//! and perturbed push-sum, optimization and decay rate of the averaged
//! gap against the closed-form bound, the structural equivalences
//! between the protocol variants, window-level connectivity
//! probabilities, per-cut flow accumulation, and the frozen constants of
//! a reference two-node ensemble.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::Rng;

use randpush::bounds::{BoundConstants, Gamma};
use randpush::consensus::{
    consensus_error, mpp_step, run_mpp, run_push_sum, NetworkState, RunOptions,
    UniformPerturbation, ZeroPerturbation,
};
use randpush::graph::{DiGraph, EnsembleSpec, GraphEnsemble, GraphSequenceSampler};
use randpush::harness::fit::{fit_rate, linear_fit};
use randpush::harness::{
    compare_bound, run_experiment, Algo, AnchorSpec, EnsembleSource, ExperimentConfig, InitSpec,
    MetricsRow, ObjectiveSpec, ResolvedExperiment,
};
use randpush::objective::{Objective, ObjectiveFamily};
use randpush::optimize::{
    averaged_iterate_update, geometric_checkpoints, msp_step, run_msp, run_sp, step_size, RunPlan,
    SubgradientPerturbation,
};
use randpush::rng::stream_rng;
use randpush::weights::{all_nontrivial_subsets, cumulative_flow, product, WeightMatrix};

fn pass(id: u32, what: &str, started: Instant) {
    println!(
        "criterion {id:02} ({what}): PASS [{:.2}s]",
        started.elapsed().as_secs_f64()
    );
}

/// Two-graph, two-node ensemble: each graph carries one of the two cross
/// edges (plus the always-present self-loops), probability 1/2 each.
fn two_node_pair() -> Arc<GraphEnsemble> {
    let spec = EnsembleSpec {
        n: 2,
        graphs: vec![vec![(1, 2)], vec![(2, 1)]],
        probs: vec![0.5, 0.5],
    };
    Arc::new(spec.build().unwrap())
}

/// Five-node ensemble splitting a directed 5-cycle's cross edges between
/// two graphs, probability 1/2 each; the union is strongly connected but
/// neither graph alone is.
fn five_node_half_cycles() -> EnsembleSpec {
    EnsembleSpec {
        n: 5,
        graphs: vec![vec![(1, 2), (2, 3)], vec![(3, 4), (4, 5), (5, 1)]],
        probs: vec![0.5, 0.5],
    }
}

/// Random ensemble whose union is strongly connected by construction: a
/// directed ring scattered across the member graphs plus random extras.
fn random_ensemble(n: usize, rng: &mut impl Rng) -> GraphEnsemble {
    let graphs_len = 2 + rng.gen_range(0..2usize);
    let mut edge_sets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); graphs_len];
    for i in 0..n {
        let which = rng.gen_range(0..graphs_len);
        edge_sets[which].push((i, (i + 1) % n));
    }
    for _ in 0..2 * n {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            let which = rng.gen_range(0..graphs_len);
            edge_sets[which].push((u, v));
        }
    }
    let graphs: Vec<DiGraph> = edge_sets
        .iter()
        .map(|edges| DiGraph::with_loops(n, edges).unwrap())
        .collect();
    let probs = vec![1.0 / graphs_len as f64; graphs_len];
    GraphEnsemble::new(graphs, probs).unwrap()
}

/// The shared 20-trial median experiment used by the optimization and
/// rate criteria: five nodes, scalar abs objectives anchored at
/// (0, 1, 2, 8, 9) whose sum is minimized at the median 2 with value 16.
fn median_experiment() -> &'static (ResolvedExperiment, Vec<MetricsRow>) {
    static RUN: OnceLock<(ResolvedExperiment, Vec<MetricsRow>)> = OnceLock::new();
    RUN.get_or_init(|| {
        let horizon = 10_000;
        let mut checkpoints = geometric_checkpoints(horizon);
        checkpoints.push(100);
        let cfg = ExperimentConfig {
            ensemble: EnsembleSource::Inline(five_node_half_cycles()),
            objective: Some(ObjectiveSpec::Abs {
                anchors: AnchorSpec::Explicit(vec![
                    vec![0.0],
                    vec![1.0],
                    vec![2.0],
                    vec![8.0],
                    vec![9.0],
                ]),
            }),
            init: InitSpec::Anchors,
            gamma: 0.6,
            horizon,
            trials: 20,
            seed: 2024,
            algo: Algo::Msp,
            n: None,
            d: None,
            checkpoints: Some(checkpoints),
            perturbation_cap: 1.0,
            out_dir: None,
        };
        let exp = ResolvedExperiment::resolve(cfg, None).unwrap();
        let rows = run_experiment(&exp).unwrap();
        (exp, rows)
    })
}

fn mean_rows(rows: &[MetricsRow]) -> Vec<&MetricsRow> {
    rows.iter().filter(|r| r.trial.is_none()).collect()
}

#[test]
fn criterion_01_mixing_is_column_stochastic_and_conserves_mass() {
    let started = Instant::now();
    let horizon = 10_000u64;
    let gamma = Gamma::new(0.6).unwrap();
    for run in 0..20u64 {
        let n = 2 + (run as usize % 7); // cycles through n = 2..=8
        let mut rng = stream_rng(9_000 + run, 7);
        let ensemble = Arc::new(random_ensemble(n, &mut rng));
        let d = 2;
        let x0: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let delta = BoundConstants::from_ensemble(&ensemble).unwrap().delta;
        let mut schedule = UniformPerturbation::new(1.0, gamma, 31 + run).unwrap();
        let mut state = NetworkState::new(x0).unwrap();
        let mass0 = state.total_mass();
        let mut eps_total = vec![0.0; d];
        let mut sampler = GraphSequenceSampler::new(Arc::clone(&ensemble), 17 + run);

        for round in 1..=horizon {
            let graph_id = sampler.sample_next();
            let available = ensemble.graph(graph_id);
            let outcome = mpp_step(&mut state, available, &mut schedule, round, delta).unwrap();
            let effective = outcome.effective.as_ref().unwrap_or(available);
            let w = WeightMatrix::from_graph(effective).unwrap();
            for (j, sum) in w.column_sums().iter().enumerate() {
                assert!(
                    (sum - 1.0).abs() <= 1e-12,
                    "run {run} round {round}: column {j} sums to {sum}"
                );
            }
            let y_sum = state.y_sum();
            assert!(
                (y_sum - n as f64).abs() <= 1e-10,
                "run {run} round {round}: y mass {y_sum} != {n}"
            );
            for (acc, e) in eps_total.iter_mut().zip(&outcome.eps_sum) {
                *acc += e;
            }
        }

        let mass = state.total_mass();
        for k in 0..d {
            let drift = (mass[k] - mass0[k] - eps_total[k]).abs();
            assert!(
                drift < 1e-7,
                "run {run}: mass balance drift {drift} in coordinate {k}"
            );
        }
    }
    pass(1, "column stochasticity and mass conservation", started);
}

#[test]
fn criterion_02_push_sum_reaches_the_exact_average_on_a_cycle() {
    let started = Instant::now();
    let cycle = DiGraph::cycle(3).unwrap();
    let ensemble = Arc::new(GraphEnsemble::new(vec![cycle], vec![1.0]).unwrap());
    let x0 = vec![vec![3.0], vec![0.0], vec![0.0]];
    // True average is (3 + 0 + 0) / 3 = 1.
    let run = run_push_sum(&ensemble, x0, &RunOptions::new(500, 42)).unwrap();
    let err = consensus_error(&run.final_state.z_snapshot(), &[1.0]);
    assert!(err < 1e-6, "max deviation from the average is {err}");
    pass(2, "push-sum consensus to the exact average", started);
}

#[test]
fn criterion_03_random_graph_consensus_with_zero_perturbation() {
    let started = Instant::now();
    let ensemble = Arc::new(five_node_half_cycles().build().unwrap());
    let delta = BoundConstants::from_ensemble(&ensemble).unwrap().delta;
    for seed in 0..10u64 {
        let mut rng = stream_rng(seed, 11);
        let x0: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.gen_range(-10.0..10.0)]).collect();
        let average: f64 = x0.iter().map(|v| v[0]).sum::<f64>() / 5.0;
        let mut schedule = ZeroPerturbation::new();
        let run = run_mpp(
            &ensemble,
            x0,
            &mut schedule,
            delta,
            &RunOptions::new(5_000, seed).trace_every(5_000),
        )
        .unwrap();
        let err = consensus_error(&run.final_state.z_snapshot(), &[average]);
        assert!(err < 1e-6, "seed {seed}: consensus error {err} at t=5000");
    }
    pass(3, "consensus over random graph sequences", started);
}

#[test]
fn criterion_04_averaged_gap_shrinks_and_is_monotone() {
    let started = Instant::now();
    let (exp, rows) = median_experiment();
    let cert = exp.certificate.as_ref().unwrap();
    assert_eq!(cert.z_star, vec![2.0]);
    assert_eq!(cert.f_star, 16.0);

    let means = mean_rows(rows);
    assert_eq!(means.len(), exp.checkpoints.len());
    for row in &means {
        assert!(
            row.gap_max > 0.0 && row.gap_mean > 0.0,
            "gap must stay strictly positive at t={}, got max={} mean={}",
            row.t,
            row.gap_max,
            row.gap_mean
        );
    }

    let gap_at = |t: u64| means.iter().find(|r| r.t == t).unwrap().gap_max;
    let early = gap_at(100);
    let late = gap_at(10_000);
    assert!(
        late <= early / 3.0,
        "mean gap fell only from {early} (t=100) to {late} (t=10000)"
    );

    // Monotone nonincreasing along checkpoints, with 5% slack for
    // sampling noise in the 20-trial mean.
    for pair in means.windows(2) {
        assert!(
            pair[1].gap_max <= 1.05 * pair[0].gap_max,
            "mean gap rose from {} (t={}) to {} (t={})",
            pair[0].gap_max,
            pair[0].t,
            pair[1].gap_max,
            pair[1].t
        );
    }
    pass(
        4,
        "averaged gap decreases threefold and monotonically",
        started,
    );
}

#[test]
fn criterion_05_gap_decays_at_a_power_law_rate_inside_the_bound() {
    let started = Instant::now();
    let (exp, rows) = median_experiment();

    let fit = fit_rate(rows, 100, 10_000).unwrap();
    assert!(
        (-1.0..=-0.2).contains(&fit.slope),
        "log-log slope {} is outside [-1.0, -0.2]",
        fit.slope
    );

    // The closed-form bound is astronomically loose at this scale (for
    // n = 5 it overflows to +inf, making the ratio 0); containment, not
    // tightness, is the assertion.
    for row in rows {
        assert!(
            row.ratio <= 1.0,
            "gap/bound ratio {} exceeds 1 at t={}",
            row.ratio,
            row.t
        );
    }
    let inputs = exp.bound_inputs.as_ref().unwrap();
    for (t, ratio) in compare_bound(rows, inputs) {
        assert!(ratio <= 1.0, "recomputed ratio {ratio} exceeds 1 at t={t}");
    }

    // Cross-check with a two-node ensemble whose bound stays finite:
    // the ratio is then a real number that must still be at most 1.
    let cfg = ExperimentConfig {
        ensemble: EnsembleSource::Inline(EnsembleSpec {
            n: 2,
            graphs: vec![vec![(1, 2)], vec![(2, 1)]],
            probs: vec![0.5, 0.5],
        }),
        objective: Some(ObjectiveSpec::Huber {
            anchors: AnchorSpec::Explicit(vec![vec![0.0], vec![3.0]]),
            kappa: 5.0,
        }),
        init: InitSpec::Anchors,
        gamma: 0.6,
        horizon: 1_000,
        trials: 4,
        seed: 5,
        algo: Algo::Msp,
        n: None,
        d: None,
        checkpoints: None,
        perturbation_cap: 1.0,
        out_dir: None,
    };
    let exp2 = ResolvedExperiment::resolve(cfg, None).unwrap();
    let rows2 = run_experiment(&exp2).unwrap();
    for row in mean_rows(&rows2) {
        assert!(row.bound.is_finite() && row.bound > 0.0);
        assert!(row.gap_max > 0.0, "gap vanished at t={}", row.t);
        assert!(row.ratio > 0.0 && row.ratio <= 1.0);
    }
    pass(5, "power-law decay inside the closed-form bound", started);
}

#[test]
fn criterion_06_gating_is_inert_on_complete_graphs() {
    let started = Instant::now();
    let ensemble =
        Arc::new(GraphEnsemble::new(vec![DiGraph::complete(4).unwrap()], vec![1.0]).unwrap());
    let family = ObjectiveFamily::new(vec![
        Objective::abs(vec![0.0, 1.0]).unwrap(),
        Objective::abs(vec![2.0, -1.0]).unwrap(),
        Objective::abs(vec![4.0, 0.5]).unwrap(),
        Objective::abs(vec![-2.0, 3.0]).unwrap(),
    ])
    .unwrap();
    let certificate = randpush::objective::solve_centralized(&family);
    let x0 = vec![
        vec![0.0, 1.0],
        vec![2.0, -1.0],
        vec![4.0, 0.5],
        vec![-2.0, 3.0],
    ];
    let plan = RunPlan::new(Gamma::new(0.6).unwrap(), 1_000, 77);
    let gated = run_msp(&ensemble, &family, x0.clone(), &certificate, &plan).unwrap();
    let ungated = run_sp(&ensemble, &family, x0, &certificate, &plan).unwrap();
    // On a complete graph every y stays at 1, so the gate can never
    // fire and the two protocols must produce the same floats.
    assert_eq!(gated.final_state, ungated.final_state);
    assert_eq!(gated.checkpoints.len(), ungated.checkpoints.len());
    for (a, b) in gated.checkpoints.iter().zip(&ungated.checkpoints) {
        assert_eq!(a.gap_max, b.gap_max);
        assert_eq!(a.consensus_error, b.consensus_error);
    }
    pass(6, "gated equals ungated when the gate cannot fire", started);
}

#[test]
fn criterion_07_subgradient_as_perturbation_reproduces_the_gated_run() {
    let started = Instant::now();
    let ensemble = Arc::new(five_node_half_cycles().build().unwrap());
    let delta = BoundConstants::from_ensemble(&ensemble).unwrap().delta;
    let gamma = Gamma::new(0.6).unwrap();
    let family = ObjectiveFamily::new(
        [0.0f64, 1.0, 2.0, 8.0, 9.0]
            .iter()
            .map(|&a| Objective::abs(vec![a]).unwrap())
            .collect(),
    )
    .unwrap();
    let x0: Vec<Vec<f64>> = [0.0f64, 1.0, 2.0, 8.0, 9.0]
        .iter()
        .map(|&a| vec![a])
        .collect();

    for seed in 0..5u64 {
        // Gated subgradient-push, stepped directly.
        let mut direct = NetworkState::new(x0.clone()).unwrap();
        let mut sampler = GraphSequenceSampler::new(Arc::clone(&ensemble), seed);
        // The same protocol expressed as perturbed push-sum with
        // eps = -alpha * g, on an identical graph sequence.
        let mut via_eps = NetworkState::new(x0.clone()).unwrap();
        let mut eps_sampler = GraphSequenceSampler::new(Arc::clone(&ensemble), seed);
        let mut schedule = SubgradientPerturbation::new(&family, gamma);

        for round in 1..=1_000u64 {
            let g1 = sampler.sample_next();
            msp_step(
                &mut direct,
                ensemble.graph(g1),
                &family,
                round,
                gamma,
                delta,
            )
            .unwrap();
            let g2 = eps_sampler.sample_next();
            assert_eq!(g1, g2, "graph sequences must coincide");
            mpp_step(
                &mut via_eps,
                ensemble.graph(g2),
                &mut schedule,
                round,
                delta,
            )
            .unwrap();
            assert_eq!(
                direct, via_eps,
                "seed {seed}: states diverged at round {round}"
            );
        }
    }
    pass(
        7,
        "subgradient term as perturbation, exact reduction",
        started,
    );
}

#[test]
fn criterion_08_averaged_iterate_recursion_matches_the_closed_form() {
    let started = Instant::now();
    let gamma = Gamma::new(0.6).unwrap();
    let d = 3;
    for sequence in 0..100u64 {
        let mut rng = stream_rng(sequence, 13);
        let mut z_tilde = vec![0.0; d];
        let mut step_sum = 0.0;
        let mut weighted = vec![0.0; d];
        for t in 1..=1_000u64 {
            let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let alpha = step_size(t, gamma);
            z_tilde = averaged_iterate_update(&z_tilde, &z, step_sum, alpha);
            step_sum += alpha;
            for (acc, v) in weighted.iter_mut().zip(&z) {
                *acc += alpha * v;
            }
            for k in 0..d {
                let direct = weighted[k] / step_sum;
                assert!(
                    (z_tilde[k] - direct).abs() <= 1e-10,
                    "sequence {sequence} t={t}: recursion {} vs direct {direct}",
                    z_tilde[k]
                );
            }
        }
    }

    // The first update overwrites the initialization: alpha(1) = 1 and
    // S(0) = 0 make z~(1) = z(1) bit for bit.
    let z1 = vec![0.25, -3.5, 11.0];
    let from_zero = averaged_iterate_update(&[0.0; 3], &z1, 0.0, step_size(1, gamma));
    let from_junk = averaged_iterate_update(&[9e9, -4e4, 7.0], &z1, 0.0, step_size(1, gamma));
    assert_eq!(from_zero, z1);
    assert_eq!(from_junk, z1);
    pass(8, "averaged iterate recursion vs closed form", started);
}

#[test]
fn criterion_09_window_irreducibility_probability_exact_and_sampled() {
    let started = Instant::now();
    let ensemble = two_node_pair();
    let constants = BoundConstants::from_ensemble(&ensemble).unwrap();
    assert_eq!(constants.window, 2);

    let ws: Vec<WeightMatrix> = ensemble
        .graphs()
        .iter()
        .map(|g| WeightMatrix::from_graph(g).unwrap())
        .collect();

    // Exhaustive enumeration of the 4 equally likely two-round windows:
    // the product is irreducible exactly when both cross edges appear.
    let mut irreducible = 0u32;
    for a in 0..2 {
        for b in 0..2 {
            let w = product(2, [&ws[a], &ws[b]]).unwrap();
            if w.is_irreducible() {
                irreducible += 1;
            }
        }
    }
    let exact = f64::from(irreducible) / 4.0;
    assert_eq!(exact, 0.5);
    assert!(
        exact >= constants.p,
        "exact window probability {exact} below the floor {}",
        constants.p
    );

    // Monte Carlo over 10^4 sampled windows, within 3 sigma of exact.
    let trials = 10_000u32;
    let mut sampler = GraphSequenceSampler::new(Arc::clone(&ensemble), 99);
    let mut hits = 0u32;
    for _ in 0..trials {
        let a = sampler.sample_next();
        let b = sampler.sample_next();
        let w = product(2, [&ws[a], &ws[b]]).unwrap();
        if w.is_irreducible() {
            hits += 1;
        }
    }
    let freq = f64::from(hits) / f64::from(trials);
    let sigma = (exact * (1.0 - exact) / f64::from(trials)).sqrt();
    assert!(
        (freq - exact).abs() <= 3.0 * sigma,
        "sampled frequency {freq} vs exact {exact} (3 sigma = {})",
        3.0 * sigma
    );
    pass(9, "window irreducibility probability", started);
}

#[test]
fn criterion_10_every_cut_accumulates_flow_linearly() {
    let started = Instant::now();
    let mut rng = stream_rng(512, 23);
    let ensembles: Vec<Arc<GraphEnsemble>> = vec![
        two_node_pair(),
        Arc::new(five_node_half_cycles().build().unwrap()),
        Arc::new(random_ensemble(6, &mut rng)),
    ];
    let horizon = 1_000usize;
    for (which, ensemble) in ensembles.iter().enumerate() {
        let n = ensemble.n();
        let mut sampler = GraphSequenceSampler::new(Arc::clone(ensemble), 7 + which as u64);
        let ws: Vec<WeightMatrix> = (0..horizon)
            .map(|_| WeightMatrix::from_graph(ensemble.graph(sampler.sample_next())).unwrap())
            .collect();
        let xs: Vec<f64> = (1..=horizon).map(|t| t as f64).collect();
        for subset in all_nontrivial_subsets(n).unwrap() {
            let series = cumulative_flow(&ws, &subset).unwrap();
            let fit = linear_fit(&xs, &series).unwrap();
            assert!(
                fit.slope > 0.01,
                "ensemble {which}, cut {subset:?}: cumulative flow slope {} not clearly positive",
                fit.slope
            );
        }
    }
    pass(
        10,
        "cumulative cut flow grows linearly for every cut",
        started,
    );
}

#[test]
fn criterion_11_two_node_constants_regression() {
    let started = Instant::now();
    let constants = BoundConstants::from_ensemble(&two_node_pair()).unwrap();
    assert_eq!(constants.n, 2);
    assert_eq!(constants.window, 2);
    assert_eq!(constants.p, 0.25);
    assert_eq!(constants.delta, 0.0625);
    assert_eq!(constants.c1, 0.0078125);
    // Frozen value: ln(1 - lambda) = -64 ln 2 + ln(1/32), from
    // (1 - lambda) = x * p/(2 n B) with x = n^(-4 n B / p) = 2^-64 at
    // first order (the exact ln(1+..) correction is below 1e-19).
    let frozen = -64.0 * 2f64.ln() + (1.0 / 32.0f64).ln();
    let rel = (constants.ln_one_minus_lambda - frozen).abs() / frozen.abs();
    assert!(
        rel < 0.01,
        "ln(1-lambda) = {} differs from frozen {frozen} by {rel}",
        constants.ln_one_minus_lambda
    );
    // lambda itself rounds to 1.0 in f64 (1 - lambda ~ 5.3e-21), so the
    // open-interval membership is asserted in log space.
    assert!(constants.lambda_in_unit_interval());
    assert!(constants.one_minus_lambda() > 0.0);
    pass(11, "two-node ensemble constants", started);
}
