//! Column-stochastic weight matrices over effective graphs, their products,
//! cut flows, and ergodicity diagnostics.
//!
//! The matrix of a round graph assigns `W[i][j] = 1 / out_degree(j)` for
//! every edge `j -> i`, so each column `j` splits node `j`'s mass evenly
//! over its out-neighbors and every column sums to one.

use thiserror::Error;

use crate::graph::DiGraph;

/// Column sums of constructed matrices are exact to this tolerance.
pub const COLUMN_SUM_TOL: f64 = 1e-12;

/// Guard for enumerating all nontrivial subsets of `[n]`.
pub const MAX_SUBSET_ENUMERATION_N: usize = 16;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("node {node} has out-degree 0; its column cannot be stochastic")]
    ZeroOutDegree { node: usize },
    #[error("matrix size mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("subset must be nontrivial (neither empty nor all of [n])")]
    TrivialSubset,
    #[error("subset node {node} out of range for n = {n}")]
    SubsetOutOfRange { node: usize, n: usize },
    #[error("refusing to enumerate 2^{n} subsets; pass an explicit subset list for n > {max}",
            max = MAX_SUBSET_ENUMERATION_N)]
    SubsetEnumerationTooLarge { n: usize },
}

/// Dense non-negative square matrix with column sums equal to one.
///
/// Row-major storage; `get(i, j)` is the share of column `j`'s mass that
/// lands on row `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    /// Out-degree-normalized matrix of a round graph.
    ///
    /// `W[i][j] = 1 / out_degree(j)` for every edge `j -> i`, zero
    /// elsewhere. Errors if some node has no outgoing edge at all (its
    /// column would sum to zero); graphs built with self-loops never do.
    pub fn from_graph(g: &DiGraph) -> Result<Self, WeightsError> {
        let n = g.n();
        for j in 0..n {
            if g.out_degree(j) == 0 {
                return Err(WeightsError::ZeroOutDegree { node: j });
            }
        }
        let mut data = vec![0.0; n * n];
        for j in 0..n {
            let share = 1.0 / g.out_degree(j) as f64;
            for &i in g.out_neighbors(j) {
                data[i * n + j] = share;
            }
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    /// Construct from raw row-major entries (diagnostics and tests).
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self, WeightsError> {
        if data.len() != n * n {
            return Err(WeightsError::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for row in self.data.chunks_exact(self.n) {
            for (sum, v) in sums.iter_mut().zip(row) {
                *sum += v;
            }
        }
        sums
    }

    pub fn is_column_stochastic(&self, tol: f64) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
            && self.column_sums().iter().all(|&s| (s - 1.0).abs() <= tol)
    }

    /// Matrix-vector product `W x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, WeightsError> {
        if x.len() != self.n {
            return Err(WeightsError::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.n)) {
            *o = row.iter().zip(x).map(|(w, v)| w * v).sum();
        }
        Ok(out)
    }

    /// `self * rhs` (apply `rhs` first, then `self`).
    pub fn compose(&self, rhs: &WeightMatrix) -> Result<WeightMatrix, WeightsError> {
        if self.n != rhs.n {
            return Err(WeightsError::DimensionMismatch {
                expected: self.n,
                found: rhs.n,
            });
        }
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        Ok(WeightMatrix { n, data })
    }

    /// Digraph of positive entries: edge `j -> i` for each `W[i][j] > 0`.
    pub fn support_graph(&self) -> DiGraph {
        let mut edges = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.get(i, j) > 0.0 {
                    edges.push((j, i));
                }
            }
        }
        DiGraph::from_edges(self.n, &edges).expect("support edges are in range")
    }

    /// True iff the digraph of positive entries is strongly connected.
    pub fn is_irreducible(&self) -> bool {
        self.support_graph().is_strongly_connected()
    }
}

/// Product `W(b) * W(b-1) * ... * W(a)` of matrices listed by ascending
/// round index `a..=b`. An empty list gives the identity.
pub fn product<'a, I>(n: usize, ws: I) -> Result<WeightMatrix, WeightsError>
where
    I: IntoIterator<Item = &'a WeightMatrix>,
{
    let mut acc = WeightMatrix::identity(n);
    for w in ws {
        acc = w.compose(&acc)?;
    }
    Ok(acc)
}

fn check_subset(n: usize, subset: &[usize]) -> Result<Vec<bool>, WeightsError> {
    if subset.is_empty() {
        return Err(WeightsError::TrivialSubset);
    }
    let mut in_s = vec![false; n];
    for &v in subset {
        if v >= n {
            return Err(WeightsError::SubsetOutOfRange { node: v, n });
        }
        in_s[v] = true;
    }
    if in_s.iter().all(|&b| b) {
        return Err(WeightsError::TrivialSubset);
    }
    Ok(in_s)
}

/// Mass flowing out of `subset`: the sum of `W[i][j]` over `i` in the
/// subset and `j` outside it.
pub fn cut_flow(w: &WeightMatrix, subset: &[usize]) -> Result<f64, WeightsError> {
    let in_s = check_subset(w.n(), subset)?;
    let mut total = 0.0;
    for (i, &row_in) in in_s.iter().enumerate() {
        if !row_in {
            continue;
        }
        for (j, &col_in) in in_s.iter().enumerate() {
            if !col_in {
                total += w.get(i, j);
            }
        }
    }
    Ok(total)
}

/// Running partial sums of [`cut_flow`] over a matrix sequence. Entry `t`
/// holds the flow accumulated through round `t`.
pub fn cumulative_flow<'a, I>(ws: I, subset: &[usize]) -> Result<Vec<f64>, WeightsError>
where
    I: IntoIterator<Item = &'a WeightMatrix>,
{
    let mut sums = Vec::new();
    let mut acc = 0.0;
    for w in ws {
        acc += cut_flow(w, subset)?;
        sums.push(acc);
    }
    Ok(sums)
}

/// Every nontrivial subset of `0..n`, guarded against exponential blowup.
pub fn all_nontrivial_subsets(n: usize) -> Result<Vec<Vec<usize>>, WeightsError> {
    if n > MAX_SUBSET_ENUMERATION_N {
        return Err(WeightsError::SubsetEnumerationTooLarge { n });
    }
    let mut subsets = Vec::new();
    for mask in 1u32..((1u32 << n) - 1) {
        subsets.push((0..n).filter(|&v| mask & (1 << v) != 0).collect());
    }
    Ok(subsets)
}

/// Largest half-L1 distance between two columns; 0 iff all columns are
/// identical, at most 1 for column-stochastic input.
///
/// This is a column-disagreement (Dobrushin-style) coefficient used as an
/// empirical proxy for how far a product is from rank one; it is a
/// diagnostic, not the quantity any convergence bound is stated in.
pub fn ergodicity_coefficient(w: &WeightMatrix) -> f64 {
    let n = w.n();
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let dist: f64 = (0..n).map(|i| (w.get(i, a) - w.get(i, b)).abs()).sum();
            worst = worst.max(0.5 * dist);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{union, GraphEnsemble, GraphSequenceSampler};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn three_cycle_matrix() -> WeightMatrix {
        WeightMatrix::from_graph(&DiGraph::cycle(3).unwrap()).unwrap()
    }

    #[test]
    fn loops_only_gives_identity() {
        for n in 1..=5 {
            let w = WeightMatrix::from_graph(&DiGraph::loops_only(n).unwrap()).unwrap();
            assert_eq!(w, WeightMatrix::identity(n));
        }
    }

    #[test]
    fn complete_two_node_graph_is_uniform() {
        let w = WeightMatrix::from_graph(&DiGraph::complete(2).unwrap()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(w.get(i, j), 0.5);
            }
        }
    }

    #[test]
    fn three_cycle_entries_by_hand() {
        // Column j: 1/2 on the diagonal and 1/2 at j's successor row.
        let w = three_cycle_matrix();
        for j in 0..3 {
            for i in 0..3 {
                let expected = if i == j || i == (j + 1) % 3 { 0.5 } else { 0.0 };
                assert_eq!(w.get(i, j), expected, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn zero_out_degree_is_rejected() {
        // Node 1 never sends, not even to itself.
        let g = DiGraph::from_edges(2, &[(0, 0), (0, 1)]).unwrap();
        assert!(matches!(
            WeightMatrix::from_graph(&g),
            Err(WeightsError::ZeroOutDegree { node: 1 })
        ));
    }

    #[test]
    fn product_of_identities_is_identity() {
        let ids = vec![WeightMatrix::identity(3); 4];
        let p = product(3, &ids).unwrap();
        assert_eq!(p, WeightMatrix::identity(3));
    }

    #[test]
    fn product_of_single_matrix_is_itself() {
        let w = three_cycle_matrix();
        assert_eq!(product(3, [&w]).unwrap(), w);
    }

    #[test]
    fn product_of_uniform_matrices_is_uniform() {
        let w = WeightMatrix::from_graph(&DiGraph::complete(2).unwrap()).unwrap();
        let p = product(2, [&w, &w]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((p.get(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empty_product_is_identity() {
        assert_eq!(product(4, []).unwrap(), WeightMatrix::identity(4));
    }

    #[test]
    fn product_orientation_is_later_times_earlier() {
        // Rounds a..b ascending; the later matrix multiplies on the left.
        let a = WeightMatrix::from_graph(&DiGraph::with_loops(2, &[(0, 1)]).unwrap()).unwrap();
        let b = WeightMatrix::from_graph(&DiGraph::with_loops(2, &[(1, 0)]).unwrap()).unwrap();
        let p = product(2, [&a, &b]).unwrap();
        let expected = b.compose(&a).unwrap();
        assert_eq!(p, expected);
    }

    #[test]
    fn long_product_stays_column_stochastic() {
        let g1 = DiGraph::with_loops(5, &[(0, 1), (1, 2)]).unwrap();
        let g2 = DiGraph::with_loops(5, &[(2, 3), (3, 4), (4, 0)]).unwrap();
        let e = Arc::new(GraphEnsemble::new(vec![g1, g2], vec![0.5, 0.5]).unwrap());
        let mut s = GraphSequenceSampler::new(e.clone(), 4242);
        let mut acc = WeightMatrix::identity(5);
        for _ in 0..10_000 {
            let w = WeightMatrix::from_graph(e.graph(s.sample_next())).unwrap();
            acc = w.compose(&acc).unwrap();
        }
        assert!(acc.is_column_stochastic(1e-10));
    }

    #[test]
    fn identity_is_reducible_for_n_at_least_two() {
        assert!(!WeightMatrix::identity(2).is_irreducible());
        assert!(!WeightMatrix::identity(5).is_irreducible());
    }

    #[test]
    fn all_positive_matrix_is_irreducible() {
        let w = WeightMatrix::from_rows(2, vec![0.25, 0.5, 0.75, 0.5]).unwrap();
        assert!(w.is_irreducible());
    }

    #[test]
    fn cycle_matrix_is_irreducible() {
        assert!(three_cycle_matrix().is_irreducible());
    }

    #[test]
    fn irreducibility_matches_support_connectivity_exhaustively() {
        for n in 1..=4usize {
            let mut pairs = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        pairs.push((i, j));
                    }
                }
            }
            for mask in 0u32..(1 << pairs.len()) {
                let cross: Vec<(usize, usize)> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << k) != 0)
                    .map(|(_, &e)| e)
                    .collect();
                let g = DiGraph::with_loops(n, &cross).unwrap();
                let w = WeightMatrix::from_graph(&g).unwrap();
                assert_eq!(w.is_irreducible(), g.is_strongly_connected());
                assert_eq!(w.support_graph(), g);
            }
        }
    }

    #[test]
    fn cut_flow_of_identity_is_zero() {
        let w = WeightMatrix::identity(4);
        assert_eq!(cut_flow(&w, &[0]).unwrap(), 0.0);
        assert_eq!(cut_flow(&w, &[1, 3]).unwrap(), 0.0);
    }

    #[test]
    fn cut_flow_of_uniform_two_node_matrix() {
        let w = WeightMatrix::from_graph(&DiGraph::complete(2).unwrap()).unwrap();
        assert_eq!(cut_flow(&w, &[0]).unwrap(), 0.5);
    }

    #[test]
    fn cut_flow_of_cycle_matrix() {
        // Only W[0][2] = 1/2 crosses from {0} to its complement.
        let w = three_cycle_matrix();
        assert_eq!(cut_flow(&w, &[0]).unwrap(), 0.5);
    }

    #[test]
    fn trivial_subsets_are_rejected() {
        let w = WeightMatrix::identity(3);
        assert!(matches!(
            cut_flow(&w, &[]),
            Err(WeightsError::TrivialSubset)
        ));
        assert!(matches!(
            cut_flow(&w, &[0, 1, 2]),
            Err(WeightsError::TrivialSubset)
        ));
    }

    #[test]
    fn cumulative_flow_of_identities_is_zero() {
        let ids = vec![WeightMatrix::identity(3); 5];
        assert_eq!(cumulative_flow(&ids, &[0]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn cumulative_flow_of_constant_uniform_matrix_is_linear() {
        let w = WeightMatrix::from_graph(&DiGraph::complete(2).unwrap()).unwrap();
        let ws = vec![w; 6];
        let sums = cumulative_flow(&ws, &[0]).unwrap();
        for (t, s) in sums.iter().enumerate() {
            assert!((s - 0.5 * (t + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn cumulative_flow_alternating_identity_and_complete() {
        let id = WeightMatrix::identity(2);
        let full = WeightMatrix::from_graph(&DiGraph::complete(2).unwrap()).unwrap();
        let seq = vec![id.clone(), full.clone(), id.clone(), full.clone(), id, full];
        let sums = cumulative_flow(&seq, &[0]).unwrap();
        assert_eq!(sums, vec![0.0, 0.5, 0.5, 1.0, 1.0, 1.5]);
    }

    #[test]
    fn subset_enumeration_guard() {
        assert_eq!(all_nontrivial_subsets(3).unwrap().len(), 6);
        assert!(matches!(
            all_nontrivial_subsets(17),
            Err(WeightsError::SubsetEnumerationTooLarge { n: 17 })
        ));
    }

    #[test]
    fn ergodicity_coefficient_examples() {
        // Identical columns.
        let rank_one = WeightMatrix::from_rows(2, vec![0.3, 0.3, 0.7, 0.7]).unwrap();
        assert_eq!(ergodicity_coefficient(&rank_one), 0.0);
        // Identity, n = 2.
        assert_eq!(ergodicity_coefficient(&WeightMatrix::identity(2)), 1.0);
        // Uniform 2x2.
        let uniform = WeightMatrix::from_graph(&DiGraph::complete(2).unwrap()).unwrap();
        assert_eq!(ergodicity_coefficient(&uniform), 0.0);
    }

    #[test]
    fn ergodicity_coefficient_nonincreasing_along_products() {
        let g1 = DiGraph::with_loops(4, &[(0, 1), (1, 2)]).unwrap();
        let g2 = DiGraph::with_loops(4, &[(2, 3), (3, 0)]).unwrap();
        let e = Arc::new(GraphEnsemble::new(vec![g1, g2], vec![0.5, 0.5]).unwrap());
        for seed in [1u64, 2, 3] {
            let mut s = GraphSequenceSampler::new(e.clone(), seed);
            let mut accs = WeightMatrix::identity(4);
            let mut last = ergodicity_coefficient(&accs);
            for _ in 0..200 {
                let w = WeightMatrix::from_graph(e.graph(s.sample_next())).unwrap();
                accs = w.compose(&accs).unwrap();
                let coeff = ergodicity_coefficient(&accs);
                assert!(coeff <= last + 1e-12, "seed {seed}: {coeff} > {last}");
                assert!((0.0..=1.0 + 1e-12).contains(&coeff));
                last = coeff;
            }
        }
    }

    #[test]
    fn union_support_matches_matrix_of_union() {
        // Support of the union graph equals union of supports.
        let a = DiGraph::with_loops(3, &[(0, 1)]).unwrap();
        let b = DiGraph::with_loops(3, &[(1, 2), (2, 0)]).unwrap();
        let u = union(&[a.clone(), b.clone()]).unwrap();
        let wu = WeightMatrix::from_graph(&u).unwrap();
        assert_eq!(wu.support_graph(), u);
    }

    proptest! {
        #[test]
        fn columns_sum_to_one_for_random_graphs(
            n in 1usize..=6,
            mask in 0u64..,
        ) {
            let mut cross = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        if mask & (1 << k) != 0 {
                            cross.push((i, j));
                        }
                        k += 1;
                    }
                }
            }
            let g = DiGraph::with_loops(n, &cross).unwrap();
            let w = WeightMatrix::from_graph(&g).unwrap();
            for s in w.column_sums() {
                prop_assert!((s - 1.0).abs() <= COLUMN_SUM_TOL);
            }
        }

        #[test]
        fn compose_preserves_column_stochasticity(
            mask_a in 0u64..(1 << 12),
            mask_b in 0u64..(1 << 12),
        ) {
            let n = 4usize;
            let build = |mask: u64| {
                let mut cross = Vec::new();
                let mut k = 0;
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            if mask & (1 << k) != 0 {
                                cross.push((i, j));
                            }
                            k += 1;
                        }
                    }
                }
                WeightMatrix::from_graph(&DiGraph::with_loops(n, &cross).unwrap()).unwrap()
            };
            let p = build(mask_a).compose(&build(mask_b)).unwrap();
            prop_assert!(p.is_column_stochastic(1e-12));
        }
    }
}
