//! Canonical block form of the adjacency matrix and the final value at
//! constant topology.
//!
//! Reordering agents as closed-minded, then moderate-minded, then open-minded
//! puts `A(y)` into the block lower-triangular form
//!
//! ```text
//!            | C    0    0 |
//! P A P^T =  | 0    M    0 |
//!            | Θ_C  Θ_M  Θ |
//! ```
//!
//! where `C` and `M` are block diagonal (one block per sink component) and `Θ`
//! is block lower triangular over the open-minded components.

use nalgebra::{DMatrix, DVector};

use crate::classify::{classify, Classification, MindClass};
use crate::digraph::{build_digraph, ProximityDigraph};
use crate::dynamics::average;
use crate::error::{Error, Result};
use crate::matrix::{adjacency_matrix, left_perron_vector, spectral_radius, AdjacencyMatrix};
use crate::state::OpinionState;

/// One diagonal block: an SCC placed at `offset..offset + size` in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub component: usize,
    pub class: MindClass,
    pub offset: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalDecomposition {
    permutation: Vec<usize>,
    position: Vec<usize>,
    matrix: DMatrix<f64>,
    blocks: Vec<Block>,
    n_closed: usize,
    n_moderate: usize,
    n_open: usize,
}

/// Orders blocks closed, moderate, open. Closed and moderate components are
/// sorted by smallest member. Open components are grouped by open-minded WCC
/// (WCCs by smallest member) and, inside a WCC, placed only after all of
/// their open successors, ties going to the smallest member. Nodes inside a
/// component keep ascending order.
pub fn canonical_decomposition(a: &AdjacencyMatrix, c: &Classification) -> CanonicalDecomposition {
    let by_min_member = |class: MindClass| {
        let mut ids = c.ids_of(class);
        ids.sort_by_key(|&k| c.components[k].members[0]);
        ids
    };
    let mut order = by_min_member(MindClass::ClosedMinded);
    order.extend(by_min_member(MindClass::ModerateMinded));

    for wcc in &c.open_wccs {
        let mut pending: Vec<usize> = wcc.iter().map(|&v| c.component_of[v]).collect();
        pending.sort_by_key(|&k| c.components[k].members[0]);
        pending.dedup();
        let mut placed = vec![false; c.len()];
        while !pending.is_empty() {
            let pick = pending
                .iter()
                .position(|&k| {
                    c.condensation[k]
                        .iter()
                        .all(|&s| placed[s] || c.components[s].class != MindClass::OpenMinded)
                })
                .expect("condensation is acyclic");
            let k = pending.remove(pick);
            placed[k] = true;
            order.push(k);
        }
    }

    let mut permutation = Vec::with_capacity(c.component_of.len());
    let mut blocks = Vec::with_capacity(order.len());
    let (mut n_closed, mut n_moderate, mut n_open) = (0, 0, 0);
    for &k in &order {
        let comp = &c.components[k];
        blocks.push(Block { component: k, class: comp.class, offset: permutation.len(), size: comp.members.len() });
        permutation.extend_from_slice(&comp.members);
        match comp.class {
            MindClass::ClosedMinded => n_closed += comp.members.len(),
            MindClass::ModerateMinded => n_moderate += comp.members.len(),
            MindClass::OpenMinded => n_open += comp.members.len(),
        }
    }
    let n = permutation.len();
    let mut position = vec![0; n];
    for (p, &v) in permutation.iter().enumerate() {
        position[v] = p;
    }
    let src = a.matrix();
    let matrix = DMatrix::from_fn(n, n, |p, q| src[(permutation[p], permutation[q])]);
    CanonicalDecomposition { permutation, position, matrix, blocks, n_closed, n_moderate, n_open }
}

impl CanonicalDecomposition {
    /// Original node at each canonical position.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Canonical position of each original node.
    pub fn position(&self) -> &[usize] {
        &self.position
    }

    /// The permutation matrix `P` with `P A P^T` equal to [`Self::matrix`].
    pub fn permutation_matrix(&self) -> DMatrix<f64> {
        let n = self.permutation.len();
        DMatrix::from_fn(n, n, |p, v| if self.permutation[p] == v { 1.0 } else { 0.0 })
    }

    /// `P A P^T`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Maps a canonical-order matrix back to original order (`P^T B P`).
    pub fn restore(&self, canonical: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.permutation.len();
        DMatrix::from_fn(n, n, |i, j| canonical[(self.position[i], self.position[j])])
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn blocks_of(&self, class: MindClass) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(move |b| b.class == class)
    }

    pub fn block_of_component(&self, component: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.component == component)
    }

    pub fn n_closed(&self) -> usize {
        self.n_closed
    }

    pub fn n_moderate(&self) -> usize {
        self.n_moderate
    }

    pub fn n_open(&self) -> usize {
        self.n_open
    }

    fn sub(&self, row: usize, col: usize, rows: usize, cols: usize) -> DMatrix<f64> {
        self.matrix.view((row, col), (rows, cols)).into_owned()
    }

    pub fn block_matrix(&self, b: &Block) -> DMatrix<f64> {
        self.sub(b.offset, b.offset, b.size, b.size)
    }

    pub fn closed(&self) -> DMatrix<f64> {
        self.sub(0, 0, self.n_closed, self.n_closed)
    }

    pub fn moderate(&self) -> DMatrix<f64> {
        self.sub(self.n_closed, self.n_closed, self.n_moderate, self.n_moderate)
    }

    pub fn theta(&self) -> DMatrix<f64> {
        let o = self.n_closed + self.n_moderate;
        self.sub(o, o, self.n_open, self.n_open)
    }

    pub fn theta_closed(&self) -> DMatrix<f64> {
        self.sub(self.n_closed + self.n_moderate, 0, self.n_open, self.n_closed)
    }

    pub fn theta_moderate(&self) -> DMatrix<f64> {
        self.sub(self.n_closed + self.n_moderate, self.n_closed, self.n_open, self.n_moderate)
    }

    /// Spectral radius of `Θ`: the largest radius over its diagonal SCC blocks
    /// (`Θ` is block triangular). Zero when there are no open-minded agents.
    pub fn theta_spectral_radius(&self) -> Result<f64> {
        self.blocks_of(MindClass::OpenMinded)
            .map(|b| spectral_radius(&self.block_matrix(b)))
            .try_fold(0.0f64, |acc, r| r.map(|r| acc.max(r)))
    }

    /// For every open-minded row of `Θ` (in canonical order), the smallest
    /// power `p <= n` at which that row of `Θ^p` sums to less than one, if any.
    pub fn substochastic_powers(&self) -> Vec<Option<usize>> {
        let theta = self.theta();
        let k = theta.nrows();
        let n = self.permutation.len();
        let mut found = vec![None; k];
        let mut power = DMatrix::identity(k, k);
        for p in 1..=n {
            power = &power * &theta;
            for (row, slot) in found.iter_mut().enumerate() {
                if slot.is_none() && power.row(row).sum() < 1.0 - 1e-12 {
                    *slot = Some(p);
                }
            }
            if found.iter().all(Option::is_some) {
                break;
            }
        }
        found
    }

    /// `lim_t A(y)^t y` in closed form: closed blocks average once, moderate
    /// blocks collapse onto their left Perron weighting, and open rows solve
    /// `(I - Θ) x = Θ_C C y_C + Θ_M M* y_M` by LU with partial pivoting, after
    /// scaling each row by the agent's out-degree.
    pub fn final_value(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.permutation.len();
        if y.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: y.len() });
        }
        let mut f = vec![0.0; n];
        for b in &self.blocks {
            let members = &self.permutation[b.offset..b.offset + b.size];
            match b.class {
                MindClass::ClosedMinded => {
                    let v = average(y, members);
                    members.iter().for_each(|&i| f[i] = v);
                }
                MindClass::ModerateMinded => {
                    let nu = left_perron_vector(&self.block_matrix(b))?;
                    let v: f64 = members.iter().zip(nu.iter()).map(|(&i, w)| w * y[i]).sum();
                    members.iter().for_each(|&i| f[i] = v);
                }
                MindClass::OpenMinded => {}
            }
        }
        if self.n_open == 0 {
            return Ok(f);
        }
        // Scaling each open row by its out-degree turns `I - Θ` into the
        // integer matrix `D - B`, which keeps simple limits exact.
        let base = self.n_closed + self.n_moderate;
        let degree: Vec<f64> = (0..self.n_open).map(|k| (1.0 / self.matrix[(base + k, base + k)]).round()).collect();
        let rhs = DVector::from_fn(self.n_open, |k, _| {
            (0..base).filter(|&q| self.matrix[(base + k, q)] > 0.0).map(|q| f[self.permutation[q]]).sum()
        });
        let system = DMatrix::from_fn(self.n_open, self.n_open, |k, q| {
            if k == q {
                degree[k] - 1.0
            } else if self.matrix[(base + k, base + q)] > 0.0 {
                -1.0
            } else {
                0.0
            }
        });
        let x = system.lu().solve(&rhs).ok_or(Error::Singular("I - Θ"))?;
        for k in 0..self.n_open {
            f[self.permutation[base + k]] = x[k];
        }
        Ok(f)
    }
}

/// Everything derived from one opinion vector: digraph, classification,
/// adjacency matrix and canonical decomposition.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub digraph: ProximityDigraph,
    pub classification: Classification,
    pub adjacency: AdjacencyMatrix,
    pub decomposition: CanonicalDecomposition,
}

impl Snapshot {
    pub fn new(state: &OpinionState) -> Self {
        Self::from_digraph(build_digraph(state))
    }

    pub fn from_digraph(digraph: ProximityDigraph) -> Self {
        let classification = classify(&digraph);
        let adjacency = adjacency_matrix(&digraph);
        let decomposition = canonical_decomposition(&adjacency, &classification);
        Self { digraph, classification, adjacency, decomposition }
    }

    /// Final value at constant topology of `y` under this snapshot's topology.
    pub fn fvct(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.decomposition.final_value(y)
    }
}

/// Final value at constant topology: the limit of `A(y)^t y`.
pub fn fvct(state: &OpinionState) -> Result<Vec<f64>> {
    Snapshot::new(state).fvct(state.opinions())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::state::Model;

    fn sizes(d: &CanonicalDecomposition, class: MindClass) -> Vec<usize> {
        d.blocks_of(class).map(|b| b.size).collect()
    }

    #[test]
    fn seventeen_agent_layout() {
        let s = Snapshot::new(&fixtures::seventeen_agents());
        let d = &s.decomposition;
        assert_eq!(d.n_closed(), 6);
        assert_eq!(d.n_moderate(), 7);
        assert_eq!(d.n_open(), 4);
        let mut closed = sizes(d, MindClass::ClosedMinded);
        closed.sort_unstable();
        assert_eq!(closed, vec![1, 2, 3]);
        let mut moderate = sizes(d, MindClass::ModerateMinded);
        moderate.sort_unstable();
        assert_eq!(moderate, vec![3, 4]);
        for b in d.blocks_of(MindClass::ClosedMinded) {
            let m = d.block_matrix(b);
            assert!(m.iter().all(|&v| v == 1.0 / b.size as f64));
        }
        // Θ is block lower triangular in the chosen order.
        let theta = d.theta();
        let base = d.n_closed() + d.n_moderate();
        for (p, bp) in d.blocks_of(MindClass::OpenMinded).enumerate() {
            for bq in d.blocks_of(MindClass::OpenMinded).skip(p + 1) {
                let upper = theta.view((bp.offset - base, bq.offset - base), (bp.size, bq.size));
                assert!(upper.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn seventeen_agent_blocks_match_reference_matrices() {
        let d = Snapshot::new(&fixtures::seventeen_agents()).decomposition;
        let theta = d.theta();
        let mut diag: Vec<f64> = (0..4).map(|k| theta[(k, k)]).collect();
        diag.sort_by(f64::total_cmp);
        let mut want = vec![1.0 / 2.0, 1.0 / 9.0, 1.0 / 11.0, 1.0 / 10.0];
        want.sort_by(f64::total_cmp);
        assert_eq!(diag, want);
        let mut row_counts: Vec<(usize, usize)> = (0..4)
            .map(|k| {
                let tc = d.theta_closed().row(k).iter().filter(|&&v| v > 0.0).count();
                let tm = d.theta_moderate().row(k).iter().filter(|&&v| v > 0.0).count();
                (tc, tm)
            })
            .collect();
        row_counts.sort_unstable();
        let mut want_counts = vec![(1, 0), (6, 0), (3, 6), (1, 7)];
        want_counts.sort_unstable();
        assert_eq!(row_counts, want_counts);
    }

    #[test]
    fn all_closed_state() {
        let s = OpinionState::new(vec![0.0, 5.0], vec![0.1, 0.1], Model::Sbc).unwrap();
        let d = Snapshot::new(&s).decomposition;
        assert_eq!(d.n_closed(), 2);
        assert_eq!(d.n_moderate() + d.n_open(), 0);
        assert_eq!(d.closed(), DMatrix::identity(2, 2));
        assert_eq!(d.theta_spectral_radius().unwrap(), 0.0);
    }

    #[test]
    fn eight_agent_theta_blocks() {
        let d = Snapshot::new(&fixtures::leader_follower()).decomposition;
        let blocks: Vec<DMatrix<f64>> = d.blocks_of(MindClass::OpenMinded).map(|b| d.block_matrix(b)).collect();
        assert_eq!(blocks.len(), 3);
        assert_eq!(blocks[0], DMatrix::from_element(2, 2, 0.25));
        assert_eq!(blocks[1], DMatrix::from_element(1, 1, 1.0 / 3.0));
        assert_eq!(blocks[2], DMatrix::from_element(1, 1, 0.125));
        assert_eq!(d.theta_spectral_radius().unwrap(), 0.5);
    }

    #[test]
    fn permutation_similarity_is_exact() {
        let s = Snapshot::new(&fixtures::seventeen_agents());
        let p = s.decomposition.permutation_matrix();
        let a = s.adjacency.matrix();
        assert_eq!(&(&p * a * p.transpose()), s.decomposition.matrix());
        assert_eq!(&s.decomposition.restore(s.decomposition.matrix()), a);
    }

    #[test]
    fn fvct_three_agent() {
        let f = fvct(&fixtures::single_listener()).unwrap();
        assert_eq!(f[0], 0.0);
        assert_eq!(f[2], 1.0);
        assert!((f[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fvct_of_equilibrium_is_identity() {
        let s = OpinionState::new(vec![0.0, 0.5, 1.0], vec![0.25, 1.0, 0.25], Model::Sbc).unwrap();
        let f = fvct(&s).unwrap();
        for (a, b) in f.iter().zip(s.opinions()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn moderate_component_reaches_weighted_consensus() {
        let s = OpinionState::new(vec![0.0, 0.1, 0.2], vec![0.15; 3], Model::Sbc).unwrap();
        let f = fvct(&s).unwrap();
        // Left Perron vector of [[1/2,1/2,0],[1/3,1/3,1/3],[0,1/2,1/2]] is (2,3,2)/7.
        let want = (0.0 * 2.0 + 0.1 * 3.0 + 0.2 * 2.0) / 7.0;
        for v in f {
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn substochastic_witness_exists_for_open_rows() {
        let d = Snapshot::new(&fixtures::seventeen_agents()).decomposition;
        assert!(d.substochastic_powers().iter().all(|p| p.is_some_and(|p| p <= 17)));
    }
}
