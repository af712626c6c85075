//! State-dependent proximity digraphs and their strongly connected components.

use std::collections::VecDeque;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::state::OpinionState;

/// Out-neighbor lists of the proximity digraph. Edge `i -> j` means agent `i`
/// averages the opinion of agent `j`. Every node carries a self-loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProximityDigraph {
    out: Vec<Vec<usize>>,
}

impl ProximityDigraph {
    /// Builds a digraph from explicit neighbor lists. Lists are sorted and
    /// deduplicated, and the self-loop is inserted when missing.
    pub fn from_neighbors(mut out: Vec<Vec<usize>>) -> Result<Self> {
        let n = out.len();
        for (i, list) in out.iter_mut().enumerate() {
            if let Some(&j) = list.iter().find(|&&j| j >= n) {
                return Err(Error::IndexOutOfRange { index: j, n });
            }
            list.push(i);
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { out })
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.out[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// All edges `(i, j)` in lexicographic order, self-loops included.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out.iter().enumerate().flat_map(|(i, list)| list.iter().map(move |&j| (i, j)))
    }

    /// Stable 64-bit FNV-1a hash of the sorted edge list.
    pub fn topology_hash(&self) -> u64 {
        let mut h = FnvHasher::default();
        h.write_u64(self.len() as u64);
        for (i, j) in self.edges() {
            h.write_u64(i as u64);
            h.write_u64(j as u64);
        }
        h.finish()
    }

    /// All nodes with a directed path to `i`, including `i` itself.
    pub fn predecessors(&self, i: usize) -> Result<Vec<usize>> {
        let n = self.len();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        let reverse = self.reversed();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([i]);
        seen[i] = true;
        while let Some(v) = queue.pop_front() {
            for &u in &reverse[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        Ok((0..n).filter(|&v| seen[v]).collect())
    }

    /// In-neighbor lists.
    pub fn reversed(&self) -> Vec<Vec<usize>> {
        let mut rev = vec![Vec::new(); self.len()];
        for (i, j) in self.edges() {
            rev[j].push(i);
        }
        rev
    }

    /// Weakly connected components, each sorted, ordered by smallest member.
    pub fn weakly_connected_components(&self) -> Vec<Vec<usize>> {
        let all: Vec<usize> = (0..self.len()).collect();
        weak_components(self, &all)
    }

    pub fn to_export(&self) -> DigraphExport {
        DigraphExport {
            n: self.len(),
            edges: self.edges().map(|(i, j)| [i, j]).collect(),
        }
    }
}

/// JSON shape of an exported digraph: `{"n": .., "edges": [[i, j], ..]}` with 0-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct DigraphExport {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

/// Proximity digraph of `state` with exact boundary comparison.
pub fn build_digraph(state: &OpinionState) -> ProximityDigraph {
    build_digraph_with_tolerance(state, 0.0)
}

/// Proximity digraph where `j` is a neighbor of `i` when `|y_i - y_j| <= R + eta`,
/// with `R` the listener's bound (SBC) or the speaker's bound (SBI).
pub fn build_digraph_with_tolerance(state: &OpinionState, eta: f64) -> ProximityDigraph {
    let y = state.opinions();
    let n = y.len();
    let out = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| i == j || (y[i] - y[j]).abs() <= state.edge_bound(i, j) + eta)
                .collect()
        })
        .collect();
    ProximityDigraph { out }
}

/// Strongly connected components in reverse topological order: every edge
/// between two different components points from a later component to an
/// earlier one. Members are sorted. Roots are visited in increasing index
/// order and neighbors in list order, so the output is reproducible.
pub fn strongly_connected_components(g: &ProximityDigraph) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = g.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next_index = 0;
    // (node, position of the next neighbor to scan)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let neighbors = g.out_neighbors(v);
            if *pos < neighbors.len() {
                let w = neighbors[*pos];
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                components.push(comp);
            }
        }
    }
    components
}

/// Weakly connected components of the subgraph induced by `nodes`.
pub(crate) fn weak_components(g: &ProximityDigraph, nodes: &[usize]) -> Vec<Vec<usize>> {
    let n = g.len();
    let mut inside = vec![false; n];
    for &v in nodes {
        inside[v] = true;
    }
    let mut undirected = vec![Vec::new(); n];
    for (i, j) in g.edges() {
        if i != j && inside[i] && inside[j] {
            undirected[i].push(j);
            undirected[j].push(i);
        }
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let mut sorted_nodes = nodes.to_vec();
    sorted_nodes.sort_unstable();
    for &start in &sorted_nodes {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &u in &undirected[v] {
                if !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                    queue.push_back(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}
