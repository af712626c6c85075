//! Three-way classification of strongly connected components.
//!
//! A sink of the condensation whose agents all listen to each other is
//! *closed-minded*; a sink that is not complete is *moderate-minded*; every
//! other component is *open-minded*.

use serde::Serialize;

use crate::digraph::{strongly_connected_components, weak_components, ProximityDigraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MindClass {
    ClosedMinded,
    ModerateMinded,
    OpenMinded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Component {
    pub members: Vec<usize>,
    pub class: MindClass,
}

/// SCC structure of a proximity digraph.
///
/// Components are stored in the reverse topological order produced by
/// [`strongly_connected_components`]; their position in `components` is
/// their id throughout the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub components: Vec<Component>,
    /// Component id of every node.
    pub component_of: Vec<usize>,
    /// Condensation edges: sorted successor component ids, excluding self.
    pub condensation: Vec<Vec<usize>>,
    /// Weakly connected components of the open-minded subgraph.
    pub open_wccs: Vec<Vec<usize>>,
}

pub fn classify(g: &ProximityDigraph) -> Classification {
    let sccs = strongly_connected_components(g);
    let mut component_of = vec![0; g.len()];
    for (c, members) in sccs.iter().enumerate() {
        for &v in members {
            component_of[v] = c;
        }
    }

    let mut condensation = vec![Vec::new(); sccs.len()];
    for (i, j) in g.edges() {
        let (ci, cj) = (component_of[i], component_of[j]);
        if ci != cj {
            condensation[ci].push(cj);
        }
    }
    for succ in &mut condensation {
        succ.sort_unstable();
        succ.dedup();
    }

    let components: Vec<Component> = sccs
        .into_iter()
        .enumerate()
        .map(|(c, members)| {
            let class = if !condensation[c].is_empty() {
                MindClass::OpenMinded
            } else if members.iter().all(|&i| g.out_neighbors(i).len() == members.len()) {
                // A sink's out-neighbors all lie inside it, so a full row means complete.
                MindClass::ClosedMinded
            } else {
                MindClass::ModerateMinded
            };
            Component { members, class }
        })
        .collect();

    let open_nodes: Vec<usize> = components
        .iter()
        .filter(|c| c.class == MindClass::OpenMinded)
        .flat_map(|c| c.members.iter().copied())
        .collect();
    let open_wccs = weak_components(g, &open_nodes);

    Classification { components, component_of, condensation, open_wccs }
}

impl Classification {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn class_of_node(&self, v: usize) -> MindClass {
        self.components[self.component_of[v]].class
    }

    pub fn is_sink(&self, c: usize) -> bool {
        self.condensation[c].is_empty()
    }

    /// Component ids of the given class, in storage order.
    pub fn ids_of(&self, class: MindClass) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.components[c].class == class).collect()
    }

    /// Sorted node set of the given class.
    pub fn nodes_of(&self, class: MindClass) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .components
            .iter()
            .filter(|c| c.class == class)
            .flat_map(|c| c.members.iter().copied())
            .collect();
        nodes.sort_unstable();
        nodes
    }

    pub fn has_moderate(&self) -> bool {
        self.components.iter().any(|c| c.class == MindClass::ModerateMinded)
    }

    pub fn has_open(&self) -> bool {
        self.components.iter().any(|c| c.class == MindClass::OpenMinded)
    }

    /// Every component reachable from `c` in the condensation, `c` included, sorted.
    pub fn reachable_components(&self, c: usize) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![c];
        seen[c] = true;
        while let Some(v) = stack.pop() {
            for &w in &self.condensation[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        (0..self.len()).filter(|&v| seen[v]).collect()
    }

    /// Weakly connected components of the condensation, as sorted component-id lists.
    pub fn condensation_wccs(&self) -> Vec<Vec<usize>> {
        let k = self.len();
        let mut parent: Vec<usize> = (0..k).collect();
        fn find(parent: &mut [usize], mut v: usize) -> usize {
            while parent[v] != v {
                parent[v] = parent[parent[v]];
                v = parent[v];
            }
            v
        }
        for (c, succ) in self.condensation.iter().enumerate() {
            for &d in succ {
                let (a, b) = (find(&mut parent, c), find(&mut parent, d));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; k];
        for c in 0..k {
            let root = find(&mut parent, c);
            if slot[root] == usize::MAX {
                slot[root] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[root]].push(c);
        }
        groups
    }

    pub fn to_export(&self) -> ClassificationExport {
        ClassificationExport {
            components: self
                .components
                .iter()
                .enumerate()
                .map(|(id, c)| ComponentExport {
                    id,
                    class: c.class,
                    members: c.members.clone(),
                    successors: self.condensation[id].clone(),
                })
                .collect(),
            open_wccs: self.open_wccs.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentExport {
    pub id: usize,
    pub class: MindClass,
    pub members: Vec<usize>,
    pub successors: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationExport {
    pub components: Vec<ComponentExport>,
    pub open_wccs: Vec<Vec<usize>>,
}
