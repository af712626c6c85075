//! Equi-topology distances and the sufficient conditions built on them.
//!
//! For a state `z`, `ε_i(z)` is half the smallest gap between any pairwise
//! distance `|z_i - z_j|` and either bound `r_i`, `r_j`. Moving every agent by
//! less than its `ε_i` cannot create or remove an edge. `δ_i(z)` is the minimum
//! of `ε_j` over all predecessors `j` of `i`; the `δ` box is forward invariant
//! around equilibria.

use serde::Serialize;

use crate::canonical::Snapshot;
use crate::digraph::{build_digraph, ProximityDigraph};
use crate::dynamics::{step, Trajectory};
use crate::error::{Error, Result};
use crate::state::{Model, OpinionState};

/// Sup-norm tolerance used when a verdict needs "is an equilibrium".
pub const EQUILIBRIUM_TOL: f64 = 1e-10;
/// A computed limit whose smallest `ε` is at most this sits on a bound up to
/// rounding, and is treated as a boundary case.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// `ε_i = 0.5 * min_{j != i, R in {r_i, r_j}} ||z_i - z_j| - R|`.
///
/// With a single agent the minimum is over an empty set and every entry is
/// `+inf`; neighborhoods then contain every vector.
pub fn equi_topology_distance(state: &OpinionState) -> Vec<f64> {
    let z = state.opinions();
    let r = state.bounds();
    let n = z.len();
    (0..n)
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in (0..n).filter(|&j| j != i) {
                let d = (z[i] - z[j]).abs();
                best = best.min((d - r[i]).abs()).min((d - r[j]).abs());
            }
            0.5 * best
        })
        .collect()
}

/// `δ_i = min { ε_j : j is a predecessor of i in G_r(z) }`, predecessors including `i`.
pub fn invariant_equi_topology_distance(state: &OpinionState, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != state.len() {
        return Err(Error::LengthMismatch { expected: state.len(), found: eps.len() });
    }
    Ok(min_over_predecessors(&build_digraph(state), eps))
}

/// Propagates `min eps` along the condensation from sources to sinks.
fn min_over_predecessors(g: &ProximityDigraph, eps: &[f64]) -> Vec<f64> {
    let c = crate::classify::classify(g);
    let k = c.len();
    let mut reach = vec![f64::INFINITY; k];
    for (id, comp) in c.components.iter().enumerate() {
        reach[id] = comp.members.iter().map(|&v| eps[v]).fold(f64::INFINITY, f64::min);
    }
    // Components are stored in reverse topological order; walk sources first.
    for id in (0..k).rev() {
        let here = reach[id];
        for &s in &c.condensation[id] {
            reach[s] = reach[s].min(here);
        }
    }
    (0..g.len()).map(|v| reach[c.component_of[v]]).collect()
}

/// `δ` of a state, computed from its own `ε`.
pub fn delta_of(state: &OpinionState) -> Vec<f64> {
    min_over_predecessors(&build_digraph(state), &equi_topology_distance(state))
}

/// Whether `y` lies in the neighborhood of `z` with the given radii: strict
/// inequality where the radius is positive, exact equality where it is zero.
pub fn in_neighborhood(y: &[f64], z_state: &OpinionState, radii: &[f64]) -> Result<bool> {
    in_neighborhood_with_tolerance(y, z_state, radii, 0.0)
}

/// As [`in_neighborhood`], but a zero radius accepts `|y_i - z_i| <= zeta`.
pub fn in_neighborhood_with_tolerance(y: &[f64], z_state: &OpinionState, radii: &[f64], zeta: f64) -> Result<bool> {
    let z = z_state.opinions();
    for len in [y.len(), radii.len()] {
        if len != z.len() {
            return Err(Error::LengthMismatch { expected: z.len(), found: len });
        }
    }
    Ok(y.iter().zip(z).zip(radii).all(|((yi, zi), &rad)| {
        let d = (yi - zi).abs();
        if rad > 0.0 {
            d < rad
        } else {
            d <= zeta
        }
    }))
}

/// `G_r(y) == G_r(z)` by direct edge-set comparison.
pub fn check_equal_topology(y: &[f64], z_state: &OpinionState) -> Result<bool> {
    let y_state = z_state.with_opinions(y.to_vec())?;
    Ok(build_digraph(&y_state) == build_digraph(z_state))
}

/// `||A(y) y - y||_inf <= tol`.
pub fn is_equilibrium(state: &OpinionState, tol: f64) -> bool {
    let next = step(state);
    next.iter().zip(state.opinions()).all(|(a, b)| (a - b).abs() <= tol)
}

/// Every edge between distinct agents joins identical opinions.
pub fn is_agreement_vector(state: &OpinionState) -> bool {
    let y = state.opinions();
    build_digraph(state).edges().all(|(i, j)| i == j || y[i] == y[j])
}

/// Whether `x` lies in the invariant equi-topology neighborhood of its own
/// final value at constant topology. When it does, that final value is an
/// equilibrium and the topology never changes again.
pub fn in_invariant_neighborhood_of_fvct(state: &OpinionState) -> Result<bool> {
    let f = crate::canonical::fvct(state)?;
    let z = state.with_opinions(f)?;
    in_neighborhood(state.opinions(), &z, &delta_of(&z))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WccVerdict {
    pub members: Vec<usize>,
    /// Opinion interval `[min, max]` of the component.
    pub interval: [f64; 2],
    pub max_bound: f64,
    /// Condition (i): farther than the larger max bound from every other component.
    pub separated: bool,
    /// Condition (ii) for the state's model.
    pub bound_condition: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementCheck {
    pub model: Model,
    pub wccs: Vec<WccVerdict>,
    pub separated: bool,
    pub bound_condition: bool,
    /// Both conditions hold: finite-time convergence to an agreement vector is guaranteed.
    pub predicts_finite_agreement: bool,
}

/// Sufficient conditions for reaching an agreement vector in finite time.
///
/// (i) the opinion intervals of any two weakly connected components are
/// farther apart than the largest bound in either component;
/// (ii) SBC: in every `m`-agent component at least `m - 1` agents have a bound
/// larger than the component's interval length; SBI: at least one agent does.
pub fn check_agreement_sufficient(state: &OpinionState) -> AgreementCheck {
    let y = state.opinions();
    let r = state.bounds();
    let wccs = build_digraph(state).weakly_connected_components();
    let summary: Vec<([f64; 2], f64)> = wccs
        .iter()
        .map(|w| {
            let lo = w.iter().map(|&v| y[v]).fold(f64::INFINITY, f64::min);
            let hi = w.iter().map(|&v| y[v]).fold(f64::NEG_INFINITY, f64::max);
            let rmax = w.iter().map(|&v| r[v]).fold(0.0, f64::max);
            ([lo, hi], rmax)
        })
        .collect();
    let verdicts: Vec<WccVerdict> = wccs
        .iter()
        .enumerate()
        .map(|(a, members)| {
            let ([lo, hi], rmax) = summary[a];
            let separated = summary.iter().enumerate().filter(|&(b, _)| b != a).all(|(_, &([lo2, hi2], rmax2))| {
                let gap = (lo2 - hi).max(lo - hi2);
                gap > rmax.max(rmax2)
            });
            let width = hi - lo;
            let wide = members.iter().filter(|&&v| r[v] > width).count();
            let bound_condition = match state.kind() {
                Model::Sbc => wide + 1 >= members.len(),
                Model::Sbi => wide >= 1,
            };
            WccVerdict { members: members.clone(), interval: [lo, hi], max_bound: rmax, separated, bound_condition }
        })
        .collect();
    let separated = verdicts.iter().all(|v| v.separated);
    let bound_condition = verdicts.iter().all(|v| v.bound_condition);
    AgreementCheck {
        model: state.kind(),
        wccs: verdicts,
        separated,
        bound_condition,
        predicts_finite_agreement: separated && bound_condition,
    }
}

/// Full report for one state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub model: Model,
    pub opinions: Vec<f64>,
    pub fvct: Vec<f64>,
    /// `ε` of the state itself (`null` entries mean `+inf`).
    pub epsilon: Vec<f64>,
    pub delta: Vec<f64>,
    pub fvct_epsilon: Vec<f64>,
    pub fvct_delta: Vec<f64>,
    pub is_equilibrium: bool,
    pub is_agreement: bool,
    pub fvct_is_equilibrium: bool,
    /// The state lies in the equi-topology neighborhood of its final value.
    pub in_et_of_fvct: bool,
    /// The state lies in the invariant equi-topology neighborhood of its final value.
    pub in_iet_of_fvct: bool,
    pub agreement_condition: AgreementCheck,
}

pub fn stability_report(state: &OpinionState) -> Result<StabilityReport> {
    let epsilon = equi_topology_distance(state);
    let delta = invariant_equi_topology_distance(state, &epsilon)?;
    let f = Snapshot::new(state).fvct(state.opinions())?;
    let z = state.with_opinions(f.clone())?;
    let fvct_epsilon = equi_topology_distance(&z);
    let fvct_delta = invariant_equi_topology_distance(&z, &fvct_epsilon)?;
    Ok(StabilityReport {
        model: state.kind(),
        opinions: state.opinions().to_vec(),
        is_equilibrium: is_equilibrium(state, EQUILIBRIUM_TOL),
        is_agreement: is_agreement_vector(state),
        fvct_is_equilibrium: is_equilibrium(&z, EQUILIBRIUM_TOL),
        in_et_of_fvct: in_neighborhood(state.opinions(), &z, &fvct_epsilon)?,
        in_iet_of_fvct: in_neighborhood(state.opinions(), &z, &fvct_delta)?,
        agreement_condition: check_agreement_sufficient(state),
        fvct: f,
        epsilon,
        delta,
        fvct_epsilon,
        fvct_delta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitEquilibriumVerdict {
    /// Final value at constant topology of the last recorded state.
    pub limit: Vec<f64>,
    pub min_epsilon: f64,
    /// `min ε(limit) > BOUNDARY_TOL`; nothing is asserted otherwise.
    pub premise_holds: bool,
    /// Earliest recorded time from which every recorded digraph equals `G_r(limit)`.
    pub topology_matches_from: Option<usize>,
    pub limit_is_equilibrium: bool,
    /// Premise holds, the tail topology matches, and the limit is an equilibrium.
    pub confirmed: bool,
}

/// Checks that a converged trajectory's limit is an equilibrium with the
/// tail's topology, whenever the limit's `ε` is positive everywhere.
pub fn check_limit_equilibrium(traj: &Trajectory) -> Result<LimitEquilibriumVerdict> {
    if !traj.termination.is_converged() {
        return Err(Error::NotConverged(format!("{:?}", traj.termination)));
    }
    let last = traj.opinion_state(traj.len() - 1);
    let limit = crate::canonical::fvct(&last)?;
    let limit_state = last.with_opinions(limit.clone())?;
    let min_epsilon = equi_topology_distance(&limit_state).into_iter().fold(f64::INFINITY, f64::min);
    let premise_holds = min_epsilon > BOUNDARY_TOL;
    let limit_graph = build_digraph(&limit_state);
    let mut topology_matches_from = None;
    for k in (0..traj.len()).rev() {
        if build_digraph(&traj.opinion_state(k)) != limit_graph {
            break;
        }
        topology_matches_from = Some(traj.times[k]);
    }
    let limit_is_equilibrium = is_equilibrium(&limit_state, EQUILIBRIUM_TOL);
    Ok(LimitEquilibriumVerdict {
        confirmed: premise_holds && topology_matches_from.is_some() && limit_is_equilibrium,
        limit,
        min_epsilon,
        premise_holds,
        topology_matches_from,
        limit_is_equilibrium,
    })
}
