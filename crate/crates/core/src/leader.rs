//! Leader components and the rate and direction predictions they make for
//! open-minded agents under constant topology.
//!
//! Factors and directions are measured on the deviation `Δ(t) = x(t) - fvct`
//! propagated by `Δ ← A Δ` from the start of the final topology epoch. Under a
//! frozen topology this is exactly the recurrence the trajectory obeys, but it
//! does not lose precision when `x(t)` and `fvct` agree to the last bit, which
//! happens long before the asymptotic factor is reached.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::canonical::{CanonicalDecomposition, Snapshot};
use crate::classify::{Classification, MindClass};
use crate::dynamics::{Trajectory, FACTOR_EPS};
use crate::error::{Error, Result};
use crate::matrix::{left_perron_vector, spectral_radius};
use crate::state::OpinionState;

/// Relative gap below which two spectral radii count as tied.
pub const TIE_TOL: f64 = 1e-9;
/// A factor within this distance of the leader radius counts as converged.
pub const RATE_TOL: f64 = 1e-3;
pub const MIN_RATE_WINDOW: usize = 10;
/// Furthest the rate window is extended past the epoch start.
pub const MAX_RATE_WINDOW: usize = 10_000;
pub const DEFAULT_DIRECTION_HORIZON: usize = 1_000;

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.max(b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SccLeader {
    pub scc: usize,
    pub members: Vec<usize>,
    pub radius: f64,
    /// Open-minded components reachable from this one, itself included.
    pub successors: Vec<usize>,
    pub leader: usize,
    pub leader_radius: f64,
    /// Another successor ties the leader's radius.
    pub tie: bool,
}

/// Leader of every open-minded component, in component-id order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderAssignment {
    pub sccs: Vec<SccLeader>,
}

impl LeaderAssignment {
    pub fn get(&self, scc: usize) -> Option<&SccLeader> {
        self.sccs.iter().find(|e| e.scc == scc)
    }

    /// Entry of the component containing `agent`, if it is open-minded.
    pub fn of_agent(&self, agent: usize) -> Option<&SccLeader> {
        self.sccs.iter().find(|e| e.members.contains(&agent))
    }
}

/// Picks the successor with the largest spectral radius. Ties go to the
/// component itself if it is among the maximizers, else to the smallest id.
pub fn leader_assignment(c: &Classification, d: &CanonicalDecomposition) -> Result<LeaderAssignment> {
    let mut radius = vec![f64::NAN; c.len()];
    for b in d.blocks_of(MindClass::OpenMinded) {
        radius[b.component] = spectral_radius(&d.block_matrix(b))?;
    }
    let mut sccs = Vec::new();
    for (id, comp) in c.components.iter().enumerate() {
        if comp.class != MindClass::OpenMinded {
            continue;
        }
        let successors: Vec<usize> = c
            .reachable_components(id)
            .into_iter()
            .filter(|&s| c.components[s].class == MindClass::OpenMinded)
            .collect();
        let best = successors.iter().map(|&s| radius[s]).fold(0.0, f64::max);
        let maximizers: Vec<usize> = successors.iter().copied().filter(|&s| tied(radius[s], best)).collect();
        let leader = if maximizers.contains(&id) { id } else { maximizers[0] };
        sccs.push(SccLeader {
            scc: id,
            members: comp.members.clone(),
            radius: radius[id],
            successors,
            leader,
            leader_radius: radius[leader],
            tie: maximizers.len() > 1,
        });
    }
    Ok(LeaderAssignment { sccs })
}

/// Leader assignment of the trajectory's final topology epoch.
pub fn final_epoch_assignment(traj: &Trajectory) -> Result<LeaderAssignment> {
    let start = traj.final_epoch_start();
    let k = traj.times.binary_search(&start).map_err(|_| Error::SparseRecording { from: start, to: start })?;
    let snap = Snapshot::new(&traj.opinion_state(k));
    leader_assignment(&snap.classification, &snap.decomposition)
}

/// Deviation from the frozen-topology limit, propagated by `Δ ← A Δ`.
///
/// Closed-minded deviations vanish after one step and are set to zero
/// exactly; moderate-minded ones have their Perron component removed after
/// every step so rounding does not leave a constant floor. The stored vector
/// is rescaled to unit sup norm, so only ratios and signs are meaningful.
#[derive(Debug, Clone)]
pub struct DeviationTracker {
    a: DMatrix<f64>,
    closed: Vec<usize>,
    moderate: Vec<(Vec<usize>, DVector<f64>)>,
    delta: DVector<f64>,
    limit: Vec<f64>,
    t: usize,
}

impl DeviationTracker {
    /// Starts at `state`, taken to be the state at time `t`.
    pub fn new(state: &OpinionState, t: usize) -> Result<Self> {
        let snap = Snapshot::new(state);
        let limit = snap.fvct(state.opinions())?;
        let d = &snap.decomposition;
        let perm = d.permutation();
        let mut closed = Vec::new();
        let mut moderate = Vec::new();
        for b in d.blocks() {
            let members = perm[b.offset..b.offset + b.size].to_vec();
            match b.class {
                MindClass::ClosedMinded => closed.extend(members),
                MindClass::ModerateMinded => moderate.push((members, left_perron_vector(&d.block_matrix(b))?)),
                MindClass::OpenMinded => {}
            }
        }
        let delta = DVector::from_iterator(
            state.len(),
            state.opinions().iter().zip(&limit).map(|(x, f)| if (x - f).abs() <= FACTOR_EPS { 0.0 } else { x - f }),
        );
        let mut tracker = Self { a: snap.adjacency.into_inner(), closed, moderate, delta, limit, t };
        tracker.normalize();
        Ok(tracker)
    }

    /// Starts at the first state of the trajectory's final topology epoch.
    pub fn from_final_epoch(traj: &Trajectory) -> Result<Self> {
        let start = traj.final_epoch_start();
        let k = traj.times.binary_search(&start).map_err(|_| Error::SparseRecording { from: start, to: start })?;
        Self::new(&traj.opinion_state(k), start)
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn limit(&self) -> &[f64] {
        &self.limit
    }

    /// Deviation at the current time, scaled to unit sup norm.
    pub fn deviation(&self) -> &[f64] {
        self.delta.as_slice()
    }

    /// Moves one step and returns `k_i(t) = Δ_i(t+1) / Δ_i(t)` for every agent
    /// with a nonzero deviation at `t`.
    pub fn advance(&mut self) -> Vec<Option<f64>> {
        let mut next = &self.a * &self.delta;
        for &i in &self.closed {
            next[i] = 0.0;
        }
        for (members, nu) in &self.moderate {
            let mean: f64 = members.iter().zip(nu.iter()).map(|(&i, w)| w * next[i]).sum();
            for &i in members {
                next[i] -= mean;
            }
        }
        let factors = self.delta.iter().zip(next.iter()).map(|(&d, &e)| (d != 0.0).then(|| e / d)).collect();
        self.delta = next;
        self.normalize();
        self.t += 1;
        factors
    }

    fn normalize(&mut self) {
        let m = self.delta.amax();
        if m > 0.0 {
            self.delta /= m;
        }
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Checks that `la` describes the digraph of the final topology epoch.
fn check_assignment(traj: &Trajectory, la: &LeaderAssignment) -> Result<()> {
    let start = traj.final_epoch_start();
    let k = traj.times.binary_search(&start).map_err(|_| Error::SparseRecording { from: start, to: start })?;
    let c = crate::classify::classify(&crate::digraph::build_digraph(&traj.opinion_state(k)));
    let open: Vec<&Vec<usize>> =
        c.components.iter().filter(|x| x.class == MindClass::OpenMinded).map(|x| &x.members).collect();
    let mine: Vec<&Vec<usize>> = la.sccs.iter().map(|e| &e.members).collect();
    if open != mine {
        return Err(Error::TopologyChanged(start));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateStatus {
    /// Closed- or moderate-minded: the prediction does not apply.
    NotOpen,
    /// The agent sits at its limit, so its factor is undefined.
    AtLimit,
    Tracked,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentRate {
    pub agent: usize,
    pub status: RateStatus,
    pub leader: Option<usize>,
    pub leader_radius: Option<f64>,
    /// `k_i` over the last step of the window.
    pub factor: Option<f64>,
    pub error: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub epoch_start: usize,
    /// Last time of the (possibly extended) window.
    pub window_end: usize,
    /// The window runs past the recorded trajectory and relies on the topology staying frozen.
    pub extrapolated: bool,
    pub agents: Vec<AgentRate>,
    pub all_converged: bool,
}

/// Measures each open-minded agent's per-step factor at the end of a window
/// of `window` steps from the final epoch start and compares it with its
/// leader's spectral radius. The window doubles (up to [`MAX_RATE_WINDOW`])
/// while some factor is still farther than [`RATE_TOL`] from its prediction.
pub fn verify_rate_prediction(traj: &Trajectory, la: &LeaderAssignment, window: usize) -> Result<RateReport> {
    if window < MIN_RATE_WINDOW {
        return Err(Error::WindowTooShort { recorded: window, needed: MIN_RATE_WINDOW });
    }
    check_assignment(traj, la)?;
    let n = traj.bounds.len();
    let mut tracker = DeviationTracker::from_final_epoch(traj)?;
    let start = tracker.time();
    let mut window = window.min(MAX_RATE_WINDOW);
    loop {
        let mut last = vec![None; n];
        while tracker.time() < start + window {
            last = tracker.advance();
        }
        let agents: Vec<AgentRate> = (0..n)
            .map(|i| match la.of_agent(i) {
                None => AgentRate {
                    agent: i,
                    status: RateStatus::NotOpen,
                    leader: None,
                    leader_radius: None,
                    factor: None,
                    error: None,
                    converged: true,
                },
                Some(e) => {
                    let factor = last[i];
                    let error = factor.map(|k| (k - e.leader_radius).abs());
                    AgentRate {
                        agent: i,
                        status: if factor.is_some() { RateStatus::Tracked } else { RateStatus::AtLimit },
                        leader: Some(e.leader),
                        leader_radius: Some(e.leader_radius),
                        factor,
                        error,
                        converged: error.map_or(true, |err| err < RATE_TOL),
                    }
                }
            })
            .collect();
        let all_converged = agents.iter().all(|a| a.converged);
        if all_converged || window >= MAX_RATE_WINDOW {
            return Ok(RateReport {
                epoch_start: start,
                window_end: start + window,
                extrapolated: start + window > traj.steps,
                agents,
                all_converged,
            });
        }
        window = (2 * window).min(MAX_RATE_WINDOW);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionStatus {
    /// The component is its own leader; nothing to predict.
    SelfLeader,
    /// The leader's radius ties the component's own; the prediction is silent.
    NotApplicable,
    Verified,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionReport {
    pub scc: usize,
    pub leader: usize,
    pub status: DirectionStatus,
    /// Earliest `t1` such that for every `t >= t1` up to the horizon each
    /// follower deviation has the sign the leader's deviation had at `t1`
    /// (zero always agrees).
    pub t1: Option<usize>,
    /// Earliest time from which follower and leader deviations never have
    /// opposite signs at the same step.
    pub matches_from: Option<usize>,
    pub horizon: usize,
}

/// Direction check for every open-minded component over
/// [`DEFAULT_DIRECTION_HORIZON`] steps after the final epoch start.
pub fn verify_direction_prediction(traj: &Trajectory, la: &LeaderAssignment) -> Result<Vec<DirectionReport>> {
    verify_direction_prediction_with_horizon(traj, la, DEFAULT_DIRECTION_HORIZON)
}

pub fn verify_direction_prediction_with_horizon(
    traj: &Trajectory,
    la: &LeaderAssignment,
    horizon: usize,
) -> Result<Vec<DirectionReport>> {
    check_assignment(traj, la)?;
    let mut tracker = DeviationTracker::from_final_epoch(traj)?;
    let start = tracker.time();
    let mut signs: Vec<Vec<i8>> = Vec::with_capacity(horizon + 1);
    signs.push(tracker.deviation().iter().map(|&v| sign(v)).collect());
    for _ in 0..horizon {
        tracker.advance();
        signs.push(tracker.deviation().iter().map(|&v| sign(v)).collect());
    }
    let len = signs.len();
    let mut reports = Vec::new();
    for e in &la.sccs {
        let mut report = DirectionReport {
            scc: e.scc,
            leader: e.leader,
            status: DirectionStatus::SelfLeader,
            t1: None,
            matches_from: None,
            horizon: start + horizon,
        };
        if e.tie {
            report.status = DirectionStatus::NotApplicable;
            reports.push(report);
            continue;
        }
        if e.leader == e.scc {
            reports.push(report);
            continue;
        }
        let leader = &la.get(e.leader).expect("leader is an open component").members;
        // Suffix flags: every follower deviation stays <= 0 (resp. >= 0) from step s on.
        let mut non_pos = vec![true; len + 1];
        let mut non_neg = vec![true; len + 1];
        for s in (0..len).rev() {
            non_pos[s] = non_pos[s + 1] && e.members.iter().all(|&i| signs[s][i] <= 0);
            non_neg[s] = non_neg[s + 1] && e.members.iter().all(|&i| signs[s][i] >= 0);
        }
        report.t1 = (0..len)
            .find(|&s| {
                leader.iter().all(|&j| match signs[s][j] {
                    -1 => non_pos[s],
                    1 => non_neg[s],
                    _ => true,
                })
            })
            .map(|s| start + s);
        let clash = |s: usize| {
            leader.iter().any(|&j| e.members.iter().any(|&i| signs[s][i] * signs[s][j] < 0))
        };
        report.matches_from = Some(start + (0..len).rev().find(|&s| clash(s)).map_or(0, |s| s + 1))
            .filter(|&t| t <= start + horizon);
        report.status = if report.t1.is_some() { DirectionStatus::Verified } else { DirectionStatus::Failed };
        reports.push(report);
    }
    Ok(reports)
}
