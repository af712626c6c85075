//! Synchronous averaging `x(t+1) = A(x(t)) x(t)` and trajectory bookkeeping.

use serde::{Deserialize, Serialize};

use crate::canonical::Snapshot;
use crate::digraph::{build_digraph, ProximityDigraph};
use crate::error::{Error, Result};
use crate::state::OpinionState;

/// Residuals at or below this are treated as zero when forming per-step factors.
pub const FACTOR_EPS: f64 = 1e-13;
pub const DEFAULT_MAX_STEPS: usize = 100_000;
pub const DEFAULT_CONVERGE_TOL: f64 = 1e-12;

/// Mean of `x` over `idx`, summed in the order given. Identical inputs
/// return that value unchanged, so a group already in consensus stays
/// bitwise fixed.
pub fn average(x: &[f64], idx: &[usize]) -> f64 {
    let first = x[idx[0]];
    if idx.iter().all(|&j| x[j] == first) {
        return first;
    }
    idx.iter().map(|&j| x[j]).sum::<f64>() / idx.len() as f64
}

/// One update on a given topology: every agent moves to the mean of its out-neighbors.
pub fn step_on(g: &ProximityDigraph, y: &[f64]) -> Vec<f64> {
    (0..g.len()).map(|i| average(y, g.out_neighbors(i))).collect()
}

/// `A(x) x` for the state's own proximity digraph.
pub fn step(state: &OpinionState) -> Vec<f64> {
    step_on(&build_digraph(state), state.opinions())
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// `x(t+1) == x(t)` (bitwise, or within `fixed_tol` when configured).
    FixedState,
    /// Topology unchanged over the last step and `||x - fvct(x)||_inf` below `converge_tol`.
    ToleranceReached,
    MaxSteps,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        !matches!(self, Termination::MaxSteps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub max_steps: usize,
    /// Zero means exact bitwise comparison.
    pub fixed_tol: f64,
    /// Store every `record_every`-th state. Epoch starts and the final state are always stored.
    pub record_every: usize,
    /// `None` disables tolerance-based termination.
    pub converge_tol: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            fixed_tol: 0.0,
            record_every: 1,
            converge_tol: Some(DEFAULT_CONVERGE_TOL),
        }
    }
}

impl SimOptions {
    fn rule(&self) -> String {
        let fixed = if self.fixed_tol > 0.0 {
            format!("fixed when ||x(t+1)-x(t)||_inf <= {:e}", self.fixed_tol)
        } else {
            "fixed when x(t+1) == x(t) bitwise".to_string()
        };
        match self.converge_tol {
            Some(tol) => format!("{fixed}; converged when topology constant and ||x-fvct(x)||_inf < {tol:e}"),
            None => fixed,
        }
    }
}

/// A topology epoch: the digraph stays the same from `start` until the next epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Epoch {
    pub start: usize,
    pub hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: crate::state::Model,
    pub bounds: Vec<f64>,
    pub times: Vec<usize>,
    pub states: Vec<Vec<f64>>,
    pub epochs: Vec<Epoch>,
    pub fixed_at: Option<usize>,
    pub termination: Termination,
    /// Time index of the last state.
    pub steps: usize,
    pub convergence_rule: String,
}

impl Trajectory {
    /// Rebuilds a trajectory from recorded states, e.g. a trajectory CSV.
    /// Epochs are detected between consecutive recorded states, so they are
    /// exact only for densely recorded input.
    pub fn from_recorded(template: &OpinionState, times: Vec<usize>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != states.len() || states.is_empty() {
            return Err(Error::LengthMismatch { expected: times.len(), found: states.len() });
        }
        let mut snapshots = Vec::with_capacity(states.len());
        for x in &states {
            snapshots.push(build_digraph(&template.with_opinions(x.clone())?));
        }
        let mut epochs = vec![Epoch { start: times[0], hash: snapshots[0].topology_hash() }];
        let mut fixed_at = None;
        for k in 1..states.len() {
            if snapshots[k] != snapshots[k - 1] {
                epochs.push(Epoch { start: times[k], hash: snapshots[k].topology_hash() });
            }
            if fixed_at.is_none() && times[k] == times[k - 1] + 1 && states[k] == states[k - 1] {
                fixed_at = Some(times[k]);
            }
        }
        let last = states.len() - 1;
        let termination = if fixed_at.is_some() {
            Termination::FixedState
        } else {
            let stable = last > 0 && snapshots[last] == snapshots[last - 1];
            let residual = Snapshot::from_digraph(snapshots[last].clone())
                .fvct(&states[last])
                .map(|f| sup_distance(&f, &states[last]))
                .unwrap_or(f64::INFINITY);
            if stable && residual < DEFAULT_CONVERGE_TOL {
                Termination::ToleranceReached
            } else {
                Termination::MaxSteps
            }
        };
        Ok(Self {
            kind: template.kind(),
            bounds: template.bounds().to_vec(),
            steps: times[last],
            times,
            states,
            epochs,
            fixed_at,
            termination,
            convergence_rule: "reconstructed from recorded states".into(),
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn state_at(&self, t: usize) -> Option<&[f64]> {
        self.times.binary_search(&t).ok().map(|k| self.states[k].as_slice())
    }

    /// Recorded state at index `k` as a full [`OpinionState`].
    pub fn opinion_state(&self, k: usize) -> OpinionState {
        OpinionState::new(self.states[k].clone(), self.bounds.clone(), self.kind)
            .expect("recorded states share valid bounds")
    }

    /// Start of the last topology epoch.
    pub fn final_epoch_start(&self) -> usize {
        self.epochs.last().map_or(0, |e| e.start)
    }

    /// Index range of recorded states with time in `[from, to]`; errors unless every step in between is stored.
    pub fn dense_range(&self, from: usize, to: usize) -> Result<std::ops::Range<usize>> {
        let lo = self.times.partition_point(|&t| t < from);
        let hi = self.times.partition_point(|&t| t <= to);
        if hi <= lo || self.times[lo] != from || self.times[hi - 1] != to || hi - lo != to - from + 1 {
            return Err(Error::SparseRecording { from, to });
        }
        Ok(lo..hi)
    }

    /// Largest deviation found when replaying every consecutive recorded pair through [`step`].
    pub fn replay_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 1..self.states.len() {
            if self.times[k] != self.times[k - 1] + 1 {
                continue;
            }
            let next = step(&self.opinion_state(k - 1));
            worst = worst.max(sup_distance(&next, &self.states[k]));
        }
        worst
    }
}

/// Outcome of one [`Simulation::advance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    /// Time index of the new state.
    pub t: usize,
    pub topology_changed: bool,
    pub termination: Option<Termination>,
}

/// Step-by-step driver behind [`simulate`], for callers that need to inspect
/// every state (the experiment harness evaluates a condition per step).
#[derive(Debug, Clone)]
pub struct Simulation {
    state: OpinionState,
    digraph: ProximityDigraph,
    snapshot: Option<Snapshot>,
    t: usize,
    opts: SimOptions,
    termination: Option<Termination>,
    fixed_at: Option<usize>,
}

impl Simulation {
    pub fn new(state: OpinionState, opts: SimOptions) -> Self {
        let digraph = build_digraph(&state);
        Self { state, digraph, snapshot: None, t: 0, opts, termination: None, fixed_at: None }
    }

    pub fn state(&self) -> &OpinionState {
        &self.state
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn digraph(&self) -> &ProximityDigraph {
        &self.digraph
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn fixed_at(&self) -> Option<usize> {
        self.fixed_at
    }

    /// Classification and decomposition of the current state, computed once per state.
    pub fn snapshot(&mut self) -> &Snapshot {
        self.snapshot.get_or_insert_with(|| Snapshot::from_digraph(self.digraph.clone()))
    }

    /// `||x - fvct(x)||_inf` for the current state.
    pub fn residual(&mut self) -> Result<f64> {
        let y = self.state.opinions().to_vec();
        let f = self.snapshot().fvct(&y)?;
        Ok(sup_distance(&f, &y))
    }

    fn is_fixed(&self, next: &[f64]) -> bool {
        let y = self.state.opinions();
        if self.opts.fixed_tol > 0.0 {
            sup_distance(next, y) <= self.opts.fixed_tol
        } else {
            next == y
        }
    }

    /// Applies one update. Returns `None` once the run has terminated.
    pub fn advance(&mut self) -> Result<Option<StepOutcome>> {
        if self.termination.is_some() {
            return Ok(None);
        }
        let next = step_on(&self.digraph, self.state.opinions());
        self.t += 1;
        if self.is_fixed(&next) {
            self.termination = Some(Termination::FixedState);
            self.fixed_at = Some(self.t);
            self.state = self.state.with_opinions(next)?;
            return Ok(Some(StepOutcome { t: self.t, topology_changed: false, termination: self.termination }));
        }
        self.state = self.state.with_opinions(next)?;
        let g = build_digraph(&self.state);
        let changed = g != self.digraph;
        if changed {
            self.digraph = g;
            self.snapshot = None;
        }

        if !changed {
            if let Some(tol) = self.opts.converge_tol {
                if self.residual()? < tol {
                    // Finite-time arrivals land on the limit exactly; let the next step report them as fixed.
                    let peek = step_on(&self.digraph, self.state.opinions());
                    if !self.is_fixed(&peek) {
                        self.termination = Some(Termination::ToleranceReached);
                    }
                }
            }
        }
        if self.termination.is_none() && self.t >= self.opts.max_steps {
            self.termination = Some(Termination::MaxSteps);
        }
        Ok(Some(StepOutcome { t: self.t, topology_changed: changed, termination: self.termination }))
    }
}

/// Runs the dynamics until a fixed state, numerical convergence, or `max_steps`.
pub fn simulate(state: &OpinionState, opts: &SimOptions) -> Result<Trajectory> {
    if opts.max_steps == 0 {
        return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
    }
    if opts.record_every == 0 {
        return Err(Error::InvalidConfig("record_every must be at least 1".into()));
    }
    let mut sim = Simulation::new(state.clone(), opts.clone());
    let mut traj = Trajectory {
        kind: state.kind(),
        bounds: state.bounds().to_vec(),
        times: vec![0],
        states: vec![state.opinions().to_vec()],
        epochs: vec![Epoch { start: 0, hash: sim.digraph().topology_hash() }],
        fixed_at: None,
        termination: Termination::MaxSteps,
        steps: 0,
        convergence_rule: opts.rule(),
    };
    while let Some(outcome) = sim.advance()? {
        if outcome.topology_changed {
            traj.epochs.push(Epoch { start: outcome.t, hash: sim.digraph().topology_hash() });
        }
        if outcome.topology_changed || outcome.termination.is_some() || outcome.t % opts.record_every == 0 {
            traj.times.push(outcome.t);
            traj.states.push(sim.state().opinions().to_vec());
        }
        if let Some(term) = outcome.termination {
            traj.termination = term;
            break;
        }
    }
    traj.fixed_at = sim.fixed_at();
    traj.steps = sim.time();
    Ok(traj)
}

/// `k_i = (x_next_i - f_i) / (x_t_i - f_i)`, absent where `|x_t_i - f_i| <= FACTOR_EPS`.
pub fn per_step_factor(x_t: &[f64], x_next: &[f64], f: &[f64]) -> Result<Vec<Option<f64>>> {
    for len in [x_next.len(), f.len()] {
        if len != x_t.len() {
            return Err(Error::LengthMismatch { expected: x_t.len(), found: len });
        }
    }
    Ok((0..x_t.len())
        .map(|i| {
            let d = x_t[i] - f[i];
            (d.abs() > FACTOR_EPS).then(|| (x_next[i] - f[i]) / d)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PseudoStableVerdict {
    /// Earliest recorded time from which every agent satisfies one clause of
    /// the pseudo-stable definition; `None` if no such time exists in the record.
    pub holds_from: Option<usize>,
    pub fixed_set: Vec<usize>,
    pub converging_set: Vec<usize>,
}

pub fn pseudo_stable_check(traj: &Trajectory, limit: &[f64]) -> Result<PseudoStableVerdict> {
    pseudo_stable_check_with_tolerance(traj, limit, 0.0)
}

/// Finds the earliest recorded time after which each agent either sits at its
/// limit (within `tol`) or moves strictly monotonically toward it.
pub fn pseudo_stable_check_with_tolerance(traj: &Trajectory, limit: &[f64], tol: f64) -> Result<PseudoStableVerdict> {
    let m = traj.states.len();
    if m < 2 {
        return Err(Error::WindowTooShort { recorded: m, needed: 2 });
    }
    if limit.len() != traj.bounds.len() {
        return Err(Error::LengthMismatch { expected: traj.bounds.len(), found: limit.len() });
    }
    traj.dense_range(traj.times[0], traj.times[m - 1])?;

    let n = limit.len();
    let mut start = vec![0usize; n];
    let mut fixed = vec![false; n];
    for i in 0..n {
        let at = |k: usize| (traj.states[k][i] - limit[i]).abs() <= tol;
        let approaches = |k: usize| {
            let (a, b, l) = (traj.states[k][i], traj.states[k + 1][i], limit[i]);
            (a < b && l - b > tol) || (a > b && b - l > tol)
        };
        let mut fixed_from = m;
        while fixed_from > 0 && at(fixed_from - 1) {
            fixed_from -= 1;
        }
        if fixed_from < m {
            start[i] = fixed_from;
            fixed[i] = true;
            continue;
        }
        let mut conv_from = m - 1;
        while conv_from > 0 && approaches(conv_from - 1) {
            conv_from -= 1;
        }
        if conv_from == m - 1 {
            return Ok(PseudoStableVerdict { holds_from: None, fixed_set: vec![], converging_set: vec![] });
        }
        start[i] = conv_from;
    }
    let k0 = start.iter().copied().max().unwrap_or(0);
    if k0 >= m - 1 && fixed.iter().any(|f| !f) {
        return Ok(PseudoStableVerdict { holds_from: None, fixed_set: vec![], converging_set: vec![] });
    }
    Ok(PseudoStableVerdict {
        holds_from: Some(traj.times[k0]),
        fixed_set: (0..n).filter(|&i| fixed[i]).collect(),
        converging_set: (0..n).filter(|&i| !fixed[i]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::state::Model;

    #[test]
    fn one_step_of_three_agent_system() {
        let next = step(&fixtures::single_listener());
        assert_eq!(next[0], 0.0);
        assert_eq!(next[2], 1.0);
        assert!((next[1] - 1.6 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equilibria_and_consensus_are_fixed() {
        let eq = OpinionState::new(vec![0.0, 0.5, 1.0], vec![0.25, 1.0, 0.25], Model::Sbc).unwrap();
        let next = step(&eq);
        assert!((next[1] - 0.5).abs() < 1e-15);
        let consensus = OpinionState::new(vec![0.1; 5], vec![0.3, 0.2, 0.1, 0.4, 0.05], Model::Sbi).unwrap();
        assert_eq!(step(&consensus), vec![0.1; 5]);
    }

    #[test]
    fn average_of_identical_values_is_exact() {
        let x = [0.1, 0.1, 0.1];
        assert_eq!(average(&x, &[0, 1, 2]), 0.1);
    }

    #[test]
    fn agreement_start_is_fixed_at_one() {
        let s = OpinionState::new(vec![0.2, 0.2, 0.9], vec![0.1; 3], Model::Sbc).unwrap();
        let traj = simulate(&s, &SimOptions::default()).unwrap();
        assert_eq!(traj.termination, Termination::FixedState);
        assert_eq!(traj.fixed_at, Some(1));
        assert_eq!(traj.times, vec![0, 1]);
    }

    #[test]
    fn finite_time_fixture_reaches_fixed_state() {
        let traj = simulate(&fixtures::finite_time_with_open_agents(), &SimOptions::default()).unwrap();
        assert_eq!(traj.termination, Termination::FixedState);
        assert_eq!(traj.final_state(), &[0.0, 2.375, 3.0, 4.125, 7.0]);
        let fixed = traj.fixed_at.unwrap();
        assert!(fixed <= 100);
        let c = crate::classify::classify(&build_digraph(&traj.opinion_state(traj.len() - 1)));
        assert!(c.has_open());
    }

    #[test]
    fn three_agent_run_converges_without_fixing() {
        let traj = simulate(&fixtures::single_listener(), &SimOptions::default()).unwrap();
        assert_eq!(traj.termination, Termination::ToleranceReached);
        assert_eq!(traj.fixed_at, None);
        assert_eq!(traj.epochs.len(), 1);
        assert!((traj.final_state()[1] - 0.5).abs() < 1e-12);
        assert_eq!(traj.replay_error(), 0.0);
    }

    #[test]
    fn max_steps_and_recording() {
        let opts = SimOptions { max_steps: 7, record_every: 3, converge_tol: None, ..SimOptions::default() };
        let traj = simulate(&fixtures::single_listener(), &opts).unwrap();
        assert_eq!(traj.termination, Termination::MaxSteps);
        assert_eq!(traj.times, vec![0, 3, 6, 7]);
        assert!(simulate(&fixtures::single_listener(), &SimOptions { max_steps: 0, ..opts }).is_err());
    }

    #[test]
    fn factor_of_three_agent_listener() {
        let s = fixtures::single_listener();
        let f = crate::canonical::fvct(&s).unwrap();
        let opts = SimOptions { converge_tol: None, max_steps: 20, ..SimOptions::default() };
        let traj = simulate(&s, &opts).unwrap();
        let k = per_step_factor(&traj.states[10], &traj.states[11], &f).unwrap();
        assert_eq!(k[0], None);
        assert_eq!(k[2], None);
        assert!((k[1].unwrap() - 1.0 / 3.0).abs() < 1e-6);
        assert!(per_step_factor(&[1.0], &[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn pseudo_stable_three_agent() {
        let traj = simulate(&fixtures::single_listener(), &SimOptions::default()).unwrap();
        let v = pseudo_stable_check(&traj, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(v.holds_from, Some(0));
        assert_eq!(v.fixed_set, vec![0, 2]);
        assert_eq!(v.converging_set, vec![1]);
    }

    #[test]
    fn pseudo_stable_constant_trajectory() {
        let s = OpinionState::new(vec![0.3, 0.3], vec![0.1, 0.1], Model::Sbc).unwrap();
        let traj = simulate(&s, &SimOptions::default()).unwrap();
        let v = pseudo_stable_check(&traj, &[0.3, 0.3]).unwrap();
        assert_eq!(v.holds_from, Some(0));
        assert_eq!(v.fixed_set, vec![0, 1]);
        assert!(v.converging_set.is_empty());
    }

    #[test]
    fn pseudo_stable_needs_two_states() {
        let s = fixtures::single_listener();
        let traj = Trajectory::from_recorded(&s, vec![0], vec![s.opinions().to_vec()]).unwrap();
        assert!(matches!(pseudo_stable_check(&traj, &[0.0, 0.5, 1.0]), Err(Error::WindowTooShort { .. })));
    }

    #[test]
    fn reconstruction_matches_simulation() {
        let traj = simulate(&fixtures::finite_time_with_open_agents(), &SimOptions::default()).unwrap();
        let s = fixtures::finite_time_with_open_agents();
        let rebuilt = Trajectory::from_recorded(&s, traj.times.clone(), traj.states.clone()).unwrap();
        assert_eq!(rebuilt.epochs, traj.epochs);
        assert_eq!(rebuilt.fixed_at, traj.fixed_at);
        assert_eq!(rebuilt.termination, traj.termination);
    }
}
