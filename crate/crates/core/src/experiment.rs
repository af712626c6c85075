//! Seeded Monte Carlo campaigns over random initial states.
//!
//! Each run draws opinions and bounds uniformly, simulates until a fixed
//! state, numerical convergence or the step limit, and records the first step
//! at which the state lay in the invariant equi-topology neighborhood of its
//! own final value at constant topology. From that step on the topology can
//! no longer change.

use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SimOptions, Simulation, Termination, DEFAULT_CONVERGE_TOL, DEFAULT_MAX_STEPS};
use crate::error::{Error, Result};
use crate::io::format_g17;
use crate::stability::{equi_topology_distance, in_invariant_neighborhood_of_fvct};
use crate::state::{Model, OpinionState};

/// Caps the worker pool width when set.
pub const THREADS_ENV: &str = "OPINION_LAB_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub models: Vec<Model>,
    pub agent_counts: Vec<usize>,
    pub runs: usize,
    pub opinion_range: [f64; 2],
    /// Bounds are drawn from `[lo, hi)`; a draw of exactly zero is redrawn.
    pub bound_range: [f64; 2],
    pub seed: u64,
    pub max_steps: usize,
    pub converge_tol: f64,
    /// Evaluate the neighborhood condition every `check_every` steps.
    pub check_every: usize,
    /// Worker count; all available cores when absent.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: Model::ALL.to_vec(),
            agent_counts: (1..=10).map(|k| 10 * k).collect(),
            runs: 20,
            opinion_range: [0.0, 1.0],
            bound_range: [0.0, 0.3],
            seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
            converge_tol: DEFAULT_CONVERGE_TOL,
            check_every: 1,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        let [olo, ohi] = self.opinion_range;
        let [blo, bhi] = self.bound_range;
        if self.models.is_empty() {
            return bad("models must not be empty");
        }
        if self.agent_counts.is_empty() || self.agent_counts.contains(&0) {
            return bad("agent_counts must be nonempty and positive");
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if !(olo.is_finite() && ohi.is_finite() && olo < ohi) {
            return bad("opinion_range must be finite with lo < hi");
        }
        if !(blo.is_finite() && bhi.is_finite() && blo >= 0.0 && blo < bhi) {
            return bad("bound_range must be finite with 0 <= lo < hi");
        }
        if self.max_steps == 0 || self.check_every == 0 {
            return bad("max_steps and check_every must be at least 1");
        }
        if !(self.converge_tol > 0.0) {
            return bad("converge_tol must be positive");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub model: Model,
    pub n: usize,
    pub run: usize,
    pub seed: u64,
    /// First checked step with `x(t)` inside the invariant neighborhood of `fvct(x(t))`.
    pub tau_condition: Option<usize>,
    pub fixed_at: Option<usize>,
    pub converged: bool,
    /// `||x - fvct(x)||_inf` at the last step.
    pub residual: f64,
    pub termination: Option<Termination>,
    /// Smallest `ε` of the drawn state.
    pub min_epsilon_at_draw: f64,
    pub error: Option<String>,
}

impl RunRecord {
    /// Reached an exactly fixed state.
    pub fn finite(&self) -> bool {
        self.fixed_at.is_some()
    }
}

/// Per-run seed: the campaign seed xor a stable hash of the run coordinates.
pub fn run_seed(seed: u64, model: Model, n: usize, run: usize) -> u64 {
    let mut h = FnvHasher::default();
    h.write(model.as_str().as_bytes());
    h.write_u64(n as u64);
    h.write_u64(run as u64);
    seed ^ h.finish()
}

/// Opinions first, then bounds, from one ChaCha8 stream.
pub fn draw_state(cfg: &ExperimentConfig, model: Model, n: usize, seed: u64) -> Result<OpinionState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [olo, ohi] = cfg.opinion_range;
    let [blo, bhi] = cfg.bound_range;
    let opinions: Vec<f64> = (0..n).map(|_| rng.random_range(olo..ohi)).collect();
    let bounds: Vec<f64> = (0..n)
        .map(|_| loop {
            let r = rng.random_range(blo..bhi);
            if r > 0.0 {
                break r;
            }
        })
        .collect();
    OpinionState::new(opinions, bounds, model)
}

fn run_one(cfg: &ExperimentConfig, model: Model, n: usize, run: usize) -> RunRecord {
    let seed = run_seed(cfg.seed, model, n, run);
    let mut record = RunRecord {
        model,
        n,
        run,
        seed,
        tau_condition: None,
        fixed_at: None,
        converged: false,
        residual: f64::NAN,
        termination: None,
        min_epsilon_at_draw: f64::NAN,
        error: None,
    };
    if let Err(e) = simulate_run(cfg, &mut record) {
        log::warn!("{model} n={n} run={run}: {e}");
        record.error = Some(e.to_string());
    }
    record
}

fn simulate_run(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<()> {
    let state = draw_state(cfg, record.model, record.n, record.seed)?;
    record.min_epsilon_at_draw = equi_topology_distance(&state).into_iter().fold(f64::INFINITY, f64::min);
    if record.min_epsilon_at_draw == 0.0 {
        log::warn!("{} n={} run={}: drawn state has min epsilon = 0", record.model, record.n, record.run);
    }
    let opts = SimOptions {
        max_steps: cfg.max_steps,
        converge_tol: Some(cfg.converge_tol),
        ..SimOptions::default()
    };
    let mut sim = Simulation::new(state, opts);
    loop {
        let t = sim.time();
        if record.tau_condition.is_none()
            && (t % cfg.check_every == 0 || sim.termination().is_some())
            && in_invariant_neighborhood_of_fvct(sim.state())?
        {
            record.tau_condition = Some(t);
        }
        if sim.advance()?.is_none() {
            break;
        }
    }
    record.termination = sim.termination();
    record.fixed_at = sim.fixed_at();
    record.converged = sim.termination().is_some_and(Termination::is_converged);
    record.residual = sim.residual()?;
    Ok(())
}

fn worker_count(cfg: &ExperimentConfig) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut width = cfg.threads.unwrap_or(available);
    if let Some(cap) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        width = width.min(cap.max(1));
    }
    width.max(1)
}

/// Runs every `(model, n, run)` of the campaign on a worker pool. Records come
/// back sorted by model, agent count and run index regardless of scheduling.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let jobs: Vec<(Model, usize, usize)> = cfg
        .models
        .iter()
        .flat_map(|&m| cfg.agent_counts.iter().flat_map(move |&n| (0..cfg.runs).map(move |r| (m, n, r))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let mut records: Vec<RunRecord> =
        pool.install(|| jobs.par_iter().map(|&(m, n, r)| run_one(cfg, m, n, r)).collect());
    records.sort_by(|a, b| (a.model.as_str(), a.n, a.run).cmp(&(b.model.as_str(), b.n, b.run)));
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub model: Model,
    pub n: usize,
    pub runs: usize,
    pub pct_finite: f64,
    /// Mean of `tau_condition` over runs where it was observed.
    pub mean_tau: Option<f64>,
}

/// One row per `(model, n)` in record order.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut rows: Vec<AggregateRow> = Vec::new();
    for group in records.chunk_by(|a, b| a.model == b.model && a.n == b.n) {
        let finite = group.iter().filter(|r| r.finite()).count();
        let taus: Vec<f64> = group.iter().filter_map(|r| r.tau_condition).map(|t| t as f64).collect();
        rows.push(AggregateRow {
            model: group[0].model,
            n: group[0].n,
            runs: group.len(),
            pct_finite: 100.0 * finite as f64 / group.len() as f64,
            mean_tau: (!taus.is_empty()).then(|| taus.iter().sum::<f64>() / taus.len() as f64),
        });
    }
    rows
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(header).map_err(|e| Error::io(path, e.into()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `results.csv` and `aggregate.csv` into `dir`, creating it if needed.
pub fn emit_results(records: &[RunRecord], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no records to write".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results = dir.join("results.csv");
    write_csv(
        &results,
        &["model", "n", "run", "seed", "tau_condition", "fixed_at", "converged", "residual"],
        records.iter().map(|r| {
            vec![
                r.model.to_string(),
                r.n.to_string(),
                r.run.to_string(),
                r.seed.to_string(),
                opt(r.tau_condition),
                opt(r.fixed_at),
                r.converged.to_string(),
                format_g17(r.residual),
            ]
        }),
    )?;
    let agg = dir.join("aggregate.csv");
    write_csv(
        &agg,
        &["model", "n", "runs", "pct_finite", "mean_tau"],
        aggregate(records).into_iter().map(|a| {
            vec![
                a.model.to_string(),
                a.n.to_string(),
                a.runs.to_string(),
                format_g17(a.pct_finite),
                opt(a.mean_tau.map(format_g17)),
            ]
        }),
    )?;
    Ok((results, agg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(models: Vec<Model>, counts: Vec<usize>, runs: usize) -> ExperimentConfig {
        ExperimentConfig { models, agent_counts: counts, runs, seed: 7, threads: Some(2), ..Default::default() }
    }

    fn record(model: Model, n: usize, run: usize, tau: Option<usize>, fixed: Option<usize>) -> RunRecord {
        RunRecord {
            model,
            n,
            run,
            seed: 1,
            tau_condition: tau,
            fixed_at: fixed,
            converged: true,
            residual: 0.0,
            termination: None,
            min_epsilon_at_draw: 0.1,
            error: None,
        }
    }

    #[test]
    fn single_agent_run() {
        let recs = run_campaign(&small(vec![Model::Sbc], vec![1], 1)).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].fixed_at, Some(1));
        assert_eq!(recs[0].tau_condition, Some(0));
        assert!(recs[0].converged);
    }

    #[test]
    fn seeds_depend_on_coordinates() {
        let a = run_seed(5, Model::Sbc, 10, 0);
        assert_ne!(a, run_seed(5, Model::Sbi, 10, 0));
        assert_ne!(a, run_seed(5, Model::Sbc, 20, 0));
        assert_ne!(a, run_seed(5, Model::Sbc, 10, 1));
        assert_eq!(a, run_seed(5, Model::Sbc, 10, 0));
    }

    #[test]
    fn draws_respect_ranges() {
        let cfg = ExperimentConfig::default();
        let s = draw_state(&cfg, Model::Sbi, 200, 3).unwrap();
        assert!(s.opinions().iter().all(|&y| (0.0..1.0).contains(&y)));
        assert!(s.bounds().iter().all(|&r| r > 0.0 && r < 0.3));
    }

    #[test]
    fn records_sorted_and_tau_before_fixed() {
        let recs = run_campaign(&small(Model::ALL.to_vec(), vec![5, 3], 3)).unwrap();
        let keys: Vec<_> = recs.iter().map(|r| (r.model.as_str(), r.n, r.run)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for r in &recs {
            if let (Some(tau), Some(f)) = (r.tau_condition, r.fixed_at) {
                assert!(tau <= f, "{r:?}");
            }
        }
    }

    #[test]
    fn campaign_is_reproducible_across_widths() {
        let mut cfg = small(Model::ALL.to_vec(), vec![8], 4);
        let a = run_campaign(&cfg).unwrap();
        cfg.threads = Some(1);
        let b = run_campaign(&cfg).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn aggregate_arithmetic() {
        let recs = vec![
            record(Model::Sbc, 4, 0, Some(2), Some(5)),
            record(Model::Sbc, 4, 1, Some(4), None),
            record(Model::Sbc, 4, 2, None, Some(3)),
            record(Model::Sbc, 4, 3, None, None),
        ];
        let rows = aggregate(&recs);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].pct_finite, 50.0);
        assert_eq!(rows[0].mean_tau, Some(3.0));
    }

    #[test]
    fn emitted_files() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![
            record(Model::Sbc, 2, 0, Some(0), Some(1)),
            record(Model::Sbc, 2, 1, None, None),
            record(Model::Sbi, 2, 0, Some(1), None),
        ];
        let (results, agg) = emit_results(&recs, dir.path()).unwrap();
        let text = fs::read_to_string(results).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "model,n,run,seed,tau_condition,fixed_at,converged,residual");
        assert_eq!(lines[1], "sbc,2,0,1,0,1,true,0");
        assert_eq!(lines[2], "sbc,2,1,1,,,true,0");
        let agg = fs::read_to_string(agg).unwrap();
        assert_eq!(agg, "model,n,runs,pct_finite,mean_tau\nsbc,2,2,50,0\nsbi,2,1,0,1\n");
        assert!(emit_results(&[], dir.path()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = [
            ExperimentConfig { runs: 0, ..Default::default() },
            ExperimentConfig { bound_range: [-0.1, 0.3], ..Default::default() },
            ExperimentConfig { opinion_range: [1.0, 1.0], ..Default::default() },
            ExperimentConfig { agent_counts: vec![], ..Default::default() },
            ExperimentConfig { check_every: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn config_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"agent_counts": [3], "runs": 2, "seed": 9}"#).unwrap();
        let cfg = ExperimentConfig::from_path(&p).unwrap();
        assert_eq!(cfg.runs, 2);
        assert_eq!(cfg.models, Model::ALL.to_vec());
        fs::write(&p, r#"{"agent_counts": [3], "bogus": 1}"#).unwrap();
        assert!(ExperimentConfig::from_path(&p).unwrap_err().is_input_error());
    }
}
