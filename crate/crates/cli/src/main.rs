use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use opinion_lab::dynamics::DEFAULT_MAX_STEPS;
use opinion_lab::io::{self as oio, EventsFile};
use opinion_lab::leader::{final_epoch_assignment, verify_direction_prediction_with_horizon, DEFAULT_DIRECTION_HORIZON};
use opinion_lab::stability::stability_report;
use opinion_lab::{
    check_limit_equilibrium, emit_results, pseudo_stable_check, run_campaign, simulate, verify_rate_prediction,
    Error, ExperimentConfig, Model, OpinionState, SimOptions, Snapshot, Trajectory,
};

/// Heterogeneous bounded-confidence / bounded-influence opinion dynamics.
#[derive(Debug, Parser)]
#[command(name = "opinion-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct StateArgs {
    /// State file: JSON {"opinions": [..], "bounds": [..]} or two-column CSV.
    #[arg(long)]
    state: PathBuf,
    /// sbc or sbi; overrides a model named in the state file.
    #[arg(long)]
    model: Option<Model>,
}

impl StateArgs {
    fn load(&self) -> opinion_lab::Result<OpinionState> {
        oio::read_state(&self.state, self.model)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the dynamics and write trajectory.csv and events.json.
    Simulate {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
        /// Record every k-th step; epoch starts and the final state are always kept.
        #[arg(long, default_value_t = 1)]
        record_every: usize,
        /// Stop once the topology is unchanged and ||x - fvct(x)|| falls below this; 0 disables.
        #[arg(long, default_value_t = opinion_lab::dynamics::DEFAULT_CONVERGE_TOL)]
        tolerance: f64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the SCC classification and open-minded WCCs as JSON.
    Classify {
        #[command(flatten)]
        state: StateArgs,
        /// Include the digraph's edge list.
        #[arg(long)]
        edges: bool,
    },
    /// Print the final value at constant topology.
    Fvct {
        #[command(flatten)]
        state: StateArgs,
    },
    /// Print distances, neighborhood memberships and condition verdicts as JSON.
    Check {
        #[command(flatten)]
        state: StateArgs,
    },
    /// Leader, rate, direction and pseudo-stability reports for a recorded trajectory.
    Analyze {
        /// Supplies the bounds and model; its opinions are ignored.
        #[command(flatten)]
        state: StateArgs,
        /// Trajectory CSV as written by `simulate`.
        #[arg(long)]
        trajectory: PathBuf,
        /// Steps after the final epoch start at which factors are compared.
        #[arg(long, default_value_t = 200)]
        window: usize,
        #[arg(long, default_value_t = DEFAULT_DIRECTION_HORIZON)]
        horizon: usize,
    },
    /// Run a Monte Carlo campaign and write results.csv and aggregate.csv.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        check_every: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("opinion-lab: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> opinion_lab::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    writeln!(io::stdout(), "{text}").map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn write_file(path: &Path, contents: &[u8]) -> opinion_lab::Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn run(command: Command) -> opinion_lab::Result<()> {
    match command {
        Command::Simulate { state, max_steps, record_every, tolerance, out } => {
            let s = state.load()?;
            let opts = SimOptions {
                max_steps,
                record_every,
                converge_tol: (tolerance > 0.0).then_some(tolerance),
                ..SimOptions::default()
            };
            let traj = simulate(&s, &opts)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let mut csv = Vec::new();
            oio::write_trajectory_csv(&traj, &mut csv).expect("writing to memory");
            write_file(&out.join("trajectory.csv"), &csv)?;
            let events = serde_json::to_string_pretty(&EventsFile::from_trajectory(&traj)).expect("events serialize");
            write_file(&out.join("events.json"), (events + "\n").as_bytes())?;
            println!(
                "{} after {} steps, {} topology epoch(s)",
                serde_json::to_value(traj.termination).expect("enum serializes").as_str().unwrap_or("?"),
                traj.steps,
                traj.epochs.len()
            );
            Ok(())
        }
        Command::Classify { state, edges } => {
            let snap = Snapshot::new(&state.load()?);
            let mut value = serde_json::to_value(snap.classification.to_export()).expect("classification serializes");
            if edges {
                value["digraph"] = serde_json::to_value(snap.digraph.to_export()).expect("digraph serializes");
            }
            print_json(&value)
        }
        Command::Fvct { state } => {
            let f = opinion_lab::fvct(&state.load()?)?;
            let items: Vec<String> = f.iter().map(|v| v.to_string()).collect();
            println!("[{}]", items.join(", "));
            Ok(())
        }
        Command::Check { state } => print_json(&stability_report(&state.load()?)?),
        Command::Analyze { state, trajectory, window, horizon } => {
            let template = state.load()?;
            let (times, states) = oio::read_trajectory_csv(&trajectory)?;
            if states[0].len() != template.len() {
                return Err(Error::parse(
                    &trajectory,
                    format!("trajectory has {} agents, state file has {}", states[0].len(), template.len()),
                ));
            }
            let traj = Trajectory::from_recorded(&template, times, states)?;
            print_json(&analyze(&traj, window, horizon)?)
        }
        Command::Experiment { config, seed, threads, check_every, out } => {
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::from_path(path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            if let Some(k) = check_every {
                cfg.check_every = k;
            }
            let records = run_campaign(&cfg)?;
            let (results, agg) = emit_results(&records, &out)?;
            println!("{} runs -> {}, {}", records.len(), results.display(), agg.display());
            Ok(())
        }
    }
}

fn analyze(traj: &Trajectory, window: usize, horizon: usize) -> opinion_lab::Result<serde_json::Value> {
    let la = final_epoch_assignment(traj)?;
    let rates = verify_rate_prediction(traj, &la, window)?;
    let directions = verify_direction_prediction_with_horizon(traj, &la, horizon)?;
    let limit = Snapshot::new(&traj.opinion_state(traj.len() - 1)).fvct(traj.final_state())?;
    let pseudo = match pseudo_stable_check(traj, &limit) {
        Ok(v) => serde_json::to_value(v).expect("verdict serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let limit_eq = match check_limit_equilibrium(traj) {
        Ok(v) => serde_json::to_value(v).expect("verdict serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    };
    Ok(json!({
        "termination": traj.termination,
        "epochs": traj.epochs.iter().map(|e| e.start).collect::<Vec<_>>(),
        "leaders": la,
        "rates": rates,
        "directions": directions,
        "pseudo_stable": pseudo,
        "limit_equilibrium": limit_eq,
    }))
}
