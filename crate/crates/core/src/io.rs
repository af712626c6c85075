//! File formats: state files, trajectory CSV, event JSON, and the
//! 17-significant-digit number format shared by every CSV writer.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Termination, Trajectory};
use crate::error::{Error, Result};
use crate::state::{Model, OpinionState};

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros removed,
/// scientific notation outside `1e-4 <= |x| < 1e17`. Round-trips every `f64`.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("`e` formatting always has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub opinions: Vec<f64>,
    pub bounds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<Model>,
}

impl StateFile {
    pub fn from_state(state: &OpinionState) -> Self {
        Self {
            opinions: state.opinions().to_vec(),
            bounds: state.bounds().to_vec(),
            model: Some(state.kind()),
        }
    }
}

/// Reads a state from JSON (`{"opinions": [..], "bounds": [..]}`) or from a
/// two-column CSV (`opinion,bound`, header optional). The format is chosen by
/// extension; anything other than `.csv` is parsed as JSON. `model` overrides
/// a model named in the file; one of the two must be present.
pub fn read_state(path: &Path, model: Option<Model>) -> Result<OpinionState> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let file = if is_csv { parse_state_csv(path, &text)? } else { parse_state_json(path, &text)? };
    let kind = model.or(file.model).ok_or_else(|| {
        Error::parse(path, "no model given: pass --model or add \"model\": \"sbc\"|\"sbi\" to the file")
    })?;
    OpinionState::new(file.opinions, file.bounds, kind).map_err(|e| Error::parse(path, e.to_string()))
}

fn parse_state_json(path: &Path, text: &str) -> Result<StateFile> {
    serde_json::from_str(text).map_err(|e| Error::parse(path, format!("line {}, column {}: {e}", e.line(), e.column())))
}

fn parse_state_csv(path: &Path, text: &str) -> Result<StateFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut opinions = Vec::new();
    let mut bounds = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = record.position().map_or(row + 1, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(Error::parse(path, format!("line {line}: expected 2 fields (opinion,bound), found {}", record.len())));
        }
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if row == 0 && parsed.iter().all(|p| p.is_err()) {
            continue; // header
        }
        for (field, (value, name)) in parsed.into_iter().zip(["opinion", "bound"]).enumerate() {
            let v = value.map_err(|_| {
                Error::parse(path, format!("line {line}, field {} ({name}): `{}` is not a number", field + 1, &record[field]))
            })?;
            if field == 0 { opinions.push(v) } else { bounds.push(v) }
        }
    }
    Ok(StateFile { opinions, bounds, model: None })
}

pub fn write_state_json(path: &Path, state: &OpinionState) -> Result<()> {
    let json = serde_json::to_string_pretty(&StateFile::from_state(state)).expect("state serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

/// Trajectory CSV: header `t,x_0,...,x_{n-1}` and one row per recorded step.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> std::io::Result<()> {
    let n = traj.bounds.len();
    let mut header = String::from("t");
    for i in 0..n {
        header.push_str(&format!(",x_{i}"));
    }
    writeln!(out, "{header}")?;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let mut line = t.to_string();
        for v in x {
            line.push(',');
            line.push_str(&format_g17(*v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Recorded times and opinion vectors from a trajectory CSV.
pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
    if headers.get(0) != Some("t") || headers.len() < 2 {
        return Err(Error::parse(path, "line 1: header must be `t,x_0,...,x_{n-1}`"));
    }
    let n = headers.len() - 1;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != n + 1 {
            return Err(Error::parse(path, format!("line {line}: expected {} fields, found {}", n + 1, record.len())));
        }
        let t: usize = record[0]
            .parse()
            .map_err(|_| Error::parse(path, format!("line {line}, field 1 (t): `{}` is not a step index", &record[0])))?;
        if times.last().is_some_and(|&prev| t <= prev) {
            return Err(Error::parse(path, format!("line {line}: times must be strictly increasing")));
        }
        let x = (1..=n)
            .map(|k| {
                record[k].parse::<f64>().map_err(|_| {
                    Error::parse(path, format!("line {line}, field {} (x_{}): `{}` is not a number", k + 1, k - 1, &record[k]))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        times.push(t);
        states.push(x);
    }
    if states.is_empty() {
        return Err(Error::parse(path, "no data rows"));
    }
    Ok((times, states))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochEvent {
    pub t: usize,
    pub hash: String,
}

/// Event log of a simulation. `termination` and `convergence_rule` record how
/// the run was stopped, since asymptotic convergence is declared numerically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsFile {
    pub epochs: Vec<EpochEvent>,
    pub fixed_at: Option<usize>,
    pub termination: Termination,
    pub steps: usize,
    pub convergence_rule: String,
}

impl EventsFile {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self {
            epochs: traj
                .epochs
                .iter()
                .map(|e| EpochEvent { t: e.start, hash: format!("{:016x}", e.hash) })
                .collect(),
            fixed_at: traj.fixed_at,
            termination: traj.termination,
            steps: traj.steps,
            convergence_rule: traj.convergence_rule.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn g17_matches_printf() {
        assert_eq!(format_g17(0.5), "0.5");
        assert_eq!(format_g17(1.0), "1");
        assert_eq!(format_g17(0.0), "0");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(1.0 / 3.0), "0.33333333333333331");
        assert_eq!(format_g17(-2.25), "-2.25");
        assert_eq!(format_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_g17(1e20), "1e+20");
        assert_eq!(format_g17(123456.0), "123456");
        assert_eq!(format_g17(0.0001), "0.0001");
    }

    proptest! {
        #[test]
        fn g17_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let s = format_g17(x);
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn csv_state_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "opinion,bound\n0,0.25\n0.6,1\n1,0.25\n").unwrap();
        let s = read_state(&p, Some(Model::Sbc)).unwrap();
        assert_eq!(s.opinions(), &[0.0, 0.6, 1.0]);
        fs::write(&p, "0,0.25\n0.6,1\n").unwrap();
        assert_eq!(read_state(&p, Some(Model::Sbi)).unwrap().len(), 2);
    }

    #[test]
    fn csv_state_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "0,0.25\n0.6,abc\n").unwrap();
        let msg = read_state(&p, Some(Model::Sbc)).unwrap_err().to_string();
        assert!(msg.contains("line 2, field 2 (bound)"), "{msg}");
        fs::write(&p, "0,0.25,1\n").unwrap();
        let msg = read_state(&p, Some(Model::Sbc)).unwrap_err().to_string();
        assert!(msg.contains("line 1: expected 2 fields"), "{msg}");
    }

    #[test]
    fn json_state_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        fs::write(&p, "{\"opinions\": [0, 1],\n \"bounds\": [0.1, \"x\"]}").unwrap();
        let err = read_state(&p, Some(Model::Sbc)).unwrap_err();
        assert!(err.is_input_error());
        assert!(err.to_string().contains("line 2"), "{err}");

        fs::write(&p, r#"{"opinions": [0, 1], "bounds": [0.1, 0.0]}"#).unwrap();
        assert!(read_state(&p, Some(Model::Sbc)).unwrap_err().to_string().contains("strictly positive"));

        fs::write(&p, r#"{"opinions": [0, 1], "bounds": [0.1, 0.2]}"#).unwrap();
        assert!(read_state(&p, None).is_err());
        fs::write(&p, r#"{"opinions": [0, 1], "bounds": [0.1, 0.2], "model": "sbi"}"#).unwrap();
        assert_eq!(read_state(&p, None).unwrap().kind(), Model::Sbi);
        assert_eq!(read_state(&p, Some(Model::Sbc)).unwrap().kind(), Model::Sbc);
    }
}
