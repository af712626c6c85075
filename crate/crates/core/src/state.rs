use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which bound decides whether agent `i` listens to agent `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Bounded confidence: the listener's bound, `|y_i - y_j| <= r_i`.
    Sbc,
    /// Bounded influence: the speaker's bound, `|y_i - y_j| <= r_j`.
    Sbi,
}

impl Model {
    pub const ALL: [Model; 2] = [Model::Sbc, Model::Sbi];

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Sbc => "sbc",
            Model::Sbi => "sbi",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sbc" => Ok(Model::Sbc),
            "sbi" => Ok(Model::Sbi),
            other => Err(Error::InvalidState(format!("unknown model `{other}` (expected sbc or sbi)"))),
        }
    }
}

/// Opinions and bounds of `n` agents together with the neighbor rule.
///
/// Construction validates that both vectors have the same nonzero length,
/// every entry is finite and every bound is strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpinionState {
    opinions: Vec<f64>,
    bounds: Vec<f64>,
    kind: Model,
}

impl OpinionState {
    pub fn new(opinions: Vec<f64>, bounds: Vec<f64>, kind: Model) -> Result<Self> {
        if opinions.is_empty() {
            return Err(Error::InvalidState("at least one agent is required".into()));
        }
        if opinions.len() != bounds.len() {
            return Err(Error::InvalidState(format!(
                "{} opinions but {} bounds",
                opinions.len(),
                bounds.len()
            )));
        }
        if let Some(i) = opinions.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidState(format!("opinion {i} is not finite")));
        }
        if let Some(i) = bounds.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidState(format!(
                "bound {i} must be finite and strictly positive, got {}",
                bounds[i]
            )));
        }
        Ok(Self { opinions, bounds, kind })
    }

    /// Same bounds and model, different opinions.
    pub fn with_opinions(&self, opinions: Vec<f64>) -> Result<Self> {
        if opinions.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: opinions.len() });
        }
        if let Some(i) = opinions.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidState(format!("opinion {i} is not finite")));
        }
        Ok(Self { opinions, bounds: self.bounds.clone(), kind: self.kind })
    }

    pub fn with_kind(&self, kind: Model) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn len(&self) -> usize {
        self.opinions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn opinions(&self) -> &[f64] {
        &self.opinions
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn kind(&self) -> Model {
        self.kind
    }

    /// The bound that governs the edge `i -> j`.
    #[inline]
    pub fn edge_bound(&self, i: usize, j: usize) -> f64 {
        match self.kind {
            Model::Sbc => self.bounds[i],
            Model::Sbi => self.bounds[j],
        }
    }

    pub fn into_opinions(self) -> Vec<f64> {
        self.opinions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        assert!(OpinionState::new(vec![], vec![], Model::Sbc).is_err());
        assert!(OpinionState::new(vec![0.0], vec![0.0], Model::Sbc).is_err());
        assert!(OpinionState::new(vec![0.0], vec![-1.0], Model::Sbi).is_err());
        assert!(OpinionState::new(vec![0.0, 1.0], vec![0.1], Model::Sbc).is_err());
        assert!(OpinionState::new(vec![f64::NAN], vec![0.1], Model::Sbc).is_err());
        assert!(OpinionState::new(vec![0.5], vec![0.1], Model::Sbc).is_ok());
    }

    #[test]
    fn model_parsing() {
        assert_eq!("SBC".parse::<Model>().unwrap(), Model::Sbc);
        assert_eq!("sbi".parse::<Model>().unwrap(), Model::Sbi);
        assert!("hk".parse::<Model>().is_err());
    }

    #[test]
    fn edge_bound_follows_model() {
        let s = OpinionState::new(vec![0.0, 1.0], vec![0.1, 0.9], Model::Sbc).unwrap();
        assert_eq!(s.edge_bound(0, 1), 0.1);
        assert_eq!(s.with_kind(Model::Sbi).edge_bound(0, 1), 0.9);
    }
}
