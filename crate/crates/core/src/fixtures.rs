//! Small reference systems used throughout the tests, the guide and the CLI examples.

use crate::state::{Model, OpinionState};

fn sbc(y: &[f64], r: &[f64]) -> OpinionState {
    OpinionState::new(y.to_vec(), r.to_vec(), Model::Sbc).expect("fixture is valid")
}

/// Two stubborn agents at 0 and 1 and one broad listener at 0.6 between them.
/// The topology never changes and the listener approaches 0.5 geometrically.
pub fn single_listener() -> OpinionState {
    sbc(&[0.0, 0.6, 1.0], &[0.25, 1.0, 0.25])
}

/// [`single_listener`] with the first bound widened to 0.5, which puts the
/// limit exactly on a confidence boundary.
pub fn single_listener_on_boundary() -> OpinionState {
    sbc(&[0.0, 0.6, 1.0], &[0.5, 1.0, 0.25])
}

/// Four stubborn agents, three open-minded components, and a follower
/// (agent 8) whose slowest successor is the pair {5, 6}.
pub fn leader_follower() -> OpinionState {
    sbc(&[0.0, 1.5, 3.5, 5.0, 1.0, 1.0, 4.0, 2.1], &[0.01, 0.01, 0.01, 0.01, 1.0, 1.0, 1.0, 3.0])
}

/// Seventeen agents with closed-, moderate- and open-minded components.
pub fn seventeen_agents() -> OpinionState {
    sbc(
        &[
            0.1, 0.24, 0.27, 0.3, 0.34, 0.37, 0.39, 0.4, 0.5, 0.6, 0.67, 0.68, 0.75, 0.85, 0.86, 0.87, 1.0,
        ],
        &[
            0.5, 0.04, 0.04, 0.04, 0.031, 0.021, 0.011, 0.061, 0.25, 0.01, 0.04, 0.03, 0.3, 0.07, 0.07,
            0.07, 0.135,
        ],
    )
}

/// Reaches an exact fixed state in two steps although two agents stay open-minded.
pub fn finite_time_with_open_agents() -> OpinionState {
    sbc(&[0.0, 2.0, 3.0, 4.5, 7.0], &[0.01, 3.0, 0.01, 3.0, 0.01])
}
