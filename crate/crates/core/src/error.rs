use thiserror::Error;

use crate::network::{NodeId, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid network: {}", join_violations(.0))]
    InvalidNetwork(Vec<Violation>),

    #[error("global phase has {got} entries, network has {expected} junctions")]
    PhaseCount { expected: usize, got: usize },

    #[error("junction {junction} has {available} phases, index {phase} is out of range")]
    InvalidPhase {
        junction: usize,
        phase: usize,
        available: usize,
    },

    #[error("routing row of node {node} sums to {sum}, which exceeds 1")]
    RoutingRowSum { node: NodeId, sum: f64 },

    #[error("routing entry ({from}, {to}) is not a movement of the network")]
    RoutingNotMovement { from: NodeId, to: NodeId },

    #[error("routing probability ({from}, {to}) = {value} is outside [0, 1]")]
    RoutingValue {
        from: NodeId,
        to: NodeId,
        value: f64,
    },

    #[error("routing matrix covers {got} nodes, network has {expected}")]
    RoutingShape { expected: usize, got: usize },

    #[error("movement ({from}, {to}) has no turn label")]
    MissingTurn { from: NodeId, to: NodeId },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid bisection bracket: {0}")]
    Bracket(String),

    #[error("performance ratio undefined: BP* frontier is {0}")]
    ZeroDenominator(f64),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
