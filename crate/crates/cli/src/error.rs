use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Core(#[from] bpsim_core::Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for everything that fails at run time.
    pub fn exit_code(&self) -> u8 {
        use bpsim_core::Error as E;
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidNetwork(_)
                | E::RoutingRowSum { .. }
                | E::RoutingNotMovement { .. }
                | E::RoutingValue { .. }
                | E::RoutingShape { .. }
                | E::MissingTurn { .. }
                | E::Config(_)
                | E::Precondition(_) => 1,
                E::PhaseCount { .. }
                | E::InvalidPhase { .. }
                | E::Bracket(_)
                | E::ZeroDenominator(_) => 2,
            },
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Runtime(_) => 2,
        }
    }
}
