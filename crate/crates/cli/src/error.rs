use std::path::PathBuf;

use driftflow_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const STABILITY: i32 = 3;
    pub const SOLVER: i32 = 4;
    pub const VERIFICATION: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Verification(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Domain and configuration errors raised while building a scenario are
    /// configuration errors from the user's point of view.
    pub fn from_setup(e: CoreError) -> Self {
        match e {
            CoreError::Domain(m) | CoreError::Config(m) | CoreError::Usage(m) => CliError::Config(m),
            other => CliError::Config(other.to_string()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Config(_) => "config",
            CliError::Verification(_) => "verification",
            CliError::Core(e) => match e {
                CoreError::Domain(_) | CoreError::Config(_) | CoreError::Usage(_) => "config",
                CoreError::OutOfRegime(_) => "config",
                CoreError::Stability { .. }
                | CoreError::FlowBreakdown { .. }
                | CoreError::Extinction { .. }
                | CoreError::Horizon { .. } => "stability",
                CoreError::Solver { .. }
                | CoreError::Assembly(_)
                | CoreError::Degeneracy(_)
                | CoreError::Oracle(_) => "solver",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "io" => exit::IO,
            "config" => exit::CONFIG,
            "stability" => exit::STABILITY,
            "solver" => exit::SOLVER,
            _ => exit::VERIFICATION,
        }
    }

    /// One machine-parsable line for the error stream.
    pub fn line(&self) -> String {
        let reason = self.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error kind={} reason=\"{}\"", self.kind(), reason)
    }
}
