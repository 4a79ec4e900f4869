use std::fmt::Display;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Io(_) => 4,
            CliError::Failed(_) => 1,
        }
    }

    pub fn config(msg: impl Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn io(path: &std::path::Path, e: impl Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<spf_core::Error> for CliError {
    fn from(e: spf_core::Error) -> Self {
        use spf_core::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::EigenNoConvergence(_) | E::NoPeriod(_) => CliError::NonConvergence(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<spf_nn::Error> for CliError {
    fn from(e: spf_nn::Error) -> Self {
        match e {
            spf_nn::Error::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<spf_trainer::Error> for CliError {
    fn from(e: spf_trainer::Error) -> Self {
        use spf_trainer::Error as E;
        match e {
            E::Core(c) => c.into(),
            E::Nn(n) => n.into(),
            E::Config(m) => CliError::Config(m),
            E::Io(io) => CliError::Io(io.to_string()),
            E::Invalid(m) => CliError::Failed(m),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
