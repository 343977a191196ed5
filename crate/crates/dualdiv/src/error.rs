use thiserror::Error;

/// Failures of a command, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Output(_) => 3,
        }
    }
}

impl From<dualdiv_core::Error> for CliError {
    fn from(e: dualdiv_core::Error) -> Self {
        use dualdiv_core::Error as E;
        match e {
            E::InvalidModel(_) | E::InvalidParameter(_) | E::Domain(_) | E::Regime(_) => CliError::Config(e.to_string()),
            E::NumericFailure(_) | E::Unsupported(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
