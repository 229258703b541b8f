use adiabatic::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// A library error caused by malformed input values.
    pub fn from_input(e: Error) -> Self {
        CliError::Config(e.to_string())
    }

    /// A library error raised while assembling a spec: bad values are the
    /// config's fault, structural failures (e.g. no unique equilibrium)
    /// belong to the model.
    pub fn from_build(e: Error) -> Self {
        match e {
            Error::NonUniqueStationary { .. }
            | Error::StationarySolve { .. }
            | Error::InconsistentSchedules { .. }
            | Error::NumericalDrift(_) => CliError::Domain(e),
            other => CliError::Config(other.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
