//! CLI error classification: input problems exit with code 2,
//! numerical failures with code 3, both with a one-line JSON object on
//! stderr.

use ratemig_core::diagnostics::DiagnosticsError;
use ratemig_core::estimators::EstimateError;
use ratemig_core::expm::ExpmError;
use ratemig_core::ingest::IngestError;
use ratemig_core::matrix::MatrixError;
use ratemig_core::simulate::SimulateError;
use ratemig_core::statespace::StateSpaceError;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed inputs (exit code 2).
    Input(String),
    /// The computation could not produce a result (exit code 3).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Numeric(_) => "numeric",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(msg) | CliError::Numeric(msg) => msg,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(err: IngestError) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<StateSpaceError> for CliError {
    fn from(err: StateSpaceError) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<SimulateError> for CliError {
    fn from(err: SimulateError) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<MatrixError> for CliError {
    fn from(err: MatrixError) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<ExpmError> for CliError {
    fn from(err: ExpmError) -> Self {
        CliError::Numeric(err.to_string())
    }
}

impl From<EstimateError> for CliError {
    fn from(err: EstimateError) -> Self {
        match err {
            EstimateError::EmptyWindowStart(_) | EstimateError::EmptySubwindowStart { .. } => {
                CliError::Numeric(err.to_string())
            }
            EstimateError::Matrix(inner) => CliError::Numeric(inner.to_string()),
            _ => CliError::Input(err.to_string()),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(err: DiagnosticsError) -> Self {
        match err {
            DiagnosticsError::NoAdmissibleCells => CliError::Numeric(err.to_string()),
            DiagnosticsError::Estimate(inner) => inner.into(),
            DiagnosticsError::Expm(inner) => inner.into(),
            DiagnosticsError::Matrix(_) => CliError::Numeric(err.to_string()),
            _ => CliError::Input(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Input(err.to_string())
    }
}
