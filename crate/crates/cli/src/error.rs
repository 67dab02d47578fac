use sped::estimator::EstimatorError;
use sped::fourier::FourierError;
use sped::mise::MiseError;
use sped::multiplier::MultiplierError;
use sped::qp::QpError;
use sped::sim::SimError;
use sped::spline::SplineError;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    /// Bad configuration carrying a library error name.
    #[error("{message}")]
    Config { name: &'static str, message: String },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    /// A failure inside the numerical library; `name` is its error variant.
    #[error("{message}")]
    Numerical { name: &'static str, message: String },

    #[error("{0}")]
    Infeasible(String),

    #[error("{failed} of {total} reports did not come out as expected")]
    CheckFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn name(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Config { name, .. } => name,
            CliError::Parse { .. } => "Parse",
            CliError::Io { .. } => "Io",
            CliError::Numerical { name, .. } => name,
            CliError::Infeasible(_) => "Infeasible",
            CliError::CheckFailed { .. } => "CheckFailed",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed { .. } => 1,
            CliError::Usage(_) | CliError::Config { .. } | CliError::Parse { .. } | CliError::Io { .. } => 2,
            CliError::Numerical { .. } => 3,
            CliError::Infeasible(_) => 4,
        }
    }

    pub fn io(path: &str, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_string(), source }
    }
}

fn numerical(name: &'static str, e: impl ToString) -> CliError {
    CliError::Numerical { name, message: e.to_string() }
}

impl From<SplineError> for CliError {
    fn from(e: SplineError) -> Self {
        match e {
            SplineError::Qp(QpError::Infeasible(_)) => CliError::Infeasible(e.to_string()),
            _ => numerical(e.name(), e),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Spline { source: SplineError::Qp(QpError::Infeasible(_)), .. } => {
                CliError::Infeasible(e.to_string())
            }
            _ => numerical(e.name(), e),
        }
    }
}

macro_rules! numerical_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                numerical(e.name(), e)
            }
        })*
    };
}

numerical_from!(EstimatorError, FourierError, MiseError, MultiplierError);
