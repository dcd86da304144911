use pointcause::estimate::EstimateError;
use pointcause::interventions::InterventionError;
use pointcause::pointprocess::PointProcessError;
use pointcause::propensity::PropensityError;
use pointcause::simstudy::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: row {row}: {message}")]
    Data { path: String, row: usize, message: String },
    #[error("{0}")]
    Positivity(String),
    #[error("propensity fit failed: {0}")]
    Fit(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Data { .. } => 2,
            CliError::Positivity(_) => 3,
            CliError::Fit(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    pub fn other(e: impl std::fmt::Display) -> Self {
        CliError::Other(e.to_string())
    }
}

fn point_process(e: PointProcessError) -> CliError {
    match e {
        PointProcessError::PositivityViolation { .. } => CliError::Positivity(e.to_string()),
        e => CliError::other(e),
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::PositivityViolation { .. } | EstimateError::NonFiniteWeight { .. } => {
                CliError::Positivity(e.to_string())
            }
            EstimateError::Intervention(InterventionError::PointProcess(p)) => point_process(p),
            e => CliError::other(e),
        }
    }
}

impl From<PropensityError> for CliError {
    fn from(e: PropensityError) -> Self {
        match e {
            PropensityError::PointProcess(p @ PointProcessError::PositivityViolation { .. }) => point_process(p),
            e => CliError::Fit(e.to_string()),
        }
    }
}

impl From<InterventionError> for CliError {
    fn from(e: InterventionError) -> Self {
        match e {
            InterventionError::PointProcess(p) => point_process(p),
            e => CliError::Config(format!("interventions: {e}")),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Spec(_) | SimError::Format { .. } => CliError::Config(e.to_string()),
            SimError::Propensity(p) => p.into(),
            SimError::Estimate(p) => p.into(),
            SimError::Intervention(p) => p.into(),
            SimError::PointProcess(p) => point_process(p),
            e => CliError::other(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::other(e)
    }
}
