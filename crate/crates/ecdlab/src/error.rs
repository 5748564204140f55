use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ecd_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Process exit status: 2 config, 3 non-convergence, 4 infeasible budget, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Core(ecd_core::Error::NonConvergent { .. }) => 3,
            LabError::Core(ecd_core::Error::BudgetInfeasible(_)) => 4,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(LabError::Config("x".into()).exit_code(), 2);
        assert_eq!(LabError::Core(ecd_core::Error::NonConvergent { what: "p", delta: 1.0 }).exit_code(), 3);
        assert_eq!(LabError::Core(ecd_core::Error::BudgetInfeasible("b".into())).exit_code(), 4);
        assert_eq!(LabError::Core(ecd_core::Error::ZeroField).exit_code(), 1);
    }
}
