use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid parameter for {op}: {reason}")]
    Parameter { op: &'static str, reason: String },
    #[error("contract violated: {0}")]
    Contract(String),
}

impl GradError {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        GradError::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn param(op: &'static str, reason: impl Into<String>) -> Self {
        GradError::Parameter {
            op,
            reason: reason.into(),
        }
    }
}
