use thiserror::Error;

/// Errors raised by problem validation, schedules and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdxError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("non-positive strong convexity modulus: {0}")]
    NonPositiveModulus(String),
    #[error("non-finite constant: {0}")]
    NonFiniteConstant(String),
    #[error("invalid tolerance: eps = {eps}, eps0 = {eps0}")]
    InvalidTolerance { eps: f64, eps0: f64 },
    #[error("empty list")]
    EmptyList,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("invalid instance specification: {0}")]
    InvalidSpec(String),
    #[error("unknown invariant suite: {0}")]
    UnknownSuite(String),
    #[error("unknown bench family: {0}")]
    UnknownFamily(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("oracle error: {0}")]
    Oracle(String),
}

/// Several validation failures collected at once.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} validation error(s): {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
pub struct Diagnostics(pub Vec<PdxError>);

impl Diagnostics {
    pub fn first(&self) -> Option<&PdxError> {
        self.0.first()
    }

    pub fn contains(&self, pred: impl Fn(&PdxError) -> bool) -> bool {
        self.0.iter().any(pred)
    }
}

impl From<Diagnostics> for PdxError {
    fn from(d: Diagnostics) -> Self {
        d.0.into_iter()
            .next()
            .unwrap_or_else(|| PdxError::InvalidSpec("empty diagnostics".into()))
    }
}

pub type Result<T> = std::result::Result<T, PdxError>;
