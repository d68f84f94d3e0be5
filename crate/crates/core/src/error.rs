use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid resolution: {0}")]
    InvalidResolution(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field and coefficient live on different meshes")]
    MeshMismatch,

    #[error("field length {actual} does not match vertex count {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("ball (center {center:?}, radius {radius}) does not fit inside the box")]
    BallOutsideBox { center: Vec<f64>, radius: f64 },

    #[error("cell {cell}: matrix is not symmetric")]
    AsymmetricMatrix { cell: usize },

    #[error("cell {cell}: eigenvalue {eigenvalue} outside declared bounds [{theta}, {big_theta}]")]
    EllipticityViolation {
        cell: usize,
        eigenvalue: f64,
        theta: f64,
        big_theta: f64,
    },

    #[error("negative value {value} at vertex {vertex}")]
    NegativeValue { vertex: usize, value: f64 },

    #[error("truncation to the nonnegative cone annihilated the field")]
    DegenerateState,

    #[error("mask has no active degrees of freedom")]
    EmptyMask,

    #[error("inner mask is not contained in outer mask (vertex {vertex})")]
    NotNested { vertex: usize },

    #[error("conjugate gradient broke down after {iterations} iterations")]
    CgBreakdown { iterations: usize },

    #[error("eigensolver did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("dense oracle limited to {limit} unknowns, got {size}")]
    TooLarge { size: usize, limit: usize },

    #[error("target volume {target} unreachable (maximum {max})")]
    Unreachable { target: f64, max: f64 },

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("value count mismatch: expected {expected}, got {actual}")]
    CountMismatch { expected: usize, actual: usize },

    #[error("{}", format_config_errors(.0))]
    Config(Vec<ConfigError>),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

/// One problem found while parsing a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line number, 0 when the error is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

fn format_config_errors(errors: &[ConfigError]) -> String {
    let lines: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
    format!("invalid config:\n  {}", lines.join("\n  "))
}
