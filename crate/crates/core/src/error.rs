use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure modes for fitting, clustering, classification and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    #[error("constant profile for subject {subject} on platform {platform}")]
    ConstantProfile { subject: usize, platform: usize },

    #[error("degenerate profile for subject {subject} on platform {platform}: {reason}")]
    DegenerateProfile {
        subject: usize,
        platform: usize,
        reason: String,
    },

    #[error("component {component} collapsed on platform {platform}")]
    ComponentCollapse { platform: usize, component: u8 },

    #[error("degenerate variance in component {component} on platform {platform}")]
    DegenerateVariance { platform: usize, component: u8 },

    #[error("subject cannot be classified: every cluster yields a degenerate fit")]
    Unclassifiable,

    #[error("brute-force search refused: n = {n} exceeds the cap of {n_max}")]
    OracleTooLarge { n: usize, n_max: usize },

    #[error("no valid fit for any merge candidate")]
    NoValidMerge,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConstantProfile { .. }
                | Error::DegenerateProfile { .. }
                | Error::ComponentCollapse { .. }
                | Error::DegenerateVariance { .. }
                | Error::Unclassifiable
                | Error::NoValidMerge
        )
    }
}
