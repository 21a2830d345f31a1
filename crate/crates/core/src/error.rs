use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance matrix is not symmetric positive definite")]
    SingularCovariance,

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("record {index} has zero probability under every concept")]
    UnnormalizableAssignment { index: usize },

    #[error("likelihood ratio undefined: zero mixture mass before and after the move")]
    UndefinedRatio,

    #[error("object {object_id} has an unknown tidy place but no oracle answered: {reason}")]
    UnresolvedUnknown { object_id: u64, reason: String },

    #[error("word {word} has zero mass under every concept")]
    UnresolvableWord { word: usize },

    #[error("no database entry for object class {class}")]
    MissingDatabaseEntry { class: usize },

    #[error("tidy database is empty")]
    EmptyDatabase,

    #[error("plan references object {object_id}, which is not in the environment")]
    StalePlan { object_id: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
