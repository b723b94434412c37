use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing required column `{0}`")]
    MissingColumn(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("empty sample")]
    EmptySample,

    #[error("need at least two clusters, found {0}")]
    TooFewClusters(usize),

    #[error("absorption did not converge after {iterations} iterations (max cell mean {achieved:e})")]
    NotConverged { iterations: usize, achieved: f64 },

    #[error("rank-deficient design: collinear columns {0:?}")]
    Collinear(Vec<String>),

    #[error("weak or deficient first stage (F = {f})")]
    WeakFirstStage { f: f64 },

    #[error("singular matrix in {0}")]
    Singular(String),

    #[error("no compliers: {0}")]
    NoCompliers(String),

    #[error("no revocation cases")]
    NoRevocations,

    #[error("degenerate nuisance fit in fold {fold}: {reason}")]
    DegenerateFold { fold: usize, reason: String },

    #[error("expansion produced {count} columns, cap is {cap}")]
    ColumnCap { count: usize, cap: usize },

    #[error("outcome has zero variance")]
    ZeroVariance,

    #[error("missing offense group `{0}`")]
    MissingGroup(String),

    #[error("undefined: {0}")]
    Undefined(String),
}

impl Error {
    /// Stable machine-readable code, used by the CLI's one-line error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "E_SCHEMA",
            Error::Io(_) => "E_IO",
            Error::Csv(_) => "E_CSV",
            Error::Config(_) => "E_CONFIG",
            Error::Domain(_) => "E_DOMAIN",
            Error::Invalid(_) => "E_INVALID",
            Error::EmptySample => "E_EMPTY_SAMPLE",
            Error::TooFewClusters(_) => "E_CLUSTERS",
            Error::NotConverged { .. } => "E_NOT_CONVERGED",
            Error::Collinear(_) => "E_COLLINEAR",
            Error::WeakFirstStage { .. } => "E_WEAK_FIRST_STAGE",
            Error::Singular(_) => "E_SINGULAR",
            Error::NoCompliers(_) => "E_NO_COMPLIERS",
            Error::NoRevocations => "E_NO_REVOCATIONS",
            Error::DegenerateFold { .. } => "E_DEGENERATE_FOLD",
            Error::ColumnCap { .. } => "E_COLUMN_CAP",
            Error::ZeroVariance => "E_ZERO_VARIANCE",
            Error::MissingGroup(_) => "E_MISSING_GROUP",
            Error::Undefined(_) => "E_UNDEFINED",
        }
    }
}
