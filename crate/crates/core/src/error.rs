use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid local dimension {0} (need d >= 2)")]
    InvalidDimension(usize),

    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("subspace weight {0:e} is too small to renormalize")]
    EmptySubspace(f64),

    #[error("index error: {0}")]
    Index(String),

    #[error("incomplete measurement setting: {0}")]
    IncompleteSetting(String),

    #[error("matrix is not Hermitian (defect {0:e})")]
    Symmetry(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("pivot r[{0},{0}] is degenerate")]
    PivotDegenerate(usize),

    #[error("inputs inconsistent with positive semidefiniteness at triple ({j}, {k}, {l})")]
    Inconsistent { j: usize, k: usize, l: usize },

    #[error("preset {preset} is defined only for d = {expected}, got d = {found}")]
    PresetDimension {
        preset: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("infeasible dual point: {0}")]
    InfeasiblePoint(String),

    #[error("malformed click table: {0}")]
    MalformedTable(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            domain,
        }
    }

    /// Innermost error, with any stage tags removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Tags errors coming out of a pipeline stage with the stage name.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
