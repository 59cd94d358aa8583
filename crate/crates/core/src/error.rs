use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("plant {index} has {value} leaves, expected 0..=6")]
    LeafOutOfRange { index: usize, value: i64 },
    #[error("expected 5 plant values, got {0}")]
    WrongArity(usize),
    #[error("unknown experiment `{0}` (expected 1 or 2)")]
    UnknownExperiment(String),
    #[error("dataset is empty")]
    Empty,
    #[error("replicates must be at least 1")]
    NoReplicates,
    #[error("bin {bin} has {members} member(s); at least 2 are needed to interpolate")]
    BinTooSmall { bin: usize, members: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("split with test fraction {fraction} of {n} samples leaves one side empty")]
    EmptySplit { fraction: f64, n: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("max_depth must be at least 1")]
    ZeroDepth,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("malformed tree document: {0}")]
    Malformed(String),
    #[error("tree document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("operation `{operation}` is not allowed in phase {phase:?}")]
    WrongPhase {
        operation: &'static str,
        phase: crate::game::Phase,
    },
    #[error("invalid choice: {0}")]
    InvalidChoice(#[from] DataError),
    #[error("growth {0} outside [0.1, 1.9]")]
    GrowthOutOfRange(f64),
    #[error("survey is missing required items: {}", .0.join(", "))]
    MissingSurveyItems(Vec<String>),
    #[error("invalid survey answer: {0}")]
    InvalidSurvey(String),
    #[error("session is not complete: {0}")]
    Incomplete(&'static str),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample `{0}` is empty")]
    EmptySample(&'static str),
    #[error("sample `{0}` needs at least {1} observations")]
    TooFewObservations(&'static str, usize),
    #[error("both samples have zero variance")]
    DegenerateVariance,
    #[error("design matrix is singular; collinear terms: {}", .0.join(", "))]
    SingularDesign(Vec<String>),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no unflagged sessions to summarise")]
    NoSessions,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}
