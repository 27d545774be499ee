use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("non-numeric feature value {value:?} at row {row}, column {column}")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("non-finite feature value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("label column {0} not found")]
    UnknownLabelColumn(String),

    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("dataset has {0} class(es); at least 2 are required")]
    TooFewClasses(usize),

    #[error("dataset has no feature columns")]
    NoFeatures,

    #[error("dataset has {rows} rows, fewer than required ({required})")]
    TooFewRows { rows: usize, required: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("a mask must select at least one hidden neuron")]
    EmptyMask,

    #[error("model output is not finite")]
    NonFiniteOutput,

    #[error("no valid solution was produced in any generation")]
    NoValidSolution,

    #[error("empty input")]
    EmptyInput,
}
