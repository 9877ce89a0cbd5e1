use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MessageError {
    #[error("message has no entries")]
    Empty,
    #[error("message entry {0} is negative or non-finite")]
    InvalidEntry(f64),
    #[error("message sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error("message has all-zero mass")]
    AllZero,
    #[error("message length {found} does not match expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("module `{0}` is already registered")]
    DuplicateModule(String),
    #[error("connecting `{lower}` -> `{upper}` would create a cycle")]
    Cycle { lower: String, upper: String },
    #[error("message passing needs a finite latent on `{0}`")]
    ArityMismatch(String),
    #[error("layer mismatch: `{lower}` is layer {lower_layer}, `{upper}` is layer {upper_layer}")]
    LayerMismatch {
        lower: String,
        lower_layer: usize,
        upper: String,
        upper_layer: usize,
    },
    #[error("connector kind not supported here: {0}")]
    UnsupportedConnector(String),
    #[error("instance count mismatch: lower has {lower}, upper has {upper}")]
    InstanceMismatch { lower: usize, upper: usize },
    #[error("module `{module}` produced a non-finite log-likelihood in round {round}")]
    NonFiniteLikelihood { module: String, round: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Message(#[from] MessageError),
    #[error(transparent)]
    Mlda(#[from] MldaError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MldaError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("external message has length {found}, expected K = {expected}")]
    MessageLengthMismatch { expected: usize, found: usize },
    #[error("document {0} does not exist")]
    UnknownDocument(usize),
    #[error("modality `{0}` does not exist")]
    UnknownModality(String),
    #[error("observation for modality {modality} has length {found}, expected {expected}")]
    ObservationShape {
        modality: usize,
        expected: usize,
        found: usize,
    },
    #[error("document has no tokens in any modality")]
    EmptyDocument,
    #[error("modality `{0}` is not a word modality")]
    NotWordModality(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmError {
    #[error("cannot remove `{0}`: no customer seated in that context")]
    RemoveFromEmpty(String),
    #[error("character `{0}` is not in the alphabet")]
    UnknownCharacter(char),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("symbol `{0}` is not in the alphabet")]
    UnknownSymbol(char),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),
    #[error("object category {0} has no allowed motion")]
    InconsistentMotionMap(usize),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("label sequences differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference string is empty")]
    EmptyReference,
    #[error("too many labels for exhaustive matching: {0}")]
    TooManyLabels(usize),
    #[error("cut point {cut} is invalid for a string of length {len}")]
    InvalidCut { cut: usize, len: usize },
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Mlda(#[from] MldaError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Message(#[from] MessageError),
}
