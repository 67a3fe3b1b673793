use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{layer}: shape mismatch, expected {expected:?} but got {got:?}")]
    ShapeMismatch {
        layer: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("tensor of shape {shape:?} cannot hold {len} values")]
    BadBuffer { shape: Vec<usize>, len: usize },
    #[error("unknown layer kind `{0}`")]
    UnknownLayer(String),
    #[error("{layer}: expected {expected} parameter tensor(s), got {got}")]
    MissingParams {
        layer: String,
        expected: usize,
        got: usize,
    },
    #[error("{layer}: {reason}")]
    InvalidAttrs { layer: String, reason: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("graph cycle: node {node} consumes node {input}")]
    Cycle { node: usize, input: usize },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite function value while probing coordinate {param}[{index}]")]
    NonFiniteProbe { param: usize, index: usize },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
