use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape {shape:?} holds {expected} elements but {actual} were given")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("rank {0} exceeds the supported maximum of 5")]
    RankTooLarge(usize),
    #[error("rank mismatch: expected {expected}, got {actual}")]
    RankMismatch { expected: usize, actual: usize },
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("channel mismatch in {context}: expected {expected}, got {actual}")]
    ChannelMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "non-positive output extent on axis {axis} (input {input}, effective kernel {kernel})"
    )]
    EmptyOutput {
        axis: usize,
        input: usize,
        kernel: usize,
    },
    #[error("unsupported layer kind `{kind}` at node `{node}`")]
    UnsupportedKind { node: String, kind: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("node `{node}`: {source}")]
    AtNode {
        node: String,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("dtype mismatch for `{name}`: expected {expected}, got {actual}")]
    DType {
        name: String,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("configuration outside the block-sparse oracle subset: {0}")]
    OutsideOracle(String),
    #[error("training diverged at epoch {epoch}, step {step}: loss is {loss}")]
    Diverged {
        epoch: usize,
        step: usize,
        loss: f64,
    },
}

impl Error {
    pub fn at(self, node: &str) -> Error {
        match self {
            e @ Error::AtNode { .. } => e,
            e => Error::AtNode {
                node: node.into(),
                source: alloc::boxed::Box::new(e),
            },
        }
    }
}
