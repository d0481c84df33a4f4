use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Where a non-finite value first showed up during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericSite {
    Input,
    Layer(usize),
    Classifier,
}

impl fmt::Display for NumericSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericSite::Input => f.write_str("input embeddings"),
            NumericSite::Layer(l) => write!(f, "encoder layer {l}"),
            NumericSite::Classifier => f.write_str("classifier head"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("text is empty or whitespace-only")]
    EmptyText,

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("invalid document: {0}")]
    InvalidDoc(String),

    #[error("non-finite value in {site}")]
    NumericalError { site: NumericSite },

    #[error("non-finite value at training step {step} ({site})")]
    TrainDiverged { step: usize, site: NumericSite },

    #[error("activation cache does not match the model: {0}")]
    CacheMismatch(String),

    #[error("relation matrix layer {layer} head {head} row {row} sums to {sum} over unmasked columns")]
    BadRelations {
        layer: usize,
        head: usize,
        row: usize,
        sum: f64,
    },

    #[error("no eligible counterfactual partner for document `{0}`")]
    NoPartner(String),

    #[error("EmptySelection: no documents match the selection")]
    EmptySelection,
}
