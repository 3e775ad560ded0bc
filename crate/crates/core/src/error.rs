use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no interactions survive filtering")]
    EmptyAfterFiltering,

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("conditioned target is empty: no rated item satisfies the condition")]
    EmptyTarget,

    #[error("held-out set is empty")]
    EmptyHeldout,

    #[error("no evaluation cases")]
    NoCases,

    #[error("condition index {index} out of range for {categories} categories")]
    ConditionOutOfRange { index: usize, categories: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch}, step {step}: non-finite {what}")]
    Diverged { epoch: usize, step: u64, what: &'static str },

    #[error("{0}")]
    External(String),

    #[error("PCA needs at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
}
