use thiserror::Error;

#[derive(Debug, Error)]
pub enum KsError {
    #[error("invalid pattern ({a},{b},{c},{d}): every entry must be >= 1")]
    InvalidPattern {
        a: usize,
        b: usize,
        c: usize,
        d: usize,
    },

    #[error("size overflow: {0}")]
    SizeOverflow(String),

    #[error("{what} = {value} out of range [0, {bound})")]
    IndexOutOfRange {
        what: &'static str,
        value: usize,
        bound: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("factors {hop} and {next} are not chainable: in_dim {in_dim} != out_dim {out_dim}")]
    NotChainable {
        hop: usize,
        next: usize,
        in_dim: usize,
        out_dim: usize,
    },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("fixture format error: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KsError>;
