use thiserror::Error;

/// Errors surfaced by the public codec operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("{context}: extents {got:?} must be divisible by {divisor}")]
    Indivisible {
        context: &'static str,
        got: Vec<usize>,
        divisor: usize,
    },

    #[error("backward requires a scalar loss, got shape {got:?}")]
    NonScalarLoss { got: Vec<usize> },

    #[error("latent is already quantized ({state}); quantize requires a raw latent")]
    DoubleQuantization { state: &'static str },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("symbol {symbol} outside alphabet [{min}, {max}] at position {position}")]
    OutOfAlphabet {
        symbol: i32,
        min: i32,
        max: i32,
        position: usize,
    },

    #[error("range-coded stream truncated at byte {position}")]
    TruncatedStream { position: usize },

    #[error("bad magic: expected {expected:?}, got {got:?}")]
    BadMagic { expected: [u8; 4], got: [u8; 4] },

    #[error("unsupported container version {got} (expected {expected})")]
    BadVersion { expected: u16, got: u16 },

    #[error("checkpoint digest mismatch: bitstream was produced with different parameters")]
    DigestMismatch,

    #[error("no checkpoint available for lambda = {lambda}")]
    MissingCheckpoint { lambda: f64 },

    #[error("corrupt {what}: {detail}")]
    CorruptFile { what: &'static str, detail: String },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(context: &'static str, expected: &[usize], got: &[usize]) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }
}
