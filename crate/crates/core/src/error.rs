use thiserror::Error;

/// Errors produced by tensor handling, scheduling and protocol generation.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor dimensions or layouts do not match what an operation requires.
    #[error("shape error: {0}")]
    Shape(String),

    /// int8 channel packing needs an input channel count divisible by four.
    #[error("packing error: channel count {0} is not divisible by 4")]
    Packing(usize),

    /// A layer cannot be scheduled on the given core configuration.
    #[error("unschedulable: {0}")]
    Unschedulable(String),

    /// No command in the interconnect vocabulary reproduces a receiver-set
    /// transition. Carries the offending stream position and the two sets.
    #[error(
        "no interconnect command reproduces transition at input ({iy},{ix}): \
         rows {from_rows:?} cols {from_cols:?} -> rows {to_rows:?} cols {to_cols:?}"
    )]
    Protocol {
        iy: usize,
        ix: usize,
        from_rows: (usize, usize),
        from_cols: (usize, usize),
        to_rows: (usize, usize),
        to_cols: (usize, usize),
    },

    /// A fixture file could not be interpreted.
    #[error("fixture error: {0}")]
    Fixture(String),
}

pub type Result<T> = std::result::Result<T, Error>;
