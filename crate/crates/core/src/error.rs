use thiserror::Error;

/// Which offline factorization rejected its input as not positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMatrix {
    Q,
    R,
    T,
    S,
}

impl std::fmt::Display for CostMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            CostMatrix::Q => "Q",
            CostMatrix::R => "R",
            CostMatrix::T => "T",
            CostMatrix::S => "S",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot at row {row})")]
    NotPositiveDefinite { row: usize },

    #[error("block {block} is not positive definite (pivot at row {row} of the block)")]
    BlockNotPositiveDefinite { block: usize, row: usize },

    #[error("cost matrix {0} is not symmetric positive definite")]
    CostNotPositiveDefinite(CostMatrix),

    #[error("prediction matrix G is not full row rank (banded factorization failed at row {row})")]
    RankDeficientG { row: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("tightened box is empty at coordinate {index} of the {block} bounds")]
    EmptyTightenedBox { block: &'static str, index: usize },

    #[error("invalid bounds at coordinate {index} of the {block} bounds (lower must be below upper)")]
    InvalidBounds { block: &'static str, index: usize },

    #[error("small dense system is singular")]
    SingularSmallSystem,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("problem file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
