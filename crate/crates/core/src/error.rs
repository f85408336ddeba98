use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    /// The strong triangle inequality fails on the triple `(i, j, k)`:
    /// `max(D(i,k), D(k,j)) < D(i,j) - tol` by `excess`.
    #[error("not ultrametric: max(D({i},{k}), D({k},{j})) falls short of D({i},{j}) by {excess}")]
    NotUltrametric { i: usize, j: usize, k: usize, excess: f64 },

    #[error("newick parse error at byte {pos}: {msg}")]
    Newick { pos: usize, msg: String },

    #[error("simulation already stopped at s = {0}")]
    Stopped(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
