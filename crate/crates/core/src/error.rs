use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or vector shapes do not line up with the declared sizes.
    /// Structural, as opposed to a probabilistic violation caught by
    /// [`crate::game::validate_game`].
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A state, action, or wrapped index is outside its valid range.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A hyperparameter violates its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A vector fails the probability-vector invariants.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// Game construction rejected because validation found violations.
    #[error("invalid game:\n{0}")]
    InvalidGame(crate::game::ValidationReport),

    /// No unique invariant distribution could be certified for a kernel.
    #[error("kernel not ergodic: {0}")]
    NotErgodic(String),

    /// A drift evaluation failed while integrating; carries the grid node.
    #[error("drift evaluation failed at node {node}: {source}")]
    DriftEvaluation {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    /// Trajectory and ODE reference do not cover a compatible time grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Too few usable points to fit a convergence rate.
    #[error("rate fit needs at least 3 distinct positive points ({0} usable)")]
    DegenerateRateFit(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
