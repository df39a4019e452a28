//! Error type shared by all simulation modules.

use thiserror::Error;

/// Errors reported by the simulation and reconstruction routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A caller-supplied argument violated a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Probabilities do not form a valid distribution.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// The rate matrix kernel is not one-dimensional.
    #[error("no unique steady state for the given transition rates")]
    DegenerateSteadyState,

    /// Population inversion: a Boltzmann fit has no positive temperature.
    #[error("no positive temperature: populations are not decreasing with level")]
    NoPositiveTemperature,

    /// Postselection removed every shot.
    #[error("postselection kept no shots")]
    EmptySelection,

    /// A matrix failed the density-matrix validity checks.
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    /// Tomography settings do not span the full operator space.
    #[error("tomography design matrix is rank deficient (rank {rank}, need 16)")]
    RankDeficient { rank: usize },

    /// Requested integration window lies outside the computed trajectory.
    #[error("window [{lo}, {hi}] us is outside the trajectory span [0, {span}] us")]
    WindowOutOfRange { lo: f64, hi: f64, span: f64 },

    /// A coherence-factor map is missing a required state pair.
    #[error("coherence factors missing entry for state pair ({0}, {1})")]
    MissingFactor(usize, usize),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
