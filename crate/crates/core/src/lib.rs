//! Simulation of digital feedback control on dispersively measured
//! superconducting qubits.
//!
//! The crate covers the full loop studied in feedback experiments on 3D
//! transmons:
//!
//! - [`qubit_dynamics`] — classical three-level rate equations, steady states,
//!   effective temperatures, π pulses.
//! - [`readout`] — single-shot homodyne voltage generation, thresholding,
//!   contrast analysis, postselection, and repeatability statistics.
//! - [`feedback`] — latency-aware reset loops (measure → compare → conditional
//!   π pulse), analytic error budgets, and repeated-initialization sweeps.
//! - [`cavity`] — dispersive-cavity pointer states for a two-qubit parity
//!   meter, homodyne signal statistics, and measurement-induced dephasing.
//! - [`entangle`] — two-qubit density matrices, the parity-measurement
//!   channel, probabilistic and feedback-based entanglement, and entanglement
//!   metrics (concurrence, logarithmic negativity, ebit efficiency).
//! - [`tomography`] — joint-readout tomography with linear inversion and
//!   PSD-constrained maximum-likelihood reconstruction.
//!
//! All numerics are generic over the [`Real`] scalar (`f32` or `f64`);
//! concrete `f64` aliases for the main types are exported at the crate root.
//! Monte-Carlo entry points take a master seed and derive one counter-based
//! RNG stream per shot ([`rng`]), so results are independent of thread count
//! and scheduling.
//!
//! Conventions used throughout:
//!
//! - Times are in µs, rates in 1/µs, frequencies in MHz (ordinary frequency,
//!   i.e. ω/2π) unless a field says otherwise.
//! - Two-qubit basis states are ordered {|00⟩, |01⟩, |10⟩, |11⟩} with the
//!   *left* index the state of qubit B and the *right* index qubit A.
//! - The Bell state Φ⁺ denotes the odd combination (|01⟩+|10⟩)/√2 and Ψ⁺ the
//!   even combination (|00⟩+|11⟩)/√2.

pub mod cavity;
pub mod entangle;
pub mod error;
pub mod feedback;
pub mod qubit_dynamics;
pub mod readout;
pub mod rng;
pub mod scalar;
#[doc(hidden)]
pub mod testutil;
pub mod tomography;

pub use error::{Error, Result};
pub use scalar::Real;

/// f64 level populations.
pub type Populations = qubit_dynamics::LevelPopulations<f64>;
/// f64 transition rates.
pub type Rates = qubit_dynamics::TransitionRates<f64>;
/// f64 shot model.
pub type ShotModel64 = readout::ShotModel<f64>;
/// f64 readout error model.
pub type ReadoutErrors = readout::ReadoutErrorModel<f64>;
/// f64 loop timing.
pub type Timing = feedback::LoopTiming<f64>;
/// f64 cavity configuration.
pub type Cavity = cavity::CavityConfig<f64>;
/// f64 two-qubit density matrix.
pub type DensityMatrix = entangle::TwoQubitDensityMatrix<f64>;
/// f64 coherence factors.
pub type Factors = cavity::CoherenceFactors<f64>;
/// f64 integrated-signal statistics.
pub type Stats = cavity::SignalStats<f64>;
