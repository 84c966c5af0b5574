//! Simulation and spectral analysis of random bipartite entanglement
//! generation by repeated two-qubit gates.
//!
//! The protocol: starting from |00...0>, each step draws a qubit pair from a
//! coupling set, applies a fixed two-qubit gate W on it, then fresh Haar
//! random single-qubit rotations on the two active qubits. Ensemble-averaged
//! purity of the symmetric bipartition decays exponentially toward the Haar
//! value; for Clifford W (and for Haar U(4) steps) the average is governed
//! exactly by a Markov chain on Pauli strings whose spectral gap sets the
//! decay time.
//!
//! Modules, bottom up:
//! - [`qsim`]: dense statevector with gate application and Haar sampling
//! - [`gatelib`]: canonical two-qubit gates, symmetry reduction, Clifford
//!   conjugation tables
//! - [`entmeas`]: purity, entropy, Schmidt spectra, random-state references
//! - [`paulichain`]: the Pauli-string Markov chain, full 4^n and lumped 2^n
//! - [`spectral`]: dense and matrix-free eigenvalue extraction, gaps,
//!   degeneracy profiles
//! - [`protocol`]: Monte Carlo replica ensembles of the protocol
//! - [`analysis`]: decay-rate fits, gate-landscape sweeps, convergence
//!   diagnostics
//! - [`cli`]: command-line front end with reproducible run manifests

pub mod analysis;
pub mod cli;
pub mod entmeas;
pub mod error;
pub mod gatelib;
pub mod paulichain;
pub mod protocol;
pub mod qsim;
pub mod spectral;

pub use error::Error;

/// Shorthand used throughout.
pub type Result<T> = std::result::Result<T, Error>;
