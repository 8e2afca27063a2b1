//! Variational Monte Carlo for finite-temperature spin systems.
//!
//! Thermal states are approximated by minimizing the second-Rényi free energy
//!
//! ```text
//! F_R(ρ) = β_R tr(Hρ)/tr ρ + log( tr ρ² / (tr ρ)² )
//! ```
//!
//! over purification-based density-matrix ansätze: matrix product density
//! operators ([`ansatz::Mpdo`]), entangled plaquette density operators
//! ([`ansatz::Epdo`]), string-bond density operators ([`ansatz::Sbdo`]) and
//! restricted Boltzmann machine purifications ([`ansatz::Rbm`]). Every ansatz
//! is Hermitian and positive semidefinite by construction.
//!
//! The crate is organized bottom-up:
//!
//! - [`lattice`]: geometries, the transverse-field Ising Hamiltonian and local
//!   observables, all exposed through sparse connected elements.
//! - [`ansatz`]: unnormalized log ρ_ss′ and analytic log-derivatives.
//! - [`sampler`]: Metropolis-Hastings chains over diag ρ and |ρ_ss′|², plus an
//!   exhaustive sampler for tests.
//! - [`estimator`]: energy, purity, observables, free-energy gradient and Gram
//!   matrix.
//! - [`optimizer`]: SGD, Adam and stochastic reconfiguration.
//! - [`oracle`]: exact diagonalization references (Gibbs and Rényi ensembles).
//! - [`runner`]: configuration files, record streams and the CLI operations.

pub mod ansatz;
pub mod error;
pub mod estimator;
pub mod lattice;
pub mod optimizer;
pub mod oracle;
pub mod runner;
pub mod sampler;

pub(crate) mod par;

pub use error::{Error, Result};

/// A spin configuration: entries are `+1` or `-1`, one per site.
pub type SpinConfiguration = Vec<i8>;

pub use num_complex::Complex64 as C64;
