//! Non-unitary quench dynamics of the interacting Hatano-Nelson chain.
//!
//! The crate is organised bottom-up:
//!
//! - [`basis`]: fixed-particle-number Fock spaces and initial states
//! - [`model`]: many-body and single-particle Hamiltonians
//! - [`evolve`]: renormalized Arnoldi/Krylov propagation plus a dense oracle
//! - [`spectral`]: biorthogonal diagonalization and complex-spectrum statistics
//! - [`observables`]: densities, one-particle density matrix, correlations
//! - [`entanglement`]: bipartite entropies of states and eigenstates
//! - [`freefermion`]: Slater-determinant fast path and single-particle analytics
//! - [`theory`]: GGE and quasiparticle-picture curves
//! - [`fitting`]: logarithmic scaling and relaxation-rate fits
//! - [`cli`]: experiment configuration, ensembles and CSV output

pub mod basis;
pub mod cli;
pub mod entanglement;
pub mod error;
pub mod evolve;
pub mod fitting;
pub mod freefermion;
pub mod model;
pub mod observables;
pub mod spectral;
pub mod theory;

mod linalg;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

pub use basis::{build_basis, prepare_density_wave, prepare_mixed_filling, FockBasis, ManyBodyVector};
pub use evolve::{
    arnoldi_step, dense_propagate_oracle, evolve_trajectory, KrylovConfig, RecordSpec, TrajectoryRecord,
};
pub use model::{build_hamiltonian, dispersion, Boundary, ModelParams, SparseHamiltonian};
pub use spectral::{full_spectrum, SpectrumResult};
