//! Real-space first-quantised molecular Hamiltonians on molecule-adaptive
//! grids.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! * [`molgrid`] builds multicenter Becke/Lebedev/Gauss-Legendre grids,
//! * [`voronoi`] tessellates them into bounded Voronoi cells,
//! * [`fvops`] turns the cells into finite-volume Laplacian, gradient and
//!   Coulomb operators,
//! * [`transcorrelated`] adds the Jastrow similarity-transformed blocks,
//! * [`hamiltonian`] applies the many-electron operator matrix-free,
//! * [`eigensolve`] finds ground states (dense and Davidson),
//! * [`lcu`] computes Pauli-LCU coefficient tables and one-norms,
//! * [`qcpe`] simulates Chebyshev-history-state eigenvalue estimation.

pub mod eigensolve;
pub mod error;
pub mod fvops;
pub mod hamiltonian;
pub mod lcu;
pub mod molgrid;
pub mod qcpe;
pub mod sparse;
pub mod transcorrelated;
pub mod vec3;
pub mod voronoi;

pub use error::{Error, Result};

/// One bohr expressed in ångström is the inverse of this factor.
pub const ANGSTROM_TO_BOHR: f64 = 1.8897261254578281;
