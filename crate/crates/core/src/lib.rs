//! Counting finite eigenvalues of discrete symplectic eigenvalue problems
//! with Dirichlet endpoints.

pub mod compidx;
pub mod error;
pub mod focal;
pub mod lambdascan;
pub mod matcore;
pub mod osccount;
pub mod selftest;
pub mod symplectic;
pub mod systems;

pub use error::{Error, Result};
pub use matcore::{DenseMat, ToleranceConfig};
