//! Littlewood–Paley calculus, variable-coefficient Stokes solvers and the
//! Lagrangian fixed point for the inhomogeneous incompressible
//! Navier–Stokes system with density-dependent viscosity, on a periodic box.

pub mod besov;
pub mod bony;
pub mod cli;
pub mod elliptic;
pub mod error;
pub mod lagrange;
pub mod ns_solver;
pub mod stokes;
pub mod report;
pub mod spectral;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/besov.md")]
    mod besov {}
    #[doc = include_str!("../../../book/src/bony.md")]
    mod bony {}
    #[doc = include_str!("../../../book/src/elliptic.md")]
    mod elliptic {}
    #[doc = include_str!("../../../book/src/stokes.md")]
    mod stokes {}
    #[doc = include_str!("../../../book/src/lagrange.md")]
    mod lagrange {}
    #[doc = include_str!("../../../book/src/navier_stokes.md")]
    mod navier_stokes {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
