//! Magnetic fractional Orlicz-Sobolev modulars on uniform grids: the
//! spherical limit `G̃`, nonlocal and local energies, their `s → 1` limits,
//! convex Dirichlet problems and inequality checks.

pub mod cli;
pub mod error;
pub mod fields;
pub mod lab;
pub mod limits;
pub mod modulars;
pub mod nonlocal;
pub mod orlicz;
pub mod quadrature;
pub mod selftest;
pub mod solver;

pub use error::{Error, Result};
