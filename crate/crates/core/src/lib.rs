//! Symbolic variational calculus and structure-preserving numerics for
//! port-Hamiltonian systems of first-order field theories.

pub mod expr;
pub mod variational;
pub mod phs;
pub mod dsl;
pub mod discrete;
pub mod report;
