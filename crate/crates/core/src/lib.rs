//! Sketched Krylov subspace methods.
//!
//! This crate implements randomized subspace projection solvers: a sketched
//! GMRES variant for linear systems (`sgmres`) and a sketched Rayleigh-Ritz
//! eigensolver (`srr`), together with the pieces they are built from — dense
//! factorization kernels (`kernels`), randomized subspace embeddings
//! (`sketch`), matrix-free operators and problem generators (`operators`),
//! and fast non-orthogonal Krylov basis constructions (`basis`). Classical
//! GMRES and Rayleigh-Ritz baselines are included for comparison.

pub mod basis;
pub mod kernels;
pub mod operators;
pub mod sgmres;
pub mod sketch;
pub mod srr;
pub mod testing;

pub use kernels::DenseMatrix;
