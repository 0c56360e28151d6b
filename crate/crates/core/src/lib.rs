pub mod cli;
pub mod error;
pub mod hamiltonian;
pub mod integrator;
pub mod matrixkit;
pub mod mfunction;
pub mod problems;
pub mod resolvent;
pub mod timescale;
pub mod weylsims;
