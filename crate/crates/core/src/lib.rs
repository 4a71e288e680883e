//! Optomechanical interface for spin–magnon coupling.
//!
//! The crate follows a reduction chain: a driven two-cavity optomechanical
//! system is linearized around its classical fixed point, the mechanical mode
//! is eliminated dispersively, the resulting cavity nonlinearities are absorbed
//! into a squeezing frame, the two squeezed modes are diagonalized into lower
//! and upper polaritons, and finally the near-critical lower polariton is
//! eliminated to leave an effective spin–magnon exchange.
//!
//! * [`params`] evaluates every closed-form quantity of the chain.
//! * [`quadratic`] handles the two-mode quadratic form: Bogoliubov maps,
//!   decay-dressed dynamical matrices and stability.
//! * [`fock`] builds each Hamiltonian of the chain on a truncated Fock space.
//! * [`dynamics`] integrates Schrödinger and Lindblad evolution.
//! * [`scenarios`] is the configuration and command layer behind the CLI.

pub mod dynamics;
pub mod fock;
pub mod params;
pub mod quadratic;
pub mod scenarios;

pub use num_complex::Complex64;
