//! Bayes-optimal learning analysis for the two-layer committee machine in the
//! teacher-student scenario.
//!
//! The crate provides:
//! - [`numerics`]: deterministic kernels (special functions, quadrature,
//!   orthant probabilities, PSD-matrix utilities, seeded RNG streams);
//! - [`channels`]: weight priors and output channels with their denoising
//!   functions and auxiliary free entropies;
//! - [`amp`]: the finite-size approximate message passing algorithm with
//!   Onsager corrections, instance generation and generalization evaluation;
//! - [`state_evolution`]: the asymptotic state-evolution recursion, the
//!   replica-symmetric potential, phase-transition locators and
//!   generalization-error formulas;
//! - [`large_k`]: the committee-symmetric large-K limit.

pub mod amp;
pub mod channels;
pub mod config;
pub mod large_k;
pub mod numerics;
pub mod state_evolution;

pub use config::NumericsConfig;
