//! Truncated chaotic Fock-space calculus for discrete-time normal martingales.
//!
//! The canonical basis `{Z_σ}` of square integrable functionals is indexed by
//! finite subsets `σ` of ℕ. Truncating to subsets of `{0, ..., n-1}` gives a
//! `2^n`-dimensional model in which annihilation/creation operators, weighted
//! number operators and their commutation relations become finite matrices
//! that can be checked exactly.

pub mod basis;
pub mod error;
pub mod functional;
pub mod martingale;
pub mod matrix;
pub mod operators;
pub mod qms;
pub mod report;
pub mod tolerance;
pub mod verify;
pub mod weights;

pub use basis::{enumerate_basis, Subset, TruncationLevel};
pub use error::{Error, Result};
pub use functional::{pair, riesz_embed, Functional, GrowthBound};
pub use matrix::MatrixOp;
pub use operators::{ExprSpec, OperatorExpr};
pub use report::{CheckResult, VerificationReport};
pub use tolerance::Tolerance;
pub use weights::{Weight1D, Weight2D, WeightSpec};
