//! Exact symbolic calculus for ordinary differential operators inside a
//! completed graded operator ring that also contains integration, evaluation
//! and shift operators.
//!
//! The crate computes, over exact cyclotomic arithmetic:
//!
//! * homogeneous canonical polynomial (HCP) forms of operators and their ring
//!   arithmetic ([`hcpc`]),
//! * Schur conjugating operators `S` with `S^-1 Q S = d^q` for normalized
//!   differential operators `Q` ([`schur`]),
//! * normal forms `P' = S^-1 P S` of commuting pairs, their normalization and
//!   coordinates ([`normalform`]),
//! * vector and matrix realizations of centralizer elements and the
//!   characteristic (spectral-curve) polynomial `det(psi(P') - lambda)`
//!   ([`ek`]),
//! * a small expression language and CLI on top ([`expr`], [`cli`]).

pub mod ek;
pub mod hcpc;
pub mod normalform;
pub mod opcore;
pub mod schur;
pub mod scalar;

pub use scalar::{CycScalar, CycVector, Rat};
