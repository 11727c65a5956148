//! Independent oracles for mrforge: a quadrature Student-t, naive reference
//! warps, a finite-difference gradient check and a substitution-protocol
//! checker. Used by this crate's tests and the acceptance run.

pub mod gradient;
pub mod protocol;
pub mod quadrature;
pub mod warp;
