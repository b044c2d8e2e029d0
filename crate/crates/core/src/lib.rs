//! Phase-space analysis of Schrödinger-type evolutions
//! `(D_t + a^w + i b^w) u = f` on desk-scale grids.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration
//! and the command-line driver live in the `phaseflow` crate.
//!
//! Sign convention used throughout: `D_t = -i d/dt`, so the homogeneous
//! equation reads `du/dt = -i a^w u + b^w u`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bargmann;
pub mod fft;
pub mod hamilton;
pub mod phase;
pub mod phasekernel;
pub mod quantize;
pub mod symclass;
pub mod symbol;

pub use phase::PhasePoint;
pub use symbol::{DerivativeTable, MultiIndex, SymbolError, SymbolExpr};

/// Human-readable statement of the time-derivative convention.
pub const SIGN_CONVENTION: &str = "D_t = -i d/dt; du/dt = -i a^w u + b^w u";
