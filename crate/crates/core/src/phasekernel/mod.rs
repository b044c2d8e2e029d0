//! Phase-space kernels of `T S(t,s) T*` and `T q^w T*`, the transport
//! equation along bicharacteristics, and the estimates built on them.

mod eop;
mod fit;
mod ftc;
mod kq;
mod slice;
mod transport;

use alloc::string::String;

use crate::bargmann::BargmannError;
use crate::hamilton::FlowError;
use crate::quantize::QuantizeError;
use crate::symbol::SymbolError;

pub use eop::{e_operator_bound, EOperatorBound, EOperatorOptions, FieldHistory, SeedEstimate};
pub use fit::{decay_fit, decay_fit_field, DecayFit, FitOptions};
pub use ftc::{ftc_lemma_ratio, FtcQuad, FtcRatio, CRITICAL_TOL};
pub use kq::{kq_kernel, kq_kernel_at, linearization_residual, zeroth_order_residual, KqQuad, KQ_CONSTANT};
pub use slice::{phase_kernel_slice, KernelSlice, SliceOptions};
pub use transport::{transport_solve, TransportPath, TransportSolution};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error(transparent)]
    Transform(#[from] BargmannError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error("{what} ({x}, {xi}) is outside the grid window less a margin of {margin}")]
    OutOfWindow { what: &'static str, x: f64, xi: f64, margin: f64 },
    #[error("decay fit needs {min_samples} samples over one decade of 1+d; found {samples} samples over {decades:.3} decades")]
    InsufficientDecadeRange { samples: usize, min_samples: usize, decades: f64 },
    #[error("quadrature window of {widths} Gaussian widths leaves edge weight {edge:e}")]
    WindowTooSmall { widths: f64, edge: f64 },
    #[error("base point is not critical: |q(0)| = {value:e}, |grad q(0)| = {gradient:e}")]
    BasePointNotCritical { value: f64, gradient: f64 },
    #[error("dimension {0} is not supported here")]
    UnsupportedDimension(usize),
    #[error("missing constant: {0}")]
    MissingConstant(String),
    #[error("invalid options: {0}")]
    InvalidOptions(&'static str),
    #[error("{0} must depend on position only")]
    NotPositionOnly(&'static str),
}

#[cfg(test)]
mod tests;
