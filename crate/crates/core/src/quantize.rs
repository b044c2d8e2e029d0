//! Weyl quantization on the position grid and Crank–Nicolson propagation of
//! `du/dt = -i a^w u + b^w u`.
//!
//! The kernel `(2 pi)^{-1} int exp(i (x-y) xi) q((x+y)/2, xi) dxi` is sampled on
//! the band `|xi| <= pi/dx` resolved by the grid, with `nx + 1` trapezoid
//! nodes of spacing `pi/L`. On that band the quantization of `1` is the
//! identity matrix, that of `x` is diagonal multiplication, and that of a
//! function of `xi` is the exact discrete Fourier multiplier.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::bargmann::{BargmannError, GridSpec, Signal, EDGE_FAIL};
use crate::fft::FftPlan;
use crate::symbol::{SymbolError, SymbolExpr};

/// Pre-symmetrization defect above which assembly reports a warning.
pub const SYMMETRY_WARN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantizeError {
    #[error("symbol must be one-dimensional, got dimension {0}")]
    Dimension(usize),
    #[error("symbol evaluation at t = {t}, x = {x}, xi = {xi}: {source}")]
    Symbol {
        t: f64,
        x: f64,
        xi: f64,
        #[source]
        source: SymbolError,
    },
    #[error(transparent)]
    Grid(#[from] BargmannError),
    #[error("step matrix is singular at step {step} (t = {time})")]
    SolveFailure { step: usize, time: f64 },
    #[error("step count must be at least 1")]
    InvalidSteps,
    #[error("solution reached the window edge at t = {time} (edge/peak {ratio:e})")]
    BoundaryMass { time: f64, ratio: f64 },
    #[error("operands live on different grids")]
    GridMismatch,
}

/// Dense operator on grid samples: `(A u)_j = sum_k entries[(j, k)] u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    grid: GridSpec,
    entries: DMatrix<Complex64>,
    /// `||A - A^H|| / ||A||` (Frobenius) before symmetrization.
    symmetry_defect: f64,
}

impl OperatorMatrix {
    pub fn identity(grid: GridSpec) -> Self {
        Self { grid, entries: DMatrix::identity(grid.nx(), grid.nx()), symmetry_defect: 0.0 }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn symmetry_defect(&self) -> f64 {
        self.symmetry_defect
    }

    pub fn needs_symmetry_warning(&self) -> bool {
        self.symmetry_defect > SYMMETRY_WARN
    }

    /// `||A - A^H||_F / ||A||_F`, zero for the zero matrix.
    pub fn hermitian_defect(&self) -> f64 {
        hermitian_defect(&self.entries)
    }

    pub fn apply(&self, u: &Signal) -> Result<Signal, QuantizeError> {
        if *u.grid() != self.grid {
            return Err(QuantizeError::GridMismatch);
        }
        let v = &self.entries * DVector::from_column_slice(u.values());
        Ok(Signal::new(self.grid, v.as_slice().to_vec())?)
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: Complex64, other: &OperatorMatrix) -> Result<Self, QuantizeError> {
        if self.grid != other.grid {
            return Err(QuantizeError::GridMismatch);
        }
        let entries = &self.entries + &other.entries * c;
        Ok(Self { grid: self.grid, symmetry_defect: self.symmetry_defect.max(other.symmetry_defect), entries })
    }
}

fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / norm
}

/// Weyl quantization of the real symbol `q(t, ., .)` on the position grid,
/// symmetrized to be exactly Hermitian.
pub fn weyl_matrix(q: &SymbolExpr, t: f64, grid: GridSpec) -> Result<OperatorMatrix, QuantizeError> {
    if q.dim() != 1 {
        return Err(QuantizeError::Dimension(q.dim()));
    }
    let n = grid.nx();
    let dx = grid.dx();
    let dxi = 2.0 * PI / (n as f64 * dx);
    let plan = FftPlan::new(n);
    let mut entries = DMatrix::<Complex64>::zeros(n, n);
    let mut samples = vec![0.0; n + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = Vec::new();
    let constant = q.as_constant();
    for s in 0..(2 * n - 1) {
        let mid = -grid.half_width() + 0.5 * s as f64 * dx;
        if let Some(c) = constant {
            samples.iter_mut().for_each(|v| *v = c);
        } else {
            for (m, v) in samples.iter_mut().enumerate() {
                let xi = (m as f64 - 0.5 * n as f64) * dxi;
                *v = q
                    .eval_with(t, &[mid], &[xi], &mut scratch)
                    .map_err(|source| QuantizeError::Symbol { t, x: mid, xi, source })?;
            }
        }
        buf[0] = Complex64::new(0.5 * (samples[0] + samples[n]), 0.0);
        for m in 1..n {
            buf[m] = Complex64::new(samples[m], 0.0);
        }
        // sum_m w_m q_m exp(2 pi i d m / n) / n at d mod n
        plan.inverse(&mut buf);
        let (lo, hi) = if s < n { (0, s) } else { (s + 1 - n, n - 1) };
        for j in lo..=hi {
            let k = s - j;
            let d = j as i64 - k as i64;
            let v = buf[d.rem_euclid(n as i64) as usize];
            entries[(j, k)] = if d % 2 == 0 { v } else { -v };
        }
    }
    let symmetry_defect = hermitian_defect(&entries);
    let adjoint = entries.adjoint();
    entries = (entries + adjoint) * Complex64::new(0.5, 0.0);
    Ok(OperatorMatrix { grid, entries, symmetry_defect })
}

/// States of a propagation run and their norms.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorTrace {
    pub times: Vec<f64>,
    pub states: Vec<Signal>,
    pub norms: Vec<f64>,
    /// Largest pre-symmetrization defect among the assembled operators.
    pub symmetry_defect: f64,
}

impl PropagatorTrace {
    pub fn last(&self) -> &Signal {
        self.states.last().expect("a trace holds at least the initial state")
    }

    /// `max_k | ||u_k|| - ||u_0|| | / ||u_0||`.
    pub fn norm_drift(&self) -> f64 {
        let n0 = self.norms[0];
        self.norms.iter().map(|n| libm::fabs(n - n0)).fold(0.0, f64::max) / n0
    }
}

/// `i a^w - b^w` at time `t`.
fn generator(a: &SymbolExpr, b: Option<&SymbolExpr>, t: f64, grid: GridSpec) -> Result<(DMatrix<Complex64>, f64), QuantizeError> {
    let aw = weyl_matrix(a, t, grid)?;
    let mut defect = aw.symmetry_defect;
    let mut g = aw.entries * Complex64::new(0.0, 1.0);
    if let Some(b) = b {
        let bw = weyl_matrix(b, t, grid)?;
        defect = defect.max(bw.symmetry_defect);
        g -= bw.entries;
    }
    Ok((g, defect))
}

/// Crank–Nicolson from `u0` at time `s` to `t_end` in `nsteps` equal steps:
/// `(I + dt/2 G) u_{k+1} = (I - dt/2 G) u_k` with `G = i a^w - b^w`.
/// Operators are rebuilt at each step midpoint when a symbol depends on time,
/// otherwise the step matrix is factored once.
pub fn propagate(
    a: &SymbolExpr,
    b: Option<&SymbolExpr>,
    u0: &Signal,
    s: f64,
    t_end: f64,
    nsteps: usize,
) -> Result<PropagatorTrace, QuantizeError> {
    if nsteps == 0 {
        return Err(QuantizeError::InvalidSteps);
    }
    for sym in core::iter::once(a).chain(b) {
        if sym.dim() != 1 {
            return Err(QuantizeError::Dimension(sym.dim()));
        }
    }
    let grid = *u0.grid();
    let n = grid.nx();
    let dt = (t_end - s) / nsteps as f64;
    let half = Complex64::new(0.5 * dt, 0.0);
    let time_dependent = a.depends_on_time() || b.is_some_and(|b| b.depends_on_time());
    let identity = DMatrix::<Complex64>::identity(n, n);

    let build = |t: f64| -> Result<_, QuantizeError> {
        let (g, defect) = generator(a, b, t, grid)?;
        let lhs = (&identity + &g * half).lu();
        let rhs = &identity - &g * half;
        Ok((lhs, rhs, defect))
    };

    let mut times = Vec::with_capacity(nsteps + 1);
    let mut states = Vec::with_capacity(nsteps + 1);
    let mut norms = Vec::with_capacity(nsteps + 1);
    times.push(s);
    norms.push(u0.norm());
    states.push(u0.clone());

    let mut fixed = if time_dependent { None } else { Some(build(s)?) };
    let mut symmetry_defect = fixed.as_ref().map_or(0.0, |f| f.2);
    let mut u = DVector::from_column_slice(u0.values());
    for k in 0..nsteps {
        let t0 = s + k as f64 * dt;
        let t1 = if k + 1 == nsteps { t_end } else { s + (k + 1) as f64 * dt };
        let rebuilt;
        let (lhs, rhs) = match &mut fixed {
            Some((lhs, rhs, _)) => (&*lhs, &*rhs),
            None => {
                rebuilt = build(t0 + 0.5 * dt)?;
                symmetry_defect = symmetry_defect.max(rebuilt.2);
                (&rebuilt.0, &rebuilt.1)
            }
        };
        let next = lhs.solve(&(rhs * &u)).ok_or(QuantizeError::SolveFailure { step: k, time: t0 })?;
        if next.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(QuantizeError::SolveFailure { step: k, time: t0 });
        }
        u = next;
        let state = Signal::new(grid, u.as_slice().to_vec())?;
        let ratio = state.edge_ratio();
        if ratio > EDGE_FAIL {
            return Err(QuantizeError::BoundaryMass { time: t1, ratio });
        }
        times.push(t1);
        norms.push(state.norm());
        states.push(state);
    }
    Ok(PropagatorTrace { times, states, norms, symmetry_defect })
}
