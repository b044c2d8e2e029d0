//! One-dimensional Bargmann transform on uniform grids.
//!
//! ```text
//! (Tf)(x, xi) = c * int exp(-(x-y)^2/2) exp(i xi (x-y)) f(y) dy,   c = 2^{-1/2} pi^{-3/4}
//! (T*v)(y)    = c * int exp(-(x-y)^2/2) exp(i xi (y-x)) v(x, xi) dx dxi
//! ```
//!
//! Integrals use the trapezoid rule on periodic grids `x_j = -L + j dx`,
//! `xi_m = -Xi + m dxi`; for integrands that vanish at the window edges this
//! is the plain Riemann sum.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::fft::{cis, spectral_derivative, FftPlan};

/// `2^{-1/2} pi^{-3/4}`.
pub fn transform_constant() -> f64 {
    libm::pow(2.0, -0.5) * libm::pow(PI, -0.75)
}

/// Edge-to-peak ratio above which a transform input is reported.
pub const EDGE_WARN: f64 = 1e-12;
/// Edge-to-peak ratio above which the frequency edge of a field is reported.
pub const FREQUENCY_EDGE_WARN: f64 = 1e-10;
/// Edge-to-peak ratio that fails an operation.
pub const EDGE_FAIL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BargmannError {
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("{edge} edge holds {ratio:e} of the peak modulus (limit {limit:e})")]
    BoundaryMass { edge: Edge, ratio: f64, limit: f64 },
    #[error("center ({y}, {eta}) is within {margin} of the window edge")]
    OutOfWindow { y: f64, eta: f64, margin: f64 },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("expected {expected} samples, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("operands live on different grids")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Position,
    Frequency,
}

impl core::fmt::Display for Edge {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Edge::Position => "position",
            Edge::Frequency => "frequency",
        })
    }
}

/// How an edge ratio compares with the warning and failure levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeStatus {
    Clean,
    Warn,
    Fail,
}

pub fn edge_status(ratio: f64, warn: f64) -> EdgeStatus {
    if ratio > EDGE_FAIL {
        EdgeStatus::Fail
    } else if ratio > warn {
        EdgeStatus::Warn
    } else {
        EdgeStatus::Clean
    }
}

/// Uniform phase-space grid: `nx` points on `[-L, L)` and `nxi` on `[-Xi, Xi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    half_width: f64,
    nx: usize,
    xi_half_width: f64,
    nxi: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { half_width: 12.0, nx: 256, xi_half_width: 12.0, nxi: 256 }
    }
}

impl GridSpec {
    pub fn new(half_width: f64, nx: usize, xi_half_width: f64, nxi: usize) -> Result<Self, BargmannError> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(BargmannError::InvalidGrid("position half-width must be positive"));
        }
        if !(xi_half_width.is_finite() && xi_half_width > 0.0) {
            return Err(BargmannError::InvalidGrid("frequency half-width must be positive"));
        }
        if nx < 8 || nxi < 8 {
            return Err(BargmannError::InvalidGrid("grid sizes must be at least 8"));
        }
        if !nx.is_power_of_two() {
            return Err(BargmannError::InvalidGrid("position grid size must be a power of two"));
        }
        Ok(Self { half_width, nx, xi_half_width, nxi })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn xi_half_width(&self) -> f64 {
        self.xi_half_width
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nxi(&self) -> usize {
        self.nxi
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.nx as f64
    }

    pub fn dxi(&self) -> f64 {
        2.0 * self.xi_half_width / self.nxi as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    pub fn xi(&self, m: usize) -> f64 {
        -self.xi_half_width + m as f64 * self.dxi()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|j| self.x(j)).collect()
    }

    pub fn xis(&self) -> Vec<f64> {
        (0..self.nxi).map(|m| self.xi(m)).collect()
    }
}

fn check_finite(values: &[Complex64]) -> Result<(), BargmannError> {
    match values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
        Some(i) => Err(BargmannError::NonFinite(i)),
        None => Ok(()),
    }
}

fn peak(values: &[Complex64]) -> f64 {
    values.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Samples of a function on the position grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl Signal {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self, BargmannError> {
        if values.len() != grid.nx {
            return Err(BargmannError::LengthMismatch { expected: grid.nx, found: values.len() });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.nx] }
    }

    /// Samples `f(x_j)`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> Complex64) -> Result<Self, BargmannError> {
        Self::new(grid, grid.xs().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn inner(&self, other: &Signal) -> Complex64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.grid.dx()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dx())
    }

    /// `||self - other|| / ||other||`, or the absolute norm when `other` vanishes.
    pub fn relative_error(&self, other: &Signal) -> f64 {
        let diff: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        let base: f64 = other.values.iter().map(|v| v.norm_sqr()).sum();
        if base == 0.0 {
            libm::sqrt(diff * self.grid.dx())
        } else {
            libm::sqrt(diff / base)
        }
    }

    /// Largest modulus at the two outermost samples over the peak modulus.
    pub fn edge_ratio(&self) -> f64 {
        let p = peak(&self.values);
        if p == 0.0 {
            return 0.0;
        }
        self.values[0].norm().max(self.values[self.grid.nx - 1].norm()) / p
    }

    pub fn check_edges(&self) -> Result<EdgeStatus, BargmannError> {
        let ratio = self.edge_ratio();
        match edge_status(ratio, EDGE_WARN) {
            EdgeStatus::Fail => Err(BargmannError::BoundaryMass { edge: Edge::Position, ratio, limit: EDGE_FAIL }),
            s => Ok(s),
        }
    }
}

/// Samples of a phase-space function, row-major in position: index `j * nxi + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl PhaseField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self, BargmannError> {
        let n = grid.nx * grid.nxi;
        if values.len() != n {
            return Err(BargmannError::LengthMismatch { expected: n, found: values.len() });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.nx * grid.nxi] }
    }

    /// Samples `f(x_j, xi_m)`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> Complex64) -> Result<Self, BargmannError> {
        let mut values = Vec::with_capacity(grid.nx * grid.nxi);
        for j in 0..grid.nx {
            for m in 0..grid.nxi {
                values.push(f(grid.x(j), grid.xi(m)));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, j: usize, m: usize) -> Complex64 {
        self.values[j * self.grid.nxi + m]
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dx() * self.grid.dxi())
    }

    pub fn sup_norm(&self) -> f64 {
        peak(&self.values)
    }

    /// Grid point of largest modulus as `(j, m)`.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0.0);
        for (i, v) in self.values.iter().enumerate() {
            let n = v.norm();
            if n > best.1 {
                best = (i, n);
            }
        }
        (best.0 / self.grid.nxi, best.0 % self.grid.nxi)
    }

    /// Edge-to-peak ratios `(position edge, frequency edge)`.
    pub fn edge_ratios(&self) -> (f64, f64) {
        let p = self.sup_norm();
        if p == 0.0 {
            return (0.0, 0.0);
        }
        let (nx, nxi) = (self.grid.nx, self.grid.nxi);
        let mut pos: f64 = 0.0;
        for m in 0..nxi {
            pos = pos.max(self.get(0, m).norm()).max(self.get(nx - 1, m).norm());
        }
        let mut freq: f64 = 0.0;
        for j in 0..nx {
            freq = freq.max(self.get(j, 0).norm()).max(self.get(j, nxi - 1).norm());
        }
        (pos / p, freq / p)
    }

    pub fn check_edges(&self) -> Result<EdgeStatus, BargmannError> {
        let (pos, freq) = self.edge_ratios();
        if pos > EDGE_FAIL {
            return Err(BargmannError::BoundaryMass { edge: Edge::Position, ratio: pos, limit: EDGE_FAIL });
        }
        if freq > EDGE_FAIL {
            return Err(BargmannError::BoundaryMass { edge: Edge::Frequency, ratio: freq, limit: EDGE_FAIL });
        }
        Ok(match (edge_status(pos, EDGE_WARN), edge_status(freq, FREQUENCY_EDGE_WARN)) {
            (EdgeStatus::Clean, EdgeStatus::Clean) => EdgeStatus::Clean,
            _ => EdgeStatus::Warn,
        })
    }
}

/// Quadrature strategy for the transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    Direct,
    #[default]
    Fft,
}

fn gaussian(d: f64) -> f64 {
    libm::exp(-0.5 * d * d)
}

/// Linear convolution `out[j] = sum_k g(j - k) f[k]` for `j, k < n` via a
/// zero-padded FFT of length `2n`. `kernel[d + n - 1]` holds `g(d)`.
struct Convolver {
    n: usize,
    plan: FftPlan,
}

impl Convolver {
    fn new(n: usize) -> Self {
        Self { n, plan: FftPlan::new(2 * n) }
    }

    fn kernel_spectrum(&self, g: impl Fn(i64) -> Complex64) -> Vec<Complex64> {
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
        for d in 0..n {
            buf[d] = g(d as i64);
        }
        for d in 1..n {
            buf[2 * n - d] = g(-(d as i64));
        }
        self.plan.forward(&mut buf);
        buf
    }

    fn apply(&self, spectrum: &[Complex64], f: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
        buf[..n].copy_from_slice(f);
        self.plan.forward(&mut buf);
        for (b, s) in buf.iter_mut().zip(spectrum) {
            *b *= s;
        }
        self.plan.inverse(&mut buf);
        out.copy_from_slice(&buf[..n]);
    }
}

/// Forward transform without the edge check.
pub fn forward_unchecked(f: &Signal, method: Method) -> PhaseField {
    let g = f.grid;
    let (nx, nxi, dx) = (g.nx, g.nxi, g.dx());
    let c = transform_constant() * dx;
    let mut out = vec![Complex64::new(0.0, 0.0); nx * nxi];
    match method {
        Method::Direct => {
            for j in 0..nx {
                for m in 0..nxi {
                    let xi = g.xi(m);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (k, fk) in f.values.iter().enumerate() {
                        let d = (j as f64 - k as f64) * dx;
                        acc += cis(xi * d) * gaussian(d) * fk;
                    }
                    out[j * nxi + m] = acc * c;
                }
            }
        }
        Method::Fft => {
            let conv = Convolver::new(nx);
            let mut row = vec![Complex64::new(0.0, 0.0); nx];
            for m in 0..nxi {
                let xi = g.xi(m);
                let spectrum = conv.kernel_spectrum(|d| {
                    let d = d as f64 * dx;
                    cis(xi * d) * gaussian(d)
                });
                conv.apply(&spectrum, &f.values, &mut row);
                for j in 0..nx {
                    out[j * nxi + m] = row[j] * c;
                }
            }
        }
    }
    PhaseField { grid: g, values: out }
}

/// `Tf` on the grid; fails when the input carries mass at the window edge.
pub fn forward(f: &Signal, method: Method) -> Result<PhaseField, BargmannError> {
    f.check_edges()?;
    Ok(forward_unchecked(f, method))
}

/// `(Tf)(x, xi)` at a single, not necessarily grid, point.
pub fn forward_at(f: &Signal, x: f64, xi: f64) -> Complex64 {
    let g = f.grid;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, fk) in f.values.iter().enumerate() {
        let d = x - g.x(k);
        acc += cis(xi * d) * gaussian(d) * fk;
    }
    acc * transform_constant() * g.dx()
}

/// Adjoint transform without the edge check.
pub fn inverse_unchecked(v: &PhaseField, method: Method) -> Signal {
    let g = v.grid;
    let (nx, nxi, dx, dxi) = (g.nx, g.nxi, g.dx(), g.dxi());
    let c = transform_constant() * dx * dxi;
    let mut out = vec![Complex64::new(0.0, 0.0); nx];
    match method {
        Method::Direct => {
            for (k, o) in out.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..nx {
                    let d = (k as f64 - j as f64) * dx;
                    let w = gaussian(d);
                    for m in 0..nxi {
                        acc += cis(g.xi(m) * d) * w * v.get(j, m);
                    }
                }
                *o = acc * c;
            }
        }
        Method::Fft => {
            let conv = Convolver::new(nx);
            let mut column = vec![Complex64::new(0.0, 0.0); nx];
            let mut row = vec![Complex64::new(0.0, 0.0); nx];
            for m in 0..nxi {
                let xi = g.xi(m);
                for (j, col) in column.iter_mut().enumerate() {
                    *col = v.get(j, m);
                }
                let spectrum = conv.kernel_spectrum(|d| {
                    let d = d as f64 * dx;
                    cis(xi * d) * gaussian(d)
                });
                conv.apply(&spectrum, &column, &mut row);
                for (o, r) in out.iter_mut().zip(&row) {
                    *o += r;
                }
            }
            for o in out.iter_mut() {
                *o *= c;
            }
        }
    }
    Signal { grid: g, values: out }
}

/// `T*v` on the grid; fails when the field carries mass at a window edge.
pub fn inverse(v: &PhaseField, method: Method) -> Result<Signal, BargmannError> {
    v.check_edges()?;
    Ok(inverse_unchecked(v, method))
}

/// Residual of `i d_xi v = (d_x - i xi) v`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrResidual {
    pub field: PhaseField,
    pub sup_norm: f64,
    /// Residual norm over the norm of `v`; infinite when `v` vanishes but the residual does not.
    pub rel_norm: f64,
}

/// `i d_xi v - (d_x - i xi) v` with de-aliased spectral derivatives in both variables.
pub fn cr_residual(v: &PhaseField) -> CrResidual {
    let g = v.grid;
    let (nx, nxi) = (g.nx, g.nxi);
    let mut d_x = v.values.clone();
    let plan_x = FftPlan::new(nx);
    let mut column = vec![Complex64::new(0.0, 0.0); nx];
    for m in 0..nxi {
        for j in 0..nx {
            column[j] = v.get(j, m);
        }
        spectral_derivative(&plan_x, &mut column, g.dx());
        for j in 0..nx {
            d_x[j * nxi + m] = column[j];
        }
    }
    let plan_xi = FftPlan::new(nxi);
    let mut d_xi = v.values.clone();
    for row in d_xi.chunks_mut(nxi) {
        spectral_derivative(&plan_xi, row, g.dxi());
    }
    let i = Complex64::new(0.0, 1.0);
    let mut values = Vec::with_capacity(nx * nxi);
    for j in 0..nx {
        for m in 0..nxi {
            let k = j * nxi + m;
            values.push(i * d_xi[k] - (d_x[k] - i * g.xi(m) * v.values[k]));
        }
    }
    let field = PhaseField { grid: g, values };
    let base = v.norm();
    let res = field.norm();
    let rel_norm = if base > 0.0 {
        res / base
    } else if res == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    CrResidual { sup_norm: field.sup_norm(), rel_norm, field }
}

/// Distance kept between a coherent-state center and the window edges.
pub const COHERENT_MARGIN: f64 = 4.0;

/// `pi^{-1/4} exp(-(z-y)^2/2) exp(i eta (z-y))` at `z`.
pub fn coherent_value(y: f64, eta: f64, z: f64) -> Complex64 {
    let d = z - y;
    cis(eta * d) * (libm::pow(PI, -0.25) * gaussian(d))
}

/// Unit-norm coherent state centered at `(y, eta)`.
pub fn coherent_state(y: f64, eta: f64, grid: GridSpec) -> Result<Signal, BargmannError> {
    let inside = |c: f64, w: f64| c.is_finite() && libm::fabs(c) + COHERENT_MARGIN <= w;
    if !inside(y, grid.half_width) || !inside(eta, grid.xi_half_width) {
        return Err(BargmannError::OutOfWindow { y, eta, margin: COHERENT_MARGIN });
    }
    Signal::from_fn(grid, |z| coherent_value(y, eta, z))
}

/// Closed form of `T` applied to the unit coherent state at `(y, eta)`.
pub fn coherent_transform(y: f64, eta: f64, x: f64, xi: f64) -> Complex64 {
    let amplitude = transform_constant() * libm::pow(PI, 0.25) * libm::exp(-0.25 * (x - y) * (x - y) - 0.25 * (xi - eta) * (xi - eta));
    cis(0.5 * (x - y) * (xi + eta)) * amplitude
}

/// `1/(2 pi) exp(-(x-y)^2/4 - (xi-eta)^2/4 + i (x-y)(xi+eta)/2)`: the kernel of `T T*`.
pub fn reproducing_kernel(x: f64, xi: f64, y: f64, eta: f64) -> Complex64 {
    let m = libm::exp(-0.25 * (x - y) * (x - y) - 0.25 * (xi - eta) * (xi - eta)) / (2.0 * PI);
    cis(0.5 * (x - y) * (xi + eta)) * m
}

#[cfg(test)]
mod tests;
