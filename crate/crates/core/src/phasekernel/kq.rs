use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use super::KernelError;
use crate::fft::cis;
use crate::phase::PhasePoint;
use crate::symbol::{DerivativeTable, MultiIndex, SymbolError, SymbolExpr, Var};

/// Normalization making the kernel of the unit symbol the reproducing kernel.
pub const KQ_CONSTANT: f64 = 1.0 / (2.0 * PI * PI);

/// Trapezoid quadrature for the `(z, eta)` integral of the `T q^w T*` kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KqQuad {
    /// Node spacing in both variables.
    pub step: f64,
    /// Half-width of the window around the midpoints, in Gaussian widths `1/sqrt(2)`.
    pub widths: f64,
}

impl Default for KqQuad {
    fn default() -> Self {
        Self { step: 0.05, widths: 8.0 }
    }
}

/// Largest edge weight of the Gaussian factors the window may leave.
const EDGE_WEIGHT: f64 = 1e-12;

impl KqQuad {
    fn validate(&self) -> Result<(), KernelError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(KernelError::InvalidOptions("quadrature step must be positive"));
        }
        let edge = libm::exp(-0.5 * self.widths * self.widths);
        if !(edge <= EDGE_WEIGHT) {
            return Err(KernelError::WindowTooSmall { widths: self.widths, edge });
        }
        Ok(())
    }

    fn nodes(&self, center: f64) -> Vec<f64> {
        let half = self.widths / core::f64::consts::SQRT_2;
        let count = libm::ceil(2.0 * half / self.step) as usize;
        let h = 2.0 * half / count as f64;
        (0..=count).map(|k| center - half + k as f64 * h).collect()
    }
}

/// `C e^{i(x+x1)(xi-xi1)/2} int e^{-(xi+xi1-2 eta)^2/4} e^{-(x+x1-2z)^2/4} q(z, eta) e^{i eta (x-x1)} e^{-i z (xi-xi1)} dz deta`
/// with `q` supplied as a complex-valued closure.
pub(crate) fn kq_value<F>(mut q: F, p: &PhasePoint, p1: &PhasePoint, quad: &KqQuad) -> Result<Complex64, KernelError>
where
    F: FnMut(f64, f64) -> Result<Complex64, SymbolError>,
{
    quad.validate()?;
    let (x, xi, x1, xi1) = (p.x[0], p.xi[0], p1.x[0], p1.xi[0]);
    let zs = quad.nodes(0.5 * (x + x1));
    let etas = quad.nodes(0.5 * (xi + xi1));
    let hz = zs[1] - zs[0];
    let heta = etas[1] - etas[0];
    let trap = |k: usize, n: usize| if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
    let wz: Vec<Complex64> = zs
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let g = libm::exp(-0.25 * (x + x1 - 2.0 * z) * (x + x1 - 2.0 * z));
            cis(-z * (xi - xi1)) * (g * trap(k, zs.len()))
        })
        .collect();
    let weta: Vec<Complex64> = etas
        .iter()
        .enumerate()
        .map(|(k, eta)| {
            let g = libm::exp(-0.25 * (xi + xi1 - 2.0 * eta) * (xi + xi1 - 2.0 * eta));
            cis(eta * (x - x1)) * (g * trap(k, etas.len()))
        })
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for (z, a) in zs.iter().zip(&wz) {
        let mut row = Complex64::new(0.0, 0.0);
        for (eta, b) in etas.iter().zip(&weta) {
            row += q(*z, *eta)? * b;
        }
        acc += row * a;
    }
    Ok(acc * cis(0.5 * (x + x1) * (xi - xi1)) * (KQ_CONSTANT * hz * heta))
}

/// Kernel of `T q^w T*` at each probe pair `((x, xi), (x1, xi1))`, with `q` frozen at time `t`.
pub fn kq_kernel_at(
    q: &SymbolExpr,
    t: f64,
    probes: &[(PhasePoint, PhasePoint)],
    quad: &KqQuad,
) -> Result<Vec<Complex64>, KernelError> {
    if q.dim() != 1 {
        return Err(KernelError::UnsupportedDimension(q.dim()));
    }
    let mut scratch = Vec::new();
    probes
        .iter()
        .map(|(p, p1)| {
            kq_value(
                |z, eta| q.eval_with(t, &[z], &[eta], &mut scratch).map(|v| Complex64::new(v, 0.0)),
                p,
                p1,
                quad,
            )
        })
        .collect()
}

/// [`kq_kernel_at`] at `t = 0`.
pub fn kq_kernel(q: &SymbolExpr, probes: &[(PhasePoint, PhasePoint)], quad: &KqQuad) -> Result<Vec<Complex64>, KernelError> {
    kq_kernel_at(q, 0.0, probes, quad)
}

/// `a - a_lin`, where `a_lin` is the first-order Taylor polynomial of
/// `a(t, ., .)` at `base`. The result keeps the time dependence of `a`.
pub fn linearization_residual(a: &SymbolExpr, t: f64, base: &PhasePoint) -> Result<SymbolExpr, KernelError> {
    let n = a.dim();
    if base.dim() != n {
        return Err(KernelError::UnsupportedDimension(base.dim()));
    }
    let mut table = DerivativeTable::new(a.clone(), 2);
    let mut affine = true;
    for idx in MultiIndex::all_of_order(n, 2) {
        affine &= table.get(&idx)?.is_zero();
    }
    if affine {
        return Ok(SymbolExpr::constant(0.0, n));
    }
    let grad = table.gradient()?;
    let mut scratch = Vec::new();
    let value = a.eval_with(t, &base.x, &base.xi, &mut scratch)?;
    let mut lin = SymbolExpr::constant(value, n);
    for k in 0..n {
        for (slot, var, center) in [(k, Var::X(k), base.x[k]), (n + k, Var::Xi(k), base.xi[k])] {
            let slope = grad[slot].eval_with(t, &base.x, &base.xi, &mut scratch)?;
            if slope != 0.0 {
                let shifted = SymbolExpr::var(var, n).sub(&SymbolExpr::constant(center, n));
                lin = lin.add(&shifted.scale(slope));
            }
        }
    }
    Ok(a.sub(&lin).simplify())
}

/// `b - b(t, base)`.
pub fn zeroth_order_residual(b: &SymbolExpr, t: f64, base: &PhasePoint) -> Result<SymbolExpr, KernelError> {
    let value = b.evaluate(t, base)?;
    Ok(b.sub(&SymbolExpr::constant(value, b.dim())).simplify())
}
