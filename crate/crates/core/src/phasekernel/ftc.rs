use alloc::vec::Vec;
use core::f64::consts::PI;

use super::KernelError;
use crate::symbol::{DerivativeTable, MultiIndex, SymbolExpr};

/// Tolerance for `q(0) = 0`, `grad q(0) = 0`.
pub const CRITICAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtcQuad {
    /// Composite Simpson intervals in the radial (or line) variable; rounded up to even.
    pub radial_intervals: usize,
    /// Periodic trapezoid nodes on the circle (two dimensions only).
    pub angular_nodes: usize,
}

impl Default for FtcQuad {
    fn default() -> Self {
        Self { radial_intervals: 400, angular_nodes: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtcRatio {
    /// `int_{|x| <= R} |q|`.
    pub lhs: f64,
    /// `R^{n+1} int_{|x| <= R} |x|^{1-n} |d^2 q|` with the Hessian spectral norm.
    pub rhs: f64,
    /// `lhs / rhs`, defined as 0 when both vanish.
    pub ratio: f64,
}

fn simpson(a: f64, b: f64, intervals: usize, mut f: impl FnMut(f64) -> Result<f64, KernelError>) -> Result<f64, KernelError> {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a)? + f(b)?;
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h)?;
    }
    Ok(acc * h / 3.0)
}

/// Spectral norm of a symmetric 2x2 matrix `[[p, r], [r, s]]`.
fn symmetric_norm(p: f64, r: f64, s: f64) -> f64 {
    let mean = 0.5 * (p + s);
    let rad = libm::sqrt(0.25 * (p - s) * (p - s) + r * r);
    libm::fabs(mean) + rad
}

/// Both sides of `int_{|x|<R} |q| <~ R^{n+1} int_{|x|<R} |x|^{1-n} |d^2 q|`
/// for a position-only `q` with `q(0) = 0`, `grad q(0) = 0`, in one or two
/// dimensions. Two dimensions use polar coordinates, where the weight
/// `|x|^{-1}` cancels the Jacobian `r`.
pub fn ftc_lemma_ratio(q: &SymbolExpr, radius: f64, quad: &FtcQuad) -> Result<FtcRatio, KernelError> {
    let n = q.dim();
    if !(1..=2).contains(&n) {
        return Err(KernelError::UnsupportedDimension(n));
    }
    if !q.is_position_only() || q.depends_on_time() {
        return Err(KernelError::NotPositionOnly("lemma integrand"));
    }
    if !(radius > 0.0 && radius.is_finite()) || quad.radial_intervals == 0 || (n == 2 && quad.angular_nodes == 0) {
        return Err(KernelError::InvalidOptions("radius and node counts must be positive"));
    }
    let zeros = alloc::vec![0.0; n];
    let mut table = DerivativeTable::new(q.clone(), 2);
    let value = libm::fabs(q.eval_slices(0.0, &zeros, &zeros)?);
    let mut gradient: f64 = 0.0;
    for idx in MultiIndex::all_of_order(n, 1) {
        gradient = gradient.max(libm::fabs(table.get(&idx)?.eval_slices(0.0, &zeros, &zeros)?));
    }
    if value > CRITICAL_TOL || gradient > CRITICAL_TOL {
        return Err(KernelError::BasePointNotCritical { value, gradient });
    }
    let mut scratch = Vec::new();
    let (lhs, rhs) = if n == 1 {
        let q2 = table.get(&MultiIndex::new1(2, 0))?.clone();
        let lhs = simpson(-radius, radius, quad.radial_intervals, |x| Ok(libm::fabs(q.eval_with(0.0, &[x], &[0.0], &mut scratch)?)))?;
        let second = simpson(-radius, radius, quad.radial_intervals, |x| Ok(libm::fabs(q2.eval_with(0.0, &[x], &[0.0], &mut scratch)?)))?;
        (lhs, radius * radius * second)
    } else {
        let idx = |a: u32, b: u32| MultiIndex::new(alloc::vec![a, b], alloc::vec![0, 0]);
        let hxx = table.get(&idx(2, 0))?.clone();
        let hxy = table.get(&idx(1, 1))?.clone();
        let hyy = table.get(&idx(0, 2))?.clone();
        let m = quad.angular_nodes;
        let dtheta = 2.0 * PI / m as f64;
        let dirs: Vec<(f64, f64)> = (0..m).map(|k| (libm::cos(k as f64 * dtheta), libm::sin(k as f64 * dtheta))).collect();
        let xi0 = [0.0, 0.0];
        let mut ring = |r: f64, hessian: bool| -> Result<f64, KernelError> {
            let mut acc = 0.0;
            for (c, s) in &dirs {
                let p = [r * c, r * s];
                acc += if hessian {
                    symmetric_norm(
                        hxx.eval_with(0.0, &p, &xi0, &mut scratch)?,
                        hxy.eval_with(0.0, &p, &xi0, &mut scratch)?,
                        hyy.eval_with(0.0, &p, &xi0, &mut scratch)?,
                    )
                } else {
                    libm::fabs(q.eval_with(0.0, &p, &xi0, &mut scratch)?) * r
                };
            }
            Ok(acc * dtheta)
        };
        let lhs = simpson(0.0, radius, quad.radial_intervals, |r| ring(r, false))?;
        let second = simpson(0.0, radius, quad.radial_intervals, |r| ring(r, true))?;
        (lhs, radius * radius * radius * second)
    };
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(FtcRatio { lhs, rhs, ratio })
}
