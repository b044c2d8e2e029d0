use alloc::vec::Vec;

use num_complex::Complex64;

use super::KernelError;
use crate::bargmann::{coherent_state, forward_unchecked, transform_constant, GridSpec, Method, PhaseField, COHERENT_MARGIN};
use crate::hamilton::{flow_map, StepControl};
use crate::phase::PhasePoint;
use crate::quantize::propagate;
use crate::symbol::SymbolExpr;

/// One column `(x, xi) -> K(t, x, xi, s, y, eta)` of the kernel of `T S(t,s) T*`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSlice {
    pub source: PhasePoint,
    pub s: f64,
    pub t: f64,
    pub field: PhaseField,
    /// `chi(t, s)(y, eta)`.
    pub flow_image: PhasePoint,
}

impl KernelSlice {
    pub fn grid(&self) -> &GridSpec {
        self.field.grid()
    }

    /// Grid point where `|K|` peaks.
    pub fn peak_point(&self) -> PhasePoint {
        let (j, m) = self.field.argmax();
        PhasePoint::new1(self.grid().x(j), self.grid().xi(m))
    }

    /// Offset of the peak from the flow image in grid cells: `(|dx| / dx, |dxi| / dxi)`.
    pub fn peak_offset_cells(&self) -> (f64, f64) {
        let p = self.peak_point();
        let g = self.grid();
        (
            libm::fabs(p.x[0] - self.flow_image.x[0]) / g.dx(),
            libm::fabs(p.xi[0] - self.flow_image.xi[0]) / g.dxi(),
        )
    }

    /// Whether the peak lies within `cells` grid cells of the flow image in both directions.
    pub fn peak_within(&self, cells: f64) -> bool {
        let (a, b) = self.peak_offset_cells();
        a <= cells && b <= cells
    }

    /// `|x - x^t| + |xi - xi^t|` for each grid sample, in field order.
    pub fn distances(&self) -> Vec<f64> {
        let g = self.grid();
        let (cx, cxi) = (self.flow_image.x[0], self.flow_image.xi[0]);
        let mut out = Vec::with_capacity(g.nx() * g.nxi());
        for j in 0..g.nx() {
            for m in 0..g.nxi() {
                out.push(libm::fabs(g.x(j) - cx) + libm::fabs(g.xi(m) - cxi));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceOptions {
    pub nsteps: usize,
    pub flow: StepControl,
    /// Distance kept between the source (and its flow image) and the window edges.
    pub margin: f64,
}

impl Default for SliceOptions {
    fn default() -> Self {
        Self { nsteps: 200, flow: StepControl::default(), margin: COHERENT_MARGIN }
    }
}

fn check_window(what: &'static str, p: &PhasePoint, grid: &GridSpec, margin: f64) -> Result<(), KernelError> {
    let (x, xi) = (p.x[0], p.xi[0]);
    let inside = |c: f64, w: f64| c.is_finite() && libm::fabs(c) + margin <= w;
    if inside(x, grid.half_width()) && inside(xi, grid.xi_half_width()) {
        Ok(())
    } else {
        Err(KernelError::OutOfWindow { what, x, xi, margin })
    }
}

/// `K(t, ., ., s, y, eta)` as `T S(t,s) T* delta_(y, eta)`: the coherent
/// state at the source is propagated by Crank–Nicolson and transformed. At
/// `t = s` this is exactly the reproducing kernel column.
pub fn phase_kernel_slice(
    a: &SymbolExpr,
    b: Option<&SymbolExpr>,
    source: &PhasePoint,
    s: f64,
    t: f64,
    grid: GridSpec,
    opts: &SliceOptions,
) -> Result<KernelSlice, KernelError> {
    if a.dim() != 1 || source.dim() != 1 {
        return Err(KernelError::UnsupportedDimension(a.dim().max(source.dim())));
    }
    check_window("source", source, &grid, opts.margin)?;
    let flow_image = flow_map(a, source, s, t, &opts.flow)?;
    check_window("flow image", &flow_image, &grid, opts.margin)?;
    let psi = coherent_state(source.x[0], source.xi[0], grid)?;
    let evolved = if t == s {
        psi
    } else {
        propagate(a, b, &psi, s, t, opts.nsteps)?.last().clone()
    };
    // T* delta_(y, eta) = c pi^{1/4} psi_(y, eta)
    let scale = Complex64::new(transform_constant() * libm::pow(core::f64::consts::PI, 0.25), 0.0);
    let v = forward_unchecked(&evolved, Method::Fft);
    let field = PhaseField::new(grid, v.values().iter().map(|z| z * scale).collect())?;
    Ok(KernelSlice { source: source.clone(), s, t, field, flow_image })
}
