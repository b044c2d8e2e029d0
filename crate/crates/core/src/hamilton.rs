//! Hamilton flow `x' = a_xi, xi' = -a_x` and its variational (Jacobian)
//! system, integrated with classical fourth-order Runge–Kutta on a fixed grid.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::phase::PhasePoint;
use crate::symbol::{DerivativeTable, MultiIndex, SymbolError, SymbolExpr};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("symbol has dimension {symbol} but the seed has dimension {seed}")]
    DimensionMismatch { symbol: usize, seed: usize },
    #[error("trajectory left the bound {bound} at t = {time} (|coordinate| = {value})")]
    BlowupDetected { time: f64, value: f64, bound: f64 },
    #[error("step refinement did not reach tolerance {tol} (last difference {diff})")]
    NotConverged { diff: f64, tol: f64 },
    #[error("seed ensemble is empty")]
    EmptyEnsemble,
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error("seed {index}: {source}")]
    Seed {
        index: usize,
        #[source]
        source: Box<FlowError>,
    },
}

impl FlowError {
    pub(crate) fn at_seed(self, index: usize) -> Self {
        FlowError::Seed { index, source: Box::new(self) }
    }
}

/// Fixed-step control with optional Richardson-style refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    /// Nominal step; the actual step divides the interval evenly.
    pub h: f64,
    /// When set, the step is halved until two successive solutions differ
    /// by less than `tol` in sup norm on the coarse grid.
    pub tol: Option<f64>,
    pub max_refinements: u32,
    /// Coordinates beyond this magnitude abort the integration.
    pub blowup: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { h: 1e-3, tol: None, max_refinements: 8, blowup: 1e8 }
    }
}

impl StepControl {
    pub fn with_step(h: f64) -> Self {
        Self { h, ..Self::default() }
    }

    fn validate(&self) -> Result<(), FlowError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(FlowError::InvalidStep(self.h));
        }
        Ok(())
    }

    /// Number of steps covering `[s, t_end]` with a step no larger than `h`.
    pub fn steps_for(&self, s: f64, t_end: f64) -> usize {
        let span = libm::fabs(t_end - s);
        if span == 0.0 {
            return 0;
        }
        (libm::ceil(span / self.h - 1e-9) as usize).max(1)
    }
}

/// A bicharacteristic `t -> (x^t, xi^t)` sampled on the integration grid.
///
/// Times run from `s` toward the end time; for backward integration they
/// decrease.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub seed: PhasePoint,
    pub s: f64,
}

impl Trajectory {
    pub fn endpoint(&self) -> &PhasePoint {
        self.points.last().expect("trajectory holds at least the seed")
    }
}

/// Trajectory together with the flow Jacobian `d(x^t, xi^t)/d(x, xi)`.
#[derive(Debug, Clone)]
pub struct JacobianFlow {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub jac: Vec<DMatrix<f64>>,
    /// Cumulative trapezoid integral of the spectral norm of `A(t)`.
    pub a_norm_integral: Vec<f64>,
}

/// Hamilton vector field of a symbol `a`, with the second derivatives
/// needed for the variational system.
#[derive(Debug, Clone)]
pub struct HamiltonField {
    dim: usize,
    // (a_x1..a_xn, a_xi1..a_xin)
    grad: Vec<SymbolExpr>,
    // Hessian in z = (x, xi), row-major 2n x 2n
    hessian: Vec<SymbolExpr>,
}

impl HamiltonField {
    pub fn new(a: &SymbolExpr) -> Result<Self, SymbolError> {
        let n = a.dim();
        let mut table = DerivativeTable::new(a.clone(), 2);
        let grad = table.gradient()?;
        let mut hessian = Vec::with_capacity(4 * n * n);
        for p in 0..2 * n {
            for q in 0..2 * n {
                let mut idx = MultiIndex::zero(n);
                for k in [p, q] {
                    if k < n {
                        idx.alpha[k] += 1;
                    } else {
                        idx.beta[k - n] += 1;
                    }
                }
                hessian.push(table.get(&idx)?.clone());
            }
        }
        Ok(Self { dim: n, grad, hessian })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes `(a_xi, -a_x)` at `(t, z)` into `out`.
    pub fn velocity(&self, t: f64, z: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) -> Result<(), SymbolError> {
        let n = self.dim;
        let (x, xi) = z[..2 * n].split_at(n);
        for i in 0..n {
            out[i] = self.grad[n + i].eval_with(t, x, xi, scratch)?;
            out[n + i] = -self.grad[i].eval_with(t, x, xi, scratch)?;
        }
        Ok(())
    }

    /// Coefficient matrix `A = [[a_xi x, a_xi xi], [-a_xx, -a_x xi]]` of the
    /// variational equation.
    pub fn variational_matrix(&self, t: f64, z: &[f64], scratch: &mut Vec<f64>) -> Result<DMatrix<f64>, SymbolError> {
        let n = self.dim;
        let m = 2 * n;
        let (x, xi) = z[..m].split_at(n);
        let mut a = DMatrix::zeros(m, m);
        for i in 0..n {
            for j in 0..m {
                a[(i, j)] = self.hessian[(n + i) * m + j].eval_with(t, x, xi, scratch)?;
                a[(n + i, j)] = -self.hessian[i * m + j].eval_with(t, x, xi, scratch)?;
            }
        }
        Ok(a)
    }
}

pub(crate) type Samples = (Vec<f64>, Vec<Vec<f64>>);

/// Classical RK4 with `steps` equal steps from `s` to `t_end`. The first
/// `guarded` state components are checked against `blowup` after each step.
fn rk4<F>(
    mut rhs: F,
    y0: &[f64],
    s: f64,
    t_end: f64,
    steps: usize,
    guarded: usize,
    blowup: f64,
) -> Result<Samples, FlowError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), FlowError>,
{
    let dim = y0.len();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(s);
    states.push(y0.to_vec());
    if steps == 0 {
        return Ok((times, states));
    }
    let h = (t_end - s) / steps as f64;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    for k in 0..steps {
        let t = s + k as f64 * h;
        rhs(t, &y, &mut k1)?;
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..dim {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs(t + h, &tmp, &mut k4)?;
        for i in 0..dim {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = if k + 1 == steps { t_end } else { s + (k + 1) as f64 * h };
        if let Some(v) = y[..guarded].iter().map(|v| libm::fabs(*v)).find(|v| !(*v <= blowup)) {
            return Err(FlowError::BlowupDetected { time: t_next, value: v, bound: blowup });
        }
        times.push(t_next);
        states.push(y.clone());
    }
    Ok((times, states))
}

/// Runs [`rk4`] and, when `step.tol` is set, halves the step until two
/// successive solutions agree on the coarse grid.
pub(crate) fn integrate<F>(rhs: F, y0: &[f64], s: f64, t_end: f64, step: &StepControl, guarded: usize) -> Result<Samples, FlowError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), FlowError>,
{
    step.validate()?;
    let mut rhs = rhs;
    let mut steps = step.steps_for(s, t_end);
    let mut coarse = rk4(&mut rhs, y0, s, t_end, steps, guarded, step.blowup)?;
    let Some(tol) = step.tol else {
        return Ok(coarse);
    };
    let mut diff = f64::INFINITY;
    for _ in 0..step.max_refinements {
        if steps == 0 {
            return Ok(coarse);
        }
        steps *= 2;
        let fine = rk4(&mut rhs, y0, s, t_end, steps, guarded, step.blowup)?;
        diff = coarse
            .1
            .iter()
            .zip(fine.1.iter().step_by(2))
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| libm::fabs(p - q)))
            .fold(0.0, f64::max);
        if diff < tol {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(FlowError::NotConverged { diff, tol })
}

fn check_dim(a: &SymbolExpr, seed: &PhasePoint) -> Result<(), FlowError> {
    if a.dim() != seed.dim() {
        return Err(FlowError::DimensionMismatch { symbol: a.dim(), seed: seed.dim() });
    }
    Ok(())
}

/// Integrates the Hamilton flow of `a` from `(s, seed)` to `t_end`.
/// `t_end < s` integrates backward in time.
pub fn integrate_flow(
    a: &SymbolExpr,
    seed: &PhasePoint,
    s: f64,
    t_end: f64,
    step: &StepControl,
) -> Result<Trajectory, FlowError> {
    check_dim(a, seed)?;
    let field = HamiltonField::new(a)?;
    integrate_field(&field, seed, s, t_end, step)
}

/// As [`integrate_flow`] with a precomputed field.
pub fn integrate_field(
    field: &HamiltonField,
    seed: &PhasePoint,
    s: f64,
    t_end: f64,
    step: &StepControl,
) -> Result<Trajectory, FlowError> {
    if field.dim() != seed.dim() {
        return Err(FlowError::DimensionMismatch { symbol: field.dim(), seed: seed.dim() });
    }
    let mut scratch = Vec::new();
    let rhs = |t: f64, z: &[f64], out: &mut [f64]| -> Result<(), FlowError> {
        field.velocity(t, z, out, &mut scratch).map_err(FlowError::from)
    };
    let z0 = seed.to_state();
    let (times, states) = integrate(rhs, &z0, s, t_end, step, z0.len())?;
    let points = states.iter().map(|z| PhasePoint::from_state(z)).collect();
    Ok(Trajectory { times, points, seed: seed.clone(), s })
}

/// Endpoint of the flow map `chi(t_end, s)` applied to `seed`.
pub fn flow_map(
    a: &SymbolExpr,
    seed: &PhasePoint,
    s: f64,
    t_end: f64,
    step: &StepControl,
) -> Result<PhasePoint, FlowError> {
    integrate_flow(a, seed, s, t_end, step).map(|tr| tr.endpoint().clone())
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Co-integrates the trajectory and its Jacobian, accumulating the
/// integral of `||A||_2` by the trapezoid rule on the same grid.
pub fn variational_flow(
    a: &SymbolExpr,
    seed: &PhasePoint,
    s: f64,
    t_end: f64,
    step: &StepControl,
) -> Result<JacobianFlow, FlowError> {
    check_dim(a, seed)?;
    let field = HamiltonField::new(a)?;
    let n = field.dim();
    let m = 2 * n;
    let mut scratch = Vec::new();
    let rhs = |t: f64, y: &[f64], out: &mut [f64]| -> Result<(), FlowError> {
        field.velocity(t, y, &mut out[..m], &mut scratch)?;
        let a = field.variational_matrix(t, y, &mut scratch)?;
        // J' = A J, J stored row-major after the phase point
        let j = &y[m..];
        for r in 0..m {
            for c in 0..m {
                out[m + r * m + c] = (0..m).map(|k| a[(r, k)] * j[k * m + c]).sum();
            }
        }
        Ok(())
    };
    let mut y0 = seed.to_state();
    for r in 0..m {
        for c in 0..m {
            y0.push(if r == c { 1.0 } else { 0.0 });
        }
    }
    let (times, states) = integrate(rhs, &y0, s, t_end, step, m)?;

    let mut points = Vec::with_capacity(states.len());
    let mut jac = Vec::with_capacity(states.len());
    let mut norms = Vec::with_capacity(states.len());
    for (t, y) in times.iter().zip(&states) {
        points.push(PhasePoint::from_state(&y[..m]));
        jac.push(DMatrix::from_row_slice(m, m, &y[m..]));
        norms.push(spectral_norm(&field.variational_matrix(*t, y, &mut scratch)?));
    }
    let mut a_norm_integral = Vec::with_capacity(norms.len());
    let mut acc = 0.0;
    a_norm_integral.push(0.0);
    for k in 1..norms.len() {
        acc += 0.5 * libm::fabs(times[k] - times[k - 1]) * (norms[k] + norms[k - 1]);
        a_norm_integral.push(acc);
    }
    Ok(JacobianFlow { times, points, jac, a_norm_integral })
}

/// Bilipschitz constants of the flow maps over a seed ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilipschitzReport {
    /// Max over seeds and stored times of `||jac||_2`.
    pub lip_forward: f64,
    /// Max of `||jac^{-1}||_2`.
    pub lip_inverse: f64,
    /// Max of `||jac|| / exp(int ||A||)`; at most 1 when the Gronwall bound holds.
    pub gronwall_margin: f64,
    /// Max of `|det jac - 1|`.
    pub max_det_defect: f64,
    /// Stored times where `||jac|| > (1 + GRONWALL_TOL) exp(int ||A||)`.
    pub gronwall_violations: usize,
    pub seeds: usize,
}

/// Relative slack allowed in the pointwise Gronwall check.
pub const GRONWALL_TOL: f64 = 1e-6;

impl BilipschitzReport {
    pub fn from_flow(flow: &JacobianFlow) -> Self {
        let mut r = BilipschitzReport {
            lip_forward: 0.0,
            lip_inverse: 0.0,
            gronwall_margin: 0.0,
            max_det_defect: 0.0,
            gronwall_violations: 0,
            seeds: 1,
        };
        for (j, integral) in flow.jac.iter().zip(&flow.a_norm_integral) {
            let sv = j.singular_values();
            let (hi, lo) = (sv.max(), sv.min());
            let bound = libm::exp(*integral);
            r.lip_forward = r.lip_forward.max(hi);
            r.lip_inverse = r.lip_inverse.max(1.0 / lo);
            r.gronwall_margin = r.gronwall_margin.max(hi / bound);
            r.max_det_defect = r.max_det_defect.max(libm::fabs(j.determinant() - 1.0));
            if hi > (1.0 + GRONWALL_TOL) * bound {
                r.gronwall_violations += 1;
            }
        }
        r
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            lip_forward: self.lip_forward.max(other.lip_forward),
            lip_inverse: self.lip_inverse.max(other.lip_inverse),
            gronwall_margin: self.gronwall_margin.max(other.gronwall_margin),
            max_det_defect: self.max_det_defect.max(other.max_det_defect),
            gronwall_violations: self.gronwall_violations + other.gronwall_violations,
            seeds: self.seeds + other.seeds,
        }
    }

    pub fn gronwall_holds(&self) -> bool {
        self.gronwall_violations == 0
    }
}

/// Runs [`variational_flow`] for each seed and aggregates the maxima.
pub fn bilipschitz_report(
    a: &SymbolExpr,
    seeds: &[PhasePoint],
    s: f64,
    t_end: f64,
    step: &StepControl,
) -> Result<BilipschitzReport, FlowError> {
    let mut acc: Option<BilipschitzReport> = None;
    for (i, seed) in seeds.iter().enumerate() {
        let flow = variational_flow(a, seed, s, t_end, step).map_err(|e| e.at_seed(i))?;
        let r = BilipschitzReport::from_flow(&flow);
        acc = Some(match acc {
            Some(prev) => prev.merge(r),
            None => r,
        });
    }
    acc.ok_or(FlowError::EmptyEnsemble)
}

#[cfg(test)]
mod tests;
