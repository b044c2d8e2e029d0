use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::KernelError;
use crate::hamilton::{integrate, FlowError, HamiltonField, StepControl};
use crate::phase::PhasePoint;
use crate::symbol::SymbolExpr;

/// The solution along one bicharacteristic.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPath {
    pub seed: PhasePoint,
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub values: Vec<Complex64>,
    /// `exp(int_s^t b)` along the path.
    pub growth_factors: Vec<f64>,
    /// `int_s^t |f|` along the path.
    pub forcing: Vec<f64>,
}

impl TransportPath {
    /// `max_t | |v(t)| / (|v0| exp(int b)) - 1 |`; zero when `v0` vanishes.
    pub fn growth_defect(&self) -> f64 {
        let v0 = self.values[0].norm();
        if v0 == 0.0 {
            return 0.0;
        }
        self.values
            .iter()
            .zip(&self.growth_factors)
            .map(|(v, g)| libm::fabs(v.norm() / (v0 * g) - 1.0))
            .fold(0.0, f64::max)
    }

    /// `max_t |v(t)| / (e^M (|v0| + int |f|))`, or 0 when the envelope vanishes with `v`.
    pub fn envelope_ratio(&self, m: f64) -> f64 {
        let v0 = self.values[0].norm();
        let scale = libm::exp(m);
        self.values
            .iter()
            .zip(&self.forcing)
            .map(|(v, f)| {
                let env = scale * (v0 + f);
                if env > 0.0 {
                    v.norm() / env
                } else if v.norm() == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub paths: Vec<TransportPath>,
    /// Largest [`TransportPath::envelope_ratio`] when `M` was supplied.
    pub envelope_ratio: Option<f64>,
}

impl TransportSolution {
    pub fn growth_defect(&self) -> f64 {
        self.paths.iter().map(TransportPath::growth_defect).fold(0.0, f64::max)
    }
}

/// Integrates `v' = (-i (a - xi . a_xi) + b) v + i f` along the Hamilton
/// flow of `a` from each seed at time `s`, together with `int b` and
/// `int |f|`. With `m` supplied, the envelope `e^M (|v0| + int |f|)` is
/// checked along every path.
#[allow(clippy::too_many_arguments)]
pub fn transport_solve(
    a: &SymbolExpr,
    b: Option<&SymbolExpr>,
    v0: impl Fn(&PhasePoint) -> Complex64,
    f: Option<&SymbolExpr>,
    seeds: &[PhasePoint],
    s: f64,
    t_end: f64,
    step: &StepControl,
    m: Option<f64>,
) -> Result<TransportSolution, KernelError> {
    if seeds.is_empty() {
        return Err(FlowError::EmptyEnsemble.into());
    }
    let n = a.dim();
    let field = HamiltonField::new(a)?;
    let a_xi: Vec<SymbolExpr> = (0..n).map(|k| a.partial(crate::symbol::Var::Xi(k))).collect();
    let mut paths = Vec::with_capacity(seeds.len());
    for (index, seed) in seeds.iter().enumerate() {
        if seed.dim() != n {
            return Err(FlowError::DimensionMismatch { symbol: n, seed: seed.dim() }.at_seed(index).into());
        }
        let start = v0(seed);
        // state: x (n), xi (n), Re v, Im v, int b, int |f|
        let mut y0 = seed.to_state();
        y0.extend_from_slice(&[start.re, start.im, 0.0, 0.0]);
        let mut scratch = Vec::new();
        let mut vel = vec![0.0; 2 * n];
        let rhs = |t: f64, z: &[f64], out: &mut [f64]| -> Result<(), FlowError> {
            let (x, xi) = (&z[..n], &z[n..2 * n]);
            field.velocity(t, &z[..2 * n], &mut vel, &mut scratch)?;
            out[..2 * n].copy_from_slice(&vel);
            let av = a.eval_with(t, x, xi, &mut scratch)?;
            let mut xi_axi = 0.0;
            for k in 0..n {
                xi_axi += xi[k] * a_xi[k].eval_with(t, x, xi, &mut scratch)?;
            }
            let bv = match b {
                Some(b) => b.eval_with(t, x, xi, &mut scratch)?,
                None => 0.0,
            };
            let fv = match f {
                Some(f) => f.eval_with(t, x, xi, &mut scratch)?,
                None => 0.0,
            };
            let v = Complex64::new(z[2 * n], z[2 * n + 1]);
            let dv = Complex64::new(bv, -(av - xi_axi)) * v + Complex64::new(0.0, fv);
            out[2 * n] = dv.re;
            out[2 * n + 1] = dv.im;
            out[2 * n + 2] = bv;
            out[2 * n + 3] = libm::fabs(fv);
            Ok(())
        };
        let (times, states) = integrate(rhs, &y0, s, t_end, step, 2 * n).map_err(|e| e.at_seed(index))?;
        let mut path = TransportPath {
            seed: seed.clone(),
            points: Vec::with_capacity(times.len()),
            values: Vec::with_capacity(times.len()),
            growth_factors: Vec::with_capacity(times.len()),
            forcing: Vec::with_capacity(times.len()),
            times,
        };
        for z in &states {
            path.points.push(PhasePoint::from_state(&z[..2 * n]));
            path.values.push(Complex64::new(z[2 * n], z[2 * n + 1]));
            path.growth_factors.push(libm::exp(z[2 * n + 2]));
            path.forcing.push(z[2 * n + 3]);
        }
        paths.push(path);
    }
    let envelope_ratio = m.map(|m| paths.iter().map(|p| p.envelope_ratio(m)).fold(0.0, f64::max));
    Ok(TransportSolution { paths, envelope_ratio })
}
