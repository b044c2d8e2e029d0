use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::kq::{kq_value, linearization_residual, zeroth_order_residual, KqQuad};
use super::KernelError;
use crate::bargmann::{forward_at, inverse_unchecked, reproducing_kernel, GridSpec, Method, PhaseField};
use crate::hamilton::{flow_map, StepControl};
use crate::phase::PhasePoint;
use crate::quantize::weyl_matrix;
use crate::symbol::SymbolExpr;
use crate::symclass::SymbolClassReport;

/// The phase-space function `v(t, ., .)` the remainder operator acts on.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldHistory {
    /// The reproducing-kernel column at `source`, constant in time. The
    /// remainder is then evaluated by the `T q^w T*` kernel quadrature.
    Gaussian { source: PhasePoint },
    /// Sampled fields at increasing times in `[0, 1]`; these times are also
    /// the time quadrature nodes. The remainder is `T q^w T* v` on the grid.
    Fields { times: Vec<f64>, fields: Vec<PhaseField> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EOperatorOptions {
    /// Time nodes on `[0, 1]` for the Gaussian history.
    pub time_samples: usize,
    pub kq: KqQuad,
    pub flow: StepControl,
}

impl Default for EOperatorOptions {
    fn default() -> Self {
        Self { time_samples: 9, kq: KqQuad::default(), flow: StepControl::default() }
    }
}

/// Minimum number of time nodes.
const MIN_TIME_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SeedEstimate {
    pub seed: PhasePoint,
    /// `int_0^1 |E v(t, x^t, xi^t)| dt`.
    pub lhs: f64,
    /// `sup_t int (1 + |x^t - x| + |xi^t - xi|)^p |v(t, x, xi)| dx dxi`.
    pub weighted_mass: f64,
}

/// Measured sides of `int_0^1 |Ev(t, x^t, xi^t)| dt <~ sqrt(kappa_0 kappa_4N) sup_t int w^p |v|`,
/// `p = 2n + 3 - 2N`. The ratio probes the implied constant.
#[derive(Debug, Clone, PartialEq)]
pub struct EOperatorBound {
    /// Largest left side over the seeds.
    pub lhs_estimate: f64,
    /// `sqrt(kappa_0 kappa_4N)` times the largest weighted mass over the seeds.
    pub rhs_bound: f64,
    /// `lhs / rhs`, zero when both vanish.
    pub ratio: f64,
    pub sqrt_kappa: f64,
    pub weight_exponent: i32,
    pub times: Vec<f64>,
    pub per_seed: Vec<SeedEstimate>,
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

fn weighted_mass(field: &PhaseField, center: &PhasePoint, exponent: i32) -> f64 {
    let g = field.grid();
    let (cx, cxi) = (center.x[0], center.xi[0]);
    let mut acc = 0.0;
    for j in 0..g.nx() {
        let dx = libm::fabs(g.x(j) - cx);
        for m in 0..g.nxi() {
            let w = 1.0 + dx + libm::fabs(g.xi(m) - cxi);
            acc += libm::pow(w, exponent as f64) * field.get(j, m).norm();
        }
    }
    acc * g.dx() * g.dxi()
}

/// Estimates both sides of the remainder bound for `E = T[(a - a_lin)^w + i (b - b_0)^w] T*`,
/// linearized at each sampled point `(x^t, xi^t)` of the seeded bicharacteristics.
#[allow(clippy::too_many_arguments)]
pub fn e_operator_bound(
    a: &SymbolExpr,
    b: Option<&SymbolExpr>,
    big_n: u32,
    seeds: &[PhasePoint],
    history: &FieldHistory,
    constants: &SymbolClassReport,
    grid: GridSpec,
    opts: &EOperatorOptions,
) -> Result<EOperatorBound, KernelError> {
    if a.dim() != 1 || b.is_some_and(|b| b.dim() != 1) {
        return Err(KernelError::UnsupportedDimension(a.dim()));
    }
    if seeds.is_empty() {
        return Err(crate::hamilton::FlowError::EmptyEnsemble.into());
    }
    let kappa_high = *constants
        .kappa_n
        .get(&(4 * big_n))
        .ok_or_else(|| KernelError::MissingConstant(format!("kappa_{} (order cap {})", 4 * big_n, constants.order_cap)))?;
    let sqrt_kappa = libm::sqrt(constants.kappa0 * kappa_high);
    let weight_exponent = 2 + 3 - 2 * big_n as i32;

    let times: Vec<f64> = match history {
        FieldHistory::Gaussian { .. } => {
            if opts.time_samples < MIN_TIME_SAMPLES {
                return Err(KernelError::InvalidOptions("at least 8 time samples are required"));
            }
            let k = opts.time_samples - 1;
            (0..=k).map(|i| i as f64 / k as f64).collect()
        }
        FieldHistory::Fields { times, fields } => {
            if times.len() != fields.len() || times.len() < MIN_TIME_SAMPLES {
                return Err(KernelError::InvalidOptions("history needs at least 8 fields, one per time"));
            }
            if times.windows(2).any(|w| !(w[1] > w[0])) || times[0] < 0.0 || times[times.len() - 1] > 1.0 {
                return Err(KernelError::InvalidOptions("history times must increase within [0, 1]"));
            }
            times.clone()
        }
    };
    let static_field = match history {
        FieldHistory::Gaussian { source } => {
            let (y, eta) = (source.x[0], source.xi[0]);
            Some(PhaseField::from_fn(grid, |x, xi| reproducing_kernel(x, xi, y, eta))?)
        }
        FieldHistory::Fields { .. } => None,
    };
    // T* v at each time, for the grid route
    let preimages = match history {
        FieldHistory::Fields { fields, .. } => fields.iter().map(|f| inverse_unchecked(f, Method::Fft)).collect(),
        FieldHistory::Gaussian { .. } => Vec::new(),
    };

    let mut per_seed = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let mut point = if times[0] == 0.0 { seed.clone() } else { flow_map(a, seed, 0.0, times[0], &opts.flow)? };
        let mut values = Vec::with_capacity(times.len());
        let mut mass: f64 = 0.0;
        for (k, &t) in times.iter().enumerate() {
            if k > 0 {
                point = flow_map(a, &point, times[k - 1], t, &opts.flow)?;
            }
            let qa = linearization_residual(a, t, &point)?;
            let qb = match b {
                Some(b) => Some(zeroth_order_residual(b, t, &point)?),
                None => None,
            };
            let field = match (&static_field, history) {
                (Some(f), _) => f,
                (None, FieldHistory::Fields { fields, .. }) => &fields[k],
                (None, FieldHistory::Gaussian { .. }) => unreachable!("the Gaussian history always has a static field"),
            };
            mass = mass.max(weighted_mass(field, &point, weight_exponent));
            let ev = if qa.is_zero() && qb.as_ref().is_none_or(|q| q.is_zero()) {
                Complex64::new(0.0, 0.0)
            } else if let FieldHistory::Gaussian { source } = history {
                let mut scratch = Vec::new();
                kq_value(
                    |z, eta| {
                        let re = qa.eval_with(t, &[z], &[eta], &mut scratch)?;
                        let im = match &qb {
                            Some(q) => q.eval_with(t, &[z], &[eta], &mut scratch)?,
                            None => 0.0,
                        };
                        Ok(Complex64::new(re, im))
                    },
                    &point,
                    source,
                    &opts.kq,
                )?
            } else {
                let mut op = weyl_matrix(&qa, t, grid)?;
                if let Some(q) = &qb {
                    op = op.add_scaled(Complex64::new(0.0, 1.0), &weyl_matrix(q, t, grid)?)?;
                }
                let w = op.apply(&preimages[k])?;
                forward_at(&w, point.x[0], point.xi[0])
            };
            values.push(ev.norm());
        }
        per_seed.push(SeedEstimate { seed: seed.clone(), lhs: trapezoid(&times, &values), weighted_mass: mass });
    }
    let lhs_estimate = per_seed.iter().map(|s| s.lhs).fold(0.0, f64::max);
    let rhs_bound = sqrt_kappa * per_seed.iter().map(|s| s.weighted_mass).fold(0.0, f64::max);
    let ratio = if rhs_bound > 0.0 {
        lhs_estimate / rhs_bound
    } else if lhs_estimate == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(EOperatorBound { lhs_estimate, rhs_bound, ratio, sqrt_kappa, weight_exponent, times, per_seed })
}
