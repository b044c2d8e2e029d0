//! Symbol-class constants measured along the Hamilton flow.
//!
//! Every supremum over phase space is replaced by a maximum over a finite
//! seed (or ray) grid, so all reported constants are grid lower bounds of
//! the true suprema.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::hamilton::{integrate_field, FlowError, HamiltonField, StepControl, Trajectory};
use crate::phase::PhasePoint;
use crate::symbol::{DerivativeTable, MultiIndex, SymbolError, SymbolExpr};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("seed {seed}, index {index}: {source}")]
    Derivative {
        seed: usize,
        index: MultiIndex,
        #[source]
        source: SymbolError,
    },
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error("order cap must be at least 2, got {0}")]
    OrderCapTooSmall(u32),
    #[error("window length {0} is outside (0, t_end]")]
    InvalidWindow(f64),
    #[error("missing constant: {0}")]
    MissingConstant(&'static str),
    #[error("ray {ray} (base {base}, direction {direction}, radius {radius}): {source}")]
    Ray {
        ray: usize,
        base: usize,
        direction: usize,
        radius: f64,
        #[source]
        source: Box<ClassError>,
    },
    #[error("direction {0} is not a unit vector of the field dimension")]
    InvalidDirection(usize),
    #[error("integrand must depend on x only")]
    NotPositionOnly,
    #[error("empty {0} grid")]
    EmptyGrid(&'static str),
}

/// Time integration controls for flow-based integrals on `[0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadControl {
    /// Step of the flow grid; the time integrals use the trapezoid rule on it.
    pub h: f64,
    /// End of the time interval, 1 unless configured otherwise.
    pub t_end: f64,
    pub blowup: f64,
}

impl Default for QuadControl {
    fn default() -> Self {
        Self { h: 1e-3, t_end: 1.0, blowup: 1e8 }
    }
}

impl QuadControl {
    fn step(&self) -> StepControl {
        StepControl { h: self.h, tol: None, blowup: self.blowup, ..StepControl::default() }
    }
}

/// Constants of the symbol class, all grid lower bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymbolClassReport {
    pub order_cap: u32,
    /// `c^a_{alpha beta}` for `2 <= |alpha| + |beta| <= order_cap`.
    pub c_a: BTreeMap<MultiIndex, f64>,
    /// `c^b_{alpha beta}` for `1 <= |alpha| + |beta| <= order_cap`; empty without `b`.
    pub c_b: BTreeMap<MultiIndex, f64>,
    pub kappa0: f64,
    /// `kappa_N` for `N = 2..=order_cap`.
    pub kappa_n: BTreeMap<u32, f64>,
    pub m: Option<f64>,
    /// Equiintegrability modulus as `(h, omega(h))`, sorted by `h`.
    pub omega: Vec<(f64, f64)>,
    pub mizohata: Option<f64>,
    pub smallness_margin: Option<f64>,
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * libm::fabs(t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Cumulative trapezoid integral, starting at 0.
pub fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..values.len() {
        acc += 0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]);
        out.push(acc);
    }
    out
}

fn flow(field: &HamiltonField, seed: &PhasePoint, quad: &QuadControl) -> Result<Trajectory, FlowError> {
    integrate_field(field, seed, 0.0, quad.t_end, &quad.step())
}

/// `int_0^T |q(t, chi(t,0) seed)| dt` on the trajectory grid.
fn flow_integral(q: &SymbolExpr, tr: &Trajectory, scratch: &mut Vec<f64>) -> Result<f64, SymbolError> {
    let mut vals = Vec::with_capacity(tr.times.len());
    for (t, p) in tr.times.iter().zip(&tr.points) {
        vals.push(libm::fabs(q.eval_with(*t, &p.x, &p.xi, scratch)?));
    }
    Ok(trapezoid(&tr.times, &vals))
}

/// Per-seed class integrals. Maxima of these over seeds give the report.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedIntegrals {
    pub c_a: BTreeMap<MultiIndex, f64>,
    pub c_b: BTreeMap<MultiIndex, f64>,
}

/// Integrals of every `|d^alpha_x d^beta_xi q|` along the flow of `a` from one seed.
pub fn seed_integrals(
    a: &SymbolExpr,
    b: Option<&SymbolExpr>,
    order_cap: u32,
    seed: &PhasePoint,
    quad: &QuadControl,
) -> Result<SeedIntegrals, ClassError> {
    if order_cap < 2 {
        return Err(ClassError::OrderCapTooSmall(order_cap));
    }
    let field = HamiltonField::new(a)?;
    let tr = flow(&field, seed, quad)?;
    let n = a.dim();
    let mut scratch = Vec::new();
    let mut integrate_all = |sym: &SymbolExpr, lo: u32| -> Result<BTreeMap<MultiIndex, f64>, ClassError> {
        let mut table = DerivativeTable::new(sym.clone(), order_cap);
        let mut out = BTreeMap::new();
        for idx in MultiIndex::all_in_range(n, lo, order_cap) {
            let d = table.get(&idx)?;
            let v = if d.is_zero() {
                0.0
            } else {
                flow_integral(d, &tr, &mut scratch)
                    .map_err(|source| ClassError::Derivative { seed: 0, index: idx.clone(), source })?
            };
            out.insert(idx, v);
        }
        Ok(out)
    };
    let c_a = integrate_all(a, 2)?;
    let c_b = match b {
        Some(b) => integrate_all(b, 1)?,
        None => BTreeMap::new(),
    };
    Ok(SeedIntegrals { c_a, c_b })
}

fn merge_max(into: &mut BTreeMap<MultiIndex, f64>, from: &BTreeMap<MultiIndex, f64>) {
    for (k, v) in from {
        let e = into.entry(k.clone()).or_insert(0.0);
        *e = e.max(*v);
    }
}

fn max_where(map: &BTreeMap<MultiIndex, f64>, pred: impl Fn(u32) -> bool) -> f64 {
    map.iter().filter(|(k, _)| pred(k.order())).map(|(_, v)| *v).fold(0.0, f64::max)
}

impl SymbolClassReport {
    /// Reduces per-seed integrals by maxima and assembles `kappa_0`, `kappa_N`.
    pub fn from_seed_integrals<'a>(order_cap: u32, seeds: impl IntoIterator<Item = &'a SeedIntegrals>) -> Self {
        let mut c_a = BTreeMap::new();
        let mut c_b = BTreeMap::new();
        for s in seeds {
            merge_max(&mut c_a, &s.c_a);
            merge_max(&mut c_b, &s.c_b);
        }
        let kappa0 = max_where(&c_a, |k| k == 2) + max_where(&c_b, |k| k == 1);
        let kappa_n = (2..=order_cap)
            .map(|big| (big, max_where(&c_a, |k| (2..=big).contains(&k)) + max_where(&c_b, |k| (1..=big).contains(&k))))
            .collect();
        Self { order_cap, c_a, c_b, kappa0, kappa_n, ..Self::default() }
    }
}

/// `c_{alpha beta}` (max over seeds of the flow integral) and `kappa_0`, `kappa_N`.
pub fn kappa_constants(
    a: &SymbolExpr,
    b: Option<&SymbolExpr>,
    order_cap: u32,
    seeds: &[PhasePoint],
    quad: &QuadControl,
) -> Result<SymbolClassReport, ClassError> {
    if seeds.is_empty() {
        return Err(ClassError::Flow(FlowError::EmptyEnsemble));
    }
    let per_seed = seeds
        .iter()
        .enumerate()
        .map(|(i, seed)| {
            seed_integrals(a, b, order_cap, seed, quad).map_err(|e| match e {
                ClassError::Derivative { index, source, .. } => ClassError::Derivative { seed: i, index, source },
                ClassError::Flow(f) => ClassError::Flow(f.at_seed(i)),
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SymbolClassReport::from_seed_integrals(order_cap, &per_seed))
}

/// Largest gain `B(t1) - B(t0)` over grid pairs `t0 <= t1` of a cumulative
/// integral, in one sweep. The empty interval gives 0.
pub fn max_window_gain(cumulative: &[f64]) -> f64 {
    let mut lowest = f64::INFINITY;
    let mut best: f64 = 0.0;
    for &v in cumulative {
        lowest = lowest.min(v);
        best = best.max(v - lowest);
    }
    best
}

/// Per-seed `sup_{t0 <= t1} int_{t0}^{t1} b(t, x^t, xi^t) dt`.
pub fn seed_growth(b: &SymbolExpr, field: &HamiltonField, seed: &PhasePoint, quad: &QuadControl) -> Result<f64, ClassError> {
    let tr = flow(field, seed, quad)?;
    let mut scratch = Vec::new();
    let mut vals = Vec::with_capacity(tr.times.len());
    for (t, p) in tr.times.iter().zip(&tr.points) {
        vals.push(b.eval_with(*t, &p.x, &p.xi, &mut scratch)?);
    }
    Ok(max_window_gain(&cumulative_trapezoid(&tr.times, &vals)))
}

/// Growth constant `M`: the largest integral of `b` over any time window
/// along any seeded bicharacteristic of `a`. Always `>= 0`.
pub fn growth_constant_m(
    b: &SymbolExpr,
    a: &SymbolExpr,
    seeds: &[PhasePoint],
    quad: &QuadControl,
) -> Result<f64, ClassError> {
    if seeds.is_empty() {
        return Err(ClassError::Flow(FlowError::EmptyEnsemble));
    }
    let field = HamiltonField::new(a)?;
    let mut m: f64 = 0.0;
    for (i, seed) in seeds.iter().enumerate() {
        let g = seed_growth(b, &field, seed, quad).map_err(|e| match e {
            ClassError::Flow(f) => ClassError::Flow(f.at_seed(i)),
            other => other,
        })?;
        m = m.max(g);
    }
    Ok(m)
}

/// Equiintegrability modulus `omega(h)`: the largest integral of the
/// second-order derivative bound `max_{|alpha|+|beta|=2} |d^alpha d^beta a|`
/// over any window of length `h` along the seeded flow.
pub fn equiintegrability_modulus(
    a: &SymbolExpr,
    h_list: &[f64],
    seeds: &[PhasePoint],
    quad: &QuadControl,
) -> Result<Vec<(f64, f64)>, ClassError> {
    if seeds.is_empty() {
        return Err(ClassError::Flow(FlowError::EmptyEnsemble));
    }
    for &h in h_list {
        if !(h > 0.0 && h <= quad.t_end) {
            return Err(ClassError::InvalidWindow(h));
        }
    }
    let field = HamiltonField::new(a)?;
    let n = a.dim();
    let mut table = DerivativeTable::new(a.clone(), 2);
    let second: Vec<SymbolExpr> = MultiIndex::all_of_order(n, 2)
        .iter()
        .map(|idx| table.get(idx).cloned())
        .collect::<Result<_, _>>()?;
    let mut omega: Vec<(f64, f64)> = h_list.iter().map(|&h| (h, 0.0)).collect();
    let mut scratch = Vec::new();
    for (i, seed) in seeds.iter().enumerate() {
        let tr = flow(&field, seed, quad).map_err(|e| e.at_seed(i))?;
        let mut vals = Vec::with_capacity(tr.times.len());
        for (t, p) in tr.times.iter().zip(&tr.points) {
            let mut v: f64 = 0.0;
            for d in &second {
                v = v.max(libm::fabs(d.eval_with(*t, &p.x, &p.xi, &mut scratch)?));
            }
            vals.push(v);
        }
        let cum = cumulative_trapezoid(&tr.times, &vals);
        let steps = cum.len() - 1;
        let dt = quad.t_end / steps.max(1) as f64;
        for (h, best) in omega.iter_mut() {
            let w = (libm::round(*h / dt) as usize).clamp(1, steps.max(1)).min(steps);
            let window_max = (0..=steps - w).map(|k| cum[k + w] - cum[k]).fold(0.0, f64::max);
            *best = best.max(window_max);
        }
    }
    omega.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(omega)
}

/// Finite ray grid for the ray-integral constant.
#[derive(Debug, Clone, PartialEq)]
pub struct RayGrid {
    pub bases: Vec<Vec<f64>>,
    /// Unit vectors in `R^n`.
    pub directions: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
}

/// Max over the ray grid of `|int_0^R b1(x + r w) . w dr|`, with `b1` given
/// by its `n` components (functions of `x` only). Trapezoid rule with step
/// at most `step` per ray.
pub fn mizohata_constant(field: &[SymbolExpr], rays: &RayGrid, step: f64) -> Result<f64, ClassError> {
    let n = field.len();
    if n == 0 {
        return Err(ClassError::EmptyGrid("field"));
    }
    if field.iter().any(|c| !c.is_position_only() || c.depends_on_time() || c.dim() != n) {
        return Err(ClassError::NotPositionOnly);
    }
    for (name, empty) in [("base", rays.bases.is_empty()), ("direction", rays.directions.is_empty()), ("radius", rays.radii.is_empty())] {
        if empty {
            return Err(ClassError::EmptyGrid(name));
        }
    }
    for (i, w) in rays.directions.iter().enumerate() {
        let norm: f64 = libm::sqrt(w.iter().map(|c| c * c).sum());
        if w.len() != n || libm::fabs(norm - 1.0) > 1e-12 {
            return Err(ClassError::InvalidDirection(i));
        }
    }
    let zeros = alloc::vec![0.0; n];
    let mut scratch = Vec::new();
    let mut point = alloc::vec![0.0; n];
    let mut best: f64 = 0.0;
    let mut ray = 0;
    for (bi, base) in rays.bases.iter().enumerate() {
        for (di, w) in rays.directions.iter().enumerate() {
            for &radius in &rays.radii {
                let wrap = |source: ClassError| ClassError::Ray { ray, base: bi, direction: di, radius, source: Box::new(source) };
                if base.len() != n {
                    return Err(wrap(ClassError::EmptyGrid("base coordinates")));
                }
                let nodes = (libm::ceil(libm::fabs(radius) / step) as usize).max(1);
                let dr = radius / nodes as f64;
                let mut integrand = |r: f64| -> Result<f64, ClassError> {
                    for k in 0..n {
                        point[k] = base[k] + r * w[k];
                    }
                    let mut dot = 0.0;
                    for k in 0..n {
                        dot += field[k].eval_with(0.0, &point, &zeros, &mut scratch)? * w[k];
                    }
                    Ok(dot)
                };
                let mut acc = 0.5 * (integrand(0.0).map_err(wrap)? + integrand(radius).map_err(wrap)?);
                for j in 1..nodes {
                    acc += integrand(j as f64 * dr).map_err(wrap)?;
                }
                best = best.max(libm::fabs(acc * dr));
                ray += 1;
            }
        }
    }
    Ok(best)
}

/// Outcome of the smallness hypothesis `e^{2M} kappa_0 kappa_{4N} << 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallnessCheck {
    pub margin: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

/// Default reading of "much smaller than one".
pub const DEFAULT_SMALLNESS_THRESHOLD: f64 = 0.1;

pub fn smallness_check(report: &SymbolClassReport, big_n: u32, threshold: f64) -> Result<SmallnessCheck, ClassError> {
    let kappa = *report
        .kappa_n
        .get(&(4 * big_n))
        .ok_or(ClassError::MissingConstant("kappa_4N (order cap below 4N)"))?;
    let m = report.m.ok_or(ClassError::MissingConstant("M"))?;
    let margin = libm::exp(2.0 * m) * report.kappa0 * kappa;
    Ok(SmallnessCheck { margin, threshold, satisfied: margin < threshold })
}
