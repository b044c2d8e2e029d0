use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{KernelError, KernelSlice};
use crate::bargmann::PhaseField;
use crate::phase::PhasePoint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Samples below `floor * peak` are ignored.
    pub floor: f64,
    /// Shell width in phase distance; `None` uses `max(dx, dxi)`.
    pub shell_width: Option<f64>,
    /// Shells closer than this to the center are left out of the fit.
    pub core_radius: f64,
    pub min_samples: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { floor: 1e-10, shell_width: None, core_radius: 1.0, min_samples: 50 }
    }
}

/// Power-law envelope `|K| ~ C (1 + d)^(-N)` fitted to shell maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub fitted_constant: f64,
    pub fitted_exponent: f64,
    /// Distance of the largest sample in each fitted shell.
    pub sample_distances: Vec<f64>,
    pub shell_maxima: Vec<f64>,
    /// RMS misfit in log10 divided by the decades of `|K|` the fitted shells span.
    pub residual: f64,
    pub usable_samples: usize,
    /// Decades of `1 + d` covered by the usable samples.
    pub decades: f64,
}

/// Fits the decay of `|field|` away from `center` in the distance
/// `|x - x0| + |xi - xi0|`.
pub fn decay_fit_field(field: &PhaseField, center: &PhasePoint, opts: &FitOptions) -> Result<DecayFit, KernelError> {
    let g = field.grid();
    let width = opts.shell_width.unwrap_or(g.dx().max(g.dxi()));
    if !(width > 0.0) || !(opts.floor >= 0.0) {
        return Err(KernelError::InvalidOptions("shell width must be positive and floor nonnegative"));
    }
    let peak = field.sup_norm();
    let (cx, cxi) = (center.x[0], center.xi[0]);
    // shell index -> (max |K|, distance of that sample)
    let mut shells: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut usable = 0;
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    for j in 0..g.nx() {
        for m in 0..g.nxi() {
            let v = field.get(j, m).norm();
            if peak == 0.0 || v <= opts.floor * peak {
                continue;
            }
            let d = libm::fabs(g.x(j) - cx) + libm::fabs(g.xi(m) - cxi);
            usable += 1;
            dmin = dmin.min(d);
            dmax = dmax.max(d);
            let e = shells.entry(libm::floor(d / width) as u64).or_insert((v, d));
            if v > e.0 {
                *e = (v, d);
            }
        }
    }
    let decades = if usable > 0 { libm::log10(1.0 + dmax) - libm::log10(1.0 + dmin) } else { 0.0 };
    let insufficient = KernelError::InsufficientDecadeRange { samples: usable, min_samples: opts.min_samples, decades };
    if usable < opts.min_samples || decades < 1.0 {
        return Err(insufficient);
    }
    let (sample_distances, shell_maxima): (Vec<f64>, Vec<f64>) =
        shells.values().filter(|(_, d)| *d >= opts.core_radius).map(|(v, d)| (*d, *v)).unzip();
    if sample_distances.len() < 2 {
        return Err(insufficient);
    }
    let lx: Vec<f64> = sample_distances.iter().map(|d| libm::log10(1.0 + d)).collect();
    let ly: Vec<f64> = shell_maxima.iter().map(|v| libm::log10(*v)).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = libm::sqrt(lx.iter().zip(&ly).map(|(x, y)| {
        let r = y - intercept - slope * x;
        r * r
    }).sum::<f64>() / n);
    let span = ly.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ly.iter().copied().fold(f64::INFINITY, f64::min);
    let residual = if span > 0.0 { rms / span } else { rms };
    Ok(DecayFit {
        fitted_constant: libm::pow(10.0, intercept),
        fitted_exponent: -slope,
        sample_distances,
        shell_maxima,
        residual,
        usable_samples: usable,
        decades,
    })
}

/// Decay of a kernel slice away from the flow image of its source.
pub fn decay_fit(slice: &KernelSlice, opts: &FitOptions) -> Result<DecayFit, KernelError> {
    decay_fit_field(&slice.field, &slice.flow_image, opts)
}
