//! Run configuration: TOML schema, defaults and validation.
//!
//! Validation happens before any computation. Every error carries the
//! dotted key path and, when it can be found, the line and column of the
//! offending value in the config file.

use std::fmt;
use std::path::Path;

use phaseflow_core::bargmann::{GridSpec, COHERENT_MARGIN};
use phaseflow_core::{PhasePoint, SymbolError, SymbolExpr};
use serde::{Deserialize, Serialize};

const MAX_SEEDS: usize = 10_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub symbols: SymbolsConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagate: Option<PropagateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolsConfig {
    pub a: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<String>,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub half_width: f64,
    pub nx: usize,
    pub xi_half_width: f64,
    pub nxi: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { half_width: 12.0, nx: 256, xi_half_width: 12.0, nxi: 256 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub s: f64,
    pub t_end: f64,
    pub step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    pub blowup: f64,
    /// Explicit seeds as `[x_1, .., x_n, xi_1, .., xi_n]`.
    pub seeds: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeConfig>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { s: 0.0, t_end: 1.0, step: 1e-3, tol: None, blowup: 1e8, seeds: Vec::new(), lattice: None }
    }
}

/// Uniform product lattice over every position and frequency coordinate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub x: [f64; 2],
    pub xi: [f64; 2],
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub order_cap: u32,
    /// Decay order for the smallness check; the check is skipped when absent.
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub big_n: Option<u32>,
    pub h_list: Vec<f64>,
    pub threshold: f64,
    pub t_end: f64,
    pub step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rays: Option<RayConfig>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            order_cap: 8,
            big_n: None,
            h_list: vec![0.1, 0.25, 0.5],
            threshold: phaseflow_core::symclass::DEFAULT_SMALLNESS_THRESHOLD,
            t_end: 1.0,
            step: 1e-3,
            rays: None,
        }
    }
}

/// Ray grid for the ray-integral constant of a position-only vector field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayConfig {
    pub field: Vec<String>,
    pub bases: Vec<Vec<f64>>,
    pub directions: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    #[serde(default = "default_ray_step")]
    pub step: f64,
}

fn default_ray_step() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformMethod {
    Fft,
    Direct,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    /// Real part of the input signal, an expression in `x`.
    pub signal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_imag: Option<String>,
    #[serde(default = "default_method")]
    pub method: TransformMethod,
}

fn default_method() -> TransformMethod {
    TransformMethod::Fft
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagateConfig {
    /// Coherent state centre `[y, eta]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherent: Option<[f64; 2]>,
    /// Initial signal as an expression in `x`, instead of a coherent state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<String>,
    #[serde(default)]
    pub s: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_nsteps")]
    pub nsteps: usize,
    /// Write the state every this many steps; no snapshots when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
}

fn default_t_end() -> f64 {
    1.0
}

fn default_nsteps() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub sources: Vec<[f64; 2]>,
    pub times: Vec<f64>,
    #[serde(default)]
    pub s: f64,
    #[serde(default = "default_nsteps")]
    pub nsteps: usize,
    /// Allowed distance, in grid cells, between the peak and the flow image.
    #[serde(default = "default_peak_radius")]
    pub peak_radius: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub fit: FitConfig,
}

fn default_peak_radius() -> f64 {
    3.0
}

fn default_margin() -> f64 {
    COHERENT_MARGIN
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shell_width: Option<f64>,
    pub core_radius: f64,
    pub min_samples: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        let d = phaseflow_core::phasekernel::FitOptions::default();
        Self { floor: d.floor, shell_width: d.shell_width, core_radius: d.core_radius, min_samples: d.min_samples }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: "phaseflow-out".into(), formats: vec![Format::Csv, Format::Json, Format::Svg] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub file: String,
    pub location: Option<Location>,
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file)?;
        if let Some(loc) = self.location {
            write!(f, ":{}:{}", loc.line, loc.column)?;
        }
        if !self.path.is_empty() {
            write!(f, ": {}", self.path)?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Everything a run needs, parsed and checked.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub a: SymbolExpr,
    pub b: Option<SymbolExpr>,
    pub seeds: Vec<PhasePoint>,
    /// Present when the symbols are one-dimensional.
    pub grid: Option<GridSpec>,
    pub ray_field: Vec<SymbolExpr>,
    pub transform_signal: Option<(SymbolExpr, Option<SymbolExpr>)>,
    pub propagate_signal: Option<SymbolExpr>,
}

#[derive(Debug, Clone, Copy)]
enum Seg<'a> {
    Key(&'a str),
    Index(usize),
}

fn path_string(path: &[Seg<'_>]) -> String {
    let mut out = String::new();
    for seg in path {
        match seg {
            Seg::Key(k) => {
                if !out.is_empty() {
                    out.push('.');
                }
                out.push_str(k);
            }
            Seg::Index(i) => out.push_str(&format!("[{i}]")),
        }
    }
    out
}

fn line_col(text: &str, offset: usize) -> Location {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |nl| offset - nl - 1) + 1;
    Location { line, column }
}

struct Checker<'t> {
    file: String,
    text: &'t str,
    doc: Option<toml_edit::ImDocument<String>>,
}

impl<'t> Checker<'t> {
    fn span_of(&self, path: &[Seg<'_>]) -> Option<std::ops::Range<usize>> {
        enum Node<'d> {
            Item(&'d toml_edit::Item),
            Value(&'d toml_edit::Value),
        }
        let doc = self.doc.as_ref()?;
        let mut node = Node::Item(doc.as_item());
        let mut span = None;
        for seg in path {
            node = match (seg, node) {
                (Seg::Key(k), Node::Item(item)) => {
                    let (key, next) = item.as_table_like()?.get_key_value(k)?;
                    span = next.span().or_else(|| key.span());
                    Node::Item(next)
                }
                (Seg::Key(k), Node::Value(v)) => {
                    let (key, next) = v.as_inline_table()?.get_key_value(k)?;
                    span = next.span().or_else(|| key.span());
                    Node::Item(next)
                }
                (Seg::Index(i), Node::Item(item)) => {
                    let v = item.as_array()?.get(*i)?;
                    span = v.span();
                    Node::Value(v)
                }
                (Seg::Index(i), Node::Value(v)) => {
                    let v = v.as_array()?.get(*i)?;
                    span = v.span();
                    Node::Value(v)
                }
            };
        }
        span
    }

    fn error_at(&self, path: &[Seg<'_>], message: impl Into<String>) -> ConfigError {
        let location = self.span_of(path).map(|r| line_col(self.text, r.start));
        ConfigError { file: self.file.clone(), location, path: path_string(path), message: message.into() }
    }

    fn symbol(&self, path: &[Seg<'_>], text: &str, dim: usize) -> Result<SymbolExpr, ConfigError> {
        SymbolExpr::parse(text, dim).map_err(|e| self.symbol_error(path, &e))
    }

    fn symbol_error(&self, path: &[Seg<'_>], e: &SymbolError) -> ConfigError {
        let offset = match e {
            SymbolError::Syntax { offset, .. }
            | SymbolError::UnknownIdentifier { offset, .. }
            | SymbolError::DimensionMismatch { offset, .. } => Some(*offset),
            _ => None,
        };
        let mut err = self.error_at(path, e.to_string());
        // point inside the quoted string
        if let (Some(off), Some(span)) = (offset, self.span_of(path)) {
            err.location = Some(line_col(self.text, span.start + 1 + off));
        }
        err
    }

    fn signal(&self, path: &[Seg<'_>], text: &str) -> Result<SymbolExpr, ConfigError> {
        let expr = self.symbol(path, text, 1)?;
        if !expr.is_position_only() || expr.depends_on_time() {
            return Err(self.error_at(path, "signal must be an expression in x only"));
        }
        Ok(expr)
    }

    fn positive(&self, path: &[Seg<'_>], v: f64) -> Result<(), ConfigError> {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(self.error_at(path, format!("must be positive and finite, got {v}")))
        }
    }

    fn finite(&self, path: &[Seg<'_>], v: f64) -> Result<(), ConfigError> {
        if v.is_finite() {
            Ok(())
        } else {
            Err(self.error_at(path, format!("must be finite, got {v}")))
        }
    }
}

/// Parses and validates a config file's text. `file` is only used in messages.
pub fn parse_config(file: &str, text: &str) -> Result<Experiment, ConfigError> {
    let doc = toml_edit::ImDocument::parse(text.to_string()).ok();
    let ck = Checker { file: file.to_string(), text, doc };
    let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError {
        file: file.to_string(),
        location: e.span().map(|r| line_col(text, r.start)),
        path: String::new(),
        message: e.message().trim().replace('\n', "; "),
    })?;
    validate(&ck, config)
}

pub fn load_config(path: &Path) -> Result<Experiment, ConfigError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        file: file.clone(),
        location: None,
        path: String::new(),
        message: format!("cannot read config: {e}"),
    })?;
    parse_config(&file, &text)
}

fn validate(ck: &Checker<'_>, config: RunConfig) -> Result<Experiment, ConfigError> {
    use Seg::{Index, Key};
    let sym = &config.symbols;
    let dim = sym.dim;
    if dim == 0 {
        return Err(ck.error_at(&[Key("symbols"), Key("dim")], "dimension must be at least 1"));
    }
    let a = ck.symbol(&[Key("symbols"), Key("a")], &sym.a, dim)?;
    let b = match &sym.b {
        Some(text) => Some(ck.symbol(&[Key("symbols"), Key("b")], text, dim)?),
        None => None,
    };

    let g = &config.grid;
    let grid = if dim == 1 {
        let grid = GridSpec::new(g.half_width, g.nx, g.xi_half_width, g.nxi).map_err(|e| {
            let field = if !(g.half_width.is_finite() && g.half_width > 0.0) {
                "half_width"
            } else if !(g.xi_half_width.is_finite() && g.xi_half_width > 0.0) {
                "xi_half_width"
            } else if g.nx < 8 || !g.nx.is_power_of_two() {
                "nx"
            } else {
                "nxi"
            };
            ck.error_at(&[Key("grid"), Key(field)], e.to_string())
        })?;
        Some(grid)
    } else {
        None
    };

    let f = &config.flow;
    ck.finite(&[Key("flow"), Key("s")], f.s)?;
    ck.finite(&[Key("flow"), Key("t_end")], f.t_end)?;
    ck.positive(&[Key("flow"), Key("step")], f.step)?;
    ck.positive(&[Key("flow"), Key("blowup")], f.blowup)?;
    if let Some(tol) = f.tol {
        ck.positive(&[Key("flow"), Key("tol")], tol)?;
    }
    let mut seeds = Vec::new();
    for (i, s) in f.seeds.iter().enumerate() {
        let path = [Key("flow"), Key("seeds"), Index(i)];
        if s.len() != 2 * dim {
            return Err(ck.error_at(&path, format!("seed needs {} coordinates (x then xi), got {}", 2 * dim, s.len())));
        }
        if let Some(bad) = s.iter().find(|c| !c.is_finite() || c.abs() >= f.blowup) {
            return Err(ck.error_at(&path, format!("coordinate {bad} is outside the blowup bound {}", f.blowup)));
        }
        seeds.push(PhasePoint::new(s[..dim].to_vec(), s[dim..].to_vec()));
    }
    if let Some(lat) = &f.lattice {
        let path = [Key("flow"), Key("lattice")];
        for (name, r) in [("x", lat.x), ("xi", lat.xi)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(ck.error_at(&[Key("flow"), Key("lattice"), Key(name)], "range must be [lo, hi] with lo <= hi"));
            }
        }
        let total = u32::try_from(2 * dim).ok().and_then(|e| lat.points.checked_pow(e));
        match total {
            Some(n) if lat.points >= 1 && n <= MAX_SEEDS => {}
            _ => return Err(ck.error_at(&path, format!("lattice must have between 1 and {MAX_SEEDS} points in total"))),
        }
        seeds.extend(lattice_points(lat, dim));
    }

    let d = &config.diagnostics;
    if d.order_cap < 2 {
        return Err(ck.error_at(&[Key("diagnostics"), Key("order_cap")], "order cap must be at least 2"));
    }
    if let Some(n) = d.big_n {
        if n == 0 || n.checked_mul(4).map_or(true, |k| k > d.order_cap) {
            return Err(ck.error_at(
                &[Key("diagnostics"), Key("N")],
                format!("smallness check needs 1 <= N and 4N <= order_cap = {}", d.order_cap),
            ));
        }
    }
    ck.positive(&[Key("diagnostics"), Key("t_end")], d.t_end)?;
    ck.positive(&[Key("diagnostics"), Key("step")], d.step)?;
    ck.positive(&[Key("diagnostics"), Key("threshold")], d.threshold)?;
    for (i, &h) in d.h_list.iter().enumerate() {
        if !(h > 0.0 && h <= d.t_end) {
            return Err(ck.error_at(&[Key("diagnostics"), Key("h_list"), Index(i)], format!("window {h} is outside (0, t_end]")));
        }
    }
    let mut ray_field = Vec::new();
    if let Some(r) = &d.rays {
        let base = [Key("diagnostics"), Key("rays")];
        if r.field.len() != dim {
            return Err(ck.error_at(&[base[0], base[1], Key("field")], format!("field needs {dim} components")));
        }
        for (i, text) in r.field.iter().enumerate() {
            let path = [base[0], base[1], Key("field"), Index(i)];
            let e = ck.symbol(&path, text, dim)?;
            if !e.is_position_only() || e.depends_on_time() {
                return Err(ck.error_at(&path, "ray field components must depend on x only"));
            }
            ray_field.push(e);
        }
        for (name, list) in [("bases", &r.bases), ("directions", &r.directions)] {
            if list.is_empty() {
                return Err(ck.error_at(&[base[0], base[1], Key(name)], "must not be empty"));
            }
            for (i, v) in list.iter().enumerate() {
                if v.len() != dim || v.iter().any(|c| !c.is_finite()) {
                    return Err(ck.error_at(&[base[0], base[1], Key(name), Index(i)], format!("needs {dim} finite coordinates")));
                }
            }
        }
        for (i, w) in r.directions.iter().enumerate() {
            let norm = w.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(ck.error_at(&[base[0], base[1], Key("directions"), Index(i)], format!("not a unit vector (norm {norm})")));
            }
        }
        if r.radii.is_empty() {
            return Err(ck.error_at(&[base[0], base[1], Key("radii")], "must not be empty"));
        }
        for (i, &rad) in r.radii.iter().enumerate() {
            ck.positive(&[base[0], base[1], Key("radii"), Index(i)], rad)?;
        }
        ck.positive(&[base[0], base[1], Key("step")], r.step)?;
    }

    let needs_line = |section: &'static str| -> Result<GridSpec, ConfigError> {
        grid.ok_or_else(|| ck.error_at(&[Key(section)], format!("{section} needs one-dimensional symbols (dim = 1)")))
    };

    let transform_signal = match &config.transform {
        Some(t) => {
            needs_line("transform")?;
            let re = ck.signal(&[Key("transform"), Key("signal")], &t.signal)?;
            let im = match &t.signal_imag {
                Some(s) => Some(ck.signal(&[Key("transform"), Key("signal_imag")], s)?),
                None => None,
            };
            Some((re, im))
        }
        None => None,
    };

    let propagate_signal = match &config.propagate {
        Some(p) => {
            let grid = needs_line("propagate")?;
            ck.finite(&[Key("propagate"), Key("s")], p.s)?;
            ck.finite(&[Key("propagate"), Key("t_end")], p.t_end)?;
            if p.nsteps == 0 {
                return Err(ck.error_at(&[Key("propagate"), Key("nsteps")], "needs at least one step"));
            }
            if p.snapshot_every == Some(0) {
                return Err(ck.error_at(&[Key("propagate"), Key("snapshot_every")], "must be at least 1"));
            }
            match (&p.coherent, &p.signal) {
                (Some(c), None) => {
                    in_window(ck, &[Key("propagate"), Key("coherent")], c, &grid, COHERENT_MARGIN)?;
                    None
                }
                (None, Some(s)) => Some(ck.signal(&[Key("propagate"), Key("signal")], s)?),
                _ => return Err(ck.error_at(&[Key("propagate")], "exactly one of coherent or signal is required")),
            }
        }
        None => None,
    };

    if let Some(k) = &config.kernel {
        let grid = needs_line("kernel")?;
        if k.sources.is_empty() {
            return Err(ck.error_at(&[Key("kernel"), Key("sources")], "needs at least one source"));
        }
        if k.times.is_empty() {
            return Err(ck.error_at(&[Key("kernel"), Key("times")], "needs at least one time"));
        }
        if !(k.margin.is_finite() && k.margin >= 0.0) {
            return Err(ck.error_at(&[Key("kernel"), Key("margin")], "must be finite and non-negative"));
        }
        for (i, src) in k.sources.iter().enumerate() {
            in_window(ck, &[Key("kernel"), Key("sources"), Index(i)], src, &grid, k.margin)?;
        }
        for (i, &t) in k.times.iter().enumerate() {
            ck.finite(&[Key("kernel"), Key("times"), Index(i)], t)?;
        }
        ck.finite(&[Key("kernel"), Key("s")], k.s)?;
        if k.nsteps == 0 {
            return Err(ck.error_at(&[Key("kernel"), Key("nsteps")], "needs at least one step"));
        }
        ck.positive(&[Key("kernel"), Key("peak_radius")], k.peak_radius)?;
        ck.positive(&[Key("kernel"), Key("fit"), Key("floor")], k.fit.floor)?;
        if let Some(w) = k.fit.shell_width {
            ck.positive(&[Key("kernel"), Key("fit"), Key("shell_width")], w)?;
        }
        if !(k.fit.core_radius.is_finite() && k.fit.core_radius >= 0.0) {
            return Err(ck.error_at(&[Key("kernel"), Key("fit"), Key("core_radius")], "must be finite and non-negative"));
        }
        if k.fit.min_samples < 2 {
            return Err(ck.error_at(&[Key("kernel"), Key("fit"), Key("min_samples")], "must be at least 2"));
        }
    }

    if config.output.directory.trim().is_empty() {
        return Err(ck.error_at(&[Key("output"), Key("directory")], "must not be empty"));
    }

    Ok(Experiment { config, a, b, seeds, grid, ray_field, transform_signal, propagate_signal })
}

fn in_window(ck: &Checker<'_>, path: &[Seg<'_>], p: &[f64; 2], grid: &GridSpec, margin: f64) -> Result<(), ConfigError> {
    let ok = |c: f64, w: f64| c.is_finite() && c.abs() + margin <= w;
    if ok(p[0], grid.half_width()) && ok(p[1], grid.xi_half_width()) {
        Ok(())
    } else {
        Err(ck.error_at(
            path,
            format!("point ({}, {}) must stay {margin} inside the window [-{}, {}] x [-{}, {}]", p[0], p[1], grid.half_width(), grid.half_width(), grid.xi_half_width(), grid.xi_half_width()),
        ))
    }
}

fn lattice_points(lat: &LatticeConfig, dim: usize) -> Vec<PhasePoint> {
    let axis = |r: [f64; 2]| -> Vec<f64> {
        if lat.points == 1 {
            return vec![0.5 * (r[0] + r[1])];
        }
        let step = (r[1] - r[0]) / (lat.points - 1) as f64;
        (0..lat.points).map(|k| r[0] + k as f64 * step).collect()
    };
    let (xs, xis) = (axis(lat.x), axis(lat.xi));
    let coords = 2 * dim;
    let total = lat.points.pow(coords as u32);
    (0..total)
        .map(|mut k| {
            let mut z = vec![0.0; coords];
            for c in (0..coords).rev() {
                let i = k % lat.points;
                k /= lat.points;
                z[c] = if c < dim { xs[i] } else { xis[i] };
            }
            PhasePoint::from_state(&z)
        })
        .collect()
}
