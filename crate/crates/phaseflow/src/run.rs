//! Stage execution and manifest assembly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use phaseflow_core::bargmann::{
    self, coherent_state, cr_residual, edge_status, EdgeStatus, GridSpec, Method, PhaseField, Signal, EDGE_WARN,
};
use phaseflow_core::hamilton::{variational_flow, BilipschitzReport, HamiltonField, StepControl};
use phaseflow_core::phasekernel::{decay_fit, phase_kernel_slice, FitOptions, KernelSlice, SliceOptions};
use phaseflow_core::quantize::{propagate, SYMMETRY_WARN};
use phaseflow_core::symclass::{
    equiintegrability_modulus, mizohata_constant, seed_growth, seed_integrals, smallness_check, ClassError, QuadControl,
    RayGrid, SeedIntegrals, SymbolClassReport,
};
use phaseflow_core::{DerivativeTable, MultiIndex, PhasePoint, SymbolExpr, SIGN_CONVENTION};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bundle::{Artifact, BundleError, BundleWriter};
use crate::config::{load_config, ConfigError, Experiment, Format, RunConfig, TransformMethod};
use crate::format::{fmt_f64, to_csv, to_json};
use crate::svg::Heatmap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    ParseCheck,
    Flow,
    Kappa,
    Transform,
    Propagate,
    Kernel,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ParseCheck => "parse-check",
            Command::Flow => "flow",
            Command::Kappa => "kappa",
            Command::Transform => "transform",
            Command::Propagate => "propagate",
            Command::Kernel => "kernel",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Flow,
    Kappa,
    Transform,
    Propagate,
    Kernel,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Flow => "flow",
            Stage::Kappa => "kappa",
            Stage::Transform => "transform",
            Stage::Propagate => "propagate",
            Stage::Kernel => "kernel",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output.directory`.
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Bundle(#[from] BundleError),
    #[error("cannot start worker pool: {0}")]
    Threads(String),
    #[error("{stage} failed: {message} (bundle: {})", bundle.display())]
    Numerical { stage: &'static str, message: String, bundle: PathBuf },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Numerical { .. } => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub bundle: PathBuf,
    pub artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct DerivativeEntry {
    alpha: Vec<u32>,
    beta: Vec<u32>,
    expr: String,
}

#[derive(Serialize)]
struct SymbolEntry {
    text: String,
    parsed: String,
    derivatives: Vec<DerivativeEntry>,
}

#[derive(Serialize)]
struct ManifestError<'a> {
    stage: &'a str,
    kind: &'a str,
    message: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    status: &'static str,
    sign_convention: &'static str,
    float_format: &'static str,
    constants_label: &'static str,
    stages: Vec<&'static str>,
    config: &'a RunConfig,
    symbols: BTreeMap<&'static str, SymbolEntry>,
    warnings: &'a [String],
    artifacts: Vec<Artifact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ManifestError<'a>>,
}

fn derivative_closure(expr: &SymbolExpr, text: &str, cap: u32) -> Result<SymbolEntry, String> {
    let mut table = DerivativeTable::new(expr.clone(), cap);
    let mut derivatives = Vec::new();
    for idx in MultiIndex::all_in_range(expr.dim(), 0, cap) {
        let d = table.get(&idx).map_err(|e| format!("derivative {idx}: {e}"))?;
        derivatives.push(DerivativeEntry { alpha: idx.alpha.clone(), beta: idx.beta.clone(), expr: d.to_string() });
    }
    Ok(SymbolEntry { text: text.to_string(), parsed: expr.to_string(), derivatives })
}

fn stages_for(cmd: Command, exp: &Experiment) -> Result<Vec<Stage>, ConfigError> {
    let cfg = &exp.config;
    let missing = |section: &str, what: &str| ConfigError {
        file: String::new(),
        location: None,
        path: section.to_string(),
        message: format!("{} requires {what}", cmd.name()),
    };
    let has_seeds = !exp.seeds.is_empty();
    Ok(match cmd {
        Command::ParseCheck => vec![],
        Command::Flow | Command::Kappa => {
            if !has_seeds {
                return Err(missing("flow", "flow.seeds or flow.lattice"));
            }
            vec![if cmd == Command::Flow { Stage::Flow } else { Stage::Kappa }]
        }
        Command::Transform => {
            if cfg.transform.is_none() {
                return Err(missing("transform", "a [transform] section"));
            }
            vec![Stage::Transform]
        }
        Command::Propagate => {
            if cfg.propagate.is_none() {
                return Err(missing("propagate", "a [propagate] section"));
            }
            vec![Stage::Propagate]
        }
        Command::Kernel => {
            if cfg.kernel.is_none() {
                return Err(missing("kernel", "a [kernel] section"));
            }
            vec![Stage::Kernel]
        }
        Command::All => {
            let mut v = Vec::new();
            if has_seeds {
                v.extend([Stage::Flow, Stage::Kappa]);
            }
            if cfg.transform.is_some() {
                v.push(Stage::Transform);
            }
            if cfg.propagate.is_some() {
                v.push(Stage::Propagate);
            }
            if cfg.kernel.is_some() {
                v.push(Stage::Kernel);
            }
            v
        }
    })
}

struct Context<'a> {
    exp: &'a Experiment,
    bundle: BundleWriter,
    warnings: Vec<String>,
}

impl Context<'_> {
    fn write(&mut self, format: Format, rel: &str, bytes: impl FnOnce() -> Vec<u8>) -> Result<(), StageError> {
        if self.bundle.wants(format) {
            self.bundle.write(rel, &bytes())?;
        }
        Ok(())
    }

    fn flow_step(&self) -> StepControl {
        let f = &self.exp.config.flow;
        StepControl { h: f.step, tol: f.tol, blowup: f.blowup, ..StepControl::default() }
    }
}

#[derive(Debug, thiserror::Error)]
enum StageError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("{0}")]
    Numerical(String),
}

fn numerical(e: impl std::fmt::Display) -> StageError {
    StageError::Numerical(e.to_string())
}

/// Loads, validates and runs `cmd`, producing a bundle.
pub fn run(cmd: Command, config_path: &Path, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let exp = load_config(config_path)?;
    let stages = stages_for(cmd, &exp).map_err(|mut e| {
        e.file = config_path.display().to_string();
        e
    })?;
    let mut symbols = BTreeMap::new();
    let cap = exp.config.diagnostics.order_cap;
    let closure_error = |message: String| ConfigError {
        file: config_path.display().to_string(),
        location: None,
        path: "symbols".into(),
        message,
    };
    symbols.insert("a", derivative_closure(&exp.a, &exp.config.symbols.a, cap).map_err(closure_error)?);
    if let (Some(b), Some(text)) = (&exp.b, &exp.config.symbols.b) {
        symbols.insert("b", derivative_closure(b, text, cap).map_err(closure_error)?);
    }

    let target = opts.out.clone().unwrap_or_else(|| PathBuf::from(&exp.config.output.directory));
    let bundle = BundleWriter::create(&target, &exp.config.output.formats)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| RunError::Threads(e.to_string()))?;

    let mut ctx = Context { exp: &exp, bundle, warnings: Vec::new() };
    let mut log = String::new();
    let _ = writeln!(log, "phaseflow {} {} {}", env!("CARGO_PKG_VERSION"), cmd.name(), config_path.display());
    let _ = writeln!(log, "threads: {}", pool.current_num_threads());
    let mut failure: Option<(&'static str, StageError)> = None;
    for &stage in &stages {
        let started = Instant::now();
        let result = pool.install(|| match stage {
            Stage::Flow => flow_stage(&mut ctx),
            Stage::Kappa => kappa_stage(&mut ctx),
            Stage::Transform => transform_stage(&mut ctx),
            Stage::Propagate => propagate_stage(&mut ctx),
            Stage::Kernel => kernel_stage(&mut ctx),
        });
        let _ = writeln!(log, "stage {}: {:.3} s", stage.name(), started.elapsed().as_secs_f64());
        if let Err(e) = result {
            let _ = writeln!(log, "stage {} failed: {e}", stage.name());
            failure = Some((stage.name(), e));
            break;
        }
    }
    for w in &ctx.warnings {
        let _ = writeln!(log, "warning: {w}");
    }

    let Context { bundle, warnings, .. } = ctx;
    let message = failure.as_ref().map(|(_, e)| e.to_string());
    let manifest = Manifest {
        tool: "phaseflow",
        version: env!("CARGO_PKG_VERSION"),
        command: cmd.name(),
        status: if failure.is_some() { "failed" } else { "ok" },
        sign_convention: SIGN_CONVENTION,
        float_format: "17 significant digits ({:.16e})",
        constants_label: "grid lower bound",
        stages: stages.iter().map(|s| s.name()).collect(),
        config: &exp.config,
        symbols,
        warnings: &warnings,
        artifacts: if failure.is_some() { Vec::new() } else { bundle.artifacts() },
        error: failure.as_ref().map(|(stage, e)| ManifestError {
            stage,
            kind: match e {
                StageError::Bundle(_) => "io",
                StageError::Numerical(_) => "numerical",
            },
            message: message.as_deref().unwrap_or_default(),
        }),
    };
    let manifest_bytes = to_json(&manifest);
    match failure {
        None => {
            let artifacts = bundle.artifacts();
            let path = bundle.commit(&manifest_bytes, &log)?;
            Ok(RunSummary { bundle: path, artifacts, warnings })
        }
        Some((_, StageError::Bundle(e))) => {
            let _ = bundle.abort(&manifest_bytes, &log);
            Err(e.into())
        }
        Some((stage, StageError::Numerical(message))) => {
            let path = bundle.abort(&manifest_bytes, &log)?;
            Err(RunError::Numerical { stage, message, bundle: path })
        }
    }
}

fn point_json(p: &PhasePoint) -> Value {
    json!({ "x": p.x, "xi": p.xi })
}

fn coordinate_header(dim: usize) -> Vec<String> {
    let mut h = Vec::with_capacity(2 * dim);
    for prefix in ["x", "xi"] {
        for k in 1..=dim {
            h.push(if dim == 1 { prefix.to_string() } else { format!("{prefix}{k}") });
        }
    }
    h
}

fn flow_stage(ctx: &mut Context<'_>) -> Result<(), StageError> {
    let exp = ctx.exp;
    let f = &exp.config.flow;
    let step = ctx.flow_step();
    let flows = exp
        .seeds
        .par_iter()
        .enumerate()
        .map(|(i, seed)| variational_flow(&exp.a, seed, f.s, f.t_end, &step).map_err(|e| numerical(format!("seed {i}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;

    let dim = exp.a.dim();
    let coords = coordinate_header(dim);
    let mut traj_header = vec!["t".to_string()];
    traj_header.extend(coords.iter().cloned());
    let mut jac_header = vec!["t".to_string()];
    for r in 0..2 * dim {
        for c in 0..2 * dim {
            jac_header.push(format!("j{}_{}", r + 1, c + 1));
        }
    }
    let mut report: Option<BilipschitzReport> = None;
    let mut endpoints = Vec::new();
    for (i, flow) in flows.iter().enumerate() {
        let rows = flow.times.iter().zip(&flow.points).map(|(t, p)| {
            std::iter::once(fmt_f64(*t)).chain(p.x.iter().chain(&p.xi).map(|v| fmt_f64(*v))).collect::<Vec<_>>()
        });
        let header: Vec<&str> = traj_header.iter().map(String::as_str).collect();
        let traj = to_csv(&header, rows);
        ctx.write(Format::Csv, &format!("flow/trajectory_{i:03}.csv"), || traj)?;
        let rows = flow.times.iter().zip(&flow.jac).map(|(t, j)| {
            let mut row = vec![fmt_f64(*t)];
            for r in 0..j.nrows() {
                for c in 0..j.ncols() {
                    row.push(fmt_f64(j[(r, c)]));
                }
            }
            row
        });
        let header: Vec<&str> = jac_header.iter().map(String::as_str).collect();
        let jac = to_csv(&header, rows);
        ctx.write(Format::Csv, &format!("flow/jacobian_{i:03}.csv"), || jac)?;
        let r = BilipschitzReport::from_flow(flow);
        report = Some(match report {
            Some(prev) => prev.merge(r),
            None => r,
        });
        let end = flow.points.last().expect("a trajectory holds its seed");
        endpoints.push(json!({ "seed": point_json(&exp.seeds[i]), "endpoint": point_json(end) }));
    }
    let r = report.expect("flow stage runs with at least one seed");
    if !r.gronwall_holds() {
        ctx.warnings.push(format!("flow: Gronwall bound exceeded at {} stored times", r.gronwall_violations));
    }
    let summary = json!({
        "s": f.s,
        "t_end": f.t_end,
        "seeds": r.seeds,
        "lip_forward": r.lip_forward,
        "lip_inverse": r.lip_inverse,
        "gronwall_margin": r.gronwall_margin,
        "gronwall_violations": r.gronwall_violations,
        "max_det_defect": r.max_det_defect,
        "endpoints": endpoints,
    });
    ctx.write(Format::Json, "flow/bilipschitz.json", || to_json(&summary))
}

fn seed_error(i: usize, e: ClassError) -> StageError {
    match e {
        ClassError::Derivative { index, source, .. } => numerical(format!("seed {i}, index {index}: {source}")),
        other => numerical(format!("seed {i}: {other}")),
    }
}

fn index_cell(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

fn constants_json(map: &BTreeMap<MultiIndex, f64>) -> Value {
    Value::Array(map.iter().map(|(k, v)| json!({ "alpha": k.alpha, "beta": k.beta, "value": v })).collect())
}

fn kappa_stage(ctx: &mut Context<'_>) -> Result<(), StageError> {
    let exp = ctx.exp;
    let d = &exp.config.diagnostics;
    let quad = QuadControl { h: d.step, t_end: d.t_end, blowup: exp.config.flow.blowup };
    let field = HamiltonField::new(&exp.a).map_err(numerical)?;
    let per_seed: Vec<(SeedIntegrals, f64, Vec<(f64, f64)>)> = exp
        .seeds
        .par_iter()
        .enumerate()
        .map(|(i, seed)| {
            let ints = seed_integrals(&exp.a, exp.b.as_ref(), d.order_cap, seed, &quad).map_err(|e| seed_error(i, e))?;
            let m = match &exp.b {
                Some(b) => seed_growth(b, &field, seed, &quad).map_err(|e| seed_error(i, e))?,
                None => 0.0,
            };
            let omega = equiintegrability_modulus(&exp.a, &d.h_list, std::slice::from_ref(seed), &quad)
                .map_err(|e| seed_error(i, e))?;
            Ok((ints, m, omega))
        })
        .collect::<Result<_, StageError>>()?;

    let mut report = SymbolClassReport::from_seed_integrals(d.order_cap, per_seed.iter().map(|p| &p.0));
    report.m = Some(per_seed.iter().map(|p| p.1).fold(0.0, f64::max));
    let mut omega = per_seed[0].2.clone();
    for p in &per_seed[1..] {
        for (acc, (_, w)) in omega.iter_mut().zip(&p.2) {
            acc.1 = acc.1.max(*w);
        }
    }
    report.omega = omega;
    if let Some(rays) = &d.rays {
        let grid = RayGrid { bases: rays.bases.clone(), directions: rays.directions.clone(), radii: rays.radii.clone() };
        report.mizohata = Some(mizohata_constant(&exp.ray_field, &grid, rays.step).map_err(numerical)?);
    }
    let smallness = match d.big_n {
        Some(n) => {
            let check = smallness_check(&report, n, d.threshold).map_err(numerical)?;
            report.smallness_margin = Some(check.margin);
            Some(json!({ "N": n, "margin": check.margin, "threshold": check.threshold, "satisfied": check.satisfied }))
        }
        None => None,
    };

    let kappa_n: serde_json::Map<String, Value> = report.kappa_n.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let doc = json!({
        "label": "grid lower bound",
        "seeds": exp.seeds.len(),
        "t_end": d.t_end,
        "c_a": constants_json(&report.c_a),
        "c_b": constants_json(&report.c_b),
        "kappa0": report.kappa0,
        "kappaN": kappa_n,
        "M": report.m,
        "omega": report.omega.iter().map(|(h, w)| json!({ "h": h, "omega": w })).collect::<Vec<_>>(),
        "mizohata": report.mizohata,
        "margin": report.smallness_margin,
        "smallness": smallness,
    });
    ctx.write(Format::Json, "kappa/report.json", || to_json(&doc))?;
    for (name, map) in [("c_a", &report.c_a), ("c_b", &report.c_b)] {
        let rows = map.iter().map(|(k, v)| vec![index_cell(&k.alpha), index_cell(&k.beta), fmt_f64(*v)]);
        let bytes = to_csv(&["alpha", "beta", "value"], rows);
        ctx.write(Format::Csv, &format!("kappa/{name}.csv"), || bytes)?;
    }
    Ok(())
}

fn line_grid(ctx: &Context<'_>) -> GridSpec {
    ctx.exp.grid.expect("validation requires dim = 1 for grid stages")
}

fn sample_signal(grid: GridSpec, re: &SymbolExpr, im: Option<&SymbolExpr>) -> Result<Signal, StageError> {
    let mut values = Vec::with_capacity(grid.nx());
    for x in grid.xs() {
        let r = re.eval1(0.0, x, 0.0).map_err(|e| numerical(format!("signal at x = {x}: {e}")))?;
        let i = match im {
            Some(im) => im.eval1(0.0, x, 0.0).map_err(|e| numerical(format!("signal at x = {x}: {e}")))?,
            None => 0.0,
        };
        values.push(Complex64::new(r, i));
    }
    Signal::new(grid, values).map_err(numerical)
}

fn signal_csv(s: &Signal) -> Vec<u8> {
    let g = *s.grid();
    to_csv(&["x", "re", "im"], s.values().iter().enumerate().map(|(j, v)| vec![fmt_f64(g.x(j)), fmt_f64(v.re), fmt_f64(v.im)]))
}

fn field_rows<'f>(field: &'f PhaseField, extra: Option<&'f [f64]>) -> impl Iterator<Item = Vec<String>> + 'f {
    let g = *field.grid();
    (0..g.nx()).flat_map(move |j| {
        (0..g.nxi()).map(move |m| {
            let v = field.get(j, m);
            let mut row = vec![fmt_f64(g.x(j)), fmt_f64(g.xi(m)), fmt_f64(v.re), fmt_f64(v.im)];
            if let Some(extra) = extra {
                row.push(fmt_f64(extra[j * g.nxi() + m]));
            }
            row
        })
    })
}

fn heatmap_svg(field: &PhaseField, title: &str, log_decades: Option<f64>, marker: Option<(f64, f64)>) -> Vec<u8> {
    let g = *field.grid();
    let values: Vec<f64> = field.values().iter().map(|v| v.norm()).collect();
    Heatmap {
        title,
        values: &values,
        nx: g.nx(),
        nxi: g.nxi(),
        x_range: (-g.half_width(), g.half_width() - g.dx()),
        xi_range: (-g.xi_half_width(), g.xi_half_width() - g.dxi()),
        log_decades,
        marker,
    }
    .render()
    .into_bytes()
}

fn edge_label(status: EdgeStatus) -> &'static str {
    match status {
        EdgeStatus::Clean => "clean",
        EdgeStatus::Warn => "warn",
        EdgeStatus::Fail => "fail",
    }
}

fn transform_stage(ctx: &mut Context<'_>) -> Result<(), StageError> {
    let exp = ctx.exp;
    let cfg = exp.config.transform.as_ref().expect("stage selected only with a transform section");
    let (re, im) = exp.transform_signal.as_ref().expect("validated with the section");
    let grid = line_grid(ctx);
    let f = sample_signal(grid, re, im.as_ref())?;
    let input_edges = f.check_edges().map_err(numerical)?;
    if input_edges == EdgeStatus::Warn {
        ctx.warnings.push(format!("transform: input edge ratio {:e}", f.edge_ratio()));
    }
    let method = match cfg.method {
        TransformMethod::Fft => Method::Fft,
        TransformMethod::Direct => Method::Direct,
    };
    let v = bargmann::forward(&f, method).map_err(numerical)?;
    let back = bargmann::inverse_unchecked(&v, method);
    let cr = cr_residual(&v);
    let (pos_edge, freq_edge) = v.edge_ratios();
    if edge_status(pos_edge, EDGE_WARN) == EdgeStatus::Warn || edge_status(freq_edge, bargmann::FREQUENCY_EDGE_WARN) == EdgeStatus::Warn {
        ctx.warnings.push(format!("transform: field edge ratios {pos_edge:e} (x), {freq_edge:e} (xi)"));
    }
    let summary = json!({
        "signal_norm": f.norm(),
        "field_norm": v.norm(),
        "isometry_defect": (v.norm() / f.norm() - 1.0).abs(),
        "inversion_error": back.relative_error(&f),
        "cr_residual_sup": cr.sup_norm,
        "cr_residual_rel": cr.rel_norm,
        "input_edge": edge_label(input_edges),
        "field_edge_ratio_x": pos_edge,
        "field_edge_ratio_xi": freq_edge,
    });
    ctx.write(Format::Json, "transform/summary.json", || to_json(&summary))?;
    let sig = signal_csv(&f);
    ctx.write(Format::Csv, "transform/signal.csv", || sig)?;
    ctx.write(Format::Csv, "transform/field.csv", || to_csv(&["x", "xi", "re", "im"], field_rows(&v, None)))?;
    ctx.write(Format::Svg, "transform/field.svg", || heatmap_svg(&v, "|Tf|", None, None))
}

fn propagate_stage(ctx: &mut Context<'_>) -> Result<(), StageError> {
    let exp = ctx.exp;
    let cfg = exp.config.propagate.as_ref().expect("stage selected only with a propagate section");
    let grid = line_grid(ctx);
    let u0 = match (&cfg.coherent, &exp.propagate_signal) {
        (Some([y, eta]), _) => coherent_state(*y, *eta, grid).map_err(numerical)?,
        (None, Some(sig)) => sample_signal(grid, sig, None)?,
        (None, None) => unreachable!("validation requires an initial state"),
    };
    let trace = propagate(&exp.a, exp.b.as_ref(), &u0, cfg.s, cfg.t_end, cfg.nsteps).map_err(numerical)?;
    if trace.symmetry_defect > SYMMETRY_WARN {
        ctx.warnings.push(format!("propagate: operator symmetry defect {:e} before symmetrization", trace.symmetry_defect));
    }
    let norms = to_csv(&["t", "norm"], trace.times.iter().zip(&trace.norms).map(|(t, n)| vec![fmt_f64(*t), fmt_f64(*n)]));
    ctx.write(Format::Csv, "propagate/norms.csv", || norms)?;
    if let Some(every) = cfg.snapshot_every {
        let last = trace.states.len() - 1;
        for (k, state) in trace.states.iter().enumerate() {
            if k % every == 0 || k == last {
                let bytes = signal_csv(state);
                ctx.write(Format::Csv, &format!("propagate/state_{k:05}.csv"), || bytes)?;
            }
        }
    }
    let summary = json!({
        "s": cfg.s,
        "t_end": cfg.t_end,
        "nsteps": cfg.nsteps,
        "initial_norm": trace.norms[0],
        "final_norm": trace.norms[trace.norms.len() - 1],
        "norm_drift": trace.norm_drift(),
        "symmetry_defect": trace.symmetry_defect,
        "final_edge_ratio": trace.last().edge_ratio(),
    });
    ctx.write(Format::Json, "propagate/summary.json", || to_json(&summary))
}

fn kernel_stage(ctx: &mut Context<'_>) -> Result<(), StageError> {
    let exp = ctx.exp;
    let cfg = exp.config.kernel.as_ref().expect("stage selected only with a kernel section");
    let grid = line_grid(ctx);
    let slice_opts = SliceOptions { nsteps: cfg.nsteps, flow: ctx.flow_step(), margin: cfg.margin };
    let fit_opts = FitOptions {
        floor: cfg.fit.floor,
        shell_width: cfg.fit.shell_width,
        core_radius: cfg.fit.core_radius,
        min_samples: cfg.fit.min_samples,
    };
    let jobs: Vec<(usize, usize)> = (0..cfg.sources.len()).flat_map(|i| (0..cfg.times.len()).map(move |k| (i, k))).collect();
    let results = jobs
        .par_iter()
        .map(|&(i, k)| {
            let [y, eta] = cfg.sources[i];
            let t = cfg.times[k];
            let label = |e: &dyn std::fmt::Display| numerical(format!("source {i} ({y}, {eta}), t = {t}: {e}"));
            let slice = phase_kernel_slice(&exp.a, exp.b.as_ref(), &PhasePoint::new1(y, eta), cfg.s, t, grid, &slice_opts)
                .map_err(|e| label(&e))?;
            let fit = decay_fit(&slice, &fit_opts).map_err(|e| label(&e))?;
            Ok((slice, fit))
        })
        .collect::<Result<Vec<_>, StageError>>()?;

    let mut summary_rows = Vec::new();
    for (&(i, k), (slice, fit)) in jobs.iter().zip(&results) {
        let tag = format!("{i:02}_{k:02}");
        let within = slice.peak_within(cfg.peak_radius);
        if !within {
            ctx.warnings.push(format!(
                "kernel {tag}: peak is more than {} cells from the flow image (offset {:?})",
                cfg.peak_radius,
                slice.peak_offset_cells()
            ));
        }
        let peak = slice.peak_point();
        let (off_x, off_xi) = slice.peak_offset_cells();
        let doc = json!({
            "source": point_json(&slice.source),
            "s": slice.s,
            "t": slice.t,
            "flow_image": point_json(&slice.flow_image),
            "peak": point_json(&peak),
            "peak_offset_cells": [off_x, off_xi],
            "peak_within_radius": within,
            "C": fit.fitted_constant,
            "N_hat": fit.fitted_exponent,
            "residual": fit.residual,
            "usable_samples": fit.usable_samples,
            "decades": fit.decades,
            "shells": fit.sample_distances.iter().zip(&fit.shell_maxima).map(|(d, m)| json!([d, m])).collect::<Vec<_>>(),
        });
        ctx.write(Format::Json, &format!("kernel/fit_{tag}.json"), || to_json(&doc))?;
        write_slice(ctx, slice, &tag)?;
        summary_rows.push(vec![
            i.to_string(),
            fmt_f64(slice.source.x[0]),
            fmt_f64(slice.source.xi[0]),
            fmt_f64(slice.t),
            fmt_f64(slice.flow_image.x[0]),
            fmt_f64(slice.flow_image.xi[0]),
            fmt_f64(peak.x[0]),
            fmt_f64(peak.xi[0]),
            fmt_f64(fit.fitted_constant),
            fmt_f64(fit.fitted_exponent),
            fmt_f64(fit.residual),
        ]);
    }
    let header = ["source", "y", "eta", "t", "flow_x", "flow_xi", "peak_x", "peak_xi", "C", "N_hat", "residual"];
    let bytes = to_csv(&header, summary_rows);
    ctx.write(Format::Csv, "kernel/summary.csv", || bytes)
}

fn write_slice(ctx: &mut Context<'_>, slice: &KernelSlice, tag: &str) -> Result<(), StageError> {
    let dist = slice.distances();
    ctx.write(Format::Csv, &format!("kernel/slice_{tag}.csv"), || {
        to_csv(&["x", "xi", "re", "im", "dist_to_flow_image"], field_rows(&slice.field, Some(&dist)))
    })?;
    let title = format!("log10 |K|, source ({}, {}), t = {}", slice.source.x[0], slice.source.xi[0], slice.t);
    let marker = (slice.flow_image.x[0], slice.flow_image.xi[0]);
    ctx.write(Format::Svg, &format!("kernel/slice_{tag}.svg"), || heatmap_svg(&slice.field, &title, Some(10.0), Some(marker)))
}
