use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use super::*;
use crate::bargmann::{
    coherent_state, forward_at, forward_unchecked, inverse_unchecked, reproducing_kernel, transform_constant, GridSpec, Method,
    PhaseField,
};
use crate::hamilton::StepControl;
use crate::phase::PhasePoint;
use crate::quantize::weyl_matrix;
use crate::symbol::SymbolExpr;
use crate::symclass::{growth_constant_m, kappa_constants, QuadControl};

fn sym(text: &str) -> SymbolExpr {
    SymbolExpr::parse(text, 1).unwrap()
}

fn pt(x: f64, xi: f64) -> PhasePoint {
    PhasePoint::new1(x, xi)
}

fn slice(a: &str, source: PhasePoint, t: f64) -> KernelSlice {
    phase_kernel_slice(&sym(a), None, &source, 0.0, t, GridSpec::default(), &SliceOptions::default()).unwrap()
}

#[test]
fn slice_at_the_initial_time_is_the_reproducing_kernel() {
    let k = slice("xi^2/2", pt(1.0, -2.0), 0.0);
    let g = k.grid();
    let peak = k.field.sup_norm();
    for j in 0..g.nx() {
        for m in 0..g.nxi() {
            let got = k.field.get(j, m);
            if got.norm() > 1e-6 * peak {
                let expect = reproducing_kernel(g.x(j), g.xi(m), 1.0, -2.0);
                assert!((got - expect).norm() / expect.norm() < 1e-4);
            }
        }
    }
    assert_eq!(k.flow_image, pt(1.0, -2.0));
}

#[test]
fn free_flow_moves_the_peak() {
    let k = slice("xi^2/2", pt(0.0, 2.0), 1.0);
    assert!((k.flow_image.x[0] - 2.0).abs() < 1e-12 && (k.flow_image.xi[0] - 2.0).abs() < 1e-12);
    assert!(k.peak_within(1.0), "{:?}", k.peak_offset_cells());
}

#[test]
fn oscillator_rotates_the_peak() {
    let k = slice("(x^2+xi^2)/2", pt(1.0, 0.0), FRAC_PI_2);
    assert!(k.flow_image.x[0].abs() < 1e-8 && (k.flow_image.xi[0] + 1.0).abs() < 1e-8);
    assert!(k.peak_within(1.0), "{:?}", k.peak_offset_cells());
}

#[test]
fn slice_rejects_sources_near_the_edge() {
    let g = GridSpec::default();
    let opts = SliceOptions::default();
    let err = phase_kernel_slice(&sym("xi"), None, &pt(9.0, 0.0), 0.0, 1.0, g, &opts).unwrap_err();
    assert!(matches!(err, KernelError::OutOfWindow { what: "source", .. }));
    // the free flow carries (5, 4) to (9, 4) at t = 1
    let err = phase_kernel_slice(&sym("xi^2/2"), None, &pt(5.0, 4.0), 0.0, 1.0, g, &opts).unwrap_err();
    assert!(matches!(err, KernelError::OutOfWindow { what: "flow image", .. }));
}

#[test]
fn gaussian_decays_faster_than_any_fitted_power() {
    let fit = decay_fit(&slice("xi^2/2", pt(0.0, 0.0), 0.0), &FitOptions::default()).unwrap();
    assert!(fit.fitted_exponent > 10.0, "{}", fit.fitted_exponent);
    assert!(fit.residual < 0.5);
    assert!(fit.usable_samples >= 50 && fit.decades >= 1.0);
    assert_eq!(fit.sample_distances.len(), fit.shell_maxima.len());
}

#[test]
fn flat_field_has_zero_exponent() {
    let g = GridSpec::default();
    let ones = PhaseField::from_fn(g, |_, _| Complex64::new(1.0, 0.0)).unwrap();
    let fit = decay_fit_field(&ones, &pt(0.0, 0.0), &FitOptions::default()).unwrap();
    assert!(fit.fitted_exponent.abs() < 1e-12);
    assert!((fit.fitted_constant - 1.0).abs() < 1e-12);
    assert_eq!(fit.residual, 0.0);
}

#[test]
fn free_evolution_decays_at_least_quartically() {
    let fit = decay_fit(&slice("xi^2/2", pt(0.0, 2.0), 1.0), &FitOptions::default()).unwrap();
    assert!(fit.fitted_exponent >= 4.0, "{}", fit.fitted_exponent);
    assert!(fit.residual < 0.5, "{}", fit.residual);
}

#[test]
fn fit_needs_a_decade_of_samples() {
    let g = GridSpec::default();
    let spike = PhaseField::from_fn(g, |x, xi| Complex64::new(libm::exp(-40.0 * (x * x + xi * xi)), 0.0)).unwrap();
    let err = decay_fit_field(&spike, &pt(0.0, 0.0), &FitOptions::default()).unwrap_err();
    assert!(matches!(err, KernelError::InsufficientDecadeRange { .. }), "{err:?}");
}

#[test]
fn unit_symbol_kernel_is_the_reproducing_kernel() {
    let quad = KqQuad::default();
    let probes = vec![(pt(0.0, 0.0), pt(0.0, 0.0)), (pt(0.0, 0.0), pt(4.0, 0.0)), (pt(1.0, -1.0), pt(0.5, 2.0))];
    let k = kq_kernel(&sym("1"), &probes, &quad).unwrap();
    let diag = 1.0 / (2.0 * PI);
    assert!((k[0] - Complex64::new(diag, 0.0)).norm() / diag < 1e-10);
    assert!((k[1].norm() - libm::exp(-4.0) * diag).abs() / (libm::exp(-4.0) * diag) < 1e-4);
    for (v, (p, p1)) in k.iter().zip(&probes) {
        let expect = reproducing_kernel(p.x[0], p.xi[0], p1.x[0], p1.xi[0]);
        assert!((v - expect).norm() / expect.norm() < 1e-8);
    }
}

#[test]
fn unit_symbol_kernel_matches_the_discrete_transform_pair() {
    let g = GridSpec::default();
    let (j0, m0) = (128, 128);
    let mut delta = vec![Complex64::new(0.0, 0.0); g.nx() * g.nxi()];
    delta[j0 * g.nxi() + m0] = Complex64::new(1.0 / (g.dx() * g.dxi()), 0.0);
    let tt = forward_unchecked(&inverse_unchecked(&PhaseField::new(g, delta).unwrap(), Method::Fft), Method::Fft);
    let k = kq_kernel(&sym("1"), &[(pt(0.0, 0.0), pt(0.0, 0.0))], &KqQuad::default()).unwrap();
    assert!((k[0] / tt.get(j0, m0) - Complex64::new(1.0, 0.0)).norm() < 1e-4);
}

#[test]
fn kernel_quadrature_agrees_with_the_weyl_matrix_route() {
    let g = GridSpec::default();
    let q = sym("x*xi + 0.3*sin(x) - xi^2/4");
    let source = pt(0.5, -1.0);
    let psi = coherent_state(0.5, -1.0, g).unwrap();
    let scale = Complex64::new(transform_constant() * libm::pow(PI, 0.25), 0.0);
    let image = weyl_matrix(&q, 0.0, g).unwrap().apply(&psi).unwrap();
    for p in [pt(0.5, -1.0), pt(1.5, 0.0), pt(-1.0, -2.0)] {
        let grid_route = forward_at(&image, p.x[0], p.xi[0]) * scale;
        let quad_route = kq_kernel(&q, &[(p.clone(), source.clone())], &KqQuad::default()).unwrap()[0];
        assert!((grid_route - quad_route).norm() < 1e-8, "{p:?}: {grid_route} vs {quad_route}");
    }
}

#[test]
fn quadratic_residual_kernel_on_the_diagonal() {
    let (x0, xi0) = (0.7, -1.2);
    let q = linearization_residual(&sym("(x^2+xi^2)/2"), 0.0, &pt(x0, xi0)).unwrap();
    let diag = kq_kernel(&q, &[(pt(x0, xi0), pt(x0, xi0))], &KqQuad::default()).unwrap()[0];
    assert!((diag - Complex64::new(1.0 / (4.0 * PI), 0.0)).norm() < 1e-12);
    // an odd first-order term integrates to zero against the symmetric Gaussians
    let odd = SymbolExpr::parse("x - 0.7", 1).unwrap();
    let v = kq_kernel(&odd, &[(pt(x0, xi0), pt(x0, xi0))], &KqQuad::default()).unwrap()[0];
    assert!(v.norm() < 1e-14);
}

#[test]
fn small_window_is_rejected() {
    let quad = KqQuad { widths: 5.0, ..KqQuad::default() };
    let err = kq_kernel(&sym("1"), &[(pt(0.0, 0.0), pt(0.0, 0.0))], &quad).unwrap_err();
    assert!(matches!(err, KernelError::WindowTooSmall { .. }));
}

#[test]
fn linearization_residuals() {
    let base = pt(0.4, -1.3);
    let q = linearization_residual(&sym("(x^2+xi^2)/2"), 0.0, &base).unwrap();
    for &(x, xi) in &[(0.0, 0.0), (1.0, 2.0), (-3.0, 0.5)] {
        let expect = 0.5 * ((x - 0.4) * (x - 0.4) + (xi + 1.3) * (xi + 1.3));
        assert!((q.eval1(0.0, x, xi).unwrap() - expect).abs() < 1e-12);
    }
    assert!(linearization_residual(&sym("xi + 3*x - 2"), 0.0, &base).unwrap().is_zero());

    let a = sym("xi^2/2 + sin(x)");
    let q = linearization_residual(&a, 0.0, &pt(0.0, 0.0)).unwrap();
    for &(x, xi) in &[(0.3, 0.1), (-2.0, 1.0)] {
        assert!((q.eval1(0.0, x, xi).unwrap() - (xi * xi / 2.0 + libm::sin(x) - x)).abs() < 1e-12);
    }
    let mut table = crate::symbol::DerivativeTable::new(q.clone(), 1);
    assert!(q.eval1(0.0, 0.0, 0.0).unwrap().abs() < 1e-10);
    for d in table.gradient().unwrap() {
        assert!(d.eval1(0.0, 0.0, 0.0).unwrap().abs() < 1e-10);
    }
    let qb = zeroth_order_residual(&sym("cos(x)*xi"), 0.0, &pt(1.0, 2.0)).unwrap();
    assert!(qb.eval1(0.0, 1.0, 2.0).unwrap().abs() < 1e-15);
}

fn seeds() -> Vec<PhasePoint> {
    vec![pt(0.0, 0.0), pt(1.0, -1.0), pt(-2.0, 0.5)]
}

#[test]
fn transport_without_terms_is_constant() {
    let sol = transport_solve(&sym("0"), None, |p| Complex64::new(p.x[0], 1.0), None, &seeds(), 0.0, 1.0, &StepControl::with_step(0.01), None)
        .unwrap();
    for path in &sol.paths {
        assert!(path.values.iter().all(|v| *v == path.values[0]));
    }
}

#[test]
fn transport_growth_and_phase() {
    let beta = 0.7;
    let b = SymbolExpr::constant(beta, 1);
    let sol = transport_solve(&sym("xi^2/2"), Some(&b), |_| Complex64::new(1.0, 0.0), None, &seeds(), 0.0, 1.0, &StepControl::default(), None)
        .unwrap();
    for path in &sol.paths {
        let xi0 = path.seed.xi[0];
        for (t, v) in path.times.iter().zip(&path.values) {
            // a - xi a_xi = -xi^2/2 along the free flow
            let expect = Complex64::from_polar(libm::exp(beta * t), 0.5 * xi0 * xi0 * t);
            assert!((v - expect).norm() < 1e-10);
        }
    }
    assert!(sol.growth_defect() < 1e-8);
}

#[test]
fn transport_respects_the_growth_envelope() {
    let a = sym("xi^2/2 + 0.1*sin(x)");
    let b = sym("0.5*cos(x+t) - 0.2*xi");
    let f = sym("0.3*exp(-x^2)");
    let q = QuadControl::default();
    let m = growth_constant_m(&b, &a, &seeds(), &q).unwrap();
    let sol = transport_solve(&a, Some(&b), |p| Complex64::new(1.0, p.xi[0]), Some(&f), &seeds(), 0.0, 1.0, &StepControl::default(), Some(m))
        .unwrap();
    let ratio = sol.envelope_ratio.unwrap();
    assert!(ratio <= 1.0 + 1e-6, "{ratio}");
    assert!(ratio > 0.5);
    let free = transport_solve(&a, Some(&b), |_| Complex64::new(1.0, 0.0), None, &seeds(), 0.0, 1.0, &StepControl::default(), None).unwrap();
    assert!(free.growth_defect() < 1e-8);
}

#[test]
fn lemma_ratio_for_a_parabola() {
    let q = sym("x^2");
    for r in [1.0, 2.0, 4.0] {
        let res = ftc_lemma_ratio(&q, r, &FtcQuad::default()).unwrap();
        assert!((res.ratio - 1.0 / 6.0).abs() < 1e-12, "{}", res.ratio);
        assert!((res.lhs - 2.0 * r * r * r / 3.0).abs() < 1e-10);
        assert!((res.rhs - 4.0 * r * r * r).abs() < 1e-10);
    }
    let zero = ftc_lemma_ratio(&sym("0"), 1.0, &FtcQuad::default()).unwrap();
    assert_eq!((zero.lhs, zero.rhs, zero.ratio), (0.0, 0.0, 0.0));
}

#[test]
fn lemma_ratio_in_the_plane() {
    let q = SymbolExpr::parse("x1^2 + x2^2", 2).unwrap();
    let res = ftc_lemma_ratio(&q, 2.0, &FtcQuad::default()).unwrap();
    assert!((res.ratio - 0.125).abs() < 1e-10, "{}", res.ratio);
    let saddle = SymbolExpr::parse("x1*x2 + x1^3", 2).unwrap();
    let res = ftc_lemma_ratio(&saddle, 1.5, &FtcQuad::default()).unwrap();
    assert!(res.ratio > 0.0 && res.ratio < 1.0);
}

#[test]
fn lemma_needs_a_critical_base_point() {
    assert!(matches!(ftc_lemma_ratio(&sym("x + x^2"), 1.0, &FtcQuad::default()), Err(KernelError::BasePointNotCritical { .. })));
    assert!(matches!(ftc_lemma_ratio(&sym("1 + x^2"), 1.0, &FtcQuad::default()), Err(KernelError::BasePointNotCritical { .. })));
    assert!(matches!(ftc_lemma_ratio(&sym("xi^2"), 1.0, &FtcQuad::default()), Err(KernelError::NotPositionOnly(_))));
    assert!(matches!(
        ftc_lemma_ratio(&SymbolExpr::parse("x3^2", 3).unwrap(), 1.0, &FtcQuad::default()),
        Err(KernelError::UnsupportedDimension(3))
    ));
}

fn e_seeds() -> Vec<PhasePoint> {
    vec![pt(-1.0, 0.0), pt(0.0, 0.0), pt(0.5, 0.5)]
}

fn e_bound(a: &str, b: Option<&str>, n: u32, history: &FieldHistory, grid: GridSpec) -> EOperatorBound {
    let a = sym(a);
    let b = b.map(sym);
    let constants = kappa_constants(&a, b.as_ref(), 4 * n, &e_seeds(), &QuadControl::default()).unwrap();
    e_operator_bound(&a, b.as_ref(), n, &e_seeds(), history, &constants, grid, &EOperatorOptions::default()).unwrap()
}

#[test]
fn remainder_vanishes_for_linear_symbols() {
    let h = FieldHistory::Gaussian { source: pt(0.0, 0.0) };
    let r = e_bound("xi + 0.5*x", None, 1, &h, GridSpec::default());
    assert_eq!((r.lhs_estimate, r.ratio), (0.0, 0.0));
    assert_eq!(r.times.len(), 9);
}

#[test]
fn remainder_ratio_is_moderate_for_a_perturbed_free_particle() {
    let h = FieldHistory::Gaussian { source: pt(0.0, 0.0) };
    let r = e_bound("xi^2/2 + 0.01*sin(x)", None, 3, &h, GridSpec::default());
    assert_eq!(r.weight_exponent, -1);
    assert!(r.ratio.is_finite() && r.ratio > 0.0 && r.ratio < 100.0, "{}", r.ratio);
}

#[test]
fn remainder_scales_with_the_perturbation() {
    let h = FieldHistory::Gaussian { source: pt(0.0, 0.0) };
    let small = e_bound("xi", Some("0.01*sin(x)"), 1, &h, GridSpec::default());
    let large = e_bound("xi", Some("0.02*sin(x)"), 1, &h, GridSpec::default());
    assert_eq!(large.rhs_bound, 2.0 * small.rhs_bound);
    let factor = large.lhs_estimate / small.lhs_estimate;
    assert!((1.8..=2.2).contains(&factor), "{factor}");
}

#[test]
fn both_remainder_routes_agree() {
    let g = GridSpec::new(8.0, 64, 8.0, 64).unwrap();
    let source = pt(0.0, 0.0);
    let column = PhaseField::from_fn(g, |x, xi| reproducing_kernel(x, xi, 0.0, 0.0)).unwrap();
    let times: Vec<f64> = (0..9).map(|k| k as f64 / 8.0).collect();
    let fields = vec![column; 9];
    let by_quadrature = e_bound("xi^2/2 + 0.1*sin(x)", Some("0.05*cos(x)"), 1, &FieldHistory::Gaussian { source }, g);
    let on_grid = e_bound("xi^2/2 + 0.1*sin(x)", Some("0.05*cos(x)"), 1, &FieldHistory::Fields { times, fields }, g);
    assert!((by_quadrature.lhs_estimate - on_grid.lhs_estimate).abs() / by_quadrature.lhs_estimate < 1e-6);
    assert_eq!(by_quadrature.rhs_bound, on_grid.rhs_bound);
}

#[test]
fn remainder_needs_high_order_constants() {
    let a = sym("xi^2/2");
    let constants = kappa_constants(&a, None, 3, &e_seeds(), &QuadControl::default()).unwrap();
    let h = FieldHistory::Gaussian { source: pt(0.0, 0.0) };
    let err = e_operator_bound(&a, None, 1, &e_seeds(), &h, &constants, GridSpec::default(), &EOperatorOptions::default()).unwrap_err();
    assert!(matches!(err, KernelError::MissingConstant(_)));
    let few = EOperatorOptions { time_samples: 5, ..EOperatorOptions::default() };
    let constants = kappa_constants(&a, None, 4, &e_seeds(), &QuadControl::default()).unwrap();
    assert!(matches!(
        e_operator_bound(&a, None, 1, &e_seeds(), &h, &constants, GridSpec::default(), &few),
        Err(KernelError::InvalidOptions(_))
    ));
}
