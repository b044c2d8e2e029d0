use core::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;

use super::*;

fn sym(text: &str) -> SymbolExpr {
    SymbolExpr::parse(text, 1).unwrap()
}

fn ho_exact(x: f64, xi: f64, t: f64) -> (f64, f64) {
    (x * libm::cos(t) + xi * libm::sin(t), -x * libm::sin(t) + xi * libm::cos(t))
}

#[test]
fn free_particle_is_exact() {
    let tr = integrate_flow(&sym("xi^2/2"), &PhasePoint::new1(0.0, 1.0), 0.0, 1.0, &StepControl::default()).unwrap();
    let end = tr.endpoint();
    assert!((end.x[0] - 1.0).abs() < 1e-12);
    assert!((end.xi[0] - 1.0).abs() < 1e-12);
    assert_eq!(tr.times.len(), 1001);
    assert_eq!(tr.times[0], 0.0);
    assert_eq!(*tr.times.last().unwrap(), 1.0);
    assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn zero_symbol_gives_constant_trajectory() {
    let seed = PhasePoint::new1(0.3, -1.7);
    let tr = integrate_flow(&sym("0"), &seed, 0.0, 2.0, &StepControl::with_step(0.1)).unwrap();
    assert!(tr.points.iter().all(|p| *p == seed));
}

#[test]
fn harmonic_oscillator_rotates() {
    let tr = integrate_flow(&sym("(x^2+xi^2)/2"), &PhasePoint::new1(1.0, 0.0), 0.0, FRAC_PI_2, &StepControl::default()).unwrap();
    let end = tr.endpoint();
    assert!(end.x[0].abs() < 1e-8);
    assert!((end.xi[0] + 1.0).abs() < 1e-8);
    for (t, p) in tr.times.iter().zip(&tr.points) {
        let (x, xi) = ho_exact(1.0, 0.0, *t);
        assert!((p.x[0] - x).abs() < 1e-10 && (p.xi[0] - xi).abs() < 1e-10);
    }
}

#[test]
fn rk4_error_drops_sixteenfold_under_halving() {
    let a = sym("(x^2+xi^2)/2");
    let seed = PhasePoint::new1(1.0, 0.5);
    let (ex, exi) = ho_exact(1.0, 0.5, 2.0);
    let err = |h: f64| {
        let end = flow_map(&a, &seed, 0.0, 2.0, &StepControl::with_step(h)).unwrap();
        libm::fmax(libm::fabs(end.x[0] - ex), libm::fabs(end.xi[0] - exi))
    };
    let factor = err(0.1) / err(0.05);
    assert!((12.0..=20.0).contains(&factor), "factor {factor}");
}

#[test]
fn backward_integration_runs_time_in_reverse() {
    let a = sym("(x^2+xi^2)/2");
    let tr = integrate_flow(&a, &PhasePoint::new1(0.0, -1.0), FRAC_PI_2, 0.0, &StepControl::default()).unwrap();
    assert!(tr.times.windows(2).all(|w| w[1] < w[0]));
    let end = tr.endpoint();
    assert!((end.x[0] - 1.0).abs() < 1e-10 && end.xi[0].abs() < 1e-10);
}

#[test]
fn blowup_is_detected() {
    // x' = x^2 leaves every bound before t = 1/x0
    let err = integrate_flow(&sym("x^2*xi"), &PhasePoint::new1(2.0, 1.0), 0.0, 1.0, &StepControl::default()).unwrap_err();
    match err {
        FlowError::BlowupDetected { time, bound, .. } => {
            assert_eq!(bound, 1e8);
            assert!(time <= 0.5 + 1e-3);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let a = sym("xi^2/2");
    assert_eq!(
        integrate_flow(&a, &PhasePoint::new1(0.0, 0.0), 0.0, 1.0, &StepControl::with_step(0.0)),
        Err(FlowError::InvalidStep(0.0))
    );
    assert_eq!(
        integrate_flow(&a, &PhasePoint::origin(2), 0.0, 1.0, &StepControl::default()),
        Err(FlowError::DimensionMismatch { symbol: 1, seed: 2 })
    );
    let domain = integrate_flow(&sym("sqrt(x)*xi"), &PhasePoint::new1(-1.0, 0.0), 0.0, 1.0, &StepControl::default());
    assert!(matches!(domain, Err(FlowError::Symbol(SymbolError::EvaluationDomain { .. }))));
}

#[test]
fn refinement_converges_to_tolerance() {
    let a = sym("xi^2/2 + 0.5*sin(x)");
    let step = StepControl { h: 0.25, tol: Some(1e-10), ..StepControl::default() };
    let tr = integrate_flow(&a, &PhasePoint::new1(0.1, 1.0), 0.0, 1.0, &step).unwrap();
    let reference = flow_map(&a, &PhasePoint::new1(0.1, 1.0), 0.0, 1.0, &StepControl::with_step(1e-4)).unwrap();
    assert!(tr.endpoint().sup_distance(&reference) < 1e-9);
    let hopeless = StepControl { h: 0.25, tol: Some(1e-30), max_refinements: 2, ..StepControl::default() };
    assert!(matches!(integrate_flow(&a, &PhasePoint::new1(0.1, 1.0), 0.0, 1.0, &hopeless), Err(FlowError::NotConverged { .. })));
}

#[test]
fn free_particle_jacobian_is_a_shear() {
    let f = variational_flow(&sym("xi^2/2"), &PhasePoint::new1(0.0, 0.0), 0.0, 1.0, &StepControl::default()).unwrap();
    let j = f.jac.last().unwrap();
    let expect = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    assert!((j - expect).amax() < 1e-12);
    assert_eq!(f.jac[0], DMatrix::identity(2, 2));
    // ||A|| = 1 for A = [[0,1],[0,0]]
    assert!((f.a_norm_integral.last().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn zero_symbol_jacobian_is_identity() {
    let f = variational_flow(&sym("0"), &PhasePoint::new1(1.0, 2.0), 0.0, 1.0, &StepControl::with_step(0.1)).unwrap();
    assert!(f.jac.iter().all(|j| *j == DMatrix::identity(2, 2)));
    assert!(f.a_norm_integral.iter().all(|v| *v == 0.0));
}

#[test]
fn oscillator_jacobian_is_a_rotation() {
    let f = variational_flow(&sym("(x^2+xi^2)/2"), &PhasePoint::new1(0.4, 0.2), 0.0, FRAC_PI_2, &StepControl::default()).unwrap();
    let expect = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    assert!((f.jac.last().unwrap() - expect).amax() < 1e-10);
    // A = [[0,1],[-1,0]] has eigenvalues +-i, so ||A||_2 = 1
    assert!((f.a_norm_integral.last().unwrap() - FRAC_PI_2).abs() < 1e-12);
}

#[test]
fn shear_lipschitz_constant_is_golden_ratio() {
    // singular values of [[1,1],[0,1]]: sigma^2 = (3 +- sqrt 5)/2
    let golden = (1.0 + libm::sqrt(5.0)) / 2.0;
    let seeds = [PhasePoint::new1(0.0, 0.0), PhasePoint::new1(-1.0, 2.0), PhasePoint::new1(3.0, -0.5)];
    let r = bilipschitz_report(&sym("xi^2/2"), &seeds, 0.0, 1.0, &StepControl::default()).unwrap();
    assert!((r.lip_forward - golden).abs() < 1e-10);
    assert!((r.lip_inverse - golden).abs() < 1e-10);
    assert!(r.gronwall_holds());
    assert_eq!(r.seeds, 3);
}

#[test]
fn trivial_and_rotational_flows_are_isometric() {
    let seeds = [PhasePoint::new1(1.0, 0.0), PhasePoint::new1(-2.0, 1.0)];
    let r = bilipschitz_report(&sym("0"), &seeds, 0.0, 1.0, &StepControl::default()).unwrap();
    assert_eq!((r.lip_forward, r.lip_inverse, r.gronwall_margin), (1.0, 1.0, 1.0));
    let r = bilipschitz_report(&sym("(x^2+xi^2)/2"), &seeds, 0.0, 1.0, &StepControl::default()).unwrap();
    assert!((r.lip_forward - 1.0).abs() < 1e-10 && (r.lip_inverse - 1.0).abs() < 1e-10);
    assert!(matches!(
        bilipschitz_report(&sym("0"), &[], 0.0, 1.0, &StepControl::default()),
        Err(FlowError::EmptyEnsemble)
    ));
}

#[test]
fn seed_errors_are_tagged() {
    let seeds = [PhasePoint::new1(0.5, 0.0), PhasePoint::new1(2.0, 1.0)];
    match bilipschitz_report(&sym("x^2*xi"), &seeds, 0.0, 1.0, &StepControl::default()) {
        Err(FlowError::Seed { index, source }) => {
            assert_eq!(index, 1);
            assert!(matches!(*source, FlowError::BlowupDetected { .. }));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn volume_preservation_and_gronwall_on_test_symbols() {
    let one_d = ["xi^2/2", "(x^2+xi^2)/2", "xi^2/2 + 0.1*sin(x)", "xi^2/2 + 0.3*cos(t)*sin(x)", "xi^4/4 + x^2/2"];
    let seeds: Vec<_> = [-1.5, 0.0, 1.0]
        .iter()
        .flat_map(|&x| [-1.0, 0.5].iter().map(move |&xi| PhasePoint::new1(x, xi)))
        .collect();
    for text in one_d {
        let r = bilipschitz_report(&sym(text), &seeds, 0.0, 1.0, &StepControl::default()).unwrap();
        assert!(r.max_det_defect < 1e-6, "{text}: det defect {}", r.max_det_defect);
        assert!(r.gronwall_holds(), "{text}: margin {}", r.gronwall_margin);
        assert!(r.lip_forward >= 1.0 - 1e-9 && r.lip_inverse >= 1.0 - 1e-9);
    }
    let a2 = SymbolExpr::parse("(xi1^2 + xi2^2)/2 + 0.2*sin(x1)*cos(x2) + 0.1*x1*xi2", 2).unwrap();
    let seeds2 = [PhasePoint::new(vec![0.1, -0.3], vec![1.0, 0.2]), PhasePoint::new(vec![1.0, 2.0], vec![-0.5, 0.7])];
    let r = bilipschitz_report(&a2, &seeds2, 0.0, 1.0, &StepControl::default()).unwrap();
    assert!(r.max_det_defect < 1e-6 && r.gronwall_holds());
}

fn time_dependent() -> SymbolExpr {
    sym("xi^2/2 + 0.3*cos(t)*sin(x) + 0.1*x*xi")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flow_maps_compose(x in -2.0f64..2.0, xi in -2.0f64..2.0, mid in 0.1f64..0.9) {
        let a = time_dependent();
        let step = StepControl { h: 0.05, tol: Some(1e-9), ..StepControl::default() };
        let seed = PhasePoint::new1(x, xi);
        let direct = flow_map(&a, &seed, 0.0, 1.0, &step).unwrap();
        let half = flow_map(&a, &seed, 0.0, mid, &step).unwrap();
        let composed = flow_map(&a, &half, mid, 1.0, &step).unwrap();
        prop_assert!(direct.sup_distance(&composed) < 10.0 * 1e-9);
    }

    #[test]
    fn reversal_returns_to_seed(x in -2.0f64..2.0, xi in -2.0f64..2.0) {
        let a = time_dependent();
        let step = StepControl { h: 0.05, tol: Some(1e-9), ..StepControl::default() };
        let seed = PhasePoint::new1(x, xi);
        let there = flow_map(&a, &seed, 0.2, 1.3, &step).unwrap();
        let back = flow_map(&a, &there, 1.3, 0.2, &step).unwrap();
        prop_assert!(back.sup_distance(&seed) < 10.0 * 1e-9);
    }
}

#[test]
fn period_of_oscillator_closes_orbit() {
    let end = flow_map(&sym("(x^2+xi^2)/2"), &PhasePoint::new1(1.0, 1.0), 0.0, 2.0 * PI, &StepControl::default()).unwrap();
    assert!(end.sup_distance(&PhasePoint::new1(1.0, 1.0)) < 1e-10);
}
