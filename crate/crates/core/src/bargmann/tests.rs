use alloc::vec::Vec;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::*;

fn small_grid() -> GridSpec {
    GridSpec::new(8.0, 64, 8.0, 48).unwrap()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

/// Random superposition of in-window coherent states.
fn random_signal(rng: &mut StdRng, grid: GridSpec) -> Signal {
    let terms: Vec<(f64, f64, Complex64)> = (0..rng.gen_range(1..5))
        .map(|_| {
            (
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            )
        })
        .collect();
    Signal::from_fn(grid, |z| terms.iter().map(|(y, eta, c)| c * coherent_value(*y, *eta, z)).sum()).unwrap()
}

#[test]
fn grid_validation() {
    assert!(GridSpec::new(12.0, 256, 12.0, 256).is_ok());
    assert!(GridSpec::new(12.0, 100, 12.0, 256).is_err());
    assert!(GridSpec::new(12.0, 4, 12.0, 256).is_err());
    assert!(GridSpec::new(12.0, 8, 12.0, 6).is_err());
    assert!(GridSpec::new(0.0, 8, 12.0, 8).is_err());
    assert!(GridSpec::new(1.0, 8, f64::NAN, 8).is_err());
    let g = GridSpec::default();
    assert_eq!((g.nx(), g.nxi()), (256, 256));
    assert_eq!(g.x(0), -12.0);
    assert!((g.x(128)).abs() < 1e-15);
    assert_eq!(g.dx(), 24.0 / 256.0);
}

#[test]
fn signals_reject_bad_samples() {
    let g = small_grid();
    assert!(matches!(Signal::new(g, vec![Complex64::new(0.0, 0.0); 3]), Err(BargmannError::LengthMismatch { .. })));
    let mut v = vec![Complex64::new(0.0, 0.0); 64];
    v[5] = Complex64::new(f64::NAN, 0.0);
    assert_eq!(Signal::new(g, v), Err(BargmannError::NonFinite(5)));
}

#[test]
fn zero_in_zero_out() {
    let g = small_grid();
    let v = forward(&Signal::zeros(g), Method::Fft).unwrap();
    assert_eq!(v.sup_norm(), 0.0);
    assert_eq!(inverse(&PhaseField::zeros(g), Method::Fft).unwrap().norm(), 0.0);
    let r = cr_residual(&PhaseField::zeros(g));
    assert_eq!((r.sup_norm, r.rel_norm), (0.0, 0.0));
}

#[test]
fn direct_and_fft_quadrature_agree() {
    let g = small_grid();
    let f = random_signal(&mut StdRng::seed_from_u64(7), g);
    let a = forward(&f, Method::Direct).unwrap();
    let b = forward(&f, Method::Fft).unwrap();
    assert!(max_diff(a.values(), b.values()) < 1e-10);
    let ia = inverse_unchecked(&b, Method::Direct);
    let ib = inverse_unchecked(&b, Method::Fft);
    assert!(max_diff(ia.values(), ib.values()) < 1e-10);
}

#[test]
fn single_point_transform_matches_grid() {
    let g = small_grid();
    let f = random_signal(&mut StdRng::seed_from_u64(3), g);
    let v = forward(&f, Method::Fft).unwrap();
    for &(j, m) in &[(10, 5), (32, 24), (50, 40)] {
        assert!((forward_at(&f, g.x(j), g.xi(m)) - v.get(j, m)).norm() < 1e-12);
    }
}

#[test]
fn gaussian_maps_to_centered_gaussian_with_half_phase() {
    let g = GridSpec::default();
    let f = coherent_state(0.0, 0.0, g).unwrap();
    let v = forward(&f, Method::Fft).unwrap();
    for j in (0..256).step_by(17) {
        for m in (0..256).step_by(13) {
            let (x, xi) = (g.x(j), g.xi(m));
            let expect = coherent_transform(0.0, 0.0, x, xi);
            assert!((v.get(j, m) - expect).norm() < 1e-12, "({x}, {xi})");
        }
    }
    // peak modulus 2^{-1/2} pi^{-1/2}
    assert!((v.sup_norm() - 1.0 / libm::sqrt(2.0 * PI)).abs() < 1e-12);
}

#[test]
fn modulation_moves_the_peak_in_frequency() {
    let g = GridSpec::default();
    let f = Signal::from_fn(g, |y| cis(3.0 * y) * libm::exp(-0.5 * y * y)).unwrap();
    let v = forward(&f, Method::Fft).unwrap();
    let (j, m) = v.argmax();
    assert!(g.x(j).abs() <= g.dx());
    assert!((g.xi(m) - 3.0).abs() <= g.dxi());
}

#[test]
fn isometry_and_inversion_on_random_signals() {
    let g = GridSpec::default();
    let mut rng = StdRng::seed_from_u64(2024);
    for _ in 0..20 {
        let f = random_signal(&mut rng, g);
        let v = forward(&f, Method::Fft).unwrap();
        assert!((v.norm() / f.norm() - 1.0).abs() < 1e-6);
        let back = inverse(&v, Method::Fft).unwrap();
        assert!(back.relative_error(&f) < 1e-6);
    }
}

#[test]
fn round_trip_of_coherent_states() {
    let g = GridSpec::default();
    for &(y, eta) in &[(0.0, 0.0), (1.0, -2.0)] {
        let f = coherent_state(y, eta, g).unwrap();
        let back = inverse(&forward(&f, Method::Fft).unwrap(), Method::Fft).unwrap();
        assert!(back.relative_error(&f) < 1e-6);
    }
}

#[test]
fn cauchy_riemann_holds_on_the_range() {
    let g = GridSpec::default();
    let r = cr_residual(&forward(&coherent_state(0.0, 0.0, g).unwrap(), Method::Fft).unwrap());
    assert!(r.rel_norm < 1e-6, "{}", r.rel_norm);
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..5 {
        let v = forward(&random_signal(&mut rng, g), Method::Fft).unwrap();
        assert!(cr_residual(&v).rel_norm < 1e-4);
    }
}

#[test]
fn constant_field_leaves_the_multiplier() {
    let g = small_grid();
    let one = PhaseField::from_fn(g, |_, _| Complex64::new(1.0, 0.0)).unwrap();
    let r = cr_residual(&one);
    for j in 0..g.nx() {
        for m in 0..g.nxi() {
            assert!((r.field.get(j, m) - Complex64::new(0.0, g.xi(m))).norm() < 1e-12);
        }
    }
    assert!(r.rel_norm > 1.0);
}

#[test]
fn reproducing_kernel_from_a_delta() {
    let g = GridSpec::default();
    let (j0, m0) = (140, 110);
    let (y, eta) = (g.x(j0), g.xi(m0));
    let mut delta = vec![Complex64::new(0.0, 0.0); g.nx() * g.nxi()];
    delta[j0 * g.nxi() + m0] = Complex64::new(1.0 / (g.dx() * g.dxi()), 0.0);
    let delta = PhaseField::new(g, delta).unwrap();
    let k = forward_unchecked(&inverse_unchecked(&delta, Method::Fft), Method::Fft);
    let peak = k.sup_norm();
    // one fitted constant: ratio at the center
    let scale = k.get(j0, m0) / reproducing_kernel(y, eta, y, eta);
    for j in 0..g.nx() {
        for m in 0..g.nxi() {
            let got = k.get(j, m);
            if got.norm() > 1e-6 * peak {
                let expect = reproducing_kernel(g.x(j), g.xi(m), y, eta) * scale;
                assert!((got - expect).norm() / expect.norm() < 1e-4);
            }
        }
    }
    assert!((scale - Complex64::new(1.0, 0.0)).norm() < 1e-10);
}

#[test]
fn coherent_states_are_unit_and_overlap_as_gaussians() {
    let g = GridSpec::default();
    let base = coherent_state(0.0, 0.0, g).unwrap();
    assert!((base.norm() - 1.0).abs() < 1e-10);
    for &(y, eta) in &[(2.0, 0.0), (-7.5, 3.0), (5.0, -8.0)] {
        assert!((coherent_state(y, eta, g).unwrap().norm() - 1.0).abs() < 1e-10);
    }
    let shifted = coherent_state(2.0, 0.0, g).unwrap();
    assert!((base.inner(&shifted).norm() - libm::exp(-1.0)).abs() < 1e-10);
    assert!(matches!(coherent_state(9.0, 0.0, g), Err(BargmannError::OutOfWindow { .. })));
    assert!(matches!(coherent_state(0.0, -8.5, g), Err(BargmannError::OutOfWindow { .. })));
}

#[test]
fn edge_mass_is_rejected() {
    let g = small_grid();
    let wide = Signal::from_fn(g, |y| Complex64::new(libm::exp(-0.01 * y * y), 0.0)).unwrap();
    assert!(matches!(forward(&wide, Method::Fft), Err(BargmannError::BoundaryMass { edge: Edge::Position, .. })));
    let tight = coherent_state(0.0, 0.0, GridSpec::new(6.0, 64, 8.0, 48).unwrap()).unwrap();
    assert_eq!(tight.check_edges(), Ok(EdgeStatus::Warn));
    let band = PhaseField::from_fn(g, |x, _| Complex64::new(libm::exp(-x * x), 0.0)).unwrap();
    assert!(matches!(inverse(&band, Method::Fft), Err(BargmannError::BoundaryMass { edge: Edge::Frequency, .. })));
}
