use mwphoton_core::calibration::Sequential;
use mwphoton_core::linalg::{min_eigenvalue, CMatrix};
use mwphoton_core::tomography::*;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn fock(n: usize, dim: usize) -> CMatrix {
    let mut r = CMatrix::zeros(dim);
    r[(n, n)] = C64::new(1.0, 0.0);
    r
}

/// Mixture of two pure states built from raw amplitudes.
fn mixed(a: &[(f64, f64)], b: &[(f64, f64)], w: f64) -> CMatrix {
    let unit = |v: &[(f64, f64)]| {
        let v: Vec<C64> = v.iter().map(|&(re, im)| C64::new(re, im)).collect();
        let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(1e-9);
        v.into_iter().map(|c| c / n).collect::<Vec<_>>()
    };
    let (u, v) = (unit(a), unit(b));
    let mut rho = CMatrix::outer(&u, &u).scale_real(w);
    rho += &CMatrix::outer(&v, &v).scale_real(1.0 - w);
    rho
}

fn amplitudes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn deconvolution_inverts_convolution(a in amplitudes(), b in amplitudes(), w in 0.0..1.0f64, n in 0.0..12.0f64) {
        let rho = mixed(&a, &b, w);
        let exact = MomentSet::from_density_matrix(&rho, 4);
        let noise = NoiseModel::new(n).unwrap().antinormal_moments(4);
        let back = deconvolve_moments(&convolve_moments(&exact, &noise).unwrap(), &noise).unwrap();
        for (p, q) in exact.indices() {
            let scale = 1.0 + exact.get(p, q).norm();
            prop_assert!((back.get(p, q) - exact.get(p, q)).norm() < 1e-12 * scale * (1.0 + n).powi(2));
        }
    }

    #[test]
    fn fit_gradient_matches_finite_differences(x in prop::collection::vec(-1.0..1.0f64, 9), w in 0.0..1.0f64) {
        let rho = mixed(&[(1.0, 0.0), (0.5, 0.2), (0.1, 0.0)], &[(0.0, 0.0), (1.0, 0.0), (0.0, 0.3)], w);
        let mut m = MomentSet::from_density_matrix(&rho, 4);
        for (p, q) in m.indices() {
            m.set_error(p, q, 0.01 * (1 + p + q) as f64);
        }
        let mut x = x;
        for d in [0usize, 2, 5] {
            x[d] = 0.5 + x[d].abs();
        }
        prop_assert!(mle_gradient_check(&m, 2, &x) < 1e-5);
    }
}

#[test]
fn vacuum_reference_measures_noise() {
    let hot = simulate_shots(&fock(0, 3), &NoiseModel::new(10.0).unwrap(), 1_000_000, 11).unwrap();
    let m = moments_from_histogram(&hot, 2).unwrap();
    assert!((m.get(1, 1).re - 11.0).abs() < 0.05, "{}", m.get(1, 1));
    let cold = simulate_shots(&fock(0, 3), &NoiseModel::new(0.0).unwrap(), 1_000_000, 12).unwrap();
    let m = moments_from_histogram(&cold, 2).unwrap();
    assert!((m.get(1, 1).re - 1.0).abs() < 0.01, "{}", m.get(1, 1));
}

#[test]
fn fock_state_detector_moments() {
    let noise = NoiseModel::new(10.0).unwrap();
    let exact = convolve_moments(&MomentSet::from_density_matrix(&fock(1, 4), 4), &noise.antinormal_moments(4)).unwrap();
    assert!((exact.get(1, 1).re - 12.0).abs() < 1e-12);
    assert!((exact.get(2, 2).re - 286.0).abs() < 1e-9);
    let hist = simulate_shots(&fock(1, 4), &noise, 1_000_000, 5).unwrap();
    let got = moments_from_histogram(&hist, 4).unwrap();
    for (p, q) in got.indices() {
        if p + q == 0 {
            continue;
        }
        let z = (got.get(p, q) - exact.get(p, q)).norm() / got.error(p, q);
        assert!(z < 4.0, "({p},{q}): {} vs {} ± {}", got.get(p, q), exact.get(p, q), got.error(p, q));
    }
}

#[test]
fn reconstruction_recovers_a_qubit_photon_state() {
    let rho = single_photon_mode_state(0.6, C64::new(0.35, 0.1), 2).unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let target = [C64::new(s, 0.0), C64::new(s, 0.0)];
    let cfg = TomographySettings { n_thermal: 2.0, shots: 2_000_000, seed: 3, n_max: 2, max_order: 4 };
    let out = run_tomography(&rho, &target, &cfg, &Sequential).unwrap();
    let exact = MomentSet::from_density_matrix(&rho, 4);
    for (p, q) in out.mode_moments.indices() {
        if p + q == 0 || p + q > 2 {
            continue;
        }
        let z = (out.mode_moments.get(p, q) - exact.get(p, q)).norm() / out.mode_moments.error(p, q);
        assert!(z < 3.0, "({p},{q}): z = {z}");
    }
    assert!((out.noise_estimate - 2.0).abs() < 0.05, "{}", out.noise_estimate);
    let est = &out.estimate;
    assert!(min_eigenvalue(&est.rho) >= -1e-12);
    assert!((est.rho.trace().re - 1.0).abs() < 1e-12);
    assert!((est.rho[(1, 1)].re - 0.6).abs() < 0.05, "{}", est.rho[(1, 1)]);
    assert!((est.rho[(1, 0)] - C64::new(0.35, 0.1)).norm() < 0.05, "{}", est.rho[(1, 0)]);
}

#[test]
fn exact_moments_identify_targets() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for (rho, target) in [
        (fock(1, 4), vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]),
        (single_photon_mode_state(0.5, C64::new(0.5, 0.0), 3).unwrap(), vec![C64::new(s, 0.0), C64::new(s, 0.0)]),
    ] {
        let m = MomentSet::from_density_matrix(&rho, 4);
        let est = mle_density_matrix(&m, 3, &target).unwrap();
        assert!(est.fidelity > 0.999, "{}", est.fidelity);
        assert!(min_eigenvalue(&est.rho) >= -1e-12);
    }
}
