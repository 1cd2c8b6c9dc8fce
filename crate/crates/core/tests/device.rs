use mwphoton_core::device::{
    dressed_spectrum, effective_coupling_perturbative, transmon_charge_basis, tune_josephson_energy, DeviceParams,
};
use mwphoton_core::C64;

#[test]
fn coupling_at_reference_amplitudes() {
    let p = DeviceParams::measured();
    for (amp, pert, exact) in [(0.7, 5.2, 5.5), (0.6, 4.4, 4.6)] {
        let g = effective_coupling_perturbative(&p, C64::new(amp, 0.0)).unwrap().norm() * 1e3;
        assert!((g - pert).abs() < 0.05, "perturbative {g} MHz at {amp}");
        let d = dressed_spectrum(&p, amp).unwrap().g_tilde * 1e3;
        assert!((d - exact).abs() <= 0.2, "diagonalization {d} MHz at {amp}");
    }
}

#[test]
fn perturbative_within_ten_percent_of_exact() {
    let p = DeviceParams::measured();
    for amp in [0.1, 0.3, 0.5, 0.7] {
        let pert = effective_coupling_perturbative(&p, C64::new(amp, 0.0)).unwrap().norm();
        let exact = dressed_spectrum(&p, amp).unwrap().g_tilde;
        assert!((pert - exact).abs() / exact < 0.10, "{amp}: {pert} vs {exact}");
    }
}

#[test]
fn stark_shift_is_even_in_drive() {
    // least-squares fit shift = c1 Ω + c2 Ω² over [0, 0.2] GHz
    let p = DeviceParams::measured();
    let amps = [0.04, 0.08, 0.12, 0.16, 0.2];
    let shifts: Vec<f64> = amps.iter().map(|&a| dressed_spectrum(&p, a).unwrap().stark_shift).collect();
    let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, y) in amps.iter().zip(&shifts) {
        s11 += a * a;
        s12 += a * a * a;
        s22 += a * a * a * a;
        b1 += a * y;
        b2 += a * a * y;
    }
    let det = s11 * s22 - s12 * s12;
    let c1 = (b1 * s22 - b2 * s12) / det;
    let c2 = (s11 * b2 - s12 * b1) / det;
    // linear term contributes < 2% of the shift at the top of the range
    assert!((c1 * 0.2).abs() < 0.02 * (c2 * 0.04).abs(), "c1 = {c1}, c2 = {c2}");
}

#[test]
fn charge_basis_anharmonicity() {
    let e_j = tune_josephson_energy(0.406, 8.640, 0.0).unwrap();
    let s = transmon_charge_basis(0.406, e_j, 0.0, 4).unwrap();
    assert!((s.energies[1] - s.energies[0] - 8.640).abs() < 1e-6);
    let alpha = s.energies[2] - 2.0 * s.energies[1] + s.energies[0];
    assert!((alpha + 0.421).abs() / 0.421 < 0.10, "alpha = {alpha}");
}

#[test]
fn charge_dispersion_is_small() {
    let e_j = 60.0 * 0.406;
    let a = transmon_charge_basis(0.406, e_j, 0.0, 3).unwrap();
    let b = transmon_charge_basis(0.406, e_j, 0.25, 3).unwrap();
    let ge = |s: &mwphoton_core::device::ChargeBasisSpectrum| s.energies[1] - s.energies[0];
    assert!((ge(&a) - ge(&b)).abs() < 1e-3);
}
