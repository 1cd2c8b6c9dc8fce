use std::f64::consts::PI;

use mwphoton_core::calibration::stark_map_from_spectrum;
use mwphoton_core::device::{drive_frequency, static_detuning, DeviceParams};
use mwphoton_core::dynamics::*;
use mwphoton_core::pulses::{compensate_phase, synthesize_sin2, Envelope};
use mwphoton_core::quantum::State;
use num_complex::Complex64 as C64;

fn uncoupled() -> DeviceParams {
    DeviceParams { g: 0.0, ..DeviceParams::measured() }
}

fn run(p: &DeviceParams, env: Envelope, detuning: f64, which: Decoherence, rho0: &State, t1: f64, dt: f64) -> Propagation {
    let model = LindbladModel::new(p, env, detuning, which).unwrap();
    let opts = PropagateOptions { dt, ..PropagateOptions::default() };
    propagate(&model, rho0, 0.0, t1, &opts).unwrap()
}

#[test]
fn empty_cavity_decays_exponentially() {
    let p = uncoupled();
    let rho0 = State::basis_state(p.basis(), 0, 1);
    let out = run(&p, Envelope::zero(0.0, 100.0, 0.1), 0.0, Decoherence::CAVITY_ONLY, &rho0, 100.0, 0.005);
    let kappa = 2.0 * PI * p.kappa;
    for (t, pops) in out.record.times.iter().zip(&out.record.fock_populations) {
        assert!((pops[1] - (-kappa * t).exp()).abs() < 1e-4, "t={t}: {}", pops[1]);
    }
}

#[test]
fn resonant_rabi_oscillation() {
    let p = uncoupled();
    let omega = 0.005;
    let detuning = p.omega_q - drive_frequency(&p);
    let env = Envelope::new(0.0, 0.01, vec![C64::new(omega, 0.0); 30001]).unwrap();
    let rho0 = State::basis_state(p.basis(), 0, 0);
    let out = run(&p, env, detuning, Decoherence::NONE, &rho0, 300.0, 0.005);
    for (t, q) in out.record.times.iter().zip(&out.record.transmon_populations) {
        let want = (PI * omega * t).sin().powi(2);
        assert!((q[1] - want).abs() < 1e-3, "t={t}: {} vs {want}", q[1]);
    }
}

#[test]
fn excitations_leave_only_through_the_cavity() {
    let p = DeviceParams::measured();
    let rho0 = State::basis_state(p.basis(), 1, 0);
    let out = run(&p, Envelope::zero(0.0, 300.0, 0.1), 0.0, Decoherence::CAVITY_ONLY, &rho0, 300.0, 0.005);
    let rec = &out.record;
    let exc = rec.excitations();
    let dt = rec.stride();
    let mut emitted = 0.0;
    for k in 1..rec.times.len() {
        emitted += 0.5 * (rec.power[k] + rec.power[k - 1]) * dt;
        assert!((exc[k] + emitted - exc[0]).abs() < 1e-4, "k={k}");
    }
    assert!(emitted > 1e-3);
}

#[test]
fn step_halving_converges() {
    let p = DeviceParams::measured();
    let env = synthesize_sin2(0.7, 200.0, 0.01).unwrap();
    let emit = |dt: f64| {
        let opts = EmissionOptions { dt, decoherence: Decoherence::CAVITY_ONLY, ..EmissionOptions::default() };
        emit_photon(&p, &env, InitialState::F0, &opts).unwrap()
    };
    let (a, b) = (emit(0.01), emit(0.005));
    assert!((a.emitted_quanta() - b.emitted_quanta()).abs() < 1e-4);
    assert!((a.residual_f0 - b.residual_f0).abs() < 1e-4);
    assert!(b.max_trace_drift < 1e-7);
}

#[test]
fn drive_phase_is_a_symmetry() {
    let p = DeviceParams::measured();
    let theta = 0.9;
    let env = synthesize_sin2(0.6, 150.0, 0.01).unwrap();
    let opts = EmissionOptions { decoherence: Decoherence::ALL, tail_in_lifetimes: 2.0, ..EmissionOptions::default() };
    let a = emit_photon(&p, &env, InitialState::F0, &opts).unwrap();
    let b = emit_photon(&p, &env.with_phase(theta), InitialState::F0, &opts).unwrap();
    let rot = C64::from_polar(1.0, theta);
    for k in 0..a.times.len() {
        assert!((a.power[k] - b.power[k]).abs() < 1e-9);
        assert!((a.a_out_mean[k] * rot - b.a_out_mean[k]).norm() < 1e-8);
    }
}

#[test]
fn superposition_emits_half_a_photon() {
    let p = DeviceParams::measured();
    let amps: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
    let map = stark_map_from_spectrum(&p, &amps).unwrap();
    let env = compensate_phase(&synthesize_sin2(0.6, 500.0, 0.01).unwrap(), &map).unwrap();
    let opts = EmissionOptions {
        drive_detuning: Some(static_detuning(&p).unwrap()),
        decoherence: Decoherence::CAVITY_ONLY,
        ..EmissionOptions::default()
    };
    let sup = emit_photon(&p, &env, InitialState::Superposition, &opts).unwrap();
    assert!((sup.emitted_quanta() - 0.5).abs() < 1e-2, "{}", sup.emitted_quanta());
    let fock = emit_photon(&p, &env, InitialState::F0, &opts).unwrap();
    assert!(fock.emitted_quanta() > 0.98, "{}", fock.emitted_quanta());
}

#[test]
fn short_strong_pulse_leaves_some_f() {
    let p = DeviceParams::measured();
    let amps: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
    let map = stark_map_from_spectrum(&p, &amps).unwrap();
    let env = compensate_phase(&synthesize_sin2(0.7, 200.0, 0.01).unwrap(), &map).unwrap();
    let rec = emit_photon(&p, &env, InitialState::F0, &EmissionOptions::default()).unwrap();
    assert!(rec.residual_f0 > 0.005 && rec.residual_f0 < 0.06, "{}", rec.residual_f0);
    assert!(rec.min_probe_eigenvalue > -1e-6);
}
