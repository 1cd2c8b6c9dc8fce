use std::f64::consts::PI;
use std::sync::OnceLock;

use mwphoton_core::analysis::*;
use mwphoton_core::calibration::stark_map_from_spectrum;
use mwphoton_core::device::{static_detuning, DeviceParams};
use mwphoton_core::dynamics::{emit_photon, Decoherence, EmissionOptions, InitialState, OutputRecord};
use mwphoton_core::pulses::{compensate_phase, synthesize_sin2, Envelope, StarkMap};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn two_lobes(c1: f64, w1: f64, c2: f64, w2: f64, r: f64, tilt: f64) -> ModeFunction {
    let times: Vec<f64> = (0..1601).map(|k| k as f64 * 0.25).collect();
    let psi = times
        .iter()
        .map(|&t| {
            let a = (-(t - c1).powi(2) / (2.0 * w1 * w1)).exp();
            let b = r * (-(t - c2).powi(2) / (2.0 * w2 * w2)).exp();
            C64::from_polar(a + b, tilt * (t - 200.0) / 200.0)
        })
        .collect();
    ModeFunction::new(times, psi).unwrap().normalize().unwrap()
}

fn gaussian(center: f64, sigma: f64) -> ModeFunction {
    two_lobes(center, sigma, center, sigma, 0.0, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn symmetry_is_invariant(
        c1 in 120.0..180.0f64, w1 in 8.0..30.0f64, c2 in 200.0..260.0f64, w2 in 8.0..30.0f64,
        r in 0.0..1.0f64, tilt in -0.5..0.5f64, theta in -PI..PI, shift in -50.0..50.0f64,
    ) {
        let m = two_lobes(c1, w1, c2, w2, r, tilt);
        let s = symmetry(&m).s;
        prop_assert!(s <= 1.0 + 1e-9 && s >= 0.0);
        prop_assert!((symmetry(&m.with_phase(theta)).s - s).abs() < 1e-9);
        prop_assert!((symmetry(&m.shifted(shift)).s - s).abs() < 1e-9);
        prop_assert!((symmetry(&m.time_reversed()).s - s).abs() < 1e-6);
    }

    #[test]
    fn matched_filter_is_linear(
        a in -2.0..2.0f64, b in -2.0..2.0f64, ar in -2.0..2.0f64, br in -2.0..2.0f64, seed in 0u64..1000,
    ) {
        let m = gaussian(200.0, 25.0);
        let u: Vec<C64> = m.times.iter().map(|t| C64::new((t * 0.01 + seed as f64).sin(), (t * 0.03).cos())).collect();
        let v: Vec<C64> = m.times.iter().map(|t| C64::new((t * 0.02).cos(), (t * 0.05 + seed as f64).sin())).collect();
        let (ca, cb) = (C64::new(a, ar), C64::new(b, br));
        let w: Vec<C64> = u.iter().zip(&v).map(|(x, y)| ca * x + cb * y).collect();
        let lhs = matched_filter(&m, &m.times, &w).unwrap();
        let rhs = ca * matched_filter(&m, &m.times, &u).unwrap() + cb * matched_filter(&m, &m.times, &v).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-9 * (1.0 + rhs.norm()));
        // conjugate-linear in the mode
        let scaled = ModeFunction { psi: m.psi.iter().map(|p| p * ca).collect(), ..m.clone() };
        let got = matched_filter(&scaled, &m.times, &u).unwrap();
        let want = ca.conj() * matched_filter(&m, &m.times, &u).unwrap();
        prop_assert!((got - want).norm() < 1e-9 * (1.0 + want.norm()));
    }
}

#[test]
fn spectrum_follows_phase_ramp() {
    let base = gaussian(200.0, 30.0);
    for delta in [-0.02, 0.005, 0.03] {
        let m = base.with_phase_ramp(delta);
        let s = fourier_spectrum(&m, 0.1, 1e-4).unwrap();
        assert!((s.peak_frequency - delta).abs() < 2e-5, "{delta}: {}", s.peak_frequency);
        assert!((s.centroid_frequency - delta).abs() < 2e-4, "{delta}: {}", s.centroid_frequency);
        let moved = fourier_spectrum(&m.with_phase(1.1).shifted(37.0), 0.1, 1e-4).unwrap();
        for (x, y) in s.magnitude.iter().zip(&moved.magnitude) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn one_sided_exponential() {
    let gamma = 2.0 * PI * 0.0117;
    let times: Vec<f64> = (0..6000).map(|k| k as f64 * 0.1).collect();
    let psi = times.iter().map(|t| C64::new((-gamma * t / 2.0).exp(), 0.0)).collect();
    let m = ModeFunction::new(times, psi).unwrap().normalize().unwrap();
    assert!((symmetry(&m).s - 2.0 / std::f64::consts::E).abs() < 5e-3);
}

struct Runs {
    params: DeviceParams,
    map: StarkMap,
    compensated: OutputRecord,
    plain_env: Envelope,
    plain: OutputRecord,
}

fn runs() -> &'static Runs {
    static CELL: OnceLock<Runs> = OnceLock::new();
    CELL.get_or_init(|| {
        let params = DeviceParams::measured();
        let amps: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
        let map = stark_map_from_spectrum(&params, &amps).unwrap();
        let opts = EmissionOptions {
            drive_detuning: Some(static_detuning(&params).unwrap()),
            decoherence: Decoherence::CAVITY_ONLY,
            ..EmissionOptions::default()
        };
        let plain_env = synthesize_sin2(0.6, 500.0, 0.01).unwrap();
        let env = compensate_phase(&plain_env, &map).unwrap();
        let compensated = emit_photon(&params, &env, InitialState::Superposition, &opts).unwrap();
        let plain = emit_photon(&params, &plain_env, InitialState::Superposition, &opts).unwrap();
        Runs { params, map, compensated, plain_env, plain }
    })
}

fn shape_overlap(psi: &ModeFunction, weights: &[f64]) -> f64 {
    let norm: f64 = weights.iter().sum::<f64>() * psi.dt();
    psi.psi.iter().zip(weights).map(|(p, w)| (p.norm_sqr() * w.max(0.0) / norm).sqrt()).sum::<f64>() * psi.dt()
}

#[test]
fn mean_field_mode_tracks_emission() {
    let r = runs();
    let rec = &r.compensated;
    let m = mode_function(rec, ModeSource::MeanField).unwrap();
    let kappa = 2.0 * PI * r.params.kappa;
    let single: Vec<f64> = rec.level_populations.iter().map(|l| kappa * l[3]).collect();
    let o_single = shape_overlap(&m, &single);
    let o_power = shape_overlap(&m, &rec.power);
    assert!(o_single > 0.999, "{o_single}");
    assert!(o_power > 0.98, "{o_power}");
    let a = matched_filter(&m, &rec.times, &rec.a_out_mean).unwrap().norm();
    let p = rec.emitted_quanta();
    assert!(a <= (p * (1.0 - p)).sqrt() + 1e-6);
    let want = (0.5 * p).sqrt();
    assert!((a - want).abs() < 0.05 * want, "{a} vs {want}");
    assert!(m.phase_spread() < 0.15, "{}", m.phase_spread());
}

#[test]
fn uncompensated_spectrum_centroid_follows_stark_shift() {
    let r = runs();
    let rec = &r.plain;
    let m = mode_function(rec, ModeSource::MeanField).unwrap();
    let spec = fourier_spectrum(&m, DEFAULT_SPECTRUM_SPAN, DEFAULT_SPECTRUM_BIN).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for (t, p) in rec.times.iter().zip(&rec.power) {
        let a = r.plain_env.value_at(*t).norm();
        num += p * r.map.shift_at(a).unwrap();
        den += p;
    }
    let weighted = num / den;
    assert!(weighted < -0.01, "{weighted}");
    let rel = (spec.centroid_frequency + weighted).abs() / weighted.abs();
    assert!(rel < 0.2, "centroid {} vs shift {weighted}", spec.centroid_frequency);
    let comp = mode_function(&r.compensated, ModeSource::MeanField).unwrap();
    let comp_spec = fourier_spectrum(&comp, DEFAULT_SPECTRUM_SPAN, DEFAULT_SPECTRUM_BIN).unwrap();
    assert!(comp_spec.peak_frequency.abs() < 2e-3, "{}", comp_spec.peak_frequency);
    assert!(comp.phase_spread() < m.phase_spread());
}
