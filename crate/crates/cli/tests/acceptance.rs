//! Acceptance report: one PASS/FAIL line per criterion. Runs as a plain
//! binary so the report is always printed; it only exits non-zero when a
//! computation itself breaks.

use std::f64::consts::PI;
use std::time::Instant;

use anyhow::Result;
use mwphoton::config::ScenarioConfig;
use mwphoton::exec::Parallel;
use mwphoton::io::{RunDir, Summary};
use mwphoton::scenarios::{analyze_pulse, fock_target, photon_mode_state, superposition_target, Runner};
use mwphoton_core::analysis::{fourier_spectrum, mode_function, ModeSource, DEFAULT_SPECTRUM_BIN, DEFAULT_SPECTRUM_SPAN};
use mwphoton_core::calibration::{calibrate_amplitude, evaluate_cell, stark_map_from_spectrum};
use mwphoton_core::device::{
    dressed_spectrum, effective_coupling_perturbative, transmon_charge_basis, tune_josephson_energy, DeviceParams,
};
use mwphoton_core::dynamics::{
    emit_photon, propagate, Decoherence, EmissionOptions, InitialState, LindbladModel, OutputRecord, PropagateOptions,
};
use mwphoton_core::linalg::CMatrix;
use mwphoton_core::pulses::{compensate_phase, synthesize_sin2, Envelope, StarkMap};
use mwphoton_core::quantum::State;
use mwphoton_core::tomography::{
    convolve_moments, deconvolve_moments, run_tomography, MomentSet, NoiseModel, TomographySettings,
};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    lines: Vec<String>,
    records: Vec<(String, f64, f64)>,
}

impl Report {
    fn line(&mut self, id: &str, passed: bool, started: Instant, detail: String) {
        let l = format!(
            "{} criterion {id}: {detail} [{:.1} s]",
            if passed { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        println!("{l}");
        self.lines.push(l);
    }

    fn note(&mut self, text: String) {
        println!("     {text}");
        self.lines.push(format!("     {text}"));
    }

    fn keep(&mut self, name: &str, rec: &OutputRecord) {
        self.records.push((name.to_string(), rec.max_trace_drift, rec.min_probe_eigenvalue));
    }
}

struct Shared {
    cfg: ScenarioConfig,
    params: DeviceParams,
    opts: EmissionOptions,
    map: StarkMap,
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn coupling(r: &mut Report, s: &Shared) -> Result<()> {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (amp, pert, exact) in [(0.7, 5.2, 5.5), (0.6, 4.4, 4.6)] {
        let g = effective_coupling_perturbative(&s.params, C64::new(amp, 0.0))?.norm() * 1e3;
        let d = dressed_spectrum(&s.params, amp)?.g_tilde * 1e3;
        ok &= within((g * 10.0).round() / 10.0, pert, 1e-9) && within(d, exact, 0.2);
        parts.push(format!("Ω0 {amp} GHz: perturbative {g:.3} MHz, diagonalized {d:.3} MHz"));
    }
    ok &= t.elapsed().as_secs_f64() < 1.0;
    r.line("1", ok, t, parts.join("; "));
    Ok(())
}

fn symmetry_cells(r: &mut Report, s: &Shared) -> Result<()> {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (dur, amp, pass) in [(200.0, 0.7, 0.97), (500.0, 0.6, 0.98), (20.0, 0.68, -0.95)] {
        let c = evaluate_cell(&s.params, dur, amp, &s.map, &s.opts)?;
        ok &= if pass > 0.0 { c.s >= pass } else { c.s <= -pass };
        parts.push(format!("s({dur} ns, {amp} GHz) = {:.4}", c.s));
    }
    r.line("2", ok, t, parts.join(", "));
    Ok(())
}

/// Criteria 3 and 5 share the calibrated 500 ns pulse.
fn calibrated_pulse(r: &mut Report, s: &Shared) -> Result<Envelope> {
    let t = Instant::now();
    let p = &s.cfg.pulse;
    let cell = calibrate_amplitude(&s.params, 500.0, (p.calibration_range[0], p.calibration_range[1]), p.calibration_tol, &s.map, &s.opts)?;
    let env = compensate_phase(&synthesize_sin2(cell.amplitude, 500.0, 0.01)?, &s.map)?;
    let fock = emit_photon(&s.params, &env, InitialState::F0, &s.opts)?;
    let sup = emit_photon(&s.params, &env, InitialState::Superposition, &s.opts)?;
    r.keep("calibrated F0", &fock);
    r.keep("calibrated superposition", &sup);
    let (eff, res, n_sup) = (fock.emitted_quanta(), fock.residual_f0, sup.emitted_quanta());
    let ok = within(eff, 0.79, 0.03) && (0.005..=0.03).contains(&res) && within(n_sup, 0.39, 0.03);
    r.line(
        "3",
        ok,
        t,
        format!(
            "Ω0 = {:.4} GHz (s = {:.4}), ∫power = {eff:.4}, residual P(f0) = {res:.4}, superposition ⟨A†A⟩ = {n_sup:.4}",
            cell.amplitude, cell.s
        ),
    );
    Ok(env)
}

fn compensation(r: &mut Report, s: &Shared, calibrated: &Envelope) -> Result<()> {
    let t = Instant::now();
    let pa = analyze_pulse(&s.params, calibrated, &s.opts)?;
    let spread = pa.mode.phase_spread();
    let plain_env = synthesize_sin2(0.6, 500.0, 0.01)?;
    let plain = emit_photon(&s.params, &plain_env, InitialState::Superposition, &s.opts)?;
    r.keep("uncompensated superposition", &plain);
    let mode = mode_function(&plain, ModeSource::MeanField)?;
    let spec = fourier_spectrum(&mode, DEFAULT_SPECTRUM_SPAN, DEFAULT_SPECTRUM_BIN)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (time, p) in plain.times.iter().zip(&plain.power) {
        num += p * s.map.shift_at(plain_env.value_at(*time).norm())?;
        den += p;
    }
    let predicted = -num / den;
    let rel = |x: f64| (x - predicted).abs() / predicted.abs();
    let ok = spread < 0.1 && rel(spec.centroid_frequency) < 0.2;
    r.line(
        "4",
        ok,
        t,
        format!(
            "phase spread {spread:.4} rad; uncompensated centroid {:+.2} MHz vs predicted {:+.2} MHz ({:.1}%), peak {:+.2} MHz ({:.1}%)",
            spec.centroid_frequency * 1e3,
            predicted * 1e3,
            100.0 * rel(spec.centroid_frequency),
            spec.peak_frequency * 1e3,
            100.0 * rel(spec.peak_frequency)
        ),
    );
    Ok(())
}

fn tomography(r: &mut Report, s: &Shared, env: &Envelope, exec: &Parallel) -> Result<()> {
    let t = Instant::now();
    let settings: TomographySettings = s.cfg.tomography.settings();
    let n_max = settings.n_max;
    let pa = analyze_pulse(&s.params, env, &s.opts)?;
    let (fock_state, fock_rho) = photon_mode_state(&s.params, env, &pa.mode, InitialState::F0, &s.opts, n_max)?;
    let (sup_state, sup_rho) = photon_mode_state(&s.params, env, &pa.mode, InitialState::Superposition, &s.opts, n_max)?;
    let summarize = |shots: u64| -> Result<(Option<(f64, f64)>, f64, f64)> {
        let cfg = TomographySettings { shots, ..settings };
        let f = run_tomography(&fock_rho, &fock_target(n_max), &cfg, exec)?;
        let p = run_tomography(&sup_rho, &superposition_target(n_max), &cfg, exec)?;
        Ok((f.g2, f.estimate.fidelity, p.estimate.fidelity))
    };
    let (g2, f1, fs) = summarize(settings.shots)?;
    let g2_text = g2.map_or("undefined".to_string(), |(g, e)| format!("{g:.3} ± {e:.3}"));
    let ok = g2.is_some_and(|(g, _)| g < 0.15) && within(f1, 0.76, 0.05) && within(fs, 0.86, 0.05);
    r.line(
        "5",
        ok,
        t,
        format!("{} shots, N = {}: g² = {g2_text}, F(|1⟩) = {f1:.3}, F(|0⟩+|1⟩) = {fs:.3}", settings.shots, settings.n_thermal),
    );
    r.note(format!(
        "mode state: Fock ⟨A†A⟩ {:.4} (single-mode {:.4}), superposition |⟨A⟩| {:.4}",
        fock_state.emitted,
        fock_state.matched.photon_number,
        sup_state.matched.amplitude.norm()
    ));
    let t = Instant::now();
    let (g2, f1, fs) = summarize(100_000_000)?;
    let g2_text = g2.map_or("undefined".to_string(), |(g, e)| format!("{g:.4} ± {e:.4}"));
    r.note(format!(
        "diagnostic at 10⁸ shots: g² = {g2_text}, F(|1⟩) = {f1:.4}, F(|0⟩+|1⟩) = {fs:.4} [{:.1} s]",
        t.elapsed().as_secs_f64()
    ));
    Ok(())
}

fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> CMatrix {
    let mut rho = CMatrix::zeros(dim);
    let mut total = 0.0;
    for _ in 0..3 {
        let v: Vec<C64> = (0..dim).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let w: f64 = rng.random_range(0.0..1.0);
        rho += &CMatrix::outer(&v, &v).scale_real(w);
        total += w * v.iter().map(|c| c.norm_sqr()).sum::<f64>();
    }
    rho.scale_real(1.0 / total)
}

fn moment_inversion(r: &mut Report) -> Result<()> {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let noise = NoiseModel::new(10.0)?.antinormal_moments(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let exact = MomentSet::from_density_matrix(&random_state(&mut rng, 4), 4);
        let back = deconvolve_moments(&convolve_moments(&exact, &noise)?, &noise)?;
        for (n, m) in exact.indices() {
            worst = worst.max((back.get(n, m) - exact.get(n, m)).norm());
        }
    }
    r.line("6", worst < 1e-12, t, format!("20 random states, N = 10, worst moment error {worst:.2e}"));
    Ok(())
}

fn invariants(r: &mut Report, s: &Shared, calibrated: &Envelope, scenarios_ok: bool) -> Result<()> {
    let t = Instant::now();
    let (drift, eig) = r.records.iter().fold((0.0f64, f64::INFINITY), |(d, e), x| (d.max(x.1), e.min(x.2)));
    let mut ok = drift < 1e-7 && eig > -1e-6 && scenarios_ok;
    let runs = r.records.len();

    let bare = DeviceParams { g: 0.0, ..s.params };
    let kappa = 2.0 * PI * bare.kappa;
    let model = LindbladModel::new(&bare, Envelope::zero(0.0, 40.0, 0.1), 0.0, Decoherence::CAVITY_ONLY)?;
    let decay = propagate(&model, &State::basis_state(bare.basis(), 0, 1), 0.0, 40.0, &PropagateOptions::default())?;
    let decay_err = decay
        .record
        .times
        .iter()
        .zip(&decay.record.fock_populations)
        .map(|(t, p)| (p[1] / (-kappa * t).exp() - 1.0).abs())
        .fold(0.0, f64::max);

    let model = LindbladModel::new(&s.params, Envelope::zero(0.0, 300.0, 0.1), 0.0, Decoherence::CAVITY_ONLY)?;
    let leak = propagate(&model, &State::basis_state(s.params.basis(), 1, 0), 0.0, 300.0, &PropagateOptions::default())?.record;
    let exc = leak.excitations();
    let mut emitted = 0.0;
    let mut balance: f64 = 0.0;
    for k in 1..leak.times.len() {
        emitted += 0.5 * (leak.power[k] + leak.power[k - 1]) * leak.stride();
        balance = balance.max((exc[k] + emitted - exc[0]).abs());
    }

    let coarse = EmissionOptions { dt: 2.0 * s.opts.dt, ..s.opts };
    let a = emit_photon(&s.params, calibrated, InitialState::F0, &coarse)?;
    let b = emit_photon(&s.params, calibrated, InitialState::F0, &s.opts)?;
    let richardson = (a.emitted_quanta() - b.emitted_quanta()).abs().max((a.residual_f0 - b.residual_f0).abs());

    ok &= decay_err < 1e-4 && balance < 1e-4 && richardson < 1e-4;
    r.line(
        "7",
        ok,
        t,
        format!(
            "{runs} runs plus train and reset scenarios: trace drift {drift:.1e}, min eigenvalue {eig:.1e}; decay {decay_err:.1e} rel, balance {balance:.1e}, dt-halving {richardson:.1e}"
        ),
    );
    Ok(())
}

fn scenario_records(r: &mut Report, summary: &Summary, tag: &str) -> bool {
    let failed: Vec<&str> = summary
        .assertions
        .iter()
        .filter(|a| !a.passed && (a.name.ends_with("_trace") || a.name.ends_with("_positivity")))
        .map(|a| a.name.as_str())
        .collect();
    if !failed.is_empty() {
        r.note(format!("{tag}: invariant failures {failed:?}"));
    }
    failed.is_empty()
}

fn train(r: &mut Report, runner: &Runner<'_, Parallel>) -> Result<bool> {
    let t = Instant::now();
    let summary = runner.scenario("fig4-train")?;
    let m = |k: &str| summary.metrics.get(k).copied().unwrap_or(f64::NAN);
    let worst_power = (1..=6).map(|k| m(&format!("flip{k}_power_deviation"))).fold(0.0, f64::max);
    let worst_flip = (1..=6).map(|k| m(&format!("flip{k}_flipped_projection"))).fold(f64::NEG_INFINITY, f64::max);
    let worst_other = (1..=6).map(|k| m(&format!("flip{k}_other_projection_min"))).fold(f64::INFINITY, f64::min);
    let passed = summary.passed();
    r.line(
        "8",
        passed,
        t,
        format!(
            "{} resolved peaks; flipped projection ≤ {worst_flip:.3}, others ≥ {worst_other:.3}; power deviation ≤ {:.2}%",
            m("resolved_peaks"),
            100.0 * worst_power
        ),
    );
    Ok(scenario_records(r, &summary, "fig4-train"))
}

fn reset(r: &mut Report, runner: &Runner<'_, Parallel>) -> Result<bool> {
    let t = Instant::now();
    let summary = runner.reset()?;
    let p = summary.metrics.get("final_P_e").copied().unwrap_or(f64::NAN);
    r.line("9", p <= 0.04, t, format!("P(e) 0.13 → {p:.4} after {} rounds", runner.cfg.reset.rounds));
    Ok(scenario_records(r, &summary, "reset"))
}

fn charge_basis(r: &mut Report) -> Result<()> {
    let t = Instant::now();
    let e_j = tune_josephson_energy(0.406, 8.640, 0.0)?;
    let s = transmon_charge_basis(0.406, e_j, 0.0, 4)?;
    let alpha = s.energies[2] - 2.0 * s.energies[1] + s.energies[0];
    let ok = (alpha + 0.421).abs() / 0.421 < 0.10;
    r.line("10", ok, t, format!("E_J = {e_j:.3} GHz, ω_ge = {:.4} GHz, α = {:.1} MHz", s.energies[1] - s.energies[0], alpha * 1e3));
    Ok(())
}

fn main() -> Result<()> {
    if std::env::args().any(|a| a == "--list") {
        return Ok(());
    }
    let exec = Parallel::new(0)?;
    let cfg = ScenarioConfig::measured();
    let params = cfg.device;
    let opts = cfg.emission_options()?;
    let map = stark_map_from_spectrum(&params, &cfg.stark.amplitudes)?;
    let shared = Shared { cfg: cfg.clone(), params, opts, map };
    let mut report = Report { lines: Vec::new(), records: Vec::new() };

    coupling(&mut report, &shared)?;
    symmetry_cells(&mut report, &shared)?;
    let calibrated = calibrated_pulse(&mut report, &shared)?;
    compensation(&mut report, &shared, &calibrated)?;
    tomography(&mut report, &shared, &calibrated, &exec)?;
    moment_inversion(&mut report)?;

    let dir = tempfile::tempdir()?;
    let mut run_cfg = cfg.clone();
    run_cfg.output.dir = dir.path().to_path_buf();
    let runner = Runner::new(&run_cfg, &exec, RunDir::create(dir.path())?)?;
    let train_ok = train(&mut report, &runner)?;
    let reset_ok = reset(&mut report, &runner)?;
    invariants(&mut report, &shared, &calibrated, train_ok && reset_ok)?;
    charge_basis(&mut report)?;

    let failed = report.lines.iter().filter(|l| l.starts_with("FAIL")).count();
    println!("acceptance: {} of 10 criteria pass", 10 - failed);
    Ok(())
}
