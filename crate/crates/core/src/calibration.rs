//! Closed-loop calibration experiments run against the simulator: symmetry
//! sweeps, Stark-shift maps, drive-frequency correction, preparation-pulse
//! tuning and active reset.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::analysis::{fourier_spectrum, mode_function, symmetry, ModeSource, DEFAULT_SPECTRUM_BIN, DEFAULT_SPECTRUM_SPAN};
use crate::device::{golden_section, stark_shift_estimate, static_detuning, tracked_energies, DeviceParams, FrameHamiltonian};
use crate::dynamics::{emit_photon, propagate, Decoherence, EmissionOptions, InitialState, LindbladModel, PropagateOptions};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::pulses::{compensate_phase, synthesize_sin2, Envelope, GaussianPulse, PrepCalibration, StarkMap, Transition};
use crate::quantum::{partial_trace_transmon, State};

/// Runs independent jobs; implementations may parallelize but must return
/// results in input order.
pub trait Executor {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send;
}

/// Runs jobs one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        items.into_iter().map(f).collect()
    }
}

/// Sweep grid of pulse lengths (ns) and peak amplitudes (GHz).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepGrid {
    pub durations: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            durations: (0..12).map(|k| 60.0 + 40.0 * k as f64).collect(),
            amplitudes: (1..=10).map(|k| 0.1 * k as f64).collect(),
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.durations.is_empty() || self.amplitudes.is_empty() {
            return Err(Error::Configuration("sweep grid is empty".into()));
        }
        if self.durations.iter().any(|t| !(20.0..=1000.0).contains(t)) {
            return Err(Error::InvalidParameter { field: "durations", reason: "must lie in [20, 1000] ns".into() });
        }
        if self.amplitudes.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::InvalidParameter { field: "amplitudes", reason: "must lie in (0, 1] GHz".into() });
        }
        Ok(())
    }

    fn step(values: &[f64]) -> f64 {
        if values.len() > 1 {
            (values[values.len() - 1] - values[0]).abs() / (values.len() - 1) as f64
        } else {
            values[0] * 0.1
        }
    }
}

/// One evaluated pulse of a symmetry sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepCell {
    pub duration: f64,
    pub amplitude: f64,
    pub s: f64,
    /// Emitted quanta per unit |f0⟩ population.
    pub efficiency: f64,
    /// Final P(f0) per unit initial |f0⟩ population.
    pub residual_f0: f64,
}

/// Grid scores plus the refined optimum.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepResult {
    pub grid: Vec<SweepCell>,
    /// Cells evaluated during coordinate-descent refinement.
    pub refinement: Vec<SweepCell>,
    pub best_on_grid: SweepCell,
    pub best: SweepCell,
}

/// Rounds of coordinate descent after the grid search.
pub const REFINEMENT_ROUNDS: usize = 3;

/// Stark-compensated sin² pulse.
pub fn shaped_pulse(amplitude: f64, duration: f64, stark: &StarkMap) -> Result<Envelope> {
    compensate_phase(&synthesize_sin2(amplitude, duration, crate::pulses::DEFAULT_ENVELOPE_DT)?, stark)
}

/// Emits the superposition-state photon for one pulse and scores it.
pub fn evaluate_cell(params: &DeviceParams, duration: f64, amplitude: f64, stark: &StarkMap, opts: &EmissionOptions) -> Result<SweepCell> {
    let env = shaped_pulse(amplitude, duration, stark)?;
    let rec = emit_photon(params, &env, InitialState::Superposition, opts)?;
    let emitted = rec.emitted_quanta();
    let s = match mode_function(&rec, ModeSource::MeanField) {
        Ok(m) => symmetry(&m).s,
        Err(Error::EmptyRecord(_)) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(SweepCell { duration, amplitude, s, efficiency: 2.0 * emitted, residual_f0: 2.0 * rec.residual_f0 })
}

fn better(a: &SweepCell, b: &SweepCell) -> bool {
    a.s > b.s
}

/// Grid search of the symmetry score followed by coordinate-descent refinement
/// around the best cell, with steps halved after every round.
pub fn sweep_symmetry<E: Executor>(
    params: &DeviceParams,
    grid: &SweepGrid,
    stark: &StarkMap,
    opts: &EmissionOptions,
    exec: &E,
) -> Result<SweepResult> {
    grid.validate()?;
    let jobs: Vec<(f64, f64)> = grid
        .durations
        .iter()
        .flat_map(|&t| grid.amplitudes.iter().map(move |&a| (t, a)))
        .collect();
    let cells: Vec<SweepCell> = exec
        .map(jobs, |(t, a)| evaluate_cell(params, t, a, stark, opts))
        .into_iter()
        .collect::<Result<_>>()?;
    if cells.iter().all(|c| c.efficiency < 1e-6) {
        return Err(Error::Configuration("no emission anywhere on the sweep grid".into()));
    }
    let best_on_grid = *cells.iter().fold(&cells[0], |b, c| if better(c, b) { c } else { b });

    let a_max = stark.max_amplitude().min(1.0);
    let mut best = best_on_grid;
    let mut refinement = Vec::new();
    let mut dt_step = SweepGrid::step(&grid.durations) / 2.0;
    let mut da_step = SweepGrid::step(&grid.amplitudes) / 2.0;
    for _ in 0..REFINEMENT_ROUNDS {
        for axis in 0..2 {
            let candidates: Vec<(f64, f64)> = [-1.0, 1.0]
                .iter()
                .map(|sgn| {
                    if axis == 0 {
                        ((best.duration + sgn * dt_step).clamp(20.0, 1000.0), best.amplitude)
                    } else {
                        (best.duration, (best.amplitude + sgn * da_step).clamp(1e-3, a_max))
                    }
                })
                .filter(|&(t, a)| (t, a) != (best.duration, best.amplitude))
                .collect();
            let evaluated: Vec<SweepCell> = exec
                .map(candidates, |(t, a)| evaluate_cell(params, t, a, stark, opts))
                .into_iter()
                .collect::<Result<_>>()?;
            for c in evaluated {
                refinement.push(c);
                if better(&c, &best) {
                    best = c;
                }
            }
        }
        dt_step /= 2.0;
        da_step /= 2.0;
    }
    Ok(SweepResult { grid: cells, refinement, best_on_grid, best })
}

/// Amplitude maximizing the symmetry score at a fixed pulse length.
pub fn calibrate_amplitude(
    params: &DeviceParams,
    duration: f64,
    range: (f64, f64),
    tol: f64,
    stark: &StarkMap,
    opts: &EmissionOptions,
) -> Result<SweepCell> {
    let mut failure = None;
    let (amp, _) = golden_section(
        |a| match evaluate_cell(params, duration, a, stark, opts) {
            Ok(c) => -c.s,
            Err(e) => {
                failure = Some(e);
                0.0
            }
        },
        range.0,
        range.1.min(stark.max_amplitude()),
        tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    evaluate_cell(params, duration, amp, stark, opts)
}

/// Settings for the square-pulse Stark scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarkScanOptions {
    /// Square pulse length (ns).
    pub pulse_length: f64,
    /// sin² rise and fall time added at each edge (ns).
    pub edge: f64,
    pub coarse_points: usize,
    pub fine_points: usize,
    /// Points around the minimum used by the parabolic fit.
    pub fit_points: usize,
    pub dt: f64,
    pub decoherence: Decoherence,
}

impl Default for StarkScanOptions {
    fn default() -> Self {
        Self {
            pulse_length: 100.0,
            edge: 10.0,
            coarse_points: 21,
            fine_points: 11,
            fit_points: 5,
            dt: crate::dynamics::DEFAULT_DT,
            decoherence: Decoherence::ALL,
        }
    }
}

/// Scan result for one amplitude.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StarkPoint {
    pub amplitude: f64,
    /// Detuning of P(f) minimum relative to the zero-amplitude resonance (GHz).
    pub shift: f64,
    /// (detuning, final P(f)) for every simulated point.
    pub curve: Vec<(f64, f64)>,
}

/// Calibrated map plus the raw scans behind it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StarkCalibration {
    pub map: StarkMap,
    pub points: Vec<StarkPoint>,
}

/// Flat-top pulse of the given plateau length with sin² edges.
pub fn square_pulse(amplitude: f64, length: f64, edge: f64) -> Result<Envelope> {
    if !(length > 0.0) || edge < 0.0 {
        return Err(Error::InvalidParameter { field: "pulse_length", reason: "must be positive".into() });
    }
    if edge == 0.0 {
        return Envelope::new(0.0, length, vec![C64::new(amplitude, 0.0); 2]);
    }
    let dt = crate::pulses::DEFAULT_ENVELOPE_DT;
    let total = length + 2.0 * edge;
    let n = (total / dt).round() as usize + 1;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            let ramp = |x: f64| {
                let s = (core::f64::consts::FRAC_PI_2 * (x / edge).clamp(0.0, 1.0)).sin();
                s * s
            };
            C64::new(amplitude * ramp(t).min(ramp(total - t)), 0.0)
        })
        .collect();
    Envelope::new(0.0, dt, samples)
}

/// Final transmon |f⟩ population after a square pulse from |f0⟩.
pub fn square_pulse_f_population(params: &DeviceParams, amplitude: f64, detuning: f64, scan: &StarkScanOptions) -> Result<f64> {
    let env = square_pulse(amplitude, scan.pulse_length, scan.edge)?;
    let t_end = env.t_end();
    let model = LindbladModel::new(params, env, detuning, scan.decoherence)?;
    let rho0 = State::basis_state(params.basis(), 2, 0);
    let opts = PropagateOptions { dt: scan.dt, stride: t_end / 10.0, keep_snapshots: false, positivity_probes: 0 };
    let out = propagate(&model, &rho0, 0.0, t_end, &opts)?;
    Ok(partial_trace_transmon(&out.final_state)[(2, 2)].re)
}

/// Vertex of a least-squares parabola through the points.
fn parabola_vertex(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    let xm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mut s = [0.0f64; 7];
    for &(x, y) in points {
        let u = x - xm;
        s[0] += 1.0;
        s[1] += u;
        s[2] += u * u;
        s[3] += u * u * u;
        s[4] += u * u * u * u;
        s[5] += y * u;
        s[6] += y * u * u;
    }
    let sy: f64 = points.iter().map(|p| p.1).sum();
    // normal equations for y = c0 + c1 u + c2 u²
    let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let r = [sy, s[5], s[6]];
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut c = [0.0; 3];
    for (k, ck) in c.iter_mut().enumerate() {
        let mut mk = m;
        for i in 0..3 {
            mk[i][k] = r[i];
        }
        *ck = det(&mk) / d;
    }
    if c[2] <= 0.0 {
        return None;
    }
    Some(xm - c[1] / (2.0 * c[2]))
}

fn argmin(curve: &[(f64, f64)]) -> usize {
    curve.iter().enumerate().fold(0, |b, (i, p)| if p.1 < curve[b].1 { i } else { b })
}

/// Stark shift at one amplitude from the P(f) minimum of a detuning scan.
pub fn stark_point(params: &DeviceParams, amplitude: f64, scan: &StarkScanOptions) -> Result<StarkPoint> {
    if amplitude == 0.0 {
        return Ok(StarkPoint { amplitude, shift: 0.0, curve: Vec::new() });
    }
    let base = static_detuning(params)?;
    let est = stark_shift_estimate(params, amplitude)?;
    let mut half = 2.0 * est.abs() + 0.002;
    let mut curve = Vec::new();
    let pf = |d: f64| square_pulse_f_population(params, amplitude, base + d, scan);
    let n = scan.coarse_points.max(5);
    let mut widened = false;
    let (k, step) = loop {
        let step = 2.0 * half / (n - 1) as f64;
        let coarse: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let d = -half + i as f64 * step;
                pf(d).map(|p| (d, p))
            })
            .collect::<Result<_>>()?;
        let k = argmin(&coarse);
        curve.extend_from_slice(&coarse);
        if k > 0 && k < n - 1 {
            break (coarse[k].0, step);
        }
        if widened {
            return Err(Error::NoStarkMinimum { amplitude });
        }
        widened = true;
        half *= 2.0;
    };
    let nf = scan.fine_points.max(scan.fit_points).max(3);
    let fine_step = 2.0 * step / (nf - 1) as f64;
    let mut fine: Vec<(f64, f64)> = (0..nf)
        .map(|i| {
            let d = k - step + i as f64 * fine_step;
            pf(d).map(|p| (d, p))
        })
        .collect::<Result<_>>()?;
    curve.extend_from_slice(&fine);
    fine.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut lowest: Vec<(f64, f64)> = fine.iter().take(scan.fit_points.max(3)).copied().collect();
    lowest.sort_by(|a, b| a.0.total_cmp(&b.0));
    let shift = match parabola_vertex(&lowest) {
        Some(v) if v >= k - step && v <= k + step => v,
        _ => fine[0].0,
    };
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(StarkPoint { amplitude, shift, curve })
}

/// Stark map from square-pulse scans at each amplitude (zero is added).
pub fn stark_calibration<E: Executor>(
    params: &DeviceParams,
    amplitudes: &[f64],
    scan: &StarkScanOptions,
    exec: &E,
) -> Result<StarkCalibration> {
    let mut amps: Vec<f64> = amplitudes.iter().copied().filter(|a| *a > 0.0).collect();
    if amps.iter().any(|a| !a.is_finite() || *a > crate::pulses::DEFAULT_AWG_CEILING) {
        return Err(Error::InvalidParameter { field: "amplitudes", reason: "outside the generator range".into() });
    }
    amps.sort_by(f64::total_cmp);
    amps.dedup();
    let points: Vec<StarkPoint> = exec
        .map(amps.clone(), |a| stark_point(params, a, scan))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut grid = vec![0.0];
    let mut shifts = vec![0.0];
    for p in &points {
        grid.push(p.amplitude);
        shifts.push(p.shift);
    }
    if shifts.windows(2).any(|w| w[1].abs() < w[0].abs()) {
        log::warn!("calibrated Stark shift is not monotone in amplitude");
    }
    Ok(StarkCalibration { map: StarkMap::new(grid, shifts)?, points })
}

/// Stark map straight from dressed-state diagonalization.
pub fn stark_map_from_spectrum(params: &DeviceParams, amplitudes: &[f64]) -> Result<StarkMap> {
    let mut grid = vec![0.0];
    let mut shifts = vec![0.0];
    for &a in amplitudes.iter().filter(|a| **a > 0.0) {
        grid.push(a);
        shifts.push(crate::device::dressed_spectrum(params, a)?.stark_shift);
    }
    StarkMap::new(grid, shifts)
}

/// Photon spectral peak versus drive offset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrequencyCalibration {
    /// Drive offsets relative to the base detuning (GHz).
    pub offsets: Vec<f64>,
    /// Photon spectral peak for each offset (GHz).
    pub peaks: Vec<f64>,
    pub monotone: bool,
    /// Offset at which the peak crosses zero, when the curve allows it.
    pub correction: Option<f64>,
}

/// Spectral peak of the superposition-state photon.
pub fn photon_peak(params: &DeviceParams, envelope: &Envelope, opts: &EmissionOptions) -> Result<f64> {
    let rec = emit_photon(params, envelope, InitialState::Superposition, opts)?;
    let mode = mode_function(&rec, ModeSource::MeanField)?;
    Ok(fourier_spectrum(&mode, DEFAULT_SPECTRUM_SPAN, DEFAULT_SPECTRUM_BIN)?.peak_frequency)
}

/// Finds the drive offset that puts the photon peak at zero detuning.
pub fn frequency_calibration<E: Executor>(
    params: &DeviceParams,
    envelope: &Envelope,
    offsets: &[f64],
    opts: &EmissionOptions,
    exec: &E,
) -> Result<FrequencyCalibration> {
    if offsets.len() < 2 {
        return Err(Error::InvalidParameter { field: "offsets", reason: "need at least two offsets".into() });
    }
    let base = match opts.drive_detuning {
        Some(d) => d,
        None => static_detuning(params)?,
    };
    let mut offsets = offsets.to_vec();
    offsets.sort_by(f64::total_cmp);
    let peaks: Vec<f64> = exec
        .map(offsets.clone(), |o| {
            let o = EmissionOptions { drive_detuning: Some(base + o), ..*opts };
            photon_peak(params, envelope, &o)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let increasing = peaks.windows(2).all(|w| w[1] > w[0]);
    let decreasing = peaks.windows(2).all(|w| w[1] < w[0]);
    let monotone = increasing || decreasing;
    let mut correction = None;
    if monotone {
        for i in 0..peaks.len() - 1 {
            let (p0, p1) = (peaks[i], peaks[i + 1]);
            if p0 == 0.0 {
                correction = Some(offsets[i]);
                break;
            }
            if p0 * p1 <= 0.0 {
                correction = Some(offsets[i] + (offsets[i + 1] - offsets[i]) * p0 / (p0 - p1));
                break;
            }
        }
    } else {
        log::warn!("photon peak is not monotone in the drive offset");
    }
    Ok(FrequencyCalibration { offsets, peaks, monotone, correction })
}

/// Drive offset (relative to the base detuning) maximizing the symmetry score.
pub fn symmetry_frequency_calibration(
    params: &DeviceParams,
    envelope: &Envelope,
    half_range: f64,
    tol: f64,
    opts: &EmissionOptions,
) -> Result<(f64, f64)> {
    let base = match opts.drive_detuning {
        Some(d) => d,
        None => static_detuning(params)?,
    };
    let mut failure = None;
    let (x, neg) = golden_section(
        |o| {
            let o = EmissionOptions { drive_detuning: Some(base + o), ..*opts };
            match emit_photon(params, envelope, InitialState::Superposition, &o).and_then(|r| mode_function(&r, ModeSource::MeanField)) {
                Ok(m) => -symmetry(&m).s,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        -half_range,
        half_range,
        tol,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok((x, -neg)),
    }
}

/// Transition frequencies of g→e and e→f in the integration frame (GHz).
pub fn transition_offsets(params: &DeviceParams, drive_detuning: f64) -> Result<(f64, f64)> {
    let fh = FrameHamiltonian::new(params, drive_detuning)?;
    let e = tracked_energies(&fh, 0.0)?;
    let b = fh.basis;
    Ok((e[b.index(1, 0)] - e[b.index(0, 0)], e[b.index(2, 0)] - e[b.index(1, 0)]))
}

/// Transmon populations after a single Gaussian pulse.
pub fn prep_pulse_populations(params: &DeviceParams, pulse: &GaussianPulse, initial_level: usize, drive_detuning: f64, dt: f64) -> Result<Vec<f64>> {
    let (ge, ef) = transition_offsets(params, drive_detuning)?;
    let offset = match pulse.transition {
        Transition::Ge => ge,
        Transition::Ef => ef,
    };
    let env = pulse.render(offset, pulse.start, pulse.end(), crate::pulses::DEFAULT_ENVELOPE_DT);
    let model = LindbladModel::new(params, env, drive_detuning, Decoherence::NONE)?;
    let rho0 = State::basis_state(params.basis(), initial_level, 0);
    let opts = PropagateOptions { dt, stride: pulse.length / 10.0, keep_snapshots: false, positivity_probes: 0 };
    let out = propagate(&model, &rho0, pulse.start, pulse.end(), &opts)?;
    let q = partial_trace_transmon(&out.final_state);
    Ok((0..q.dim()).map(|k| q[(k, k)].re).collect())
}

/// Rabi-style tuning of amplitude and frequency correction for the
/// preparation pulses, on a decoherence-free model.
pub fn calibrate_prep(params: &DeviceParams, drive_detuning: f64, dt: f64) -> Result<PrepCalibration> {
    let guess = PrepCalibration::area_theorem();
    let tune = |transition: Transition, a0: f64, lower: usize, target: usize| -> Result<(f64, f64)> {
        let mut failure = None;
        let mut eval = |amp: f64, det: f64| {
            let mut p = GaussianPulse::new(transition, amp, 0.0);
            p.detuning = det;
            match prep_pulse_populations(params, &p, lower, drive_detuning, dt) {
                Ok(pops) => -pops[target],
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        };
        let (mut amp, mut det) = (a0, 0.0);
        for _ in 0..2 {
            amp = golden_section(|a| eval(a, det), 0.7 * amp, 1.3 * amp, 1e-6).0;
            det = golden_section(|d| eval(amp, d), det - 0.01, det + 0.01, 1e-6).0;
        }
        match failure {
            Some(e) => Err(e),
            None => Ok((amp, det)),
        }
    };
    let (ge_pi, ge_detuning) = tune(Transition::Ge, guess.ge_pi, 0, 1)?;
    let (ef_pi, ef_detuning) = tune(Transition::Ef, guess.ef_pi, 1, 2)?;
    // half-π: equal g/e populations at the π-pulse frequency
    let mut failure = None;
    let ge_half_pi = golden_section(
        |a| {
            let mut p = GaussianPulse::new(Transition::Ge, a, 0.0);
            p.detuning = ge_detuning;
            match prep_pulse_populations(params, &p, 0, drive_detuning, dt) {
                Ok(pops) => (pops[1] - 0.5).abs(),
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        0.3 * ge_pi,
        0.7 * ge_pi,
        1e-7,
    )
    .0;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(PrepCalibration { ge_pi, ge_half_pi, ef_pi, ge_detuning, ge_half_detuning: ge_detuning, ef_detuning })
}

/// Settings for the active reset sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResetConfig {
    pub rounds: usize,
    /// f0→g1 transfer pulse length (ns).
    pub transfer_duration: f64,
    /// f0→g1 transfer pulse peak amplitude (GHz).
    pub transfer_amplitude: f64,
    /// Wait after each transfer, in units of 1/κ.
    pub wait_lifetimes: f64,
}

impl Default for ResetConfig {
    fn default() -> Self {
        Self { rounds: 3, transfer_duration: 200.0, transfer_amplitude: 0.8, wait_lifetimes: 6.0 }
    }
}

/// Outcome of [`reset_protocol`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResetResult {
    pub initial_p_e: f64,
    /// P(e) after each round.
    pub p_e_after_round: Vec<f64>,
    pub final_p_e: f64,
}

/// Repeated e→f swap, f0→g1 transfer and cavity wait, starting from a
/// thermal transmon state diag(1 − P_e, P_e) with an empty resonator.
pub fn reset_protocol(
    params: &DeviceParams,
    thermal_p_e: f64,
    config: &ResetConfig,
    prep: &PrepCalibration,
    stark: &StarkMap,
    opts: &EmissionOptions,
) -> Result<ResetResult> {
    if !(0.0..=0.5).contains(&thermal_p_e) {
        return Err(Error::InvalidParameter { field: "thermal_p_e", reason: "must lie in [0, 0.5]".into() });
    }
    let detuning = match opts.drive_detuning {
        Some(d) => d,
        None => static_detuning(params)?,
    };
    let basis = params.basis();
    let mut rho = CMatrix::zeros(basis.dim());
    rho[(basis.index(0, 0), basis.index(0, 0))] = C64::new(1.0 - thermal_p_e, 0.0);
    rho[(basis.index(1, 0), basis.index(1, 0))] = C64::new(thermal_p_e, 0.0);
    let mut state = State::new_unchecked(basis, rho);

    let (_, ef) = transition_offsets(params, detuning)?;
    let dt_env = crate::pulses::DEFAULT_ENVELOPE_DT;
    let mut swap = GaussianPulse::new(Transition::Ef, prep.ef_pi, 0.0);
    swap.detuning = prep.ef_detuning;
    let transfer = shaped_pulse(config.transfer_amplitude, config.transfer_duration, stark)?.delayed(swap.end());
    let t_end = transfer.t_end() + config.wait_lifetimes / (2.0 * core::f64::consts::PI * params.kappa);
    let env = Envelope::superpose(&[swap.render(ef, 0.0, swap.end(), dt_env), transfer])?;
    let model = LindbladModel::new(params, env, detuning, opts.decoherence)?;
    let popts = PropagateOptions { dt: opts.dt, stride: opts.stride, keep_snapshots: false, positivity_probes: 4 };
    let t_end = (t_end / opts.stride).ceil() * opts.stride;

    let mut after = Vec::with_capacity(config.rounds);
    for _ in 0..config.rounds {
        state = propagate(&model, &state, 0.0, t_end, &popts)?.final_state;
        after.push(partial_trace_transmon(&state)[(1, 1)].re);
    }
    let final_p_e = after.last().copied().unwrap_or(thermal_p_e);
    Ok(ResetResult { initial_p_e: thermal_p_e, p_e_after_round: after, final_p_e })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_vertex_recovers_minimum() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| {
            let x = 0.1 * i as f64;
            (x, 3.0 * (x - 0.17) * (x - 0.17) + 1.0)
        }).collect();
        assert!((parabola_vertex(&pts).unwrap() - 0.17).abs() < 1e-12);
    }

    #[test]
    fn default_grid_matches_ranges() {
        let g = SweepGrid::default();
        assert_eq!(g.durations.first(), Some(&60.0));
        assert_eq!(g.durations.last(), Some(&500.0));
        assert_eq!(g.amplitudes.len(), 10);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn zero_amplitude_has_no_shift() {
        let p = DeviceParams::measured();
        let sp = stark_point(&p, 0.0, &StarkScanOptions::default()).unwrap();
        assert_eq!(sp.shift, 0.0);
    }

    #[test]
    fn thermal_population_out_of_range() {
        let p = DeviceParams::measured();
        let r = reset_protocol(&p, 0.7, &ResetConfig::default(), &PrepCalibration::area_theorem(), &StarkMap::zero(1.0), &EmissionOptions::default());
        assert!(matches!(r, Err(Error::InvalidParameter { field: "thermal_p_e", .. })));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let g = SweepGrid { durations: vec![], amplitudes: vec![0.5] };
        assert!(g.validate().is_err());
    }
}
