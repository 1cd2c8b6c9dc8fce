//! Drive envelopes: sin² shaping pulses, Gaussian preparation pulses,
//! multi-peak trains and Stark-shift phase compensation.
//!
//! Envelope samples are complex drive strengths Ω(t) = Ω₀(t)·e^{iφ(t)} in GHz
//! (ordinary frequency) on a uniform time grid in ns.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64 as C64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::ZERO;

/// Largest drive amplitude the generator can produce (GHz).
pub const DEFAULT_AWG_CEILING: f64 = 1.0;

/// Default envelope sample spacing (ns).
pub const DEFAULT_ENVELOPE_DT: f64 = 0.01;

/// Uniformly sampled complex drive envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<C64>,
}

impl Envelope {
    pub fn new(t0: f64, dt: f64, samples: Vec<C64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter { field: "dt", reason: "must be positive".into() });
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::InvalidParameter { field: "samples", reason: "non-finite sample".into() });
        }
        Ok(Self { t0, dt, samples })
    }

    /// Zero drive of the given duration.
    pub fn zero(t0: f64, duration: f64, dt: f64) -> Self {
        let n = (duration / dt).round().max(0.0) as usize + 1;
        Self { t0, dt, samples: vec![ZERO; n] }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.samples.len().saturating_sub(1))
    }

    pub fn duration(&self) -> f64 {
        self.t_end() - self.t0
    }

    pub fn max_amplitude(&self) -> f64 {
        self.samples.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    /// Linear interpolation; zero outside the sampled interval.
    pub fn value_at(&self, t: f64) -> C64 {
        if self.samples.is_empty() {
            return ZERO;
        }
        let x = (t - self.t0) / self.dt;
        let last = (self.samples.len() - 1) as f64;
        if x < -1e-9 || x > last + 1e-9 {
            return ZERO;
        }
        let x = x.clamp(0.0, last);
        let k = (x.floor() as usize).min(self.samples.len() - 1);
        if k + 1 >= self.samples.len() {
            return self.samples[k];
        }
        let w = x - k as f64;
        self.samples[k] * (1.0 - w) + self.samples[k + 1] * w
    }

    /// Checks the amplitude ceiling.
    pub fn check_ceiling(&self, ceiling: f64) -> Result<()> {
        let m = self.max_amplitude();
        if m > ceiling * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter {
                field: "envelope",
                reason: alloc::format!("amplitude {m} GHz exceeds ceiling {ceiling} GHz"),
            });
        }
        Ok(())
    }

    /// Multiplies every sample by e^{iθ}.
    pub fn with_phase(&self, theta: f64) -> Self {
        let r = C64::from_polar(1.0, theta);
        Self { t0: self.t0, dt: self.dt, samples: self.samples.iter().map(|s| s * r).collect() }
    }

    /// Multiplies by a carrier e^{−i2πνt} (absolute time), moving the drive
    /// frequency up by ν.
    pub fn with_frequency_offset(&self, nu: f64) -> Self {
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(k, s)| s * C64::from_polar(1.0, -2.0 * PI * nu * self.time(k)))
            .collect();
        Self { t0: self.t0, dt: self.dt, samples }
    }

    /// Sum of envelopes sharing a sample spacing, on the union of their spans.
    pub fn superpose(parts: &[Envelope]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::EmptyRecord("no envelopes to superpose"));
        };
        let dt = first.dt;
        if parts.iter().any(|p| (p.dt - dt).abs() > 1e-12 * dt) {
            return Err(Error::GridMisaligned);
        }
        let t0 = parts.iter().map(|p| p.t0).fold(f64::INFINITY, f64::min);
        let t1 = parts.iter().map(|p| p.t_end()).fold(f64::NEG_INFINITY, f64::max);
        let n = ((t1 - t0) / dt).round() as usize + 1;
        let mut samples = vec![ZERO; n];
        for p in parts {
            let off = (p.t0 - t0) / dt;
            let k0 = off.round();
            if (off - k0).abs() > 1e-6 {
                return Err(Error::GridMisaligned);
            }
            for (k, s) in p.samples.iter().enumerate() {
                samples[k0 as usize + k] += s;
            }
        }
        Ok(Self { t0, dt, samples })
    }

    /// Same envelope shifted in time.
    pub fn delayed(&self, by: f64) -> Self {
        Self { t0: self.t0 + by, dt: self.dt, samples: self.samples.clone() }
    }

    /// ∫Ω dt by the trapezoidal rule.
    pub fn integral(&self) -> C64 {
        let n = self.samples.len();
        if n < 2 {
            return ZERO;
        }
        let inner: C64 = self.samples[1..n - 1].iter().sum();
        (inner + (self.samples[0] + self.samples[n - 1]) * 0.5) * self.dt
    }
}

/// Ω₀ sin²(πt/T) on [0, T] with zero phase; `dt` is adjusted so T is an
/// integer number of steps.
pub fn synthesize_sin2(amplitude: f64, duration: f64, dt: f64) -> Result<Envelope> {
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidParameter { field: "amplitude", reason: "must be non-negative".into() });
    }
    if !(duration > 0.0) {
        return Err(Error::InvalidParameter { field: "duration", reason: "must be positive".into() });
    }
    let steps = (duration / dt).round().max(1.0) as usize;
    let dt = duration / steps as f64;
    let mut samples: Vec<C64> = (0..=steps)
        .map(|k| {
            let s = (PI * k as f64 / steps as f64).sin();
            C64::new(amplitude * s * s, 0.0)
        })
        .collect();
    samples[0] = ZERO;
    samples[steps] = ZERO;
    Envelope::new(0.0, dt, samples)
}

/// Amplitude → f0↔g1 Stark shift table with monotone cubic interpolation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StarkMap {
    /// Drive amplitudes (GHz), strictly increasing, starting at 0.
    pub amplitudes: Vec<f64>,
    /// Shifts (GHz), zero at amplitude 0.
    pub shifts: Vec<f64>,
}

impl StarkMap {
    pub fn new(amplitudes: Vec<f64>, shifts: Vec<f64>) -> Result<Self> {
        let m = Self { amplitudes, shifts };
        m.validate()?;
        Ok(m)
    }

    /// A map that is identically zero on [0, max_amplitude].
    pub fn zero(max_amplitude: f64) -> Self {
        Self { amplitudes: vec![0.0, max_amplitude], shifts: vec![0.0, 0.0] }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::InvalidParameter { field: "stark_map", reason: reason.into() });
        if self.amplitudes.len() != self.shifts.len() || self.amplitudes.len() < 2 {
            return bad("needs at least two matching amplitude/shift entries");
        }
        if self.amplitudes[0] != 0.0 || self.shifts[0] != 0.0 {
            return bad("must start at amplitude 0 with zero shift");
        }
        if self.amplitudes.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("amplitude grid must be strictly increasing");
        }
        Ok(())
    }

    pub fn max_amplitude(&self) -> f64 {
        *self.amplitudes.last().unwrap_or(&0.0)
    }

    fn slopes(&self) -> Vec<f64> {
        // Fritsch-Carlson tangents
        let x = &self.amplitudes;
        let y = &self.shifts;
        let n = x.len();
        let secant: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut m = vec![0.0; n];
        m[0] = secant[0];
        m[n - 1] = secant[n - 2];
        for i in 1..n - 1 {
            if secant[i - 1] * secant[i] <= 0.0 {
                m[i] = 0.0;
            } else {
                let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                m[i] = (w1 + w2) / (w1 / secant[i - 1] + w2 / secant[i]);
            }
        }
        m
    }

    /// Interpolated shift (GHz) at amplitude `a` (GHz).
    pub fn shift_at(&self, a: f64) -> Result<f64> {
        let max = self.max_amplitude();
        if !(a >= -1e-12) || a > max * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::OutsideStarkMap { amplitude: a, max });
        }
        Ok(self.eval_with(&self.slopes(), a.clamp(0.0, max)))
    }

    fn eval_with(&self, m: &[f64], a: f64) -> f64 {
        let x = &self.amplitudes;
        let y = &self.shifts;
        let i = match x.iter().position(|&xi| xi > a) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => x.len() - 2,
        };
        let h = x[i + 1] - x[i];
        let t = (a - x[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * y[i]
            + (t3 - 2.0 * t2 + t) * h * m[i]
            + (-2.0 * t3 + 3.0 * t2) * y[i + 1]
            + (t3 - t2) * h * m[i + 1]
    }

    /// Shift at every sample magnitude of an envelope.
    pub fn shifts_for(&self, env: &Envelope) -> Result<Vec<f64>> {
        let m = self.slopes();
        let max = self.max_amplitude();
        env.samples
            .iter()
            .map(|s| {
                let a = s.norm();
                if a > max * (1.0 + 1e-9) + 1e-12 {
                    Err(Error::OutsideStarkMap { amplitude: a, max })
                } else {
                    Ok(self.eval_with(&m, a.min(max)))
                }
            })
            .collect()
    }
}

/// Applies φ(t) = −2π∫Δ(|Ω(t′)|)dt′ to the envelope, leaving |Ω| untouched.
pub fn compensate_phase(env: &Envelope, stark: &StarkMap) -> Result<Envelope> {
    let shifts = stark.shifts_for(env)?;
    let mut phase = 0.0;
    let mut samples = Vec::with_capacity(env.len());
    for (k, s) in env.samples.iter().enumerate() {
        if k > 0 {
            phase -= 2.0 * PI * 0.5 * (shifts[k - 1] + shifts[k]) * env.dt;
        }
        samples.push(s * C64::from_polar(1.0, phase));
    }
    Ok(Envelope { t0: env.t0, dt: env.dt, samples })
}

/// One sin² peak of a pulse train.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainPeak {
    pub amplitude: f64,
    pub duration: f64,
    pub start: f64,
    pub phase_offset: f64,
}

/// Superposition of phase-offset sin² peaks, optionally Stark-compensated on
/// the composite amplitude.
pub fn build_train(peaks: &[TrainPeak], dt: f64, stark: Option<&StarkMap>) -> Result<Envelope> {
    if peaks.is_empty() {
        return Err(Error::EmptyRecord("pulse train has no peaks"));
    }
    let t0 = peaks.iter().map(|p| p.start).fold(f64::INFINITY, f64::min);
    let t1 = peaks.iter().map(|p| p.start + p.duration).fold(f64::NEG_INFINITY, f64::max);
    let n = ((t1 - t0) / dt).round() as usize + 1;
    let mut samples = vec![ZERO; n];
    for p in peaks {
        if !(p.duration > 0.0) || !(p.amplitude >= 0.0) {
            return Err(Error::InvalidParameter { field: "peaks", reason: "invalid peak".into() });
        }
        let rot = C64::from_polar(1.0, p.phase_offset);
        for (k, s) in samples.iter_mut().enumerate() {
            let t = t0 + k as f64 * dt - p.start;
            if (0.0..=p.duration).contains(&t) {
                let x = (PI * t / p.duration).sin();
                *s += rot * (p.amplitude * x * x);
            }
        }
    }
    let env = Envelope::new(t0, dt, samples)?;
    match stark {
        Some(m) => compensate_phase(&env, m),
        None => Ok(env),
    }
}

/// Transmon transition addressed by a preparation pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Transition {
    Ge,
    Ef,
}

impl Transition {
    /// Lower level index.
    pub fn lower(&self) -> usize {
        match self {
            Transition::Ge => 0,
            Transition::Ef => 1,
        }
    }
}

/// Standard deviation of preparation pulses (ns).
pub const PREP_SIGMA: f64 = 5.0;
/// Preparation pulses are truncated to this many standard deviations.
pub const PREP_TRUNCATION: f64 = 6.0;

/// Truncated Gaussian pulse resonant with one transmon transition.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianPulse {
    pub transition: Transition,
    /// Peak drive strength (GHz).
    pub amplitude: f64,
    pub sigma: f64,
    pub length: f64,
    pub start: f64,
    pub phase: f64,
    /// Frequency correction relative to the transition (GHz).
    pub detuning: f64,
}

impl GaussianPulse {
    pub fn new(transition: Transition, amplitude: f64, start: f64) -> Self {
        Self {
            transition,
            amplitude,
            sigma: PREP_SIGMA,
            length: PREP_TRUNCATION * PREP_SIGMA,
            start,
            phase: 0.0,
            detuning: 0.0,
        }
    }

    /// Real envelope value at absolute time t.
    pub fn shape(&self, t: f64) -> f64 {
        let x = t - self.start;
        if !(0.0..=self.length).contains(&x) {
            return 0.0;
        }
        let c = x - 0.5 * self.length;
        self.amplitude * (-(c * c) / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Samples the pulse in a frame where its transition sits at
    /// `transition_offset` GHz, onto `[t0, t1]`.
    pub fn render(&self, transition_offset: f64, t0: f64, t1: f64, dt: f64) -> Envelope {
        let n = ((t1 - t0) / dt).round() as usize + 1;
        let nu = transition_offset + self.detuning;
        let samples = (0..n)
            .map(|k| {
                let t = t0 + k as f64 * dt;
                C64::from_polar(self.shape(t), self.phase - 2.0 * PI * nu * t)
            })
            .collect();
        Envelope { t0, dt, samples }
    }

    pub fn end(&self) -> f64 {
        self.start + self.length
    }
}

/// Calibrated preparation pulse amplitudes (GHz) and frequency corrections.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrepCalibration {
    pub ge_pi: f64,
    pub ge_half_pi: f64,
    pub ef_pi: f64,
    pub ge_detuning: f64,
    pub ge_half_detuning: f64,
    pub ef_detuning: f64,
}

impl PrepCalibration {
    /// Area-theorem amplitudes for an ideal two-level transition.
    pub fn area_theorem() -> Self {
        let area = PREP_SIGMA * (2.0 * PI).sqrt();
        // rotation angle = 2π · matrix element · ∫Ω dt
        let pi = 0.5 / area;
        Self {
            ge_pi: pi,
            ge_half_pi: 0.5 * pi,
            ef_pi: pi / 2f64.sqrt(),
            ge_detuning: 0.0,
            ge_half_detuning: 0.0,
            ef_detuning: 0.0,
        }
    }
}

/// Which initial transmon state a preparation sequence produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InitKind {
    /// |g⟩ → |f⟩
    PrepareF,
    /// |g⟩ → (|g⟩ + |f⟩)/√2
    PrepareGPlusF,
}

/// Sequential Gaussian pulses (ge then ef) starting at t = `start`.
pub fn build_init_sequence(kind: InitKind, cal: &PrepCalibration, start: f64) -> Vec<GaussianPulse> {
    let mut first = match kind {
        InitKind::PrepareF => {
            let mut p = GaussianPulse::new(Transition::Ge, cal.ge_pi, start);
            p.detuning = cal.ge_detuning;
            p
        }
        InitKind::PrepareGPlusF => {
            let mut p = GaussianPulse::new(Transition::Ge, cal.ge_half_pi, start);
            p.detuning = cal.ge_half_detuning;
            p
        }
    };
    first.phase = 0.0;
    let mut second = GaussianPulse::new(Transition::Ef, cal.ef_pi, first.end());
    second.detuning = cal.ef_detuning;
    vec![first, second]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin2_landmarks() {
        let env = synthesize_sin2(0.7, 200.0, 0.01).unwrap();
        assert_eq!(env.samples[0], ZERO);
        assert_eq!(*env.samples.last().unwrap(), ZERO);
        assert!((env.value_at(100.0).re - 0.7).abs() < 1e-12);
        assert!((env.value_at(50.0).re - 0.35).abs() < 1e-12);
        assert!((env.integral().re - 0.7 * 200.0 / 2.0).abs() < 1e-9);
        assert!((env.duration() - 200.0).abs() < 1e-9);
    }

    #[test]
    fn zero_map_leaves_envelope_unchanged() {
        let env = synthesize_sin2(0.5, 100.0, 0.01).unwrap();
        let out = compensate_phase(&env, &StarkMap::zero(1.0)).unwrap();
        assert_eq!(out, env);
    }

    #[test]
    fn constant_shift_gives_linear_ramp() {
        let delta = -0.02;
        let env = Envelope::new(0.0, 0.01, vec![C64::new(0.3, 0.0); 1001]).unwrap();
        let map = StarkMap::new(vec![0.0, 0.1, 0.2, 0.3, 0.5], vec![0.0, delta, delta, delta, delta]).unwrap();
        let out = compensate_phase(&env, &map).unwrap();
        for (k, s) in out.samples.iter().enumerate() {
            let t = k as f64 * 0.01;
            let expected = C64::from_polar(0.3, -2.0 * PI * delta * t);
            assert!((s - expected).norm() < 1e-10);
        }
    }

    #[test]
    fn quadratic_map_phase_matches_sin4_integral() {
        let c = -0.2; // GHz per GHz²
        let amps: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let shifts = amps.iter().map(|a| c * a * a).collect();
        let map = StarkMap::new(amps, shifts).unwrap();
        let (omega0, t) = (0.6, 200.0);
        let env = synthesize_sin2(omega0, t, 0.01).unwrap();
        let out = compensate_phase(&env, &map).unwrap();
        // ∫ sin⁴(πt/T) dt = 3T/8
        let expected = -2.0 * PI * c * omega0 * omega0 * 3.0 * t / 8.0;
        let got_mid = out.samples[env.len() / 2].arg();
        let expected_mid = expected / 2.0;
        let wrapped = (got_mid - expected_mid).rem_euclid(2.0 * PI);
        let err = wrapped.min(2.0 * PI - wrapped);
        assert!(err < 1e-3, "{got_mid} vs {expected_mid}");
        for (a, b) in env.samples.iter().zip(&out.samples) {
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn stark_map_rejects_out_of_range() {
        let map = StarkMap::zero(0.5);
        let env = synthesize_sin2(0.7, 10.0, 0.01).unwrap();
        assert!(matches!(compensate_phase(&env, &map), Err(Error::OutsideStarkMap { .. })));
        assert!(StarkMap::new(vec![0.0, 0.2, 0.1], vec![0.0, 0.1, 0.2]).is_err());
        assert!(StarkMap::new(vec![0.0, 0.2], vec![0.01, 0.1]).is_err());
    }

    #[test]
    fn monotone_interpolation_preserves_monotonicity() {
        let map = StarkMap::new(vec![0.0, 0.1, 0.2, 0.5, 1.0], vec![0.0, -0.002, -0.008, -0.05, -0.26]).unwrap();
        let mut prev = 0.0;
        for i in 1..=1000 {
            let s = map.shift_at(i as f64 * 0.001).unwrap();
            assert!(s <= prev + 1e-15);
            prev = s;
        }
        assert!((map.shift_at(0.2).unwrap() + 0.008).abs() < 1e-15);
    }

    #[test]
    fn single_peak_train_matches_sin2() {
        let peak = TrainPeak { amplitude: 0.35, duration: 60.0, start: 0.0, phase_offset: 0.0 };
        let train = build_train(&[peak], 0.01, None).unwrap();
        let single = synthesize_sin2(0.35, 60.0, 0.01).unwrap();
        assert_eq!(train.len(), single.len());
        for (a, b) in train.samples.iter().zip(&single.samples) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn train_is_linear_in_peaks() {
        let peaks: Vec<TrainPeak> = (0..6)
            .map(|k| TrainPeak { amplitude: 0.35, duration: 60.0, start: 170.0 * k as f64, phase_offset: 0.0 })
            .collect();
        let train = build_train(&peaks, 0.01, None).unwrap();
        let parts: Vec<Envelope> = peaks
            .iter()
            .map(|p| synthesize_sin2(p.amplitude, p.duration, 0.01).unwrap().delayed(p.start))
            .collect();
        let sum = Envelope::superpose(&parts).unwrap();
        assert_eq!(train.len(), sum.len());
        for (a, b) in train.samples.iter().zip(&sum.samples) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn init_sequence_timing() {
        let cal = PrepCalibration::area_theorem();
        let seq = build_init_sequence(InitKind::PrepareF, &cal, 0.0);
        assert_eq!(seq.len(), 2);
        assert_eq!(seq[0].transition, Transition::Ge);
        assert_eq!(seq[1].transition, Transition::Ef);
        assert!((seq[1].end() - 60.0).abs() < 1e-12);
        let seq = build_init_sequence(InitKind::PrepareGPlusF, &cal, 0.0);
        assert!((seq[0].amplitude - cal.ge_half_pi).abs() < 1e-15);
    }
}
