//! Photon mode functions, symmetry scores, spectra and matched filtering.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64 as C64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::device::golden_section;
use crate::dynamics::OutputRecord;
use crate::error::{Error, Result};
use crate::linalg::ZERO;

/// Sampled temporal mode ψ(t) on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModeFunction {
    pub times: Vec<f64>,
    /// ns^−1/2 when normalized.
    pub psi: Vec<C64>,
    pub normalized: bool,
}

/// Which record quantity defines the mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSource {
    /// ψ ∝ ⟨a_out⟩ (superposition protocol).
    MeanField,
    /// |ψ|² ∝ κ⟨a†a⟩; the phase is discarded.
    Power,
}

impl ModeFunction {
    pub fn new(times: Vec<f64>, psi: Vec<C64>) -> Result<Self> {
        if times.len() != psi.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), found: psi.len() });
        }
        if times.len() < 2 {
            return Err(Error::EmptyRecord("mode function"));
        }
        Ok(Self { times, psi, normalized: false })
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// ∫|ψ|² dt.
    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|p| p.norm_sqr()).sum::<f64>() * self.dt()
    }

    pub fn normalize(mut self) -> Result<Self> {
        let n = self.norm_sqr();
        if !(n > 0.0) {
            return Err(Error::EmptyRecord("mode function has zero norm"));
        }
        let s = 1.0 / n.sqrt();
        for p in &mut self.psi {
            *p *= s;
        }
        self.normalized = true;
        Ok(self)
    }

    /// ψ(t) with linear interpolation, zero outside the grid.
    pub fn value_at(&self, t: f64) -> C64 {
        let x = (t - self.times[0]) / self.dt();
        if x < 0.0 {
            return ZERO;
        }
        let k = x.floor() as usize;
        let n = self.psi.len();
        if k + 1 >= n {
            return if k + 1 == n && x - k as f64 <= 1e-9 { self.psi[n - 1] } else { ZERO };
        }
        let w = x - k as f64;
        self.psi[k] * (1.0 - w) + self.psi[k + 1] * w
    }

    pub fn with_phase(&self, theta: f64) -> Self {
        let r = C64::from_polar(1.0, theta);
        Self { psi: self.psi.iter().map(|p| p * r).collect(), ..self.clone() }
    }

    pub fn shifted(&self, by: f64) -> Self {
        Self { times: self.times.iter().map(|t| t + by).collect(), ..self.clone() }
    }

    /// ψ(−t), kept on an increasing grid.
    pub fn time_reversed(&self) -> Self {
        Self {
            times: self.times.iter().rev().map(|t| -t).collect(),
            psi: self.psi.iter().rev().copied().collect(),
            normalized: self.normalized,
        }
    }

    /// Multiplies by e^{i2πνt}.
    pub fn with_phase_ramp(&self, nu: f64) -> Self {
        Self {
            psi: self
                .times
                .iter()
                .zip(&self.psi)
                .map(|(&t, p)| p * C64::from_polar(1.0, 2.0 * PI * nu * t))
                .collect(),
            ..self.clone()
        }
    }

    /// Power-weighted standard deviation of arg ψ about its weighted circular mean.
    pub fn phase_spread(&self) -> f64 {
        let mean: C64 = self.psi.iter().map(|p| p * p.norm()).sum();
        let r = C64::from_polar(1.0, -mean.arg());
        let (mut w, mut acc) = (0.0, 0.0);
        for p in &self.psi {
            let weight = p.norm_sqr();
            let d = (p * r).arg();
            w += weight;
            acc += weight * d * d;
        }
        if w > 0.0 {
            (acc / w).sqrt()
        } else {
            0.0
        }
    }
}

/// Moving average of `values` over a window of `width` centred on each
/// sample, with zero padding outside the record.
pub fn boxcar(times: &[f64], values: &[C64], width: f64) -> Vec<C64> {
    let n = values.len();
    if n < 2 || !(width > 0.0) {
        return values.to_vec();
    }
    let dt = times[1] - times[0];
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = ZERO;
    cumulative.push(acc);
    for k in 1..n {
        acc += (values[k - 1] + values[k]) * (0.5 * dt);
        cumulative.push(acc);
    }
    let at = |t: f64| -> C64 {
        let x = (t - times[0]) / dt;
        if x <= 0.0 {
            return ZERO;
        }
        let k = x.floor() as usize;
        if k + 1 >= n {
            return cumulative[n - 1];
        }
        let w = x - k as f64;
        cumulative[k] * (1.0 - w) + cumulative[k + 1] * w
    };
    times.iter().map(|&t| (at(t + 0.5 * width) - at(t - 0.5 * width)) / width).collect()
}

/// Extracts the normalized photon mode from an emission record. The mean
/// field is averaged over one period of the drive tone, which sits far
/// outside the photon bandwidth.
pub fn mode_function(record: &OutputRecord, source: ModeSource) -> Result<ModeFunction> {
    if record.times.len() < 2 || !(record.emitted_quanta() > 1e-6) {
        return Err(Error::EmptyRecord("output record carries no emitted power"));
    }
    let psi = match source {
        ModeSource::MeanField => {
            let period = 1.0 / record.drive_tone.abs();
            if period.is_finite() && period > 2.0 * record.stride() {
                boxcar(&record.times, &record.a_out_mean, period)
            } else {
                record.a_out_mean.clone()
            }
        }
        ModeSource::Power => record.power.iter().map(|p| C64::new(p.max(0.0).sqrt(), 0.0)).collect(),
    };
    ModeFunction::new(record.times.clone(), psi)?.normalize()
}

/// Result of [`symmetry`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SymmetryReport {
    pub s: f64,
    /// Optimal reflection center (ns).
    pub t0_opt: f64,
}

fn reflected_overlap(mode: &ModeFunction, t0: f64) -> f64 {
    let acc: C64 = mode
        .times
        .iter()
        .zip(&mode.psi)
        .map(|(&t, p)| mode.value_at(2.0 * t0 - t).conj() * p)
        .sum();
    acc.norm() * mode.dt()
}

/// Overlap of ψ with its time reverse, maximized over the reflection center.
pub fn symmetry(mode: &ModeFunction) -> SymmetryReport {
    let norm = mode.norm_sqr();
    if !(norm > 0.0) {
        return SymmetryReport { s: 0.0, t0_opt: mode.times[0] };
    }
    let dt = mode.dt();
    let n = mode.psi.len();
    // centers on the half-stride grid reflect samples onto samples
    let mut best = (mode.times[0], -1.0);
    for k in 0..(2 * n - 1) {
        let i = k / 2;
        let j = k - i;
        let mut acc = ZERO;
        // pairs (i - m, j + m): ψ*(t_{i−m}) ψ(t_{j+m}) and the mirror
        let reach = i.min(n - 1 - j);
        for m in 0..=reach {
            acc += mode.psi[i - m].conj() * mode.psi[j + m];
            if i - m != j + m {
                acc += mode.psi[j + m].conj() * mode.psi[i - m];
            }
        }
        let v = acc.norm();
        if v > best.1 {
            best = (mode.times[0] + 0.5 * k as f64 * dt, v);
        }
    }
    let (t0, neg) = golden_section(|t0| -reflected_overlap(mode, t0), best.0 - 0.5 * dt, best.0 + 0.5 * dt, 0.01);
    let (t0, v) = if -neg >= best.1 * dt { (t0, -neg) } else { (best.0, best.1 * dt) };
    SymmetryReport { s: v / norm, t0_opt: t0 }
}

/// Magnitude spectrum of a mode.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Spectrum {
    /// GHz, relative to the dressed resonator frequency.
    pub frequencies: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Peak location from quadratic interpolation (GHz).
    pub peak_frequency: f64,
    /// First moment of |S(f)|² over the window (GHz).
    pub centroid_frequency: f64,
}

/// Default half-width of the spectral window (GHz).
pub const DEFAULT_SPECTRUM_SPAN: f64 = 0.2;
/// Default frequency bin (GHz).
pub const DEFAULT_SPECTRUM_BIN: f64 = 1e-4;

/// |∫ψ(t)e^{−i2πft}dt| on `[-span, span]` with bin `df`. A phase ramp
/// e^{i2πδt} on ψ moves the peak to +δ.
pub fn fourier_spectrum(mode: &ModeFunction, span: f64, df: f64) -> Result<Spectrum> {
    if !(span > 0.0) || !(df > 0.0) {
        return Err(Error::InvalidParameter { field: "span/df", reason: "must be positive".into() });
    }
    let nf = (span / df).round() as usize;
    let dt = mode.dt();
    let t0 = mode.times[0];
    let mut frequencies = Vec::with_capacity(2 * nf + 1);
    let mut magnitude = Vec::with_capacity(2 * nf + 1);
    for k in 0..=(2 * nf) {
        let f = (k as f64 - nf as f64) * df;
        let step = C64::from_polar(1.0, -2.0 * PI * f * dt);
        let mut ph = C64::from_polar(1.0, -2.0 * PI * f * t0);
        let mut acc = ZERO;
        for (i, p) in mode.psi.iter().enumerate() {
            if i % 256 == 0 {
                ph = C64::from_polar(1.0, -2.0 * PI * f * mode.times[i]);
            }
            acc += p * ph;
            ph *= step;
        }
        frequencies.push(f);
        magnitude.push(acc.norm() * dt);
    }
    let kmax = magnitude
        .iter()
        .enumerate()
        .fold(0, |b, (i, &m)| if m > magnitude[b] { i } else { b });
    let mut peak = frequencies[kmax];
    if kmax > 0 && kmax + 1 < magnitude.len() {
        let (a, b, c) = (magnitude[kmax - 1], magnitude[kmax], magnitude[kmax + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 0.0 {
            peak += 0.5 * (a - c) / denom * df;
        }
    }
    let weight: f64 = magnitude.iter().map(|m| m * m).sum();
    let centroid = if weight > 0.0 {
        frequencies.iter().zip(&magnitude).map(|(f, m)| f * m * m).sum::<f64>() / weight
    } else {
        0.0
    };
    Ok(Spectrum { frequencies, magnitude, peak_frequency: peak, centroid_frequency: centroid })
}

/// ∫ψ*(t)v(t)dt for a series `values` on `times`.
///
/// Grids that share the mode's step and are offset by whole steps are summed
/// directly; other uniform grids are resampled linearly onto the mode grid.
pub fn overlap(mode_times: &[f64], psi: &[C64], times: &[f64], values: &[C64]) -> Result<C64> {
    if mode_times.len() != psi.len() || times.len() != values.len() {
        return Err(Error::GridMisaligned);
    }
    if mode_times.len() < 2 || times.len() < 2 {
        return Err(Error::EmptyRecord("matched filter input"));
    }
    let dm = mode_times[1] - mode_times[0];
    let dv = times[1] - times[0];
    if !(dm > 0.0) || !(dv > 0.0) {
        return Err(Error::GridMisaligned);
    }
    let offset = (times[0] - mode_times[0]) / dm;
    if (dm - dv).abs() <= 1e-9 * dm && (offset - offset.round()).abs() < 1e-6 {
        let off = offset.round() as i64;
        let mut acc = ZERO;
        for (k, v) in values.iter().enumerate() {
            let i = k as i64 + off;
            if i >= 0 && (i as usize) < psi.len() {
                acc += psi[i as usize].conj() * v;
            }
        }
        return Ok(acc * dm);
    }
    if dv > 2.0 * dm {
        return Err(Error::GridMisaligned);
    }
    let series = ModeFunction { times: times.to_vec(), psi: values.to_vec(), normalized: false };
    let acc: C64 = mode_times.iter().zip(psi).map(|(&t, p)| p.conj() * series.value_at(t)).sum();
    Ok(acc * dm)
}

/// ∫ψ*(t)v(t)dt for a record (or a single shot) `values` sampled on `times`.
pub fn matched_filter(mode: &ModeFunction, times: &[f64], values: &[C64]) -> Result<C64> {
    overlap(&mode.times, &mode.psi, times, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn gaussian(center: f64, sigma: f64) -> ModeFunction {
        let times: Vec<f64> = (0..2001).map(|k| k as f64 * 0.1).collect();
        let psi = times
            .iter()
            .map(|t| C64::new((-(t - center) * (t - center) / (2.0 * sigma * sigma)).exp(), 0.0))
            .collect();
        ModeFunction::new(times, psi).unwrap().normalize().unwrap()
    }

    #[test]
    fn gaussian_is_symmetric() {
        let r = symmetry(&gaussian(73.33, 12.0));
        assert!((r.s - 1.0).abs() < 1e-5, "{}", r.s);
        assert!((r.t0_opt - 73.33).abs() <= 0.05);
    }

    #[test]
    fn exponential_overlap_oracle() {
        // s = max κ·2t0·e^{−κ t0} = 2/e
        let kappa = 0.15;
        let times: Vec<f64> = (0..6000).map(|k| k as f64 * 0.05).collect();
        let psi = times.iter().map(|t| C64::new((-kappa * t / 2.0).exp(), 0.0)).collect();
        let m = ModeFunction::new(times, psi).unwrap().normalize().unwrap();
        let r = symmetry(&m);
        assert!((r.s - 2.0 / core::f64::consts::E).abs() < 5e-3, "{}", r.s);
        assert!((r.t0_opt - 1.0 / kappa).abs() < 0.1);
    }

    #[test]
    fn spectrum_of_ramp() {
        let g = gaussian(100.0, 20.0);
        assert!(fourier_spectrum(&g, 0.02, 1e-4).unwrap().peak_frequency.abs() < 1e-4);
        let s = fourier_spectrum(&g.with_phase_ramp(0.003), 0.02, 1e-4).unwrap();
        assert!((s.peak_frequency - 0.003).abs() < 1e-5, "{}", s.peak_frequency);
    }

    #[test]
    fn matched_filter_on_own_mode_and_odd_mode() {
        let g = gaussian(100.0, 10.0);
        let own = matched_filter(&g, &g.times, &g.psi).unwrap();
        assert!((own - 1.0).norm() < 1e-12);
        let odd: Vec<C64> = g.times.iter().zip(&g.psi).map(|(t, p)| p * (t - 100.0)).collect();
        assert!(matched_filter(&g, &g.times, &odd).unwrap().norm() < 1e-8);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let g = gaussian(100.0, 10.0);
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 1.0 + 0.3).collect();
        let values = alloc::vec![C64::new(1.0, 0.0); 50];
        assert!(matches!(matched_filter(&g, &times, &values), Err(Error::GridMisaligned)));
    }
}
