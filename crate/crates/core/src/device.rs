//! Device description, rotating-frame Hamiltonian and dressed-state analysis.
//!
//! Configuration values are ordinary frequencies in GHz and times in ns.
//! Hamiltonians handed to the integrator are angular (rad/ns); the factor
//! 2π is applied in [`build_hamiltonian`] and nowhere upstream.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use num_complex::Complex64 as C64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{eigh, CMatrix, HermitianEigen, ZERO};
use crate::quantum::{CompositeBasis, Operator};

/// Which transmon model populates the ladder.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum TransmonModel {
    /// Kerr oscillator: fixed anharmonicity, √k lowering elements.
    #[default]
    Kerr,
    /// Cooper-pair-box Hamiltonian diagonalized in the charge basis.
    ChargeBasis { e_c: f64, e_j: f64, n_g: f64 },
}

/// Circuit parameters. Frequencies in GHz (ω/2π), times in ns.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DeviceParams {
    pub omega_q: f64,
    pub omega_r: f64,
    pub g: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub t1_e: f64,
    pub t1_f: f64,
    pub t2_ge: f64,
    pub t2_ef: f64,
    pub t2_gf: f64,
    pub n_transmon: usize,
    pub n_resonator: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub transmon: TransmonModel,
}

impl DeviceParams {
    /// The measured sample: 8.640 GHz transmon, 7.224 GHz resonator.
    pub fn measured() -> Self {
        Self {
            omega_q: 8.640,
            omega_r: 7.224,
            g: 0.035,
            alpha: -0.421,
            kappa: 0.024,
            t1_e: 2000.0,
            t1_f: 550.0,
            t2_ge: 1640.0,
            t2_ef: 557.0,
            t2_gf: 580.0,
            n_transmon: 6,
            n_resonator: 3,
            transmon: TransmonModel::Kerr,
        }
    }

    pub fn basis(&self) -> CompositeBasis {
        CompositeBasis { n_transmon: self.n_transmon, n_resonator: self.n_resonator }
    }

    /// Qubit-resonator detuning Δ = ω_q − ω_r (GHz).
    pub fn detuning(&self) -> f64 {
        self.omega_q - self.omega_r
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: &str| {
            Err(Error::InvalidParameter { field, reason: reason.into() })
        };
        for (field, v) in [
            ("omega_q", self.omega_q),
            ("omega_r", self.omega_r),
            ("g", self.g),
            ("alpha", self.alpha),
            ("kappa", self.kappa),
            ("t1_e", self.t1_e),
            ("t1_f", self.t1_f),
            ("t2_ge", self.t2_ge),
            ("t2_ef", self.t2_ef),
            ("t2_gf", self.t2_gf),
        ] {
            if !v.is_finite() {
                return bad(field, "must be finite");
            }
        }
        if self.omega_q <= self.omega_r {
            return bad("omega_q", "must exceed omega_r (positive dispersive detuning)");
        }
        if self.kappa <= 0.0 {
            return bad("kappa", "must be positive");
        }
        for (field, v) in [
            ("t1_e", self.t1_e),
            ("t1_f", self.t1_f),
            ("t2_ge", self.t2_ge),
            ("t2_ef", self.t2_ef),
            ("t2_gf", self.t2_gf),
        ] {
            if v <= 0.0 {
                return bad(field, "times must be positive");
            }
        }
        if self.alpha.abs() >= self.omega_q {
            return bad("alpha", "|alpha| must be smaller than omega_q");
        }
        if self.n_transmon < 3 {
            return bad("n_transmon", "at least three transmon levels are required");
        }
        if self.n_resonator < 2 {
            return bad("n_resonator", "at least two resonator levels are required");
        }
        if let TransmonModel::ChargeBasis { e_c, e_j, .. } = self.transmon {
            if e_c <= 0.0 || e_j <= 0.0 {
                return bad("transmon", "E_C and E_J must be positive");
            }
        }
        Ok(())
    }
}

/// Transmon level energies (GHz, ground at 0) and normalized lowering elements.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmonLadder {
    pub energies: Vec<f64>,
    /// `lowering[k]` = ⟨k|b|k+1⟩.
    pub lowering: Vec<f64>,
}

impl TransmonLadder {
    pub fn kerr(omega_q: f64, alpha: f64, n: usize) -> Self {
        let energies = (0..n)
            .map(|k| {
                let k = k as f64;
                k * omega_q + 0.5 * alpha * k * (k - 1.0)
            })
            .collect();
        let lowering = (1..n).map(|k| (k as f64).sqrt()).collect();
        Self { energies, lowering }
    }

    pub fn from_params(params: &DeviceParams) -> Result<Self> {
        match params.transmon {
            TransmonModel::Kerr => Ok(Self::kerr(params.omega_q, params.alpha, params.n_transmon)),
            TransmonModel::ChargeBasis { e_c, e_j, n_g } => {
                let cb = transmon_charge_basis(e_c, e_j, n_g, params.n_transmon)?;
                Ok(Self { energies: cb.energies, lowering: cb.lowering })
            }
        }
    }

    pub fn n(&self) -> usize {
        self.energies.len()
    }

    /// ω_ge.
    pub fn omega_ge(&self) -> f64 {
        self.energies[1] - self.energies[0]
    }

    /// (E_2 − E_1) − (E_1 − E_0).
    pub fn anharmonicity(&self) -> f64 {
        self.energies[2] - 2.0 * self.energies[1] + self.energies[0]
    }

    pub fn lowering_matrix(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.n());
        for (k, &x) in self.lowering.iter().enumerate() {
            m[(k, k + 1)] = C64::new(x, 0.0);
        }
        m
    }
}

/// ω_d = 2ω_q + α − ω_r, the zero-amplitude f0↔g1 resonance (GHz).
pub fn drive_frequency(params: &DeviceParams) -> f64 {
    match TransmonLadder::from_params(params) {
        Ok(l) if !matches!(params.transmon, TransmonModel::Kerr) => l.energies[2] - params.omega_r,
        _ => 2.0 * params.omega_q + params.alpha - params.omega_r,
    }
}

/// Rotating-frame detunings (δ_q, δ_r) = (ω_q − ω_d, ω_r − ω_d) in GHz.
pub fn frame_detunings(params: &DeviceParams) -> (f64, f64) {
    let wd = drive_frequency(params);
    (params.omega_q - wd, params.omega_r - wd)
}

/// Time-independent part of the Hamiltonian together with the drive operator.
///
/// Everything is in GHz; multiply by 2π for rad/ns. The frame rotates at
/// `drive_frequency(params) + drive_detuning`.
#[derive(Debug, Clone)]
pub struct FrameHamiltonian {
    pub basis: CompositeBasis,
    /// Bare energies, Jaynes-Cummings coupling.
    pub static_part: CMatrix,
    /// Transmon lowering operator b on the composite space.
    pub lowering: CMatrix,
    /// Resonator lowering operator a on the composite space.
    pub resonator: CMatrix,
    pub drive_detuning: f64,
}

impl FrameHamiltonian {
    pub fn new(params: &DeviceParams, drive_detuning: f64) -> Result<Self> {
        let ladder = TransmonLadder::from_params(params)?;
        Ok(Self::with_ladder(params, &ladder, drive_detuning))
    }

    pub fn with_ladder(params: &DeviceParams, ladder: &TransmonLadder, drive_detuning: f64) -> Self {
        let basis = params.basis();
        let frame = drive_frequency(params) + drive_detuning;
        let b = Operator::from_transmon(basis, &ladder.lowering_matrix())
            .expect("ladder sized to basis")
            .matrix;
        let a = crate::quantum::resonator_annihilation(basis).matrix;
        let mut h = CMatrix::zeros(basis.dim());
        for i in 0..basis.dim() {
            let (q, n) = basis.levels(i);
            let e = ladder.energies[q] - q as f64 * frame + n as f64 * (params.omega_r - frame);
            h[(i, i)] = C64::new(e, 0.0);
        }
        let ab_dag = a.matmul(&b.dagger());
        h.axpy(C64::new(params.g, 0.0), &ab_dag);
        h.axpy(C64::new(params.g, 0.0), &ab_dag.dagger());
        Self { basis, static_part: h, lowering: b, resonator: a, drive_detuning }
    }

    /// H(Ω) in GHz for a complex drive Ω (GHz).
    pub fn at(&self, omega: C64) -> CMatrix {
        let mut h = self.static_part.clone();
        h.axpy(omega.conj() * 0.5, &self.lowering);
        h.axpy(omega * 0.5, &self.lowering.dagger());
        h
    }
}

/// H = δ_q b†b + (α/2) b†b†bb + δ_r a†a + g(ab† + a†b) + (Ω* b + Ω b†)/2, in rad/ns.
pub fn build_hamiltonian(params: &DeviceParams, omega: C64) -> Result<Operator> {
    let fh = FrameHamiltonian::new(params, 0.0)?;
    Operator::new(fh.basis, fh.at(omega).scale_real(2.0 * PI))
}

/// Perturbative f0↔g1 coupling g̃ = g α Ω / (√2 Δ (Δ+α)) in GHz.
pub fn effective_coupling_perturbative(params: &DeviceParams, omega: C64) -> Result<C64> {
    let delta = params.detuning();
    let delta_alpha = delta + params.alpha;
    if delta.abs() < 1e-12 {
        return Err(Error::SingularDetuning("qubit-resonator detuning is zero"));
    }
    if delta_alpha.abs() < 1e-12 {
        return Err(Error::SingularDetuning("detuning plus anharmonicity is zero"));
    }
    let validity = delta.abs().min(delta_alpha.abs());
    if params.g * 10.0 > validity || omega.norm() > validity {
        log::warn!("perturbative coupling outside its validity range (|Δ|, |Δ+α| not ≫ g, Ω)");
    }
    let gt = omega * (params.g * params.alpha / (SQRT_2 * delta * delta_alpha));
    if gt.norm() > params.alpha.abs() / 10.0 {
        log::warn!("requested |g̃| = {:.4} GHz exceeds |α|/10", gt.norm());
    }
    Ok(gt)
}

/// Second-order estimate of the drive-induced f0↔g1 shift (GHz).
///
/// Sum-over-states shift of the transmon levels f and g from the drive
/// alone; only used to centre numerical searches.
pub fn stark_shift_estimate(params: &DeviceParams, amplitude: f64) -> Result<f64> {
    let ladder = TransmonLadder::from_params(params)?;
    let wd = drive_frequency(params);
    let e = |k: usize| ladder.energies[k] - k as f64 * wd;
    let half = 0.5 * amplitude;
    let shift = |k: usize| {
        let mut s = 0.0;
        if k >= 1 {
            let m = ladder.lowering[k - 1] * half;
            s += m * m / (e(k) - e(k - 1));
        }
        if k + 1 < ladder.n() {
            let m = ladder.lowering[k] * half;
            s += m * m / (e(k) - e(k + 1));
        }
        s
    };
    Ok(shift(2) - shift(0))
}

/// Labeled eigen-energies of the driven Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct DressedSpectrum {
    /// Drive amplitude Ω (GHz).
    pub amplitude: f64,
    /// `energies[i]` is the dressed energy (GHz) of the eigenstate adiabatically
    /// connected to bare flat index `i`.
    pub energies: Vec<f64>,
    /// Drive-induced f0↔g1 shift relative to Ω = 0 (GHz).
    pub stark_shift: f64,
    /// Half the minimum f0–g1 splitting with the drive retuned onto resonance (GHz).
    pub g_tilde: f64,
    /// Drive detuning (GHz) restoring f0↔g1 resonance at this amplitude.
    pub resonant_detuning: f64,
}

impl DressedSpectrum {
    pub fn energy(&self, basis: &CompositeBasis, transmon: usize, photons: usize) -> f64 {
        self.energies[basis.index(transmon, photons)]
    }
}

/// Step in drive amplitude (GHz) for adiabatic label tracking.
pub const LABEL_STEP: f64 = 0.010;

fn assign_labels(prev: &[Vec<C64>], eig: &HermitianEigen) -> (Vec<usize>, f64) {
    // greedy maximal-overlap matching: label -> eigen index
    let n = prev.len();
    let mut ov = vec![0.0; n * n];
    for (l, p) in prev.iter().enumerate() {
        for (k, v) in eig.vectors.iter().enumerate() {
            ov[l * n + k] = crate::linalg::inner(p, v).norm_sqr();
        }
    }
    let mut assignment = vec![usize::MAX; n];
    let mut used_l = vec![false; n];
    let mut used_k = vec![false; n];
    let mut worst = 1.0f64;
    for _ in 0..n {
        let mut best = (-1.0, 0, 0);
        for l in 0..n {
            if used_l[l] {
                continue;
            }
            for k in 0..n {
                if !used_k[k] && ov[l * n + k] > best.0 {
                    best = (ov[l * n + k], l, k);
                }
            }
        }
        let (o, l, k) = best;
        used_l[l] = true;
        used_k[k] = true;
        assignment[l] = k;
        worst = worst.min(o);
    }
    (assignment, worst)
}

/// Eigen-energies at amplitude `amplitude`, labeled by continuation from Ω = 0.
pub fn tracked_energies(fh: &FrameHamiltonian, amplitude: f64) -> Result<Vec<f64>> {
    let n = fh.basis.dim();
    let bare: Vec<Vec<C64>> = (0..n)
        .map(|i| {
            let mut v = vec![ZERO; n];
            v[i] = C64::new(1.0, 0.0);
            v
        })
        .collect();
    let eig0 = eigh(&fh.at(ZERO));
    let (labels, _) = assign_labels(&bare, &eig0);
    let mut vectors: Vec<Vec<C64>> = labels.iter().map(|&k| eig0.vectors[k].clone()).collect();
    let mut energies: Vec<f64> = labels.iter().map(|&k| eig0.values[k]).collect();

    let mut current = 0.0;
    let mut step = LABEL_STEP;
    while current < amplitude {
        let next = (current + step).min(amplitude);
        let eig = eigh(&fh.at(C64::new(next, 0.0)));
        let (labels, worst) = assign_labels(&vectors, &eig);
        if worst < 0.5 {
            if step < LABEL_STEP / 1024.0 {
                return Err(Error::LabelTracking { amplitude: next, overlap: worst });
            }
            step *= 0.5;
            continue;
        }
        vectors = labels.iter().map(|&k| eig.vectors[k].clone()).collect();
        energies = labels.iter().map(|&k| eig.values[k]).collect();
        current = next;
        step = LABEL_STEP;
    }
    Ok(energies)
}

/// Energy splitting of the two eigenstates with the largest f0/g1 weight.
fn f0g1_splitting(params: &DeviceParams, ladder: &TransmonLadder, amplitude: f64, detuning: f64) -> f64 {
    let fh = FrameHamiltonian::with_ladder(params, ladder, detuning);
    let basis = fh.basis;
    let eig = eigh(&fh.at(C64::new(amplitude, 0.0)));
    let (if0, ig1) = (basis.index(2, 0), basis.index(0, 1));
    let mut weights: Vec<(f64, f64)> = eig
        .vectors
        .iter()
        .zip(&eig.values)
        .map(|(v, &e)| (v[if0].norm_sqr() + v[ig1].norm_sqr(), e))
        .collect();
    weights.sort_by(|a, b| b.0.total_cmp(&a.0));
    (weights[0].1 - weights[1].1).abs()
}

/// Zero-amplitude f0↔g1 detuning of the nominal drive caused by the static
/// dispersive shifts (GHz); retuning the drive by this amount restores resonance.
pub fn static_detuning(params: &DeviceParams) -> Result<f64> {
    let fh = FrameHamiltonian::new(params, 0.0)?;
    let e = tracked_energies(&fh, 0.0)?;
    let b = fh.basis;
    Ok(e[b.index(2, 0)] - e[b.index(0, 1)])
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Finds the drive detuning of minimal f0–g1 splitting. Returns (detuning, splitting) in GHz.
pub fn f0g1_resonance(params: &DeviceParams, amplitude: f64) -> Result<(f64, f64)> {
    let ladder = TransmonLadder::from_params(params)?;
    let base = static_detuning(params)?;
    if amplitude == 0.0 {
        return Ok((base, 0.0));
    }
    let est = stark_shift_estimate(params, amplitude)?;
    let centre = base + est;
    let half_width = est.abs() + 0.02;
    let n = 81;
    let grid: Vec<f64> = (0..n)
        .map(|i| centre - half_width + 2.0 * half_width * i as f64 / (n - 1) as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&d| f0g1_splitting(params, &ladder, amplitude, d)).collect();
    let imin = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = grid[imin.saturating_sub(1)];
    let hi = grid[(imin + 1).min(n - 1)];
    let (d, split) = golden_section(|d| f0g1_splitting(params, &ladder, amplitude, d), lo, hi, 1e-10);
    Ok((d, split))
}

/// Dressed spectrum at a real drive amplitude Ω ≥ 0 (GHz).
pub fn dressed_spectrum(params: &DeviceParams, amplitude: f64) -> Result<DressedSpectrum> {
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidParameter { field: "amplitude", reason: "must be non-negative".into() });
    }
    let fh = FrameHamiltonian::new(params, 0.0)?;
    let energies = tracked_energies(&fh, amplitude)?;
    let base = static_detuning(params)?;
    let (resonant_detuning, splitting) = f0g1_resonance(params, amplitude)?;
    Ok(DressedSpectrum {
        amplitude,
        energies,
        stark_shift: resonant_detuning - base,
        g_tilde: 0.5 * splitting,
        resonant_detuning,
    })
}

/// Charge-basis transmon spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeBasisSpectrum {
    /// Lowest level energies relative to the ground state (GHz).
    pub energies: Vec<f64>,
    /// ⟨k|n̂|k+1⟩ / ⟨0|n̂|1⟩.
    pub lowering: Vec<f64>,
    /// Charge cutoff N actually used (states −N..=N).
    pub cutoff: usize,
}

fn charge_diag(e_c: f64, e_j: f64, n_g: f64, cutoff: usize) -> HermitianEigen {
    let dim = 2 * cutoff + 1;
    let mut h = CMatrix::zeros(dim);
    for i in 0..dim {
        let n = i as f64 - cutoff as f64;
        h[(i, i)] = C64::new(4.0 * e_c * (n - n_g) * (n - n_g), 0.0);
        if i + 1 < dim {
            h[(i, i + 1)] = C64::new(-0.5 * e_j, 0.0);
            h[(i + 1, i)] = C64::new(-0.5 * e_j, 0.0);
        }
    }
    eigh(&h)
}

/// Diagonalizes 4E_C(n̂ − n_g)² − E_J cos φ̂ in the charge basis.
pub fn transmon_charge_basis(e_c: f64, e_j: f64, n_g: f64, n_levels: usize) -> Result<ChargeBasisSpectrum> {
    if e_c <= 0.0 || e_j <= 0.0 {
        return Err(Error::InvalidParameter { field: "e_c/e_j", reason: "must be positive".into() });
    }
    if e_j / e_c < 20.0 {
        log::warn!("E_J/E_C = {:.1} is outside the transmon regime", e_j / e_c);
    }
    const MAX_CUTOFF: usize = 120;
    let mut cutoff = 15usize.max(n_levels);
    let mut eig = charge_diag(e_c, e_j, n_g, cutoff);
    loop {
        let next = charge_diag(e_c, e_j, n_g, cutoff + 5);
        let change = (0..n_levels)
            .map(|k| ((eig.values[k] - eig.values[0]) - (next.values[k] - next.values[0])).abs())
            .fold(0.0, f64::max);
        if change <= 1e-6 {
            break;
        }
        if cutoff + 5 >= MAX_CUTOFF {
            return Err(Error::ChargeTruncation { change, cutoff });
        }
        cutoff += 5;
        eig = next;
    }
    let dim = 2 * cutoff + 1;
    let charge = |i: usize| i as f64 - cutoff as f64;
    let mut vecs: Vec<Vec<f64>> = eig.vectors[..n_levels]
        .iter()
        .map(|v| v.iter().map(|c| c.re).collect())
        .collect();
    let element = |u: &[f64], v: &[f64]| (0..dim).map(|i| u[i] * charge(i) * v[i]).sum::<f64>();
    for k in 0..n_levels - 1 {
        if element(&vecs[k], &vecs[k + 1]) < 0.0 {
            for x in vecs[k + 1].iter_mut() {
                *x = -*x;
            }
        }
    }
    let n01 = element(&vecs[0], &vecs[1]);
    let lowering = (0..n_levels - 1).map(|k| element(&vecs[k], &vecs[k + 1]) / n01).collect();
    let energies = eig.values[..n_levels].iter().map(|e| e - eig.values[0]).collect();
    Ok(ChargeBasisSpectrum { energies, lowering, cutoff })
}

/// Bisects E_J (GHz) so the charge-basis ω_ge hits `target_ge`.
pub fn tune_josephson_energy(e_c: f64, target_ge: f64, n_g: f64) -> Result<f64> {
    let ge = |ej: f64| transmon_charge_basis(e_c, ej, n_g, 3).map(|s| s.energies[1]);
    let (mut lo, mut hi) = (e_c, 2000.0 * e_c);
    if ge(hi)? < target_ge {
        return Err(Error::InvalidParameter { field: "target_ge", reason: "unreachable with given E_C".into() });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ge(mid)? < target_ge {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drive_frequency_and_detunings() {
        let p = DeviceParams::measured();
        assert!((drive_frequency(&p) - 9.635).abs() < 1e-12);
        let (dq, dr) = frame_detunings(&p);
        assert!((dq + 0.995).abs() < 1e-12);
        assert!((dr + 2.411).abs() < 1e-12);

        let mut d = p;
        d.alpha = 0.0;
        d.omega_r = d.omega_q;
        assert!((drive_frequency(&d) - d.omega_q).abs() < 1e-12);
    }

    #[test]
    fn frame_resonance_without_coupling() {
        let mut p = DeviceParams::measured();
        p.g = 0.0;
        let h = build_hamiltonian(&p, ZERO).unwrap();
        let b = p.basis();
        let f0 = h.matrix[(b.index(2, 0), b.index(2, 0))];
        let g1 = h.matrix[(b.index(0, 1), b.index(0, 1))];
        let (dq, dr) = frame_detunings(&p);
        assert!((f0.re / (2.0 * PI) - (2.0 * dq + p.alpha)).abs() < 1e-12);
        assert!((g1.re / (2.0 * PI) - dr).abs() < 1e-12);
        assert!((f0 - g1).norm() < 1e-12);
        assert!(h.matrix.hermiticity_error() == 0.0 || h.matrix.hermiticity_error() < 1e-15);
    }

    #[test]
    fn hamiltonian_hermitian_with_complex_drive() {
        let p = DeviceParams::measured();
        let omega = C64::from_polar(0.7, PI / 3.0);
        let h = build_hamiltonian(&p, omega).unwrap();
        assert!(h.matrix.hermiticity_error() < 1e-10);
        let b = p.basis();
        let e0f0 = h.matrix[(b.index(1, 0), b.index(2, 0))];
        let expected = omega.conj() * (2f64.sqrt() / 2.0) * (2.0 * PI);
        assert!((e0f0 - expected).norm() < 1e-12);
        let f0e0 = h.matrix[(b.index(2, 0), b.index(1, 0))];
        assert!((f0e0 - omega * (2f64.sqrt() / 2.0) * (2.0 * PI)).norm() < 1e-12);
    }

    #[test]
    fn perturbative_coupling_values() {
        let p = DeviceParams::measured();
        let g7 = effective_coupling_perturbative(&p, C64::new(0.7, 0.0)).unwrap();
        let g6 = effective_coupling_perturbative(&p, C64::new(0.6, 0.0)).unwrap();
        assert!((g7.norm() * 1e3 - 5.2).abs() < 0.05);
        assert!((g6.norm() * 1e3 - 4.4).abs() < 0.05);
        assert_eq!(effective_coupling_perturbative(&p, ZERO).unwrap(), ZERO);
    }

    #[test]
    fn perturbative_coupling_tracks_drive_phase() {
        let p = DeviceParams::measured();
        let g0 = effective_coupling_perturbative(&p, C64::new(0.5, 0.0)).unwrap();
        for theta in [0.3, 1.7, -2.5] {
            let gt = effective_coupling_perturbative(&p, C64::from_polar(0.5, theta)).unwrap();
            let diff = (gt / g0).arg();
            assert!((diff - theta).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_detuning_is_reported() {
        let mut p = DeviceParams::measured();
        p.omega_r = p.omega_q;
        assert!(matches!(
            effective_coupling_perturbative(&p, C64::new(0.1, 0.0)),
            Err(Error::SingularDetuning(_))
        ));
        let mut p = DeviceParams::measured();
        p.omega_r = p.omega_q + p.alpha;
        assert!(effective_coupling_perturbative(&p, C64::new(0.1, 0.0)).is_err());
    }

    #[test]
    fn bare_energies_at_zero_drive_without_coupling() {
        let mut p = DeviceParams::measured();
        p.g = 0.0;
        let fh = FrameHamiltonian::new(&p, 0.0).unwrap();
        let e = tracked_energies(&fh, 0.0).unwrap();
        for i in 0..p.basis().dim() {
            assert!((e[i] - fh.static_part[(i, i)].re).abs() < 1e-9);
        }
        let ds = dressed_spectrum(&p, 0.0).unwrap();
        assert_eq!(ds.stark_shift, 0.0);
    }

    #[test]
    fn charge_basis_large_ej_limit() {
        let s = transmon_charge_basis(0.2, 200.0, 0.0, 3).unwrap();
        let alpha = s.energies[2] - 2.0 * s.energies[1];
        assert!((alpha + 0.2).abs() / 0.2 < 0.05, "alpha = {alpha}");
        assert!((s.lowering[1] - 2f64.sqrt()).abs() < 0.05);
    }

    #[test]
    fn validation_catches_bad_fields() {
        let mut p = DeviceParams::measured();
        p.t1_e = -1.0;
        assert!(matches!(p.validate(), Err(Error::InvalidParameter { field: "t1_e", .. })));
        let mut p = DeviceParams::measured();
        p.kappa = 0.0;
        assert!(p.validate().is_err());
        assert!(DeviceParams::measured().validate().is_ok());
    }
}
