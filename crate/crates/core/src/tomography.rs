//! Heterodyne detection emulation and moment-based state reconstruction.
//!
//! The detector records V = A + h†, where A is the photon mode and h a
//! thermal noise mode with occupation N. Moments of V are deconvolved into
//! moments of A, from which g²(0) and a maximum-likelihood density matrix
//! follow.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64 as C64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibration::Executor;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, CMatrix, ONE, ZERO};

/// Default Fock cutoff for reconstruction.
pub const DEFAULT_N_MAX: usize = 3;
/// Default highest moment order n + m.
pub const DEFAULT_MAX_ORDER: usize = 4;
/// Default ⟨A†A⟩ below which g² is undefined.
pub const G2_THRESHOLD: f64 = 0.05;
/// Largest allowed grid cell (V units).
pub const MAX_CELL: f64 = 0.1;
/// Probability mass allowed outside the sampling grid.
pub const GRID_TAIL: f64 = 1e-4;
/// Shots per independent random stream.
pub const SHOTS_PER_STREAM: u64 = 1 << 16;

/// Thermal noise mode of the amplification chain.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseModel {
    /// Thermal occupation N ≥ 0.
    pub n_thermal: f64,
}

impl NoiseModel {
    pub fn new(n_thermal: f64) -> Result<Self> {
        if !(n_thermal >= 0.0) || !n_thermal.is_finite() {
            return Err(Error::InvalidParameter { field: "n_thermal", reason: "must be finite and ≥ 0".into() });
        }
        Ok(Self { n_thermal })
    }

    /// Exact table of ⟨h^p (h†)^q⟩ = δ_pq p!(N+1)^p.
    pub fn antinormal_moments(&self, max_order: usize) -> MomentSet {
        let mut m = MomentSet::zeros(max_order);
        let mut fact = 1.0;
        for p in 0..=max_order / 2 {
            if p > 0 {
                fact *= p as f64;
            }
            m.set(p, p, C64::new(fact * (self.n_thermal + 1.0).powi(p as i32), 0.0));
        }
        m
    }

    /// N from a vacuum-input reference, ⟨V†V⟩ − 1. Warns when the reference
    /// departs from the thermal table by more than five standard errors.
    pub fn from_reference(reference: &MomentSet) -> Result<Self> {
        let n = (reference.get(1, 1).re - 1.0).max(0.0);
        let model = Self::new(n)?;
        let expected = model.antinormal_moments(reference.max_order);
        for (n_, m_) in reference.indices() {
            let dev = (reference.get(n_, m_) - expected.get(n_, m_)).norm();
            let se = reference.error(n_, m_);
            if se > 0.0 && dev > 5.0 * se {
                log::warn!("noise reference moment ({n_},{m_}) deviates from thermal model by {:.1} standard errors", dev / se);
            }
        }
        Ok(model)
    }
}

/// Table of ⟨(X†)^n X^m⟩ for n + m ≤ max_order, with standard errors.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentSet {
    pub max_order: usize,
    /// Row-major over (n, m) ∈ [0, max_order]²; entries with n + m > max_order are unused.
    pub values: Vec<C64>,
    pub errors: Vec<f64>,
    /// Hermitian covariance of the estimates in [`MomentSet::indices`] order;
    /// empty when only standard errors are known.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Vec::is_empty"))]
    pub covariance: Vec<C64>,
    pub shots: u64,
}

impl MomentSet {
    pub fn zeros(max_order: usize) -> Self {
        let k = (max_order + 1) * (max_order + 1);
        let mut values = vec![ZERO; k];
        values[0] = ONE;
        Self { max_order, values, errors: vec![0.0; k], covariance: Vec::new(), shots: 0 }
    }

    /// Number of stored moments.
    pub fn len(&self) -> usize {
        (self.max_order + 1) * (self.max_order + 2) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of (n, m) in [`MomentSet::indices`] order.
    pub fn position(&self, n: usize, m: usize) -> usize {
        let order = n + m;
        order * (order + 1) / 2 + n
    }

    /// Cov(X_nm, X_kl) when a covariance is attached.
    pub fn covariance_of(&self, a: (usize, usize), b: (usize, usize)) -> Option<C64> {
        if self.covariance.is_empty() {
            return None;
        }
        let k = self.len();
        Some(self.covariance[self.position(a.0, a.1) * k + self.position(b.0, b.1)])
    }

    fn slot(&self, n: usize, m: usize) -> usize {
        assert!(n + m <= self.max_order, "moment order {} exceeds {}", n + m, self.max_order);
        n * (self.max_order + 1) + m
    }

    pub fn get(&self, n: usize, m: usize) -> C64 {
        self.values[self.slot(n, m)]
    }

    pub fn error(&self, n: usize, m: usize) -> f64 {
        self.errors[self.slot(n, m)]
    }

    pub fn set(&mut self, n: usize, m: usize, v: C64) {
        let k = self.slot(n, m);
        self.values[k] = v;
    }

    pub fn set_error(&mut self, n: usize, m: usize, e: f64) {
        let k = self.slot(n, m);
        self.errors[k] = e;
    }

    /// All (n, m) with n + m ≤ max_order, ordered by total order.
    pub fn indices(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for order in 0..=self.max_order {
            for n in 0..=order {
                out.push((n, order - n));
            }
        }
        out
    }

    /// Exact moments Tr(ρ (a†)^n a^m) of a Fock-space density matrix.
    pub fn from_density_matrix(rho: &CMatrix, max_order: usize) -> Self {
        let mut out = Self::zeros(max_order);
        let ops = NormalOrdered::new(rho.dim(), max_order);
        for (n, m) in out.indices() {
            out.set(n, m, rho.trace_product(ops.get(n, m)));
        }
        out
    }

    /// Coherent state |β⟩: ⟨(A†)^n A^m⟩ = β*^n β^m.
    pub fn coherent(beta: C64, max_order: usize) -> Self {
        let mut out = Self::zeros(max_order);
        for (n, m) in out.indices() {
            out.set(n, m, beta.conj().powu(n as u32) * beta.powu(m as u32));
        }
        out
    }

    /// Largest |⟨(X†)^n X^m⟩ − conj⟨(X†)^m X^n⟩| in units of its standard error.
    pub fn hermitian_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (n, m) in self.indices() {
            let d = (self.get(n, m) - self.get(m, n).conj()).norm();
            let se = self.error(n, m).hypot(self.error(m, n));
            if se > 0.0 {
                worst = worst.max(d / se);
            } else if d > 1e-12 {
                worst = f64::INFINITY;
            }
        }
        worst
    }
}

/// Matrices of (a†)^n a^m on a truncated Fock space.
struct NormalOrdered {
    max_order: usize,
    ops: Vec<CMatrix>,
}

impl NormalOrdered {
    fn new(dim: usize, max_order: usize) -> Self {
        let a = CMatrix::from_fn(dim, |i, j| if j == i + 1 { C64::new((j as f64).sqrt(), 0.0) } else { ZERO });
        let ad = a.dagger();
        let mut powers_a = vec![CMatrix::identity(dim)];
        let mut powers_ad = vec![CMatrix::identity(dim)];
        for k in 1..=max_order {
            powers_a.push(powers_a[k - 1].matmul(&a));
            powers_ad.push(powers_ad[k - 1].matmul(&ad));
        }
        let mut ops = Vec::with_capacity((max_order + 1) * (max_order + 1));
        for n in 0..=max_order {
            for m in 0..=max_order {
                ops.push(powers_ad[n].matmul(&powers_a[m]));
            }
        }
        Self { max_order, ops }
    }

    fn get(&self, n: usize, m: usize) -> &CMatrix {
        &self.ops[n * (self.max_order + 1) + m]
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// ⟨(V†)^n V^m⟩ from signal and antinormal noise moments.
pub fn convolve_moments(signal: &MomentSet, noise: &MomentSet) -> Result<MomentSet> {
    if signal.max_order != noise.max_order {
        return Err(Error::DimensionMismatch { expected: signal.max_order, found: noise.max_order });
    }
    let mut out = MomentSet::zeros(signal.max_order);
    for (n, m) in out.indices() {
        let mut acc = ZERO;
        for i in 0..=n {
            for j in 0..=m {
                acc += signal.get(i, j) * noise.get(n - i, m - j) * (binomial(n, i) * binomial(m, j));
            }
        }
        out.set(n, m, acc);
    }
    out.shots = signal.shots;
    Ok(out)
}

/// Recovers ⟨(A†)^i A^j⟩ from detector moments by inverting the binomial
/// convolution order by order. The inversion is linear in the detector
/// moments, so their covariance (or, failing that, their standard errors) is
/// propagated exactly; the noise table is treated as exact.
pub fn deconvolve_moments(v: &MomentSet, noise: &MomentSet) -> Result<MomentSet> {
    if v.max_order != noise.max_order {
        return Err(Error::DimensionMismatch { expected: v.max_order, found: noise.max_order });
    }
    let h00 = noise.get(0, 0);
    if h00.norm() < 1e-300 {
        return Err(Error::InvalidParameter { field: "noise", reason: "zeroth noise moment vanishes".into() });
    }
    let idx = v.indices();
    let k = idx.len();
    let mut a = MomentSet::zeros(v.max_order);
    a.shots = v.shots;
    // row p of `t` expresses A_p as a linear combination of the V moments
    let mut t = vec![ZERO; k * k];
    for (p, &(n, m)) in idx.iter().enumerate() {
        let mut acc = v.get(n, m);
        t[p * k + p] = ONE;
        for i in 0..=n {
            for j in 0..=m {
                if i == n && j == m {
                    continue;
                }
                let c = noise.get(n - i, m - j) * (binomial(n, i) * binomial(m, j));
                acc -= c * a.get(i, j);
                let q = v.position(i, j);
                for r in 0..k {
                    let sub = t[q * k + r] * c;
                    t[p * k + r] -= sub;
                }
            }
        }
        a.set(n, m, acc / h00);
        for r in 0..k {
            t[p * k + r] /= h00;
        }
    }
    let cov_v: Vec<C64> = if v.covariance.is_empty() {
        let mut d = vec![ZERO; k * k];
        for (p, &(n, m)) in idx.iter().enumerate() {
            d[p * k + p] = C64::new(v.error(n, m).powi(2), 0.0);
        }
        d
    } else {
        v.covariance.clone()
    };
    // Cov_A = T Cov_V T†
    let mut tmp = vec![ZERO; k * k];
    for p in 0..k {
        for r in 0..k {
            let mut acc = ZERO;
            for q in 0..k {
                acc += t[p * k + q] * cov_v[q * k + r];
            }
            tmp[p * k + r] = acc;
        }
    }
    let mut cov_a = vec![ZERO; k * k];
    for p in 0..k {
        for r in 0..k {
            let mut acc = ZERO;
            for q in 0..k {
                acc += tmp[p * k + q] * t[r * k + q].conj();
            }
            cov_a[p * k + r] = acc;
        }
    }
    for (p, &(n, m)) in idx.iter().enumerate() {
        a.set_error(n, m, cov_a[p * k + p].re.max(0.0).sqrt());
    }
    a.covariance = cov_a;
    Ok(a)
}

/// g²(0) = ⟨A†A†AA⟩/⟨A†A⟩² with its propagated standard error.
pub fn g2(moments: &MomentSet, threshold: f64) -> Result<(f64, f64)> {
    if moments.max_order < 4 {
        return Err(Error::InvalidParameter { field: "max_order", reason: "g2 needs fourth-order moments".into() });
    }
    let n1 = moments.get(1, 1).re;
    if !(n1 > threshold) {
        return Err(Error::UndefinedG2 { population: n1, threshold });
    }
    let n2 = moments.get(2, 2).re;
    let value = n2 / (n1 * n1);
    let d22 = 1.0 / (n1 * n1);
    let d11 = -2.0 * n2 / (n1 * n1 * n1);
    let cross = moments.covariance_of((2, 2), (1, 1)).map_or(0.0, |c| c.re);
    let var = (d22 * moments.error(2, 2)).powi(2) + (d11 * moments.error(1, 1)).powi(2) + 2.0 * d22 * d11 * cross;
    let err = var.max(0.0).sqrt();
    Ok((value, err))
}

/// Square grid on which the detector distribution is tabulated.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistogramGrid {
    /// Lower edge on both axes.
    pub lo: f64,
    pub cell: f64,
    /// Cells per axis.
    pub cells: usize,
}

impl HistogramGrid {
    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.cell
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.cells).map(|k| self.lo + k as f64 * self.cell).collect()
    }

    /// Complex value at the center of flat cell `idx` (row = imaginary part).
    pub fn value(&self, idx: usize) -> C64 {
        C64::new(self.center(idx % self.cells), self.center(idx / self.cells))
    }
}

/// 2D histogram of complex detector samples.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    pub grid: HistogramGrid,
    /// Flat counts, index = im_cell · cells + re_cell.
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn empty(grid: HistogramGrid) -> Self {
        Self { grid, counts: vec![0; grid.cells * grid.cells] }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds another histogram on the same grid.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMisaligned);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Point mass at `v` (for tests and imported data).
    pub fn record(&mut self, v: C64) -> Result<()> {
        let g = self.grid;
        let cx = ((v.re - g.lo) / g.cell).floor();
        let cy = ((v.im - g.lo) / g.cell).floor();
        if cx < 0.0 || cy < 0.0 || cx >= g.cells as f64 || cy >= g.cells as f64 {
            return Err(Error::InvalidParameter { field: "sample", reason: "outside histogram grid".into() });
        }
        self.counts[cy as usize * g.cells + cx as usize] += 1;
        Ok(())
    }
}

/// Bin-center moments with shot-noise standard errors.
pub fn moments_from_histogram(hist: &Histogram, max_order: usize) -> Result<MomentSet> {
    let total = hist.total();
    if total == 0 {
        return Err(Error::EmptyRecord("histogram"));
    }
    let mut out = MomentSet::zeros(max_order);
    out.shots = total;
    let idx = out.indices();
    let k = idx.len();
    let mut sums = vec![ZERO; k];
    let mut second = vec![ZERO; k * k];
    let mut x = vec![ZERO; k];
    for (cell, &c) in hist.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let v = hist.grid.value(cell);
        let w = c as f64;
        let vc = v.conj();
        for (slot, &(n, m)) in idx.iter().enumerate() {
            x[slot] = vc.powu(n as u32) * v.powu(m as u32);
            sums[slot] += x[slot] * w;
        }
        for a in 0..k {
            for b in 0..k {
                second[a * k + b] += x[a] * x[b].conj() * w;
            }
        }
    }
    let nt = total as f64;
    let means: Vec<C64> = sums.iter().map(|s| s / nt).collect();
    let mut cov = vec![ZERO; k * k];
    for a in 0..k {
        for b in 0..k {
            // covariance of the sample means
            cov[a * k + b] = (second[a * k + b] / nt - means[a] * means[b].conj()) / nt;
        }
    }
    for (slot, &(n, m)) in idx.iter().enumerate() {
        out.set(n, m, means[slot]);
        out.set_error(n, m, cov[slot * k + slot].re.max(0.0).sqrt());
    }
    for b in 0..k {
        cov[b] = ZERO;
        cov[b * k] = ZERO;
    }
    out.covariance = cov;
    out.set(0, 0, ONE);
    out.set_error(0, 0, 0.0);
    Ok(out)
}

/// Density matrix after a pure-loss channel with transmission η.
pub fn attenuate(rho: &CMatrix, eta: f64) -> CMatrix {
    let d = rho.dim();
    let mut out = CMatrix::zeros(d);
    for m in 0..d {
        for n in 0..d {
            let mut acc = ZERO;
            for k in 0..d - m.max(n) {
                let c = (binomial(m + k, k) * binomial(n + k, k)).sqrt()
                    * eta.powf(0.5 * (m + n) as f64)
                    * (1.0 - eta).powi(k as i32);
                acc += rho[(m + k, n + k)] * c;
            }
            out[(m, n)] = acc;
        }
    }
    out
}

/// Husimi Q(γ) = ⟨γ|ρ|γ⟩/π.
pub fn husimi(rho: &CMatrix, gamma: C64) -> f64 {
    let d = rho.dim();
    let mut amp = vec![ZERO; d];
    let mut fact = 1.0;
    let mut pw = ONE;
    for (k, a) in amp.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
            pw *= gamma;
        }
        *a = pw / fact.sqrt();
    }
    let mut acc = ZERO;
    for m in 0..d {
        for n in 0..d {
            acc += amp[m].conj() * rho[(m, n)] * amp[n];
        }
    }
    (-gamma.norm_sqr()).exp() * acc.re / PI
}

/// Tabulated distribution of V = A + h† ready for sampling.
#[derive(Debug, Clone)]
pub struct DetectorDistribution {
    pub grid: HistogramGrid,
    cdf: Vec<f64>,
}

impl DetectorDistribution {
    /// Tabulates P_V(β) = η·Q_{ρη}(√η β) with η = 1/(N+1), expanding the grid
    /// until less than [`GRID_TAIL`] of the mass falls outside.
    pub fn new(rho: &CMatrix, noise: &NoiseModel) -> Result<Self> {
        if rho.hermiticity_error() > 1e-8 || (rho.trace().re - 1.0).abs() > 1e-8 || min_eigenvalue(rho) < -1e-8 {
            return Err(Error::InvalidParameter { field: "rho_signal", reason: "not a valid density matrix".into() });
        }
        let eta = 1.0 / (noise.n_thermal + 1.0);
        let rho_eta = attenuate(rho, eta);
        let mut mean = ZERO;
        for k in 1..rho.dim() {
            mean += rho[(k - 1, k)] * (k as f64).sqrt();
        }
        let spread = (noise.n_thermal + 1.0 + 2.0 * (rho.dim() as f64)).sqrt();
        let mut half = mean.norm() + 4.0 * spread;
        loop {
            let cells = ((2.0 * half / MAX_CELL).ceil() as usize).max(8);
            let cell = 2.0 * half / cells as f64;
            let grid = HistogramGrid { lo: -half, cell, cells };
            let mut cdf = Vec::with_capacity(cells * cells);
            let mut acc = 0.0;
            let se = eta.sqrt();
            for iy in 0..cells {
                for ix in 0..cells {
                    let beta = C64::new(grid.center(ix), grid.center(iy));
                    acc += (eta * husimi(&rho_eta, beta * se)).max(0.0) * cell * cell;
                    cdf.push(acc);
                }
            }
            if 1.0 - acc <= GRID_TAIL {
                for c in &mut cdf {
                    *c /= acc;
                }
                return Ok(Self { grid, cdf });
            }
            log::debug!("expanding detector grid beyond ±{half}");
            half *= 1.5;
        }
    }

    /// Samples `count` shots into a fresh histogram from stream `stream` of `seed`.
    pub fn sample_stream(&self, seed: u64, stream: u64, count: u64) -> Histogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut hist = Histogram::empty(self.grid);
        for _ in 0..count {
            let u: f64 = rng.random();
            let k = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
            hist.counts[k] += 1;
        }
        hist
    }

    /// Stream sizes for `n_shots`; each stream is independent and the merge is order-free.
    pub fn stream_plan(n_shots: u64) -> Vec<(u64, u64)> {
        let full = n_shots / SHOTS_PER_STREAM;
        let rest = n_shots % SHOTS_PER_STREAM;
        let mut plan: Vec<(u64, u64)> = (0..full).map(|s| (s, SHOTS_PER_STREAM)).collect();
        if rest > 0 {
            plan.push((full, rest));
        }
        plan
    }
}

/// Samples `n_shots` detector outcomes for the photon-mode state `rho`.
pub fn simulate_shots(rho: &CMatrix, noise: &NoiseModel, n_shots: u64, seed: u64) -> Result<Histogram> {
    if n_shots == 0 {
        return Err(Error::InvalidParameter { field: "n_shots", reason: "must be ≥ 1".into() });
    }
    let dist = DetectorDistribution::new(rho, noise)?;
    let mut hist = Histogram::empty(dist.grid);
    for (stream, count) in DetectorDistribution::stream_plan(n_shots) {
        hist.merge(&dist.sample_stream(seed, stream, count))?;
    }
    Ok(hist)
}

/// Stream index offset used for the vacuum reference run.
pub const REFERENCE_STREAM_OFFSET: u64 = 1 << 40;

/// Samples `n_shots` with the executor, one job per stream, merged in stream order.
pub fn simulate_shots_with<E: Executor>(
    dist: &DetectorDistribution,
    n_shots: u64,
    seed: u64,
    stream_offset: u64,
    exec: &E,
) -> Result<Histogram> {
    if n_shots == 0 {
        return Err(Error::InvalidParameter { field: "n_shots", reason: "must be ≥ 1".into() });
    }
    let parts = exec.map(DetectorDistribution::stream_plan(n_shots), |(stream, count)| {
        dist.sample_stream(seed, stream_offset + stream, count)
    });
    let mut hist = Histogram::empty(dist.grid);
    for h in &parts {
        hist.merge(h)?;
    }
    Ok(hist)
}

/// Settings for a full measure-and-reconstruct run.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TomographySettings {
    pub n_thermal: f64,
    pub shots: u64,
    pub seed: u64,
    pub n_max: usize,
    pub max_order: usize,
}

impl Default for TomographySettings {
    fn default() -> Self {
        Self { n_thermal: 10.0, shots: 1_000_000, seed: 1, n_max: DEFAULT_N_MAX, max_order: DEFAULT_MAX_ORDER }
    }
}

/// Everything produced by [`run_tomography`].
#[derive(Debug, Clone)]
pub struct TomographyOutcome {
    pub signal: Histogram,
    pub reference: Histogram,
    pub signal_moments: MomentSet,
    pub reference_moments: MomentSet,
    pub mode_moments: MomentSet,
    /// N estimated from the reference as ⟨V†V⟩ − 1.
    pub noise_estimate: f64,
    /// g² with its propagated error; `None` below the population threshold.
    pub g2: Option<(f64, f64)>,
    pub estimate: DensityMatrixEstimate,
}

/// Simulates signal and vacuum-reference histograms, deconvolves the moments
/// and reconstructs the mode state.
pub fn run_tomography<E: Executor>(rho_signal: &CMatrix, target: &[C64], cfg: &TomographySettings, exec: &E) -> Result<TomographyOutcome> {
    let noise = NoiseModel::new(cfg.n_thermal)?;
    let dist = DetectorDistribution::new(rho_signal, &noise)?;
    let mut vacuum = CMatrix::zeros(rho_signal.dim());
    vacuum[(0, 0)] = ONE;
    let ref_dist = DetectorDistribution::new(&vacuum, &noise)?;
    let signal = simulate_shots_with(&dist, cfg.shots, cfg.seed, 0, exec)?;
    let reference = simulate_shots_with(&ref_dist, cfg.shots, cfg.seed, REFERENCE_STREAM_OFFSET, exec)?;
    let signal_moments = moments_from_histogram(&signal, cfg.max_order)?;
    let reference_moments = moments_from_histogram(&reference, cfg.max_order)?;
    let noise_estimate = NoiseModel::from_reference(&reference_moments)?.n_thermal;
    let mode_moments = deconvolve_moments(&signal_moments, &reference_moments)?;
    let g2 = match g2(&mode_moments, G2_THRESHOLD) {
        Ok(v) => Some(v),
        Err(Error::UndefinedG2 { .. }) => None,
        Err(e) => return Err(e),
    };
    let estimate = mle_density_matrix(&mode_moments, cfg.n_max, target)?;
    Ok(TomographyOutcome { signal, reference, signal_moments, reference_moments, mode_moments, noise_estimate, g2, estimate })
}

/// Photon-mode density matrix with at most one photon, embedded in `n_max + 1` levels.
pub fn single_photon_mode_state(photon_number: f64, amplitude: C64, n_max: usize) -> Result<CMatrix> {
    if n_max < 1 {
        return Err(Error::InvalidParameter { field: "n_max", reason: "must be ≥ 1".into() });
    }
    let n = photon_number.clamp(0.0, 1.0);
    let bound = (n * (1.0 - n)).sqrt();
    let c = if amplitude.norm() > bound && amplitude.norm() > 0.0 {
        amplitude * (bound / amplitude.norm())
    } else {
        amplitude
    };
    let mut rho = CMatrix::zeros(n_max + 1);
    rho[(0, 0)] = C64::new(1.0 - n, 0.0);
    rho[(1, 1)] = C64::new(n, 0.0);
    rho[(1, 0)] = c;
    rho[(0, 1)] = c.conj();
    Ok(rho)
}

/// Reconstructed photon-mode state.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DensityMatrixEstimate {
    pub n_max: usize,
    pub rho: CMatrix,
    /// ⟨target|ρ|target⟩.
    pub fidelity: f64,
    /// g² of the reconstructed state, when ⟨a†a⟩ clears the threshold.
    pub g2: Option<f64>,
    /// Weighted squared residual at the optimum.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One real component of a measured moment: Re or Im of ⟨(a†)^n a^m⟩.
#[derive(Debug, Clone, Copy)]
struct Component {
    n: usize,
    m: usize,
    imag: bool,
    value: f64,
}

struct MleProblem {
    dim: usize,
    components: Vec<Component>,
    /// Inverse covariance of the components (row-major).
    weight: Vec<f64>,
    ops: NormalOrdered,
}

/// Solves the symmetric positive-definite system by Cholesky; returns the inverse.
fn spd_inverse(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = a[i * k + j];
            for p in 0..j {
                sum -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * k + i] = sum.sqrt();
            } else {
                l[i * k + j] = sum / l[j * k + j];
            }
        }
    }
    let mut inv = vec![0.0; k * k];
    for col in 0..k {
        let mut y = vec![0.0; k];
        for i in 0..k {
            let mut sum = if i == col { 1.0 } else { 0.0 };
            for p in 0..i {
                sum -= l[i * k + p] * y[p];
            }
            y[i] = sum / l[i * k + i];
        }
        for i in (0..k).rev() {
            let mut sum = y[i];
            for p in i + 1..k {
                sum -= l[p * k + i] * inv[p * k + col];
            }
            inv[i * k + col] = sum / l[i * k + i];
        }
    }
    Some(inv)
}

impl MleProblem {
    /// Real components of the moments with n ≤ m (the rest follow by
    /// conjugation), weighted by their inverse covariance when one is
    /// attached and by 1/σ² otherwise.
    fn new(moments: &MomentSet, dim: usize, use_covariance: bool) -> Self {
        let mut components = Vec::new();
        for (n, m) in moments.indices() {
            if n + m == 0 || n > m {
                continue;
            }
            let v = moments.get(n, m);
            components.push(Component { n, m, imag: false, value: v.re });
            if n != m {
                components.push(Component { n, m, imag: true, value: v.im });
            }
        }
        let k = components.len();
        let diagonal = |c: &Component| 1.0 / moments.error(c.n, c.m).max(1e-6).powi(2);
        let mut weight = vec![0.0; k * k];
        let mut done = false;
        if use_covariance && !moments.covariance.is_empty() {
            let mut cov = vec![0.0; k * k];
            for (i, a) in components.iter().enumerate() {
                for (j, b) in components.iter().enumerate() {
                    let c = moments.covariance_of((a.n, a.m), (b.n, b.m)).unwrap_or(ZERO);
                    let cbar = moments.covariance_of((a.n, a.m), (b.m, b.n)).unwrap_or(ZERO);
                    cov[i * k + j] = match (a.imag, b.imag) {
                        (false, false) => 0.5 * (c + cbar).re,
                        (true, true) => 0.5 * (c - cbar).re,
                        (false, true) => 0.5 * (cbar.im - c.im),
                        (true, false) => 0.5 * (c.im + cbar.im),
                    };
                }
            }
            let ridge = 1e-10 * (0..k).map(|i| cov[i * k + i]).fold(0.0, f64::max);
            for i in 0..k {
                cov[i * k + i] += ridge.max(1e-300);
            }
            if let Some(inv) = spd_inverse(&cov, k) {
                weight = inv;
                done = true;
            } else {
                log::warn!("moment covariance is not positive definite; using standard errors only");
            }
        }
        if !done {
            for (i, c) in components.iter().enumerate() {
                weight[i * k + i] = diagonal(c);
            }
        }
        Self { dim, components, weight, ops: NormalOrdered::new(dim, moments.max_order) }
    }

    fn lower(&self, x: &[f64]) -> CMatrix {
        let d = self.dim;
        let mut l = CMatrix::zeros(d);
        let mut k = 0;
        for i in 0..d {
            l[(i, i)] = C64::new(x[k], 0.0);
            k += 1;
            for j in 0..i {
                l[(i, j)] = C64::new(x[k], x[k + 1]);
                k += 2;
            }
        }
        l
    }

    fn rho(&self, x: &[f64]) -> CMatrix {
        let l = self.lower(x);
        let s = l.matmul(&l.dagger());
        let tr = s.trace().re;
        s.scale_real(1.0 / tr)
    }

    fn residuals(&self, rho: &CMatrix) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                let t = rho.trace_product(self.ops.get(c.n, c.m));
                (if c.imag { t.im } else { t.re }) - c.value
            })
            .collect()
    }

    fn quadratic(&self, r: &[f64]) -> f64 {
        let k = r.len();
        let mut acc = 0.0;
        for i in 0..k {
            for j in 0..k {
                acc += r[i] * self.weight[i * k + j] * r[j];
            }
        }
        acc
    }

    fn residual(&self, x: &[f64]) -> f64 {
        self.quadratic(&self.residuals(&self.rho(x)))
    }

    /// Residual plus (Tr LL† − 1)², which pins the otherwise free scale of L.
    fn value(&self, x: &[f64]) -> f64 {
        let tau: f64 = x.iter().map(|v| v * v).sum();
        self.residual(x) + (tau - 1.0).powi(2)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let l = self.lower(x);
        let s = l.matmul(&l.dagger());
        let tau = s.trace().re;
        let rho = s.scale_real(1.0 / tau);
        // f = rᵀWr  ⇒  df = 2Re Tr(dρ X), X = Σ (Wr)_k Õ_k with Õ = O or −iO
        let r = self.residuals(&rho);
        let k = r.len();
        let mut xm = CMatrix::zeros(d);
        for (i, c) in self.components.iter().enumerate() {
            let u: f64 = (0..k).map(|j| self.weight[i * k + j] * r[j]).sum();
            let coef = if c.imag { C64::new(0.0, -u) } else { C64::new(u, 0.0) };
            xm.axpy(coef, self.ops.get(c.n, c.m));
        }
        let c = rho.trace_product(&xm);
        let mut y = xm;
        for i in 0..d {
            y[(i, i)] -= c;
        }
        let y = y.scale_real(1.0 / tau);
        // S = L L†  ⇒  df = 2Re Tr(dL Z), Z = L†(Y + Y†)
        let z = l.dagger().matmul(&(&y + &y.dagger()));
        let mut g = Vec::with_capacity(d * d);
        for i in 0..d {
            g.push(2.0 * z[(i, i)].re);
            for j in 0..i {
                g.push(2.0 * z[(j, i)].re);
                g.push(-2.0 * z[(j, i)].im);
            }
        }
        let pin = 4.0 * (tau - 1.0);
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += pin * xi;
        }
        g
    }
}

/// Limited-memory BFGS with backtracking line search.
fn lbfgs(
    f: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    mut x: Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, usize, bool) {
    let memory = 8;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut fx = f(&x);
    let mut g = grad(&x);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let mut stalled = 0;
    for it in 0..max_iter {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < tol {
            return (x, it, true);
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alpha = vec![0.0; s_hist.len()];
        for k in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            alpha[k] = rho * dot(&s_hist[k], &q);
            for (qi, yi) in q.iter_mut().zip(&y_hist[k]) {
                *qi -= alpha[k] * yi;
            }
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            for qi in &mut q {
                *qi *= gamma;
            }
        }
        for k in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            let beta = rho * dot(&y_hist[k], &q);
            for (qi, si) in q.iter_mut().zip(&s_hist[k]) {
                *qi += (alpha[k] - beta) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
            s_hist.clear();
            y_hist.clear();
        }
        let mut step = 1.0;
        let (xn, fxn) = loop {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let fc = f(&cand);
            if fc <= fx + 1e-4 * step * slope {
                break (cand, fc);
            }
            step *= 0.5;
            if step < 1e-20 {
                return (x, it, gnorm < tol.sqrt());
            }
        };
        let gn = grad(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-16 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        if fx - fxn <= 1e-13 * fx.abs() {
            stalled += 1;
        } else {
            stalled = 0;
        }
        x = xn;
        fx = fxn;
        g = gn;
        if stalled >= 10 {
            return (x, it + 1, true);
        }
    }
    let gnorm = dot(&g, &g).sqrt();
    (x, max_iter, gnorm < tol)
}

/// Maximum-iteration budget for the reconstruction.
pub const MLE_MAX_ITER: usize = 20000;

/// Weighted least-squares fit of ρ = LL†/Tr(LL†) to measured moments.
///
/// Residuals are weighted by the inverse moment covariance when the moment
/// set carries one, otherwise by 1/σ²; moments with zero standard error are
/// weighted as if their error were `1e-6`.
pub fn mle_density_matrix(moments: &MomentSet, n_max: usize, target: &[C64]) -> Result<DensityMatrixEstimate> {
    if n_max < 2 {
        return Err(Error::InvalidParameter { field: "n_max", reason: "must be ≥ 2".into() });
    }
    if target.len() > n_max + 1 {
        return Err(Error::DimensionMismatch { expected: n_max + 1, found: target.len() });
    }
    let dim = n_max + 1;
    let problem = MleProblem::new(moments, dim, true);
    // start from the maximally mixed state
    let mut x0 = vec![0.0; dim * dim];
    let mut k = 0;
    for i in 0..dim {
        x0[k] = 1.0 / (dim as f64).sqrt();
        k += 1 + 2 * i;
    }
    let scale = problem.residual(&x0).max(1.0);
    let (x, iterations, converged) = lbfgs(
        |x| problem.value(x) / scale,
        |x| problem.gradient(x).into_iter().map(|g| g / scale).collect(),
        x0,
        MLE_MAX_ITER,
        1e-10,
    );
    let mut rho = problem.rho(&x);
    rho.hermitize();
    let residual = problem.residual(&x);
    if !converged {
        log::warn!("density-matrix fit stopped after {iterations} iterations, residual {residual:e}");
    }
    let mut t = vec![ZERO; dim];
    t[..target.len()].copy_from_slice(target);
    let norm: f64 = t.iter().map(|c| c.norm_sqr()).sum();
    let fidelity = if norm > 0.0 { (crate::linalg::inner(&t, &rho.apply(&t)) / norm).re } else { 0.0 };
    let ops = NormalOrdered::new(dim, 4);
    let n1 = rho.trace_product(ops.get(1, 1)).re;
    let g2v = if n1 > G2_THRESHOLD { Some(rho.trace_product(ops.get(2, 2)).re / (n1 * n1)) } else { None };
    Ok(DensityMatrixEstimate { n_max, rho, fidelity, g2: g2v, residual, iterations, converged })
}

/// Finite-difference check of the fit gradient at `x` (relative error).
#[doc(hidden)]
pub fn mle_gradient_check(moments: &MomentSet, n_max: usize, x: &[f64]) -> f64 {
    let p = MleProblem::new(moments, n_max + 1, true);
    let g = p.gradient(x);
    let mut worst: f64 = 0.0;
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    for k in 0..x.len() {
        let h = 1e-6;
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
        worst = worst.max((fd - g[k]).abs() / norm);
    }
    worst
}
