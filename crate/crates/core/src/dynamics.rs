//! Lindblad master-equation integration and output-field extraction.
//!
//! The integration frame rotates at the drive frequency (plus an optional
//! detuning). Output-field records are rotated into the frame of the dressed
//! resonator so that a resonant photon has a slowly varying phase.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64 as C64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::device::{static_detuning, tracked_energies, DeviceParams, FrameHamiltonian};
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, CMatrix, SparseMatrix, I, ONE, ZERO};
use crate::pulses::Envelope;
use crate::quantum::{partial_trace_transmon, transmon_transition, CompositeBasis, State};

/// Default integration step (ns).
pub const DEFAULT_DT: f64 = 0.005;
/// Default spacing of recorded output samples (ns).
pub const DEFAULT_STRIDE: f64 = 0.1;
/// Maximum tolerated |Tr ρ − 1|.
pub const TRACE_TOLERANCE: f64 = 1e-7;
/// Minimum tolerated eigenvalue of ρ at probe times.
pub const POSITIVITY_TOLERANCE: f64 = -1e-6;

/// Which dissipation channels are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Decoherence {
    pub cavity_decay: bool,
    pub relaxation: bool,
    pub dephasing: bool,
}

impl Decoherence {
    pub const ALL: Self = Self { cavity_decay: true, relaxation: true, dephasing: true };
    /// Only the resonator leaks; the transmon is ideal.
    pub const CAVITY_ONLY: Self = Self { cavity_decay: true, relaxation: false, dephasing: false };
    pub const NONE: Self = Self { cavity_decay: false, relaxation: false, dephasing: false };
}

impl Default for Decoherence {
    fn default() -> Self {
        Self::ALL
    }
}

/// A jump operator L = √rate · op.
#[derive(Debug, Clone)]
pub struct CollapseOperator {
    pub name: &'static str,
    pub op: CMatrix,
    /// Rate in 1/ns.
    pub rate: f64,
}

/// Pure-dephasing rates and the ef coherence time they imply.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DephasingModel {
    /// Pure dephasing rate of the g–e coherence (1/ns).
    pub gamma_phi_ge: f64,
    /// Pure dephasing rate of the g–f coherence (1/ns).
    pub gamma_phi_gf: f64,
    /// Resulting e–f coherence time (ns), to compare with the measured T2_ef.
    pub implied_t2_ef: f64,
}

impl DephasingModel {
    pub fn from_params(params: &DeviceParams) -> Self {
        let clamp = |name: &str, x: f64| {
            if x < 0.0 {
                log::warn!("negative pure-dephasing rate for {name} ({x:e}/ns); clamped to 0");
                0.0
            } else {
                x
            }
        };
        let g1e = 1.0 / params.t1_e;
        let g1f = 1.0 / params.t1_f;
        let gamma_phi_ge = clamp("ge", 1.0 / params.t2_ge - 0.5 * g1e);
        let gamma_phi_gf = clamp("gf", 1.0 / params.t2_gf - 0.5 * g1f);
        // operators |e><e| and |f><f| dephase ef at the sum of both rates
        let ef_rate = 0.5 * (g1e + g1f) + gamma_phi_ge + gamma_phi_gf;
        Self { gamma_phi_ge, gamma_phi_gf, implied_t2_ef: 1.0 / ef_rate }
    }
}

/// Jump operators on the composite basis with their rates.
pub fn collapse_operators(params: &DeviceParams, which: Decoherence) -> Vec<CollapseOperator> {
    let basis = params.basis();
    let mut out = Vec::new();
    if which.cavity_decay {
        out.push(CollapseOperator {
            name: "cavity",
            op: crate::quantum::resonator_annihilation(basis).matrix,
            rate: 2.0 * PI * params.kappa,
        });
    }
    if which.relaxation {
        out.push(CollapseOperator {
            name: "relax_e",
            op: transmon_transition(basis, 0, 1).matrix,
            rate: 1.0 / params.t1_e,
        });
        out.push(CollapseOperator {
            name: "relax_f",
            op: transmon_transition(basis, 1, 2).matrix,
            rate: 1.0 / params.t1_f,
        });
    }
    if which.dephasing {
        let d = DephasingModel::from_params(params);
        // |k><k| at rate γ dephases coherences involving k at γ/2
        out.push(CollapseOperator {
            name: "dephase_e",
            op: transmon_transition(basis, 1, 1).matrix,
            rate: 2.0 * d.gamma_phi_ge,
        });
        out.push(CollapseOperator {
            name: "dephase_f",
            op: transmon_transition(basis, 2, 2).matrix,
            rate: 2.0 * d.gamma_phi_gf,
        });
    }
    out
}

fn is_diagonal(m: &CMatrix) -> bool {
    let n = m.dim();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == ZERO))
}

/// Driven, damped transmon-resonator model ready for integration.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    pub params: DeviceParams,
    pub envelope: Envelope,
    pub drive_detuning: f64,
    pub decoherence: Decoherence,
    basis: CompositeBasis,
    /// H0 − (i/2)ΣL†L in rad/ns.
    h_eff: SparseMatrix,
    /// Same with +(i/2)ΣL†L, i.e. H_eff†.
    h_eff_dag: SparseMatrix,
    b: SparseMatrix,
    b_dag: SparseMatrix,
    jumps: Vec<SparseMatrix>,
    /// Elementwise dephasing factor for diagonal jump operators.
    dephasing: Option<CMatrix>,
    a: SparseMatrix,
    kappa: f64,
    /// Dressed resonator frequency in the integration frame (rad/ns).
    cavity_frequency: f64,
}

impl LindbladModel {
    pub fn new(params: &DeviceParams, envelope: Envelope, drive_detuning: f64, decoherence: Decoherence) -> Result<Self> {
        params.validate()?;
        let fh = FrameHamiltonian::new(params, drive_detuning)?;
        let basis = fh.basis;
        let n = basis.dim();
        let two_pi = 2.0 * PI;
        let h0 = fh.static_part.scale_real(two_pi);

        let collapse = collapse_operators(params, decoherence);
        let mut anti = CMatrix::zeros(n);
        let mut jumps = Vec::new();
        let mut deph: Option<CMatrix> = None;
        for c in &collapse {
            if c.rate == 0.0 {
                continue;
            }
            if is_diagonal(&c.op) {
                let f = deph.get_or_insert_with(|| CMatrix::zeros(n));
                for i in 0..n {
                    for j in 0..n {
                        let di = c.op[(i, i)];
                        let dj = c.op[(j, j)];
                        f[(i, j)] += (di * dj.conj() - (di.norm_sqr() + dj.norm_sqr()) * 0.5) * c.rate;
                    }
                }
            } else {
                let l = c.op.scale_real(c.rate.sqrt());
                anti += &l.dagger().matmul(&l);
                jumps.push(SparseMatrix::from_dense(&l, 0.0));
            }
        }
        let mut h_eff = h0.clone();
        h_eff.axpy(C64::new(0.0, -0.5), &anti);
        let mut h_eff_dag = h0;
        h_eff_dag.axpy(C64::new(0.0, 0.5), &anti);

        let e0 = tracked_energies(&fh, 0.0)?;
        let cavity_frequency = two_pi * (e0[basis.index(0, 1)] - e0[basis.index(0, 0)]);

        Ok(Self {
            params: *params,
            envelope,
            drive_detuning,
            decoherence,
            basis,
            h_eff: SparseMatrix::from_dense(&h_eff, 0.0),
            h_eff_dag: SparseMatrix::from_dense(&h_eff_dag, 0.0),
            b: SparseMatrix::from_dense(&fh.lowering, 0.0),
            b_dag: SparseMatrix::from_dense(&fh.lowering.dagger(), 0.0),
            jumps,
            dephasing: deph,
            a: SparseMatrix::from_dense(&fh.resonator, 0.0),
            kappa: two_pi * params.kappa,
            cavity_frequency,
        })
    }

    pub fn basis(&self) -> CompositeBasis {
        self.basis
    }

    /// κ in 1/ns.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Dressed resonator frequency in the integration frame (rad/ns).
    pub fn cavity_frequency(&self) -> f64 {
        self.cavity_frequency
    }

    fn add_drive(&self, omega: C64, x: &CMatrix, out: &mut CMatrix, left_scale: C64) {
        // H_drive = π(Ω* b + Ω b†) in rad/ns
        if omega != ZERO {
            self.b.mul_dense_acc(left_scale * omega.conj() * PI, x, out);
            self.b_dag.mul_dense_acc(left_scale * omega * PI, x, out);
        }
    }

    /// dρ/dt for Hermitian ρ.
    fn rhs_hermitian(&self, omega: C64, rho: &CMatrix, k: &mut CMatrix, out: &mut CMatrix) {
        let n = self.basis.dim();
        k.as_mut_slice().fill(ZERO);
        self.h_eff.mul_dense_acc(ONE, rho, k);
        self.add_drive(omega, rho, k, ONE);
        let ks = k.as_slice();
        let os = out.as_mut_slice();
        for i in 0..n {
            for j in 0..n {
                // −i K + i K†  (ρ H_eff† = (H_eff ρ)† for Hermitian ρ)
                os[i * n + j] = -I * ks[i * n + j] + I * ks[j * n + i].conj();
            }
        }
        self.dissipate(rho, out);
    }

    /// dX/dt for a general operator X.
    fn rhs_general(&self, omega: C64, x: &CMatrix, out: &mut CMatrix) {
        out.as_mut_slice().fill(ZERO);
        self.h_eff.mul_dense_acc(-I, x, out);
        self.add_drive(omega, x, out, -I);
        self.h_eff_dag.dense_mul_acc(I, x, out);
        if omega != ZERO {
            // X H_drive
            self.b.dense_mul_acc(I * omega.conj() * PI, x, out);
            self.b_dag.dense_mul_acc(I * omega * PI, x, out);
        }
        self.dissipate(x, out);
    }

    fn dissipate(&self, x: &CMatrix, out: &mut CMatrix) {
        for l in &self.jumps {
            l.sandwich_acc(ONE, x, out);
        }
        if let Some(f) = &self.dephasing {
            for ((o, &fx), &xx) in out.as_mut_slice().iter_mut().zip(f.as_slice()).zip(x.as_slice()) {
                *o += fx * xx;
            }
        }
    }
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagateOptions {
    pub dt: f64,
    pub stride: f64,
    /// Keep a full density-matrix snapshot every `stride` when true.
    pub keep_snapshots: bool,
    /// Number of evenly spaced positivity probes.
    pub positivity_probes: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, stride: DEFAULT_STRIDE, keep_snapshots: false, positivity_probes: 10 }
    }
}

/// Time series of the output field and populations.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputRecord {
    pub times: Vec<f64>,
    /// √κ⟨a⟩ in the dressed-resonator frame (ns^−1/2).
    pub a_out_mean: Vec<C64>,
    /// κ⟨a†a⟩ (1/ns).
    pub power: Vec<f64>,
    /// `transmon_populations[t][k]`.
    pub transmon_populations: Vec<Vec<f64>>,
    /// `fock_populations[t][n]`.
    pub fock_populations: Vec<Vec<f64>>,
    /// P(g0), P(e0), P(f0), P(g1).
    pub level_populations: Vec<[f64; 4]>,
    /// P(f0) at the end of the record.
    pub residual_f0: f64,
    /// Frequency (GHz) at which the cavity's direct response to the drive
    /// appears in `a_out_mean`.
    pub drive_tone: f64,
    pub max_trace_drift: f64,
    pub min_probe_eigenvalue: f64,
}

impl OutputRecord {
    pub fn stride(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    /// ∫power dt (trapezoid).
    pub fn emitted_quanta(&self) -> f64 {
        trapezoid(&self.power, self.stride())
    }

    /// ⟨b†b + a†a⟩ at each recorded time.
    pub fn excitations(&self) -> Vec<f64> {
        self.transmon_populations
            .iter()
            .zip(&self.fock_populations)
            .map(|(q, r)| {
                q.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>()
                    + r.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>()
            })
            .collect()
    }
}

pub(crate) fn trapezoid(y: &[f64], dx: f64) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let inner: f64 = y[1..y.len() - 1].iter().sum();
    (inner + 0.5 * (y[0] + y[y.len() - 1])) * dx
}

/// Result of [`propagate`].
#[derive(Debug, Clone)]
pub struct Propagation {
    pub snapshots: Vec<(f64, State)>,
    pub final_state: State,
    pub record: OutputRecord,
}

struct Recorder<'m> {
    model: &'m LindbladModel,
    record: OutputRecord,
    snapshots: Vec<(f64, State)>,
    keep: bool,
}

impl Recorder<'_> {
    fn push(&mut self, t: f64, rho: &CMatrix) -> Result<()> {
        let m = self.model;
        let b = m.basis;
        let tr = rho.trace().re;
        let drift = (tr - 1.0).abs();
        self.record.max_trace_drift = self.record.max_trace_drift.max(drift);
        if drift > TRACE_TOLERANCE || !rho.is_finite() {
            return Err(Error::StepFailure { time: t, reason: "trace drift beyond tolerance" });
        }
        let mut a_mean = ZERO;
        for &(i, j, v) in &m.a.entries {
            a_mean += v * rho[(j, i)];
        }
        let mut qp = vec![0.0; b.n_transmon];
        let mut fp = vec![0.0; b.n_resonator];
        let mut n_photon = 0.0;
        for idx in 0..b.dim() {
            let (q, n) = b.levels(idx);
            let p = rho[(idx, idx)].re;
            if !(POSITIVITY_TOLERANCE..=1.0 - POSITIVITY_TOLERANCE).contains(&p) {
                return Err(Error::StepFailure { time: t, reason: "population outside [0, 1]" });
            }
            qp[q] += p;
            fp[n] += p;
            n_photon += n as f64 * p;
        }
        let rot = C64::from_polar(1.0, m.cavity_frequency * t);
        self.record.times.push(t);
        self.record.a_out_mean.push(a_mean * rot * m.kappa.sqrt());
        self.record.power.push(m.kappa * n_photon);
        self.record.level_populations.push([
            rho[(b.index(0, 0), b.index(0, 0))].re,
            rho[(b.index(1, 0), b.index(1, 0))].re,
            rho[(b.index(2, 0), b.index(2, 0))].re,
            rho[(b.index(0, 1), b.index(0, 1))].re,
        ]);
        self.record.transmon_populations.push(qp);
        self.record.fock_populations.push(fp);
        if self.keep {
            self.snapshots.push((t, State::new_unchecked(b, rho.clone())));
        }
        Ok(())
    }
}

/// Matched-mode accumulator integrated alongside ρ.
struct ModeTracker<'a> {
    /// Mode function sampled on `t0 + k·dt`.
    psi: &'a [C64],
    t0: f64,
    dt: f64,
    /// Cavity frequency used to carry ψ into the integration frame.
    omega_c: f64,
    y: CMatrix,
    integral: C64,
}

impl ModeTracker<'_> {
    /// χ(t) = ψ(t) e^{−iω_c t}, interpolating only the slowly varying ψ.
    fn chi_at(&self, t: f64) -> C64 {
        let x = (t - self.t0) / self.dt;
        if x < 0.0 || self.psi.is_empty() {
            return ZERO;
        }
        let k = x.floor() as usize;
        let psi = if k + 1 >= self.psi.len() {
            if k < self.psi.len() && x - (k as f64) < 1e-9 {
                self.psi[k]
            } else {
                return ZERO;
            }
        } else {
            let w = x - k as f64;
            self.psi[k] * (1.0 - w) + self.psi[k + 1] * w
        };
        psi * C64::from_polar(1.0, -self.omega_c * t)
    }
}

/// Fixed-step RK4 integration of the master equation from `t_start` to `t_end`.
pub fn propagate(
    model: &LindbladModel,
    rho0: &State,
    t_start: f64,
    t_end: f64,
    opts: &PropagateOptions,
) -> Result<Propagation> {
    integrate(model, rho0, t_start, t_end, opts, None).map(|(p, _)| p)
}

fn integrate(
    model: &LindbladModel,
    rho0: &State,
    t_start: f64,
    t_end: f64,
    opts: &PropagateOptions,
    mut tracker: Option<ModeTracker<'_>>,
) -> Result<(Propagation, Option<C64>)> {
    if rho0.basis != model.basis {
        return Err(Error::DimensionMismatch { expected: model.basis.dim(), found: rho0.basis.dim() });
    }
    if !(opts.dt > 0.0) || !(opts.stride > 0.0) || !(t_end >= t_start) {
        return Err(Error::InvalidParameter { field: "dt/stride/t_end", reason: "invalid integration window".into() });
    }
    let n = model.basis.dim();
    let steps_per_record = ((opts.stride / opts.dt).round() as usize).max(1);
    let h = opts.stride / steps_per_record as f64;
    let n_records = ((t_end - t_start) / opts.stride).round() as usize;
    let probe_every = if opts.positivity_probes > 0 {
        (n_records / opts.positivity_probes).max(1)
    } else {
        usize::MAX
    };

    let mut rec = Recorder {
        model,
        record: OutputRecord {
            times: Vec::with_capacity(n_records + 1),
            a_out_mean: Vec::with_capacity(n_records + 1),
            power: Vec::with_capacity(n_records + 1),
            transmon_populations: Vec::with_capacity(n_records + 1),
            fock_populations: Vec::with_capacity(n_records + 1),
            level_populations: Vec::with_capacity(n_records + 1),
            residual_f0: 0.0,
            drive_tone: model.cavity_frequency / (2.0 * PI),
            max_trace_drift: 0.0,
            min_probe_eigenvalue: f64::INFINITY,
        },
        snapshots: Vec::new(),
        keep: opts.keep_snapshots,
    };

    let mut rho = rho0.rho.clone();
    let mut scratch = CMatrix::zeros(n);
    let mut k = [CMatrix::zeros(n), CMatrix::zeros(n), CMatrix::zeros(n), CMatrix::zeros(n)];
    let mut stage = CMatrix::zeros(n);
    // buffers for the mode tracker
    let mut ky = [CMatrix::zeros(n), CMatrix::zeros(n), CMatrix::zeros(n), CMatrix::zeros(n)];
    let mut ystage = CMatrix::zeros(n);
    let mut kint = [ZERO; 4];
    let a_dag = model.a.to_dense().dagger();
    let a_dense = model.a.to_dense();

    rec.push(t_start, &rho)?;
    let probe = |rho: &CMatrix, t: f64, rec: &mut Recorder| -> Result<()> {
        let lam = min_eigenvalue(rho);
        rec.record.min_probe_eigenvalue = rec.record.min_probe_eigenvalue.min(lam);
        if lam < POSITIVITY_TOLERANCE {
            return Err(Error::StepFailure { time: t, reason: "density matrix lost positivity" });
        }
        Ok(())
    };
    probe(&rho, t_start, &mut rec)?;

    for r in 0..n_records {
        for s in 0..steps_per_record {
            let t = t_start + (r * steps_per_record + s) as f64 * h;
            let times = [t, t + 0.5 * h, t + 0.5 * h, t + h];
            let weights = [0.0, 0.5 * h, 0.5 * h, h];
            for st in 0..4 {
                let omega = model.envelope.value_at(times[st]);
                stage.as_mut_slice().copy_from_slice(rho.as_slice());
                if st > 0 {
                    stage.axpy(C64::new(weights[st], 0.0), &k[st - 1]);
                }
                let (head, tail) = k.split_at_mut(st);
                let _ = head;
                model.rhs_hermitian(omega, &stage, &mut scratch, &mut tail[0]);
                if let Some(tr) = tracker.as_mut() {
                    ystage.as_mut_slice().copy_from_slice(tr.y.as_slice());
                    if st > 0 {
                        ystage.axpy(C64::new(weights[st], 0.0), &ky[st - 1]);
                    }
                    let (_, ytail) = ky.split_at_mut(st);
                    model.rhs_general(omega, &ystage, &mut ytail[0]);
                    // source: χ(t) ρ(t) a†
                    let chi = tr.chi_at(times[st]);
                    if chi != ZERO {
                        let src = stage.matmul(&a_dag);
                        ytail[0].axpy(chi, &src);
                    }
                    // d/dt ∫ χ* Tr[a Y]
                    kint[st] = tr.chi_at(times[st]).conj() * a_dense.trace_product(&ystage);
                }
            }
            for st in 0..4 {
                let w = if st == 0 || st == 3 { h / 6.0 } else { h / 3.0 };
                rho.axpy(C64::new(w, 0.0), &k[st]);
                if let Some(tr) = tracker.as_mut() {
                    tr.y.axpy(C64::new(w, 0.0), &ky[st]);
                    tr.integral += kint[st] * w;
                }
            }
            rho.hermitize();
        }
        let t = t_start + (r + 1) as f64 * opts.stride;
        rec.push(t, &rho)?;
        if (r + 1) % probe_every == 0 {
            probe(&rho, t, &mut rec)?;
        }
    }

    let b = model.basis;
    rec.record.residual_f0 = rho[(b.index(2, 0), b.index(2, 0))].re;
    let final_state = State::new_unchecked(b, rho);
    let acc = tracker.map(|t| t.integral);
    Ok((Propagation { snapshots: rec.snapshots, final_state, record: rec.record }, acc))
}

/// Initial state for photon emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InitialState {
    /// |f0⟩: single-photon (Fock) protocol.
    F0,
    /// (|g0⟩ + |f0⟩)/√2: superposition protocol.
    Superposition,
}

impl InitialState {
    pub fn state(&self, basis: CompositeBasis) -> State {
        match self {
            InitialState::F0 => State::basis_state(basis, 2, 0),
            InitialState::Superposition => {
                let mut psi = vec![ZERO; basis.dim()];
                psi[basis.index(0, 0)] = ONE;
                psi[basis.index(2, 0)] = ONE;
                State::pure(basis, &psi).expect("non-zero vector")
            }
        }
    }
}

/// Settings for [`emit_photon`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionOptions {
    pub dt: f64,
    pub stride: f64,
    /// Drive detuning from ω_d (GHz); `None` uses the zero-amplitude dispersive offset.
    pub drive_detuning: Option<f64>,
    pub decoherence: Decoherence,
    /// Record length after the end of the envelope, in units of 1/κ.
    pub tail_in_lifetimes: f64,
}

impl Default for EmissionOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            stride: DEFAULT_STRIDE,
            drive_detuning: None,
            decoherence: Decoherence::ALL,
            tail_in_lifetimes: 8.0,
        }
    }
}

impl EmissionOptions {
    pub fn propagate_options(&self) -> PropagateOptions {
        PropagateOptions { dt: self.dt, stride: self.stride, ..PropagateOptions::default() }
    }
}

/// Emission window [0, T_envelope + tail/κ] for the given options.
pub fn emission_window(params: &DeviceParams, envelope: &Envelope, opts: &EmissionOptions) -> (f64, f64) {
    let kappa = 2.0 * PI * params.kappa;
    let t_end = envelope.t_end() + opts.tail_in_lifetimes / kappa;
    // end on the record grid
    let t_end = (t_end / opts.stride).ceil() * opts.stride;
    (0.0f64.min(envelope.t0), t_end)
}

/// Builds the model and integrates from the requested initial state.
pub fn emit_photon(
    params: &DeviceParams,
    envelope: &Envelope,
    initial: InitialState,
    opts: &EmissionOptions,
) -> Result<OutputRecord> {
    let detuning = match opts.drive_detuning {
        Some(d) => d,
        None => static_detuning(params)?,
    };
    let model = LindbladModel::new(params, envelope.clone(), detuning, opts.decoherence)?;
    let (t0, t1) = emission_window(params, envelope, opts);
    let rho0 = initial.state(model.basis());
    Ok(propagate(&model, &rho0, t0, t1, &opts.propagate_options())?.record)
}

/// Statistics of the matched temporal mode A = ∫ψ*(t) a_out(t) dt.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModeStatistics {
    /// ⟨A†A⟩.
    pub photon_number: f64,
    /// ⟨A⟩.
    pub amplitude: C64,
}

/// Runs the emission while accumulating ⟨A†A⟩ for the mode `psi` (sampled on
/// the record grid of a previous run with the same options) by quantum regression.
pub fn emit_into_mode(
    params: &DeviceParams,
    envelope: &Envelope,
    initial: InitialState,
    opts: &EmissionOptions,
    psi_times: &[f64],
    psi: &[C64],
) -> Result<(OutputRecord, ModeStatistics)> {
    if psi.len() != psi_times.len() || psi.len() < 2 {
        return Err(Error::EmptyRecord("mode function"));
    }
    let detuning = match opts.drive_detuning {
        Some(d) => d,
        None => static_detuning(params)?,
    };
    let model = LindbladModel::new(params, envelope.clone(), detuning, opts.decoherence)?;
    let (t0, t1) = emission_window(params, envelope, opts);
    let dt_psi = psi_times[1] - psi_times[0];
    let tracker = ModeTracker {
        psi,
        t0: psi_times[0],
        dt: dt_psi,
        omega_c: model.cavity_frequency(),
        y: CMatrix::zeros(model.basis().dim()),
        integral: ZERO,
    };
    let rho0 = initial.state(model.basis());
    let (prop, acc) = integrate(&model, &rho0, t0, t1, &opts.propagate_options(), Some(tracker))?;
    let photon_number = 2.0 * model.kappa() * acc.unwrap_or(ZERO).re;
    let record = prop.record;
    let amplitude = crate::analysis::overlap(psi_times, psi, &record.times, &record.a_out_mean)?;
    Ok((record, ModeStatistics { photon_number, amplitude }))
}

/// Transmon reduced state at the end of a propagation.
pub fn final_transmon_state(p: &Propagation) -> CMatrix {
    partial_trace_transmon(&p.final_state)
}
