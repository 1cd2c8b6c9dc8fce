//! Run configuration: one TOML file with a `[device]` table plus optional
//! per-experiment sections. Frequencies are ordinary GHz, times ns.

use std::path::{Path, PathBuf};

use mwphoton_core::calibration::{ResetConfig, SweepGrid};
use mwphoton_core::device::{static_detuning, DeviceParams};
use mwphoton_core::dynamics::{Decoherence, EmissionOptions, InitialState, DEFAULT_DT, DEFAULT_STRIDE};
use mwphoton_core::tomography::TomographySettings;
use serde::{Deserialize, Serialize};

/// A configuration problem tied to one field.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub device: DeviceParams,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub stark: StarkConfig,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub frequency: FrequencyConfig,
    #[serde(default)]
    pub tomography: TomographyConfig,
    #[serde(default)]
    pub reset: ResetSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// RK4 step (ns).
    pub dt: f64,
    /// Record stride (ns).
    pub stride: f64,
    /// Record length after the drive, in units of 1/κ.
    pub tail_in_lifetimes: f64,
    /// Extra drive detuning (GHz) on top of the dispersive offset.
    pub drive_offset: f64,
    pub cavity_decay: bool,
    pub relaxation: bool,
    pub dephasing: bool,
    /// Largest permitted drive amplitude (GHz).
    pub awg_ceiling: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            stride: DEFAULT_STRIDE,
            tail_in_lifetimes: 8.0,
            drive_offset: 0.0,
            cavity_decay: true,
            relaxation: true,
            dephasing: true,
            awg_ceiling: 1.0,
        }
    }
}

impl SimulationConfig {
    pub fn decoherence(&self) -> Decoherence {
        Decoherence { cavity_decay: self.cavity_decay, relaxation: self.relaxation, dephasing: self.dephasing }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StarkSource {
    /// Dressed-state diagonalization.
    Spectrum,
    /// Simulated square-pulse scans.
    Scan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StarkConfig {
    pub source: StarkSource,
    /// Calibration amplitudes (GHz); zero is implied.
    pub amplitudes: Vec<f64>,
    /// Square pulse plateau (ns).
    pub pulse_length: f64,
    /// Pulse edge (ns).
    pub edge: f64,
    /// Drive amplitude (GHz) at AWG full scale, for reporting.
    pub awg_full_scale: f64,
    /// Load a previously written `stark_map.json` instead of calibrating.
    pub map_file: Option<PathBuf>,
}

impl Default for StarkConfig {
    fn default() -> Self {
        Self {
            source: StarkSource::Spectrum,
            amplitudes: (1..=10).map(|k| 0.1 * k as f64).collect(),
            pulse_length: 100.0,
            edge: 10.0,
            awg_full_scale: 1.0,
            map_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    /// sin² length T (ns).
    pub duration: f64,
    /// Peak amplitude Ω0 (GHz); omitted means calibrate by symmetry.
    pub amplitude: Option<f64>,
    pub initial: InitialState,
    pub compensate: bool,
    /// Amplitude bracket (GHz) for the symmetry calibration.
    pub calibration_range: [f64; 2],
    pub calibration_tol: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            duration: 500.0,
            amplitude: None,
            initial: InitialState::F0,
            compensate: true,
            calibration_range: [0.4, 1.0],
            calibration_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub durations: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let g = SweepGrid::default();
        Self { durations: g.durations, amplitudes: g.amplitudes }
    }
}

impl SweepConfig {
    pub fn grid(&self) -> SweepGrid {
        SweepGrid { durations: self.durations.clone(), amplitudes: self.amplitudes.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrequencyConfig {
    /// Drive offsets (GHz) for the spectral-peak method.
    pub offsets: Vec<f64>,
    /// Half width (GHz) of the symmetry-maximization bracket.
    pub symmetry_half_range: f64,
    pub symmetry_tol: f64,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        Self { offsets: vec![-0.002, -0.001, 0.0, 0.001, 0.002], symmetry_half_range: 0.003, symmetry_tol: 2e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographyConfig {
    pub n_thermal: f64,
    pub shots: u64,
    pub seed: u64,
    pub n_max: usize,
    pub max_order: usize,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        let d = TomographySettings::default();
        Self { n_thermal: d.n_thermal, shots: d.shots, seed: d.seed, n_max: d.n_max, max_order: d.max_order }
    }
}

impl TomographyConfig {
    pub fn settings(&self) -> TomographySettings {
        TomographySettings {
            n_thermal: self.n_thermal,
            shots: self.shots,
            seed: self.seed,
            n_max: self.n_max,
            max_order: self.max_order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResetSection {
    pub thermal_p_e: f64,
    pub rounds: usize,
    pub transfer_duration: f64,
    pub transfer_amplitude: f64,
    pub wait_lifetimes: f64,
    /// Tune the e→f π pulse by simulated Rabi calibration instead of the area theorem.
    pub calibrate_prep: bool,
}

impl Default for ResetSection {
    fn default() -> Self {
        let r = ResetConfig::default();
        Self {
            thermal_p_e: 0.13,
            rounds: r.rounds,
            transfer_duration: r.transfer_duration,
            transfer_amplitude: r.transfer_amplitude,
            wait_lifetimes: r.wait_lifetimes,
            calibrate_prep: true,
        }
    }
}

impl ResetSection {
    pub fn reset_config(&self) -> ResetConfig {
        ResetConfig {
            rounds: self.rounds,
            transfer_duration: self.transfer_duration,
            transfer_amplitude: self.transfer_amplitude,
            wait_lifetimes: self.wait_lifetimes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub peaks: usize,
    pub amplitude: f64,
    pub duration: f64,
    pub spacing: f64,
    /// Reference phase per peak (rad); empty means all zero.
    pub phases: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { peaks: 6, amplitude: 0.35, duration: 60.0, spacing: 170.0, phases: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl ScenarioConfig {
    /// Measured device with every section at its default.
    pub fn measured() -> Self {
        Self {
            device: DeviceParams::measured(),
            simulation: SimulationConfig::default(),
            stark: StarkConfig::default(),
            pulse: PulseConfig::default(),
            sweep: SweepConfig::default(),
            frequency: FrequencyConfig::default(),
            tomography: TomographyConfig::default(),
            reset: ResetSection::default(),
            train: TrainConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn emission_options(&self) -> mwphoton_core::Result<EmissionOptions> {
        let s = &self.simulation;
        Ok(EmissionOptions {
            dt: s.dt,
            stride: s.stride,
            drive_detuning: Some(static_detuning(&self.device)? + s.drive_offset),
            decoherence: s.decoherence(),
            tail_in_lifetimes: s.tail_in_lifetimes,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.device.validate().map_err(|e| match e {
            mwphoton_core::Error::InvalidParameter { field, reason } => invalid(&format!("device.{field}"), reason),
            other => invalid("device", other.to_string()),
        })?;
        let d = &self.device;
        for (field, v) in [("device.omega_q", d.omega_q), ("device.omega_r", d.omega_r)] {
            if v > 100.0 {
                return Err(invalid(field, "frequencies are in GHz; value looks like MHz"));
            }
        }
        if d.kappa > 1.0 || d.g > 1.0 {
            return Err(invalid("device.kappa", "rates are in GHz; value looks like MHz"));
        }
        for (field, v) in [("device.t1_e", d.t1_e), ("device.t1_f", d.t1_f), ("device.t2_ge", d.t2_ge), ("device.t2_gf", d.t2_gf)] {
            if v < 1.0 {
                return Err(invalid(field, "times are in ns; value looks like µs"));
            }
        }
        let s = &self.simulation;
        if !(s.dt > 0.0 && s.dt <= 0.05) {
            return Err(invalid("simulation.dt", "must lie in (0, 0.05] ns"));
        }
        if !(s.stride >= s.dt) || ((s.stride / s.dt).round() * s.dt - s.stride).abs() > 1e-9 {
            return Err(invalid("simulation.stride", "must be a positive multiple of dt"));
        }
        if !(s.tail_in_lifetimes >= 0.0) {
            return Err(invalid("simulation.tail_in_lifetimes", "must be ≥ 0"));
        }
        if !(s.awg_ceiling > 0.0) {
            return Err(invalid("simulation.awg_ceiling", "must be positive"));
        }
        if !s.drive_offset.is_finite() || s.drive_offset.abs() > 0.1 {
            return Err(invalid("simulation.drive_offset", "must lie within ±0.1 GHz"));
        }
        let st = &self.stark;
        if st.amplitudes.is_empty() || st.amplitudes.iter().any(|a| !(*a > 0.0 && *a <= s.awg_ceiling)) {
            return Err(invalid("stark.amplitudes", "must be non-empty and within (0, awg_ceiling]"));
        }
        if !(st.pulse_length > 0.0) || !(st.edge >= 0.0) || !(st.awg_full_scale > 0.0) {
            return Err(invalid("stark.pulse_length", "pulse_length, awg_full_scale must be positive and edge ≥ 0"));
        }
        let p = &self.pulse;
        if !(20.0..=1000.0).contains(&p.duration) {
            return Err(invalid("pulse.duration", "must lie in [20, 1000] ns"));
        }
        if let Some(a) = p.amplitude {
            if !(a > 0.0 && a <= s.awg_ceiling) {
                return Err(invalid("pulse.amplitude", "must lie in (0, awg_ceiling]"));
            }
        }
        if !(p.calibration_range[0] > 0.0 && p.calibration_range[0] < p.calibration_range[1]) {
            return Err(invalid("pulse.calibration_range", "must be an increasing positive pair"));
        }
        self.sweep.grid().validate().map_err(|e| invalid("sweep", e.to_string()))?;
        if self.frequency.offsets.len() < 2 {
            return Err(invalid("frequency.offsets", "need at least two offsets"));
        }
        let t = &self.tomography;
        if !(t.n_thermal >= 0.0) {
            return Err(invalid("tomography.n_thermal", "must be ≥ 0"));
        }
        if t.shots == 0 {
            return Err(invalid("tomography.shots", "must be ≥ 1"));
        }
        if t.n_max < 2 || t.max_order < 2 {
            return Err(invalid("tomography.n_max", "n_max and max_order must be ≥ 2"));
        }
        let r = &self.reset;
        if !(0.0..=0.5).contains(&r.thermal_p_e) {
            return Err(invalid("reset.thermal_p_e", "must lie in [0, 0.5]"));
        }
        if r.rounds == 0 || !(r.transfer_duration > 0.0) || !(r.wait_lifetimes >= 0.0) {
            return Err(invalid("reset.rounds", "rounds and transfer_duration must be positive"));
        }
        if !(r.transfer_amplitude > 0.0 && r.transfer_amplitude <= s.awg_ceiling) {
            return Err(invalid("reset.transfer_amplitude", "must lie in (0, awg_ceiling]"));
        }
        let tr = &self.train;
        if tr.peaks == 0 || !(tr.duration > 0.0) || !(tr.spacing > 0.0) {
            return Err(invalid("train.peaks", "peaks, duration and spacing must be positive"));
        }
        if !(tr.amplitude > 0.0 && tr.amplitude <= s.awg_ceiling) {
            return Err(invalid("train.amplitude", "must lie in (0, awg_ceiling]"));
        }
        if !tr.phases.is_empty() && tr.phases.len() != tr.peaks {
            return Err(invalid("train.phases", "must list one phase per peak"));
        }
        Ok(())
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    ScenarioConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScenarioConfig::measured().validate().unwrap();
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ScenarioConfig::measured();
        assert_eq!(ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }
}
