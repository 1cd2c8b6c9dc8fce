//! CSV series, JSON artifacts and run summaries.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mwphoton_core::analysis::{ModeFunction, Spectrum};
use mwphoton_core::dynamics::OutputRecord;
use mwphoton_core::pulses::Envelope;
use mwphoton_core::tomography::Histogram;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Version of the JSON summary layout.
pub const SCHEMA_VERSION: u32 = 1;

/// One scenario-internal check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Machine-readable outcome of a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub command: String,
    pub seed: Option<u64>,
    pub metrics: BTreeMap<String, f64>,
    pub assertions: Vec<Assertion>,
}

impl Summary {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        Self { schema_version: SCHEMA_VERSION, command: command.to_string(), seed, metrics: BTreeMap::new(), assertions: Vec::new() }
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.to_string(), passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

/// Output directory for one run.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Writes `header` then `rows` as CSV.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(path)
    }
}

fn f(x: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{x:?}")
}

pub fn record_rows(rec: &OutputRecord) -> impl Iterator<Item = Vec<String>> + '_ {
    rec.times.iter().enumerate().map(move |(k, t)| {
        let a = rec.a_out_mean[k];
        let l = rec.level_populations[k];
        vec![f(*t), f(a.re), f(a.im), f(rec.power[k]), f(l[0]), f(l[1]), f(l[2]), f(l[3])]
    })
}

pub const RECORD_HEADER: [&str; 8] = ["t_ns", "re_aout", "im_aout", "power", "P_g0", "P_e0", "P_f0", "P_g1"];

pub fn write_record(dir: &RunDir, name: &str, rec: &OutputRecord) -> Result<PathBuf> {
    dir.write_csv(name, &RECORD_HEADER, record_rows(rec))
}

pub const ENVELOPE_HEADER: [&str; 3] = ["t_ns", "re_Omega_GHz", "im_Omega_GHz"];

pub fn write_envelope(dir: &RunDir, name: &str, env: &Envelope) -> Result<PathBuf> {
    dir.write_csv(
        name,
        &ENVELOPE_HEADER,
        env.samples.iter().enumerate().map(|(k, s)| vec![f(env.time(k)), f(s.re), f(s.im)]),
    )
}

/// Reads an envelope CSV; the sample spacing is recovered so that every
/// time stamp is reproduced exactly when possible.
pub fn read_envelope(path: &Path) -> Result<Envelope> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ENVELOPE_HEADER {
        bail!("{}: expected columns {:?}", path.display(), ENVELOPE_HEADER);
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse::<f64>()
                .with_context(|| format!("{}: row {} column {}", path.display(), line + 2, ENVELOPE_HEADER[i]))
        };
        times.push(num(0)?);
        samples.push(C64::new(num(1)?, num(2)?));
    }
    if times.len() < 2 {
        bail!("{}: need at least two samples", path.display());
    }
    let t0 = times[0];
    let n = times.len();
    let reproduces = |dt: f64| times.iter().enumerate().all(|(k, t)| (t0 + k as f64 * dt).to_bits() == t.to_bits());
    let base = [times[1] - t0, (times[n - 1] - t0) / (n - 1) as f64];
    let mut dt = base[1];
    'search: for b in base {
        let mut c = b;
        for _ in 0..4 {
            if reproduces(c) {
                dt = c;
                break 'search;
            }
            c = f64::from_bits(c.to_bits() + 1);
        }
        let mut c = b;
        for _ in 0..4 {
            c = f64::from_bits(c.to_bits() - 1);
            if reproduces(c) {
                dt = c;
                break 'search;
            }
        }
    }
    Ok(Envelope::new(t0, dt, samples)?)
}

pub fn write_mode(dir: &RunDir, name: &str, mode: &ModeFunction) -> Result<PathBuf> {
    dir.write_csv(
        name,
        &["t_ns", "re_psi", "im_psi"],
        mode.times.iter().zip(&mode.psi).map(|(t, p)| vec![f(*t), f(p.re), f(p.im)]),
    )
}

pub fn write_spectrum(dir: &RunDir, name: &str, s: &Spectrum) -> Result<PathBuf> {
    dir.write_csv(
        name,
        &["frequency_GHz", "magnitude"],
        s.frequencies.iter().zip(&s.magnitude).map(|(x, m)| vec![f(*x), f(*m)]),
    )
}

/// Non-empty histogram cells as (re, im, count).
pub fn write_histogram(dir: &RunDir, name: &str, h: &Histogram) -> Result<PathBuf> {
    dir.write_csv(
        name,
        &["re", "im", "count"],
        h.counts.iter().enumerate().filter(|(_, c)| **c > 0).map(|(k, c)| {
            let v = h.grid.value(k);
            vec![f(v.re), f(v.im), c.to_string()]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path()).unwrap();
        let env = mwphoton_core::pulses::synthesize_sin2(0.7, 200.0, 0.01).unwrap().with_phase(0.3).delayed(12.345);
        let p = write_envelope(&run, "env.csv", &env).unwrap();
        let back = read_envelope(&p).unwrap();
        assert_eq!(back.samples.len(), env.samples.len());
        for (k, (a, b)) in env.samples.iter().zip(&back.samples).enumerate() {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
            assert_eq!(env.time(k).to_bits(), back.time(k).to_bits());
        }
    }
}
