//! Per-relay waveform synthesis.
//!
//! Each relay sees `E(t) sin(2 pi f0 t + phi) + harmonics + noise`. The
//! no-fault trace is rendered first and a fault is applied on top as a
//! post-onset correction, so fault and no-fault variants of a run share every
//! random draw.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{rng_from, stream_seed};
use crate::sim::sdg::sample_sdg_trajectory;
use crate::sim::scenario::{FaultSpec, FeederScenario, RelayRole, RelaySpec};
use crate::waveform::WaveformSeries;

const RESYNC: usize = 1024;

/// Unit phasor rotating by a fixed angle per sample, resynchronized with an
/// exact evaluation every `RESYNC` samples.
struct Oscillator {
    cycles_per_sample: f64,
    phase: f64,
    step_sin: f64,
    step_cos: f64,
    index: usize,
    sin: f64,
    cos: f64,
}

impl Oscillator {
    fn new(freq: f64, sample_rate: f64, phase: f64, start: usize) -> Self {
        let cycles_per_sample = freq / sample_rate;
        let step = TAU * cycles_per_sample;
        let mut osc = Self {
            cycles_per_sample,
            phase,
            step_sin: step.sin(),
            step_cos: step.cos(),
            index: start,
            sin: 0.0,
            cos: 1.0,
        };
        osc.sync();
        osc
    }

    fn sync(&mut self) {
        let angle = TAU * (self.cycles_per_sample * self.index as f64).fract() + self.phase;
        (self.sin, self.cos) = angle.sin_cos();
    }

    /// sin of the current sample's angle, then advance.
    #[inline]
    fn next(&mut self) -> f64 {
        let s = self.sin;
        self.index += 1;
        if self.index.is_multiple_of(RESYNC) {
            self.sync();
        } else {
            let (sn, cs) = (self.sin, self.cos);
            self.sin = sn * self.step_cos + cs * self.step_sin;
            self.cos = cs * self.step_cos - sn * self.step_sin;
        }
        s
    }
}

/// One relay's no-fault waveform together with the draws needed to fault it later.
#[derive(Debug, Clone)]
pub struct RelayTrace {
    pub samples: Vec<f64>,
    pub phase: f64,
}

/// SDG contribution before coupling. Negative excursions of the Gaussian
/// path are clipped: a generator does not absorb current.
#[inline]
fn sdg_level(sdg: &[f64], i: usize) -> f64 {
    sdg[i].max(0.0)
}

pub fn draw_sdg(scn: &FeederScenario) -> Result<Vec<f64>> {
    sample_sdg_trajectory(&scn.sdg, scn.n_samples(), stream_seed(scn.seed, "sdg"))
}

/// Renders the relay's waveform with its fault (if any) ignored.
pub fn render_no_fault(scn: &FeederScenario, relay: &RelaySpec, sdg: &[f64]) -> RelayTrace {
    let n = scn.n_samples();
    let mut rng = rng_from(stream_seed(scn.seed, &format!("relay:{}", relay.name)));
    let phase = rng.random::<f64>() * TAU;
    let noise_std = scn.sensor_noise_frac * relay.base_envelope;
    let mut osc = Oscillator::new(scn.fundamental_freq, scn.sample_rate, phase, 0);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let env = relay.base_envelope + relay.sdg_coupling * sdg_level(sdg, i);
        let z: f64 = if noise_std > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
        samples.push(env * osc.next() + noise_std * z);
    }
    RelayTrace { samples, phase }
}

/// Fault envelope and harmonic terms for one relay, precomputed at onset.
pub struct FaultShape<'a> {
    relay: &'a RelaySpec,
    fault: &'a FaultSpec,
    onset_index: usize,
    start_env: f64,
    target_at_onset: f64,
    steady: f64,
    sample_rate: f64,
}

impl<'a> FaultShape<'a> {
    pub fn new(scn: &FeederScenario, relay: &'a RelaySpec, fault: &'a FaultSpec, sdg: &[f64]) -> Self {
        let n = scn.n_samples();
        let onset_index = ((fault.onset * scn.sample_rate).round() as usize).min(n - 1);
        let env = |i: usize| relay.base_envelope + relay.sdg_coupling * sdg_level(sdg, i);
        let cycle = ((scn.sample_rate / scn.fundamental_freq).round() as usize).max(1);
        let lo = onset_index.saturating_sub(cycle);
        let pre_mean = if lo < onset_index {
            (lo..onset_index).map(env).sum::<f64>() / (onset_index - lo) as f64
        } else {
            env(onset_index)
        };
        let steady = fault.envelope_multiplier * pre_mean;
        let mut shape = Self {
            relay,
            fault,
            onset_index,
            start_env: env(onset_index),
            target_at_onset: 0.0,
            steady,
            sample_rate: scn.sample_rate,
        };
        shape.target_at_onset = shape.target(sdg, onset_index);
        shape
    }

    pub fn onset_index(&self) -> usize {
        self.onset_index
    }

    /// Envelope the fault drives toward. A blinded primary sees the SDG
    /// infeed subtract from the fault current instead of add to it.
    fn target(&self, sdg: &[f64], i: usize) -> f64 {
        match self.relay.role {
            RelayRole::BlindedPrimary => {
                self.fault.envelope_multiplier * self.relay.base_envelope
                    - self.relay.sdg_coupling * sdg_level(sdg, i)
            }
            _ => self.steady,
        }
    }

    pub fn envelope(&self, sdg: &[f64], i: usize) -> f64 {
        let dt = (i - self.onset_index) as f64 / self.sample_rate;
        let decay = (-dt / self.fault.transient_tau).exp();
        self.target(sdg, i) + (self.start_env - self.target_at_onset) * decay
    }

    /// Adds the fault's effect to `out`, which holds samples
    /// `offset..offset + out.len()` of the relay's no-fault trace.
    pub fn apply(&self, scn: &FeederScenario, sdg: &[f64], phase: f64, offset: usize, out: &mut [f64]) {
        let end = offset + out.len();
        let start = self.onset_index.max(offset);
        if start >= end {
            return;
        }
        let mut fund = Oscillator::new(scn.fundamental_freq, scn.sample_rate, phase, start);
        let mut harmonics: Vec<(f64, Oscillator)> = self
            .fault
            .harmonic_injection
            .iter()
            .map(|h| {
                let k = f64::from(h.order);
                (
                    h.amplitude,
                    Oscillator::new(k * scn.fundamental_freq, scn.sample_rate, k * phase, start),
                )
            })
            .collect();
        for i in start..end {
            let nominal = self.relay.base_envelope + self.relay.sdg_coupling * sdg_level(sdg, i);
            let mut delta = (self.envelope(sdg, i) - nominal) * fund.next();
            for (amp, osc) in &mut harmonics {
                delta += *amp * osc.next();
            }
            out[i - offset] += delta;
        }
    }
}

/// Simulates every relay of the scenario.
pub fn simulate_scenario(scn: &FeederScenario) -> Result<BTreeMap<String, WaveformSeries>> {
    scn.validate()?;
    let sdg = draw_sdg(scn)?;
    let mut out = BTreeMap::new();
    for relay in &scn.relays {
        let mut trace = render_no_fault(scn, relay, &sdg);
        if let Some(fault) = &relay.fault {
            FaultShape::new(scn, relay, fault, &sdg).apply(scn, &sdg, trace.phase, 0, &mut trace.samples);
        }
        out.insert(
            relay.name.clone(),
            WaveformSeries::new(trace.samples, scn.sample_rate, 0.0)?,
        );
    }
    Ok(out)
}

/// Writes `<dir>/<relay>.csv` for each simulated relay.
pub fn write_scenario_csv(dir: &Path, waves: &BTreeMap<String, WaveformSeries>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, w) in waves {
        w.write_csv(&dir.join(format!("{name}.csv")))?;
    }
    Ok(())
}
