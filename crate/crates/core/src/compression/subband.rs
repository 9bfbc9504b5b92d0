//! Harmonic subband analysis and synthesis by complex demodulation,
//! windowed-sinc low-pass filtering and decimation.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::WaveformSeries;

/// Linear-phase low-pass: Hamming-windowed sinc with unit DC gain.
pub fn lowpass_taps(cutoff: f64, sample_rate: f64, taps: usize) -> Result<Vec<f64>> {
    if taps == 0 || !(cutoff > 0.0 && cutoff < sample_rate / 2.0) {
        return Err(Error::Config(format!(
            "low-pass with {taps} taps and cutoff {cutoff} Hz at {sample_rate} Hz"
        )));
    }
    let fc = cutoff / sample_rate;
    let mid = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let k = i as f64 - mid;
            let sinc = if k == 0.0 { 2.0 * fc } else { (TAU * fc * k).sin() / (PI * k) };
            let window = if taps == 1 {
                1.0
            } else {
                0.54 + 0.46 * (TAU * k / (taps - 1) as f64).cos()
            };
            sinc * window
        })
        .collect();
    let dc: f64 = h.iter().sum();
    for v in &mut h {
        *v /= dc;
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandPlan {
    pub f0: f64,
    /// Fundamental plus `m - 1` harmonics.
    pub m: usize,
    /// Two-sided passband width per subband, Hz.
    #[serde(rename = "W")]
    pub w: f64,
    pub fs: f64,
    pub decimation: usize,
    pub filter_taps: usize,
}

impl SubbandPlan {
    /// Plan for `m` harmonic bands at `fs` with `W = 2 Hz`: about 50 Hz of
    /// filter transition and a post-decimation rate near 62.5 Hz.
    pub fn for_rate(f0: f64, fs: f64, m: usize) -> Self {
        let taps = (3.3 * fs / 50.0).round() as usize | 1;
        let decimation = ((fs / 62.5).floor() as usize).max(1);
        Self { f0, m, w: 2.0, fs, decimation, filter_taps: taps }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f0 > 0.0 && self.w > 0.0 && self.fs > 0.0) || self.m == 0 {
            return Err(Error::Config(format!("invalid subband plan {self:?}")));
        }
        if self.m as f64 * self.f0 + self.w / 2.0 >= self.fs / 2.0 {
            return Err(Error::Config(format!(
                "sampling rate {} too low for {} harmonics of {} Hz",
                self.fs, self.m, self.f0
            )));
        }
        let max_dec = (self.fs / (2.0 * self.w)).floor() as usize;
        if self.decimation == 0 || self.decimation > max_dec {
            return Err(Error::Config(format!(
                "decimation {} outside 1..={max_dec}",
                self.decimation
            )));
        }
        if self.filter_taps == 0 || self.filter_taps.is_multiple_of(2) {
            return Err(Error::Config("filter_taps must be odd".into()));
        }
        Ok(())
    }

    pub fn taps(&self) -> Result<Vec<f64>> {
        lowpass_taps(self.w / 2.0, self.fs, self.filter_taps)
    }

    /// Filter group delay in input samples (compensated on both sides).
    pub fn group_delay(&self) -> usize {
        (self.filter_taps - 1) / 2
    }

    pub fn baseband_rate(&self) -> f64 {
        self.fs / self.decimation as f64
    }

    pub fn baseband_len(&self, n: usize) -> usize {
        n.div_ceil(self.decimation)
    }

    /// Waveform-domain error variance per unit of white error variance in one
    /// real baseband component (I or Q).
    pub fn component_gain(&self) -> Result<f64> {
        let energy: f64 = self.taps()?.iter().map(|h| h * h).sum();
        Ok(2.0 * self.decimation as f64 * energy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSignal {
    pub baseband: Vec<Complex64>,
    pub center_freq: f64,
    pub rate: f64,
    /// Input samples of filter delay removed by centring.
    pub group_delay: usize,
}

fn carrier(k: usize, plan: &SubbandPlan, t: usize) -> Complex64 {
    let cycles = (k as f64 * plan.f0 * t as f64 / plan.fs).fract();
    Complex64::from_polar(1.0, TAU * cycles)
}

pub fn subband_decompose(x: &WaveformSeries, plan: &SubbandPlan) -> Result<Vec<SubbandSignal>> {
    plan.validate()?;
    if (x.sample_rate() - plan.fs).abs() > 1e-9 * plan.fs {
        return Err(Error::Config(format!(
            "plan rate {} does not match series rate {}",
            plan.fs,
            x.sample_rate()
        )));
    }
    let h = plan.taps()?;
    let c = plan.group_delay() as isize;
    let samples = x.samples();
    let n = samples.len() as isize;
    let len = plan.baseband_len(samples.len());
    Ok((1..=plan.m)
        .map(|k| {
            let baseband = (0..len)
                .map(|q| {
                    let centre = (q * plan.decimation) as isize + c;
                    let lo = (centre - n + 1).max(0) as usize;
                    let hi = (centre as usize).min(h.len() - 1);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, hj) in h.iter().enumerate().take(hi + 1).skip(lo) {
                        let s = (centre - j as isize) as usize;
                        acc += carrier(k, plan, s).conj() * (hj * samples[s]);
                    }
                    acc
                })
                .collect();
            SubbandSignal {
                baseband,
                center_freq: k as f64 * plan.f0,
                rate: plan.baseband_rate(),
                group_delay: plan.group_delay(),
            }
        })
        .collect())
}

pub fn subband_reconstruct(
    subbands: &[SubbandSignal],
    plan: &SubbandPlan,
    length: usize,
    t0: f64,
) -> Result<WaveformSeries> {
    plan.validate()?;
    if subbands.len() != plan.m {
        return Err(Error::Argument(format!(
            "{} subbands for a plan with m = {}",
            subbands.len(),
            plan.m
        )));
    }
    let expect = plan.baseband_len(length);
    for (k, sb) in subbands.iter().enumerate() {
        if sb.baseband.len() != expect
            || (sb.center_freq - (k + 1) as f64 * plan.f0).abs() > 1e-9
            || (sb.rate - plan.baseband_rate()).abs() > 1e-9
        {
            return Err(Error::Argument(format!("subband {} does not match the plan", k + 1)));
        }
    }
    let h = plan.taps()?;
    let d = plan.decimation;
    let c = plan.group_delay();
    let gain = d as f64;
    let mut out = vec![0.0; length];
    for (t, o) in out.iter_mut().enumerate() {
        // Baseband samples q with 0 <= c + t - q d < taps.
        let q_hi = (c + t) / d;
        let q_lo = (c + t + 1).saturating_sub(h.len()).div_ceil(d);
        for (k, sb) in subbands.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for q in q_lo..=q_hi.min(expect - 1) {
                acc += sb.baseband[q] * h[c + t - q * d];
            }
            *o += 2.0 * gain * (acc * carrier(k + 1, plan, t)).re;
        }
    }
    WaveformSeries::new(out, plan.fs, t0)
}
