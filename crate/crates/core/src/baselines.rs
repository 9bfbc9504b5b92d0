//! Overcurrent relay baselines: fixed-pickup inverse-time relay and the
//! adaptive (AOCR) variant, with FPR-targeted calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nst::Decision;
use crate::waveform::WaveformSeries;

/// `t = TD * (A / (M^p - 1) + B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseTimeCurve {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub p: f64,
}

impl InverseTimeCurve {
    /// Moderately inverse constants.
    pub const MODERATELY_INVERSE: Self = Self { a: 0.0515, b: 0.114, p: 0.02 };

    fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b >= 0.0 && self.p > 0.0 && self.p <= 2.0) {
            return Err(Error::Config(format!("invalid inverse-time curve {self:?}")));
        }
        Ok(())
    }
}

impl Default for InverseTimeCurve {
    fn default() -> Self {
        Self::MODERATELY_INVERSE
    }
}

pub const DEFAULT_TIME_DIAL: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvercurrentConfig {
    pub pickup_current: f64,
    pub time_dial: f64,
    pub curve: InverseTimeCurve,
    pub block_len: usize,
}

impl OvercurrentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pickup_current > 0.0 && self.time_dial > 0.0 && self.block_len >= 2) {
            return Err(Error::Config(format!("invalid overcurrent config {self:?}")));
        }
        self.curve.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AocrConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Trailing averaging window in seconds.
    pub avg_window: f64,
    pub i_fault_min: f64,
    pub time_dial: f64,
    pub curve: InverseTimeCurve,
    pub block_len: usize,
}

impl AocrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::Config(format!(
                "AOCR weights alpha={} beta={} must be >= 0 with a positive sum",
                self.alpha, self.beta
            )));
        }
        if !(self.avg_window > 0.0
            && self.i_fault_min > 0.0
            && self.time_dial > 0.0
            && self.block_len >= 2)
        {
            return Err(Error::Config(format!("invalid AOCR config {self:?}")));
        }
        self.curve.validate()
    }
}

/// Seconds from pickup to trip, or `None` when `M <= 1`.
pub fn inverse_time_delay(m: f64, time_dial: f64, curve: &InverseTimeCurve) -> Result<Option<f64>> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Argument(format!("current ratio M = {m} must be positive")));
    }
    if m <= 1.0 {
        return Ok(None);
    }
    let denom = m.powf(curve.p) - 1.0;
    if !(denom > 0.0) {
        return Ok(None);
    }
    Ok(Some(time_dial * (curve.a / denom + curve.b)))
}

/// Non-overlapping block maxima of `|x|`; a trailing partial block is dropped.
pub fn rectified_block_max(x: &[f64], block_len: usize) -> Result<Vec<(usize, f64)>> {
    if block_len < 2 {
        return Err(Error::Argument(format!("block length {block_len} < 2")));
    }
    Ok(x.chunks_exact(block_len)
        .map(|b| b.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .enumerate()
        .collect())
}

/// Block maxima of one waveform, the only statistic both relays look at.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockProfile {
    pub maxima: Vec<f64>,
    pub block_len: usize,
    pub sample_rate: f64,
    pub t0: f64,
}

impl BlockProfile {
    pub fn from_waveform(x: &WaveformSeries, block_len: usize) -> Result<Self> {
        Ok(Self {
            maxima: rectified_block_max(x.samples(), block_len)?
                .into_iter()
                .map(|(_, m)| m)
                .collect(),
            block_len,
            sample_rate: x.sample_rate(),
            t0: x.t0(),
        })
    }

    pub fn block_seconds(&self) -> f64 {
        self.block_len as f64 / self.sample_rate
    }

    pub fn block_start(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.block_seconds()
    }

    /// Blocks overlapping `[window.start, window.start + window.length)`.
    fn window_blocks(&self, window: &ObservationWindow) -> std::ops::Range<usize> {
        let bs = self.block_seconds();
        let first = (((window.start - self.t0) / bs).floor().max(0.0)) as usize;
        let last = (((window.end() - self.t0) / bs).ceil().max(0.0)) as usize;
        first.min(self.maxima.len())..last.min(self.maxima.len())
    }
}

/// Interval after fault onset in which a trip counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    /// Fault onset (seconds); delays are measured from here.
    pub start: f64,
    pub length: f64,
}

impl ObservationWindow {
    pub fn end(&self) -> f64 {
        self.start + self.length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub decision: Decision,
    /// Onset to trip, in seconds.
    pub delay_seconds: Option<f64>,
    /// Largest block statistic in the window (block max for the fixed relay,
    /// block max minus pickup for AOCR).
    pub statistic: f64,
    pub threshold: f64,
}

/// Inverse-time trip logic over per-block current ratios.
///
/// The first block with `M > 1` starts the timer; block `j` of the episode
/// trips at `start + delay(M_j)` if that falls before the block ends. A block
/// with `M <= 1` resets the timer.
fn trip_time(
    profile: &BlockProfile,
    blocks: std::ops::Range<usize>,
    ratio: impl Fn(usize) -> f64,
    time_dial: f64,
    curve: &InverseTimeCurve,
) -> Result<Option<f64>> {
    let bs = profile.block_seconds();
    let mut episode: Option<f64> = None;
    for j in blocks {
        let m = ratio(j);
        if !(m > 0.0) {
            episode = None;
            continue;
        }
        match inverse_time_delay(m, time_dial, curve)? {
            None => episode = None,
            Some(d) => {
                let block_start = profile.block_start(j);
                let started = *episode.get_or_insert(block_start);
                let trip = (started + d).max(block_start);
                if trip <= block_start + bs {
                    return Ok(Some(trip));
                }
            }
        }
    }
    Ok(None)
}

fn outcome(trip: Option<f64>, window: &ObservationWindow, statistic: f64, threshold: f64) -> DetectionOutcome {
    match trip {
        Some(t) if t <= window.end() => DetectionOutcome {
            decision: Decision::H1,
            delay_seconds: Some((t - window.start).max(0.0)),
            statistic,
            threshold,
        },
        _ => DetectionOutcome {
            decision: Decision::H0,
            delay_seconds: None,
            statistic,
            threshold,
        },
    }
}

pub fn conventional_decide(
    profile: &BlockProfile,
    window: &ObservationWindow,
    cfg: &OvercurrentConfig,
) -> Result<DetectionOutcome> {
    cfg.validate()?;
    let blocks = profile.window_blocks(window);
    let statistic = profile.maxima[blocks.clone()].iter().fold(0.0f64, |m, v| m.max(*v));
    let trip = trip_time(
        profile,
        blocks,
        |j| profile.maxima[j] / cfg.pickup_current,
        cfg.time_dial,
        &cfg.curve,
    )?;
    Ok(outcome(trip, window, statistic, cfg.pickup_current))
}

pub fn conventional_detect(
    x: &WaveformSeries,
    window: &ObservationWindow,
    cfg: &OvercurrentConfig,
    sample_rate: f64,
) -> Result<DetectionOutcome> {
    check_rate(x, sample_rate)?;
    conventional_decide(&BlockProfile::from_waveform(x, cfg.block_len)?, window, cfg)
}

/// Adaptive pickup before each block of the window.
pub fn aocr_pickups(
    profile: &BlockProfile,
    window: &ObservationWindow,
    cfg: &AocrConfig,
) -> Result<Vec<(usize, f64)>> {
    cfg.validate()?;
    let blocks = profile.window_blocks(window);
    let span = (cfg.avg_window / profile.block_seconds()).round() as usize;
    if span == 0 || blocks.start < span {
        return Err(Error::Argument(format!(
            "AOCR needs {} s of history before the window; {} s available",
            cfg.avg_window,
            blocks.start as f64 * profile.block_seconds()
        )));
    }
    let mut prefix = Vec::with_capacity(profile.maxima.len() + 1);
    prefix.push(0.0);
    for m in &profile.maxima {
        prefix.push(prefix.last().unwrap() + m);
    }
    Ok(blocks
        .map(|j| {
            let avg = (prefix[j] - prefix[j - span]) / span as f64;
            (j, cfg.alpha * avg + cfg.beta * cfg.i_fault_min)
        })
        .collect())
}

pub fn aocr_decide(
    profile: &BlockProfile,
    window: &ObservationWindow,
    cfg: &AocrConfig,
) -> Result<DetectionOutcome> {
    let pickups = aocr_pickups(profile, window, cfg)?;
    let statistic = pickups
        .iter()
        .map(|(j, p)| profile.maxima[*j] - p)
        .fold(f64::NEG_INFINITY, f64::max);
    let blocks = match (pickups.first(), pickups.last()) {
        (Some(a), Some(b)) => a.0..b.0 + 1,
        _ => 0..0,
    };
    let first = blocks.start;
    let trip = trip_time(
        profile,
        blocks,
        |j| profile.maxima[j] / pickups[j - first].1,
        cfg.time_dial,
        &cfg.curve,
    )?;
    Ok(outcome(trip, window, statistic, 0.0))
}

pub fn aocr_detect(
    x: &WaveformSeries,
    window: &ObservationWindow,
    cfg: &AocrConfig,
    sample_rate: f64,
) -> Result<DetectionOutcome> {
    check_rate(x, sample_rate)?;
    aocr_decide(&BlockProfile::from_waveform(x, cfg.block_len)?, window, cfg)
}

fn check_rate(x: &WaveformSeries, sample_rate: f64) -> Result<()> {
    if (x.sample_rate() - sample_rate).abs() > 1e-9 * sample_rate {
        return Err(Error::Argument(format!(
            "series rate {} differs from stated rate {sample_rate}",
            x.sample_rate()
        )));
    }
    Ok(())
}

/// A relay configuration whose free parameter is swept during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum RelayConfig {
    /// Sweeps `pickup_current`.
    Conventional(OvercurrentConfig),
    /// Sweeps `alpha` with `beta` held fixed.
    Aocr(AocrConfig),
}

impl RelayConfig {
    pub fn with_parameter(&self, value: f64) -> Self {
        match *self {
            RelayConfig::Conventional(c) => RelayConfig::Conventional(OvercurrentConfig {
                pickup_current: value,
                ..c
            }),
            RelayConfig::Aocr(c) => RelayConfig::Aocr(AocrConfig { alpha: value, ..c }),
        }
    }

    pub fn parameter(&self) -> f64 {
        match self {
            RelayConfig::Conventional(c) => c.pickup_current,
            RelayConfig::Aocr(c) => c.alpha,
        }
    }

    pub fn block_len(&self) -> usize {
        match self {
            RelayConfig::Conventional(c) => c.block_len,
            RelayConfig::Aocr(c) => c.block_len,
        }
    }

    pub fn decide(&self, profile: &BlockProfile, window: &ObservationWindow) -> Result<DetectionOutcome> {
        match self {
            RelayConfig::Conventional(c) => conventional_decide(profile, window, c),
            RelayConfig::Aocr(c) => aocr_decide(profile, window, c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibrated {
    pub config: RelayConfig,
    pub achieved_fpr: f64,
}

pub const MIN_CALIBRATION_RUNS: usize = 100;

/// Smallest grid value whose empirical FPR on `no_fault` is at most `target_fpr`.
pub fn calibrate(
    template: &RelayConfig,
    no_fault: &[BlockProfile],
    window: &ObservationWindow,
    target_fpr: f64,
    grid: &[f64],
) -> Result<Calibrated> {
    if no_fault.len() < MIN_CALIBRATION_RUNS {
        return Err(Error::Argument(format!(
            "calibration needs at least {MIN_CALIBRATION_RUNS} runs, got {}",
            no_fault.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Argument("empty calibration grid".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = f64::INFINITY;
    for value in sorted {
        let cfg = template.with_parameter(value);
        let mut trips = 0usize;
        for p in no_fault {
            if cfg.decide(p, window)?.decision == Decision::H1 {
                trips += 1;
            }
        }
        let fpr = trips as f64 / no_fault.len() as f64;
        if fpr <= target_fpr {
            return Ok(Calibrated { config: cfg, achieved_fpr: fpr });
        }
        best = best.min(fpr);
    }
    Err(Error::CalibrationInfeasible { target: target_fpr, best_fpr: best })
}

/// Waveform-level wrapper around [`calibrate`].
pub fn calibrate_waveforms(
    template: &RelayConfig,
    no_fault_runs: &[WaveformSeries],
    window: &ObservationWindow,
    target_fpr: f64,
    grid: &[f64],
) -> Result<Calibrated> {
    let profiles = no_fault_runs
        .iter()
        .map(|x| BlockProfile::from_waveform(x, template.block_len()))
        .collect::<Result<Vec<_>>>()?;
    calibrate(template, &profiles, window, target_fpr, grid)
}

/// Evenly spaced pickup candidates from the median to 1.5 times the largest
/// no-fault block maximum seen inside the window.
pub fn pickup_grid(no_fault: &[BlockProfile], window: &ObservationWindow, points: usize) -> Vec<f64> {
    let mut peaks: Vec<f64> = no_fault
        .iter()
        .map(|p| {
            let b = p.window_blocks(window);
            p.maxima[b].iter().fold(0.0f64, |m, v| m.max(*v))
        })
        .collect();
    if peaks.is_empty() || points == 0 {
        return Vec::new();
    }
    peaks.sort_by(f64::total_cmp);
    let lo = peaks[peaks.len() / 2];
    let hi = 1.5 * peaks[peaks.len() - 1];
    linspace(lo, hi, points)
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}
