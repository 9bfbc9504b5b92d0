//! Sequential fault detection: the smooth test re-run on nested, doubling
//! windows of innovations that all start at the test origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovation::model::ArInnovationModel;
use crate::nst::{chi_square_quantile, Decision, NstAccumulator, MAX_KERNELS};
use crate::waveform::WaveformSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsfdConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub epsilon: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub lambda_sep: f64,
    /// Test each look at epsilon / imax instead of epsilon.
    pub bonferroni: bool,
    /// Use ceil(log2 lambda_sep) looks instead of floor.
    #[serde(default)]
    pub ceil_iterations: bool,
}

impl Default for IsfdConfig {
    fn default() -> Self {
        Self {
            k: 4,
            epsilon: 0.05,
            c: 42.5,
            lambda_sep: 20.0,
            bonferroni: true,
            ceil_iterations: false,
        }
    }
}

impl IsfdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_KERNELS).contains(&self.k) {
            return Err(Error::Config(format!("K = {} outside 1..={MAX_KERNELS}", self.k)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C = {} must be positive", self.c)));
        }
        if !(self.lambda_sep >= 2.0 && self.lambda_sep.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_sep = {} gives no iterations (needs floor(log2) >= 1)",
                self.lambda_sep
            )));
        }
        Ok(())
    }

    pub fn max_iterations(&self) -> usize {
        let l = self.lambda_sep.log2();
        let i = if self.ceil_iterations { l.ceil() } else { l.floor() };
        i.max(1.0) as usize
    }

    /// Window lengths `round(2^i C)` for `i = 1..=imax`, halves rounded up.
    pub fn schedule(&self) -> Vec<usize> {
        (1..=self.max_iterations())
            .map(|i| (2f64.powi(i as i32) * self.c + 0.5).floor() as usize)
            .collect()
    }

    pub fn threshold(&self) -> f64 {
        let eps = if self.bonferroni {
            self.epsilon / self.max_iterations() as f64
        } else {
            self.epsilon
        };
        chi_square_quantile(self.k, 1.0 - eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub statistic: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsfdOutcome {
    pub decision: Decision,
    pub samples_consumed: usize,
    pub iterations_run: usize,
    pub statistic_trace: Vec<TraceEntry>,
    pub delay_seconds: Option<f64>,
}

/// Push-driven form of the detector: feed innovations one at a time until
/// `push` returns an outcome.
#[derive(Debug, Clone)]
pub struct IsfdSession {
    sample_rate: f64,
    threshold: f64,
    schedule: Vec<usize>,
    acc: NstAccumulator,
    trace: Vec<TraceEntry>,
    outcome: Option<IsfdOutcome>,
}

impl IsfdSession {
    pub fn new(sample_rate: f64, config: &IsfdConfig) -> Result<Self> {
        config.validate()?;
        if !(sample_rate > 0.0) {
            return Err(Error::Argument(format!("sample rate {sample_rate} must be positive")));
        }
        let schedule = config.schedule();
        Ok(Self {
            sample_rate,
            threshold: config.threshold(),
            trace: Vec::with_capacity(schedule.len()),
            schedule,
            acc: NstAccumulator::new(config.k)?,
            outcome: None,
        })
    }

    /// Innovations consumed so far.
    pub fn consumed(&self) -> usize {
        self.acc.len()
    }

    /// Largest window of the schedule.
    pub fn required(&self) -> usize {
        *self.schedule.last().expect("at least one iteration")
    }

    pub fn outcome(&self) -> Option<&IsfdOutcome> {
        self.outcome.as_ref()
    }

    /// Adds one innovation and returns the outcome once decided. Pushes after
    /// the decision are ignored.
    pub fn push(&mut self, v: f64) -> Result<Option<&IsfdOutcome>> {
        if self.outcome.is_some() {
            return Ok(self.outcome.as_ref());
        }
        self.acc.push(v)?;
        let n = self.acc.len();
        let i = self.trace.len();
        if n < self.schedule[i] {
            return Ok(None);
        }
        let (t, _) = self.acc.statistic()?;
        self.trace.push(TraceEntry { n, statistic: t, threshold: self.threshold });
        if t > self.threshold {
            self.outcome = Some(IsfdOutcome {
                decision: Decision::H1,
                samples_consumed: n,
                iterations_run: i + 1,
                statistic_trace: self.trace.clone(),
                delay_seconds: Some(n as f64 / self.sample_rate),
            });
        } else if i + 1 == self.schedule.len() {
            self.outcome = Some(IsfdOutcome {
                decision: Decision::H0,
                samples_consumed: n,
                iterations_run: i + 1,
                statistic_trace: self.trace.clone(),
                delay_seconds: None,
            });
        }
        Ok(self.outcome.as_ref())
    }

    /// Error describing a stream that ended before a decision.
    pub fn truncated(&self) -> Error {
        Error::TruncatedStream {
            consumed: self.consumed(),
            required: self.required(),
            trace: self.trace.clone(),
        }
    }
}

/// Pulls innovations from `source` until a look rejects or the schedule ends.
pub fn isfd_detect<I>(source: I, sample_rate: f64, config: &IsfdConfig) -> Result<IsfdOutcome>
where
    I: IntoIterator<Item = f64>,
{
    let mut session = IsfdSession::new(sample_rate, config)?;
    for v in source {
        if let Some(out) = session.push(v)? {
            return Ok(out.clone());
        }
    }
    Err(session.truncated())
}

/// Encodes `x` causally from its first sample and tests the innovations from
/// `t_start` on.
pub fn run_isfd_on_waveform(
    model: &ArInnovationModel,
    x: &WaveformSeries,
    t_start: f64,
    config: &IsfdConfig,
    sample_rate: f64,
) -> Result<IsfdOutcome> {
    if t_start < x.t0() || t_start > x.t0() + x.duration() {
        return Err(Error::Argument(format!("t_start {t_start} outside the series")));
    }
    let start = x.index_at(t_start);
    let warmup = model.warmup();
    if start < warmup {
        return Err(Error::Argument(format!(
            "t_start leaves {start} samples of history, model needs {warmup}"
        )));
    }
    if model.envelope_mode {
        let v = model.encode(x)?;
        return isfd_detect(v.values[start - warmup..].iter().copied(), sample_rate, config);
    }
    let mut enc = model.streaming()?;
    for &s in &x.samples()[..start] {
        enc.push(s);
    }
    let source = x.samples()[start..].iter().filter_map(move |&s| enc.push(s));
    isfd_detect(source, sample_rate, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_matches_delays() {
        let cfg = IsfdConfig::default();
        assert_eq!(cfg.schedule(), vec![85, 170, 340, 680]);
        let delays: Vec<f64> = cfg.schedule().iter().map(|n| *n as f64 / 50_000.0).collect();
        assert_eq!(delays, vec![0.0017, 0.0034, 0.0068, 0.0136]);
        let ceil = IsfdConfig { ceil_iterations: true, ..cfg };
        assert_eq!(ceil.schedule().len(), 5);
    }

    #[test]
    fn half_up_rounding() {
        let cfg = IsfdConfig { c: 2.25, lambda_sep: 4.0, ..Default::default() };
        assert_eq!(cfg.schedule(), vec![5, 9]);
    }

    #[test]
    fn gross_fault_first_look() {
        let out = isfd_detect(std::iter::repeat(0.999), 50_000.0, &IsfdConfig::default()).unwrap();
        assert_eq!(out.decision, Decision::H1);
        assert_eq!(out.samples_consumed, 85);
        assert_eq!(out.iterations_run, 1);
        assert_eq!(out.delay_seconds, Some(0.0017));
    }

    #[test]
    fn truncated_stream_keeps_trace() {
        let src = (0..200).map(|i| ((i * 37) % 100) as f64 / 100.0 + 0.005);
        match isfd_detect(src, 1.0, &IsfdConfig::default()) {
            Err(Error::TruncatedStream { consumed, required, trace }) => {
                assert_eq!(consumed, 200);
                assert_eq!(required, 680);
                assert_eq!(trace.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lambda_below_two_rejected() {
        let cfg = IsfdConfig { lambda_sep: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
