use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled real-valued measurement stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSeries {
    samples: Vec<f64>,
    sample_rate: f64,
    t0: f64,
}

impl WaveformSeries {
    pub fn new(samples: Vec<f64>, sample_rate: f64, t0: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Argument(format!(
                "sample rate must be positive and finite, got {sample_rate}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::Argument("waveform must hold at least one sample".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite sample at index {i}")));
        }
        if !t0.is_finite() {
            return Err(Error::Argument("time origin must be finite".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
            t0,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.t0 + index as f64 / self.sample_rate
    }

    /// Index of the first sample at or after time `t` (seconds).
    pub fn index_at(&self, t: f64) -> usize {
        let raw = ((t - self.t0) * self.sample_rate - 1e-9).ceil();
        if raw <= 0.0 {
            0
        } else {
            raw as usize
        }
    }

    /// Copy of the samples in `[start, end)` with a matching time origin.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.samples.len() {
            return Err(Error::Argument(format!(
                "slice {start}..{end} out of range for {} samples",
                self.samples.len()
            )));
        }
        Ok(Self {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
            t0: self.time_at(start),
        })
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn power(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }

    /// Writes the two-column `time_s,current_a` CSV dump.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "time_s,current_a").map_err(io)?;
        for (i, v) in self.samples.iter().enumerate() {
            // Shortest round-trip representation keeps parse/write/parse exact.
            writeln!(out, "{:?},{:?}", self.time_at(i), v).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_construction() {
        assert!(WaveformSeries::new(vec![], 10.0, 0.0).is_err());
        assert!(WaveformSeries::new(vec![1.0], 0.0, 0.0).is_err());
        assert!(WaveformSeries::new(vec![1.0, f64::NAN], 10.0, 0.0).is_err());
        assert!(WaveformSeries::new(vec![1.0, f64::INFINITY], 10.0, 0.0).is_err());
    }

    #[test]
    fn index_and_slice() {
        let w = WaveformSeries::new((0..100).map(f64::from).collect(), 10.0, 1.0).unwrap();
        assert_eq!(w.index_at(1.0), 0);
        assert_eq!(w.index_at(2.0), 10);
        assert_eq!(w.index_at(2.05), 11);
        let s = w.slice(10, 20).unwrap();
        assert_eq!(s.samples()[0], 10.0);
        assert!((s.t0() - 2.0).abs() < 1e-12);
        assert!(w.slice(5, 5).is_err());
    }
}
